#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "archsearch/errors.hpp"

namespace archsearch {

// Master/worker wire protocol: newline-delimited UTF-8 JSON objects with a
// "type" tag, at most 1 MiB per line. Field names are part of the protocol:
// type, worker_id, protocol_version, job_id, encoding, parent_encoding,
// accuracy, reason.

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxLineBytes = 1 << 20;

enum class MessageType { hello, job_assign, job_result, shutdown };

// Flat carrier for all four message kinds; only the fields of the tagged
// kind are meaningful.
struct Message {
    MessageType type = MessageType::hello;

    // hello
    std::string worker_id;
    int protocol_version = kProtocolVersion;

    // job_assign / job_result
    std::uint64_t job_id = 0;
    std::string encoding;                         // job_assign
    std::optional<std::string> parent_encoding;   // job_assign, informational
    double accuracy = 0.0;                        // job_result, in [0,1]

    // shutdown
    std::string reason;
};

Message make_hello(const std::string& worker_id);
Message make_job_assign(std::uint64_t job_id, const std::string& encoding,
                        const std::optional<std::string>& parent_encoding);
Message make_job_result(std::uint64_t job_id, double accuracy);
Message make_shutdown(const std::string& reason);

// One JSON object, no trailing newline (senders append '\n').
std::string encode_message(const Message& m);

// Throws ProtocolError on anything malformed: invalid JSON, a missing or
// unknown type, missing required fields, wrong field types, or an accuracy
// outside [0,1]. Unknown extra fields are ignored.
Message parse_message(std::string_view line);

// Reassembles '\n'-delimited lines from a byte stream. Throws ProtocolError
// once a single line (complete or still partial) exceeds kMaxLineBytes.
class LineSplitter {
public:
    void append(std::string_view data);
    std::optional<std::string> next_line();

private:
    std::string buf_;
};

}  // namespace archsearch
