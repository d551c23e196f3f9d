#include "archsearch/wire.hpp"

#include <json.hpp>

#include <cmath>

namespace archsearch {

using nlohmann::json;

Message make_hello(const std::string& worker_id) {
    Message m;
    m.type = MessageType::hello;
    m.worker_id = worker_id;
    m.protocol_version = kProtocolVersion;
    return m;
}

Message make_job_assign(std::uint64_t job_id, const std::string& encoding,
                        const std::optional<std::string>& parent_encoding) {
    Message m;
    m.type = MessageType::job_assign;
    m.job_id = job_id;
    m.encoding = encoding;
    m.parent_encoding = parent_encoding;
    return m;
}

Message make_job_result(std::uint64_t job_id, double accuracy) {
    Message m;
    m.type = MessageType::job_result;
    m.job_id = job_id;
    m.accuracy = accuracy;
    return m;
}

Message make_shutdown(const std::string& reason) {
    Message m;
    m.type = MessageType::shutdown;
    m.reason = reason;
    return m;
}

std::string encode_message(const Message& m) {
    json j;
    switch (m.type) {
        case MessageType::hello:
            j["type"] = "hello";
            j["worker_id"] = m.worker_id;
            j["protocol_version"] = m.protocol_version;
            break;
        case MessageType::job_assign:
            j["type"] = "job_assign";
            j["job_id"] = m.job_id;
            j["encoding"] = m.encoding;
            if (m.parent_encoding) j["parent_encoding"] = *m.parent_encoding;
            break;
        case MessageType::job_result:
            j["type"] = "job_result";
            j["job_id"] = m.job_id;
            j["accuracy"] = m.accuracy;
            break;
        case MessageType::shutdown:
            j["type"] = "shutdown";
            j["reason"] = m.reason;
            break;
    }
    return j.dump();
}

namespace {

const json& require_field(const json& j, const char* key, const char* kind) {
    const auto it = j.find(key);
    if (it == j.end()) {
        throw ProtocolError(std::string(kind) + " message lacks \"" + key +
                            "\"");
    }
    return *it;
}

std::string require_string(const json& j, const char* key, const char* kind) {
    const json& v = require_field(j, key, kind);
    if (!v.is_string()) {
        throw ProtocolError(std::string(kind) + " field \"" + key +
                            "\" must be a string");
    }
    return v.get<std::string>();
}

std::uint64_t require_job_id(const json& j, const char* kind) {
    const json& v = require_field(j, "job_id", kind);
    if (!v.is_number_unsigned()) {
        throw ProtocolError(std::string(kind) +
                            " field \"job_id\" must be a non-negative "
                            "integer");
    }
    return v.get<std::uint64_t>();
}

}  // namespace

Message parse_message(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ProtocolError("message must be a JSON object");
    }
    const std::string type = require_string(j, "type", "wire");

    Message m;
    if (type == "hello") {
        m.type = MessageType::hello;
        m.worker_id = require_string(j, "worker_id", "hello");
        const json& v = require_field(j, "protocol_version", "hello");
        if (!v.is_number_integer()) {
            throw ProtocolError(
                "hello field \"protocol_version\" must be an integer");
        }
        m.protocol_version = v.get<int>();
    } else if (type == "job_assign") {
        m.type = MessageType::job_assign;
        m.job_id = require_job_id(j, "job_assign");
        m.encoding = require_string(j, "encoding", "job_assign");
        if (j.contains("parent_encoding")) {
            if (!j["parent_encoding"].is_string()) {
                throw ProtocolError(
                    "job_assign field \"parent_encoding\" must be a string");
            }
            m.parent_encoding = j["parent_encoding"].get<std::string>();
        }
    } else if (type == "job_result") {
        m.type = MessageType::job_result;
        m.job_id = require_job_id(j, "job_result");
        const json& v = require_field(j, "accuracy", "job_result");
        if (!v.is_number()) {
            throw ProtocolError(
                "job_result field \"accuracy\" must be a number");
        }
        m.accuracy = v.get<double>();
        if (!std::isfinite(m.accuracy) || m.accuracy < 0.0 ||
            m.accuracy > 1.0) {
            throw ProtocolError("job_result accuracy " +
                                std::to_string(m.accuracy) +
                                " outside [0,1]");
        }
    } else if (type == "shutdown") {
        m.type = MessageType::shutdown;
        m.reason = require_string(j, "reason", "shutdown");
    } else {
        throw ProtocolError("unknown message type \"" + type + "\"");
    }
    return m;
}

void LineSplitter::append(std::string_view data) {
    buf_.append(data);
}

std::optional<std::string> LineSplitter::next_line() {
    const std::size_t pos = buf_.find('\n');
    if (pos == std::string::npos) {
        if (buf_.size() > kMaxLineBytes) {
            throw ProtocolError("wire line exceeds " +
                                std::to_string(kMaxLineBytes) + " bytes");
        }
        return std::nullopt;
    }
    if (pos > kMaxLineBytes) {
        throw ProtocolError("wire line exceeds " +
                            std::to_string(kMaxLineBytes) + " bytes");
    }
    std::string line = buf_.substr(0, pos);
    buf_.erase(0, pos + 1);
    return line;
}

}  // namespace archsearch
