#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>

#include "archsearch/evaluator.hpp"
#include "archsearch/session.hpp"
#include "archsearch/wire.hpp"

namespace archsearch {

struct MasterOptions {
    int port = 0;          // 0 = ephemeral; see Master::port()
    int queue_bound = 0;   // max jobs in flight; 0 = 2 x connected workers
    int poll_interval_ms = 20;
    std::int64_t max_wall_ms = 0;  // safety valve for tests; 0 = no limit
    bool log_protocol_errors = true;
};

// Single-threaded master: owns the session (tree, surrogate, RNG) and a
// poll-based event loop over one listening socket. Workers connect, say
// hello, and alternate JobAssign/JobResult until the run finishes, at which
// point every worker receives a Shutdown.
//
// Fault policy per the protocol: a worker disconnect re-queues its in-flight
// job; a malformed message drops that connection; a worker-reported fatal
// error (a NotInTable evaluation) aborts the whole run.
class Master {
public:
    Master(const SessionConfig& cfg, const MasterOptions& opt);
    Master(SearchSession&& session, const MasterOptions& opt);
    ~Master();

    Master(const Master&) = delete;
    Master& operator=(const Master&) = delete;

    int port() const { return port_; }

    // Blocks until the run completes; throws NotInTable or ProtocolError on
    // fatal conditions. The session holds the results afterwards, and all
    // sockets are closed either way (a Master serves one run).
    void run();

    SearchSession& session() { return session_; }
    const SearchSession& session() const { return session_; }

private:
    struct Connection {
        LineSplitter lines;
        bool helloed = false;
        std::string worker_id;
        std::uint64_t assigned = 0;  // wire job id; 0 = idle
    };

    void open_listener();
    void close_all();
    void run_loop();
    int effective_bound() const;
    void refill_and_dispatch();
    void accept_connection();
    bool read_connection(int fd);  // false = connection should be dropped
    void handle_message(int fd, const Message& m);
    void drop_connection(int fd);
    void broadcast_shutdown(const std::string& reason);
    void drain_connections(int max_ms);
    void send_message(int fd, const Message& m);

    SearchSession session_;
    MasterOptions opt_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::map<int, Connection> conns_;
    std::deque<WireJob> queue_;  // generated, not yet at a worker
};

struct WorkerOptions {
    std::string worker_id = "worker";
    int max_connect_attempts = 5;
    int initial_backoff_ms = 100;
    int max_backoff_ms = 2000;
};

// Connects (with bounded exponential backoff), evaluates assigned jobs with
// the local evaluator and returns cleanly on Shutdown. A lost connection
// triggers a reconnect; exhausting the attempts throws ProtocolError. A
// NotInTable evaluation is reported to the master and rethrown (fatal
// configuration mismatch between master and worker).
void worker_loop(const std::string& host, int port, const Evaluator& evaluator,
                 const WorkerOptions& opt = {});

}  // namespace archsearch
