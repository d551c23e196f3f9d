#include "archsearch/distributed.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <iostream>
#include <thread>
#include <vector>

namespace archsearch {

namespace {

constexpr const char* kNotInTablePrefix = "not-in-table: ";

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Pushes the whole line; sockets here are blocking, so short writes only
// happen on genuinely full buffers.
bool send_line(int fd, const std::string& payload) {
    std::string line = payload + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
        const ssize_t n =
            ::send(fd, line.data() + off, line.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Master

Master::Master(const SessionConfig& cfg, const MasterOptions& opt)
    : session_(cfg), opt_(opt) {
    open_listener();
}

Master::Master(SearchSession&& session, const MasterOptions& opt)
    : session_(std::move(session)), opt_(opt) {
    open_listener();
}

Master::~Master() { close_all(); }

void Master::close_all() {
    for (const auto& [fd, conn] : conns_) ::close(fd);
    conns_.clear();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
}

void Master::open_listener() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) {
        throw ProtocolError(std::string("socket: ") + std::strerror(errno));
    }
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(static_cast<std::uint16_t>(opt_.port));
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr),
               sizeof(addr)) != 0) {
        throw ProtocolError("bind to port " + std::to_string(opt_.port) +
                            ": " + std::strerror(errno));
    }
    if (::listen(listen_fd_, 16) != 0) {
        throw ProtocolError(std::string("listen: ") + std::strerror(errno));
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

int Master::effective_bound() const {
    if (opt_.queue_bound > 0) return opt_.queue_bound;
    int workers = 0;
    for (const auto& [fd, conn] : conns_) {
        if (conn.helloed) ++workers;
    }
    return std::max(1, 2 * workers);
}

void Master::refill_and_dispatch() {
    session_.set_capacity(effective_bound());
    while (std::optional<WireJob> job = session_.next_job()) {
        queue_.push_back(*job);
    }
    for (auto& [fd, conn] : conns_) {
        if (queue_.empty()) break;
        if (!conn.helloed || conn.assigned != 0) continue;
        const WireJob job = queue_.front();
        queue_.pop_front();
        std::optional<std::string> parent;
        if (job.parent_encoding) parent = job.parent_encoding->text();
        if (!send_line(fd, encode_message(make_job_assign(
                               job.id, job.encoding.text(), parent)))) {
            queue_.push_front(job);
            drop_connection(fd);
            break;  // conns_ iterator invalidated; next cycle resumes
        }
        conn.assigned = job.id;
    }
}

void Master::accept_connection() {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) return;
    conns_.emplace(fd, Connection{});
}

void Master::drop_connection(int fd) {
    const auto it = conns_.find(fd);
    if (it == conns_.end()) return;
    // The worker dying loses nothing: its job goes back to the front of the
    // queue for the next idle worker.
    if (it->second.assigned != 0 && session_.is_inflight(it->second.assigned)) {
        const bool queued =
            std::any_of(queue_.begin(), queue_.end(),
                        [&](const WireJob& j) {
                            return j.id == it->second.assigned;
                        });
        if (!queued) {
            for (const WireJob& job : session_.inflight_jobs()) {
                if (job.id == it->second.assigned) {
                    queue_.push_front(job);
                    break;
                }
            }
        }
    }
    ::close(fd);
    conns_.erase(it);
}

void Master::send_message(int fd, const Message& m) {
    send_line(fd, encode_message(m));
}

void Master::broadcast_shutdown(const std::string& reason) {
    for (const auto& [fd, conn] : conns_) {
        if (conn.helloed) send_message(fd, make_shutdown(reason));
    }
}

void Master::drain_connections(int max_ms) {
    // Read every peer to EOF before closing. A worker whose final result is
    // still unread here would otherwise turn the close into a TCP reset,
    // which can destroy the shutdown line before the worker reads it.
    const std::int64_t deadline = now_ms() + max_ms;
    while (!conns_.empty()) {
        const std::int64_t left = deadline - now_ms();
        if (left <= 0) return;
        std::vector<pollfd> fds;
        fds.reserve(conns_.size());
        for (const auto& [fd, conn] : conns_) {
            fds.push_back(pollfd{fd, POLLIN, 0});
        }
        const int ready =
            ::poll(fds.data(), fds.size(),
                   static_cast<int>(std::min<std::int64_t>(left, 50)));
        if (ready < 0) {
            if (errno == EINTR) continue;
            return;
        }
        if (ready == 0) continue;
        for (const pollfd& p : fds) {
            if (p.revents == 0) continue;
            char scratch[4096];
            const ssize_t n = ::recv(p.fd, scratch, sizeof(scratch), 0);
            if (n > 0) continue;  // post-run bytes; discard
            if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
            ::close(p.fd);
            conns_.erase(p.fd);
        }
    }
}

void Master::handle_message(int fd, const Message& m) {
    Connection& conn = conns_.at(fd);
    switch (m.type) {
        case MessageType::hello:
            if (m.protocol_version != kProtocolVersion) {
                send_message(fd, make_shutdown(
                                     "unsupported protocol version " +
                                     std::to_string(m.protocol_version)));
                throw ProtocolError("protocol version mismatch");
            }
            conn.helloed = true;
            conn.worker_id = m.worker_id;
            break;
        case MessageType::job_result: {
            if (!conn.helloed) {
                throw ProtocolError("job_result before hello");
            }
            if (conn.assigned == m.job_id) conn.assigned = 0;
            if (session_.is_inflight(m.job_id)) {
                session_.complete_job(m.job_id, m.accuracy);
                session_.maybe_snapshot();
                // A re-queued copy of the job may still exist if the result
                // raced a disconnect; it must not be dispatched again.
                queue_.erase(std::remove_if(queue_.begin(), queue_.end(),
                                            [&](const WireJob& j) {
                                                return j.id == m.job_id;
                                            }),
                             queue_.end());
            }
            // else: duplicate or stale result; idempotence says ignore.
            break;
        }
        case MessageType::shutdown:
            // Workers report fatal evaluation failures this way; the run
            // cannot produce meaningful numbers past a config mismatch.
            if (m.reason.rfind(kNotInTablePrefix, 0) == 0) {
                throw NotInTable(
                    m.reason.substr(std::strlen(kNotInTablePrefix)));
            }
            throw ProtocolError("worker " + conn.worker_id +
                                " aborted: " + m.reason);
        case MessageType::job_assign:
            throw ProtocolError("unexpected job_assign from a worker");
    }
}

bool Master::read_connection(int fd) {
    char chunk[4096];
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n == 0) return false;  // orderly close
    if (n < 0) return errno == EINTR || errno == EAGAIN;

    Connection& conn = conns_.at(fd);
    try {
        conn.lines.append(std::string_view(chunk, static_cast<size_t>(n)));
        while (std::optional<std::string> line = conn.lines.next_line()) {
            const Message m = parse_message(*line);
            handle_message(fd, m);
        }
    } catch (const NotInTable&) {
        throw;  // fatal for the whole run
    } catch (const ProtocolError& e) {
        if (opt_.log_protocol_errors) {
            std::cerr << "[master] dropping connection: " << e.what()
                      << "\n";
        }
        return false;
    }
    return true;
}

void Master::run() {
    // Sockets close on every exit path so a reconnecting worker sees a
    // refused connection instead of a silent listener.
    try {
        run_loop();
    } catch (...) {
        close_all();
        throw;
    }
    close_all();
}

void Master::run_loop() {
    for (const WireJob& job : session_.inflight_jobs()) {
        queue_.push_back(job);  // restored from a snapshot; re-dispatch
    }
    const std::int64_t start = now_ms();

    while (true) {
        refill_and_dispatch();
        if (session_.done()) {
            broadcast_shutdown("run complete");
            drain_connections(500);
            return;
        }
        if (opt_.max_wall_ms > 0 && now_ms() - start > opt_.max_wall_ms) {
            broadcast_shutdown("master timed out");
            throw ProtocolError("master exceeded max_wall_ms with " +
                                std::to_string(session_.inflight_count()) +
                                " jobs outstanding");
        }

        std::vector<pollfd> fds;
        fds.push_back(pollfd{listen_fd_, POLLIN, 0});
        for (const auto& [fd, conn] : conns_) {
            fds.push_back(pollfd{fd, POLLIN, 0});
        }
        const int ready =
            ::poll(fds.data(), fds.size(), opt_.poll_interval_ms);
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("poll: ") + std::strerror(errno));
        }
        if (ready == 0) continue;

        if (fds[0].revents & POLLIN) accept_connection();
        for (std::size_t i = 1; i < fds.size(); ++i) {
            if (fds[i].revents == 0) continue;
            if (conns_.find(fds[i].fd) == conns_.end()) continue;
            bool keep = true;
            if (fds[i].revents & (POLLERR | POLLNVAL)) {
                keep = false;
            } else if (fds[i].revents & (POLLIN | POLLHUP)) {
                keep = read_connection(fds[i].fd);
            }
            if (!keep) drop_connection(fds[i].fd);
        }
    }
}

// ---------------------------------------------------------------------------
// Worker

namespace {

int try_connect(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints,
                      &res) != 0) {
        return -1;
    }
    int fd = -1;
    for (addrinfo* p = res; p; p = p->ai_next) {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    return fd;
}

}  // namespace

void worker_loop(const std::string& host, int port, const Evaluator& evaluator,
                 const WorkerOptions& opt) {
    int attempts = 0;
    int backoff = opt.initial_backoff_ms;

    while (true) {
        const int fd = try_connect(host, port);
        if (fd < 0) {
            if (++attempts >= opt.max_connect_attempts) {
                throw ProtocolError("worker " + opt.worker_id +
                                    " cannot reach " + host + ":" +
                                    std::to_string(port) + " after " +
                                    std::to_string(attempts) + " attempts");
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff = std::min(backoff * 2, opt.max_backoff_ms);
            continue;
        }
        attempts = 0;
        backoff = opt.initial_backoff_ms;

        if (!send_line(fd, encode_message(make_hello(opt.worker_id)))) {
            ::close(fd);
            continue;
        }

        LineSplitter lines;
        bool reconnect = false;
        while (!reconnect) {
            char chunk[4096];
            const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
            if (n == 0) {
                reconnect = true;
                break;
            }
            if (n < 0) {
                if (errno == EINTR) continue;
                reconnect = true;
                break;
            }
            lines.append(std::string_view(chunk, static_cast<size_t>(n)));
            while (std::optional<std::string> line = lines.next_line()) {
                const Message m = parse_message(*line);
                if (m.type == MessageType::shutdown) {
                    ::close(fd);
                    return;  // clean exit
                }
                if (m.type != MessageType::job_assign) {
                    ::close(fd);
                    throw ProtocolError("worker received unexpected " +
                                        *line);
                }
                double acc = 0.0;
                try {
                    acc = evaluator.accuracy_of(
                        EncodedArch::from_text(m.encoding));
                } catch (const NotInTable& e) {
                    send_line(fd, encode_message(make_shutdown(
                                      std::string(kNotInTablePrefix) +
                                      e.what())));
                    ::close(fd);
                    throw;
                }
                if (!send_line(fd, encode_message(
                                       make_job_result(m.job_id, acc)))) {
                    reconnect = true;
                    break;
                }
            }
        }
        ::close(fd);
    }
}

}  // namespace archsearch
