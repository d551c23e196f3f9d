#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <exception>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "archsearch/distributed.hpp"
#include "archsearch/errors.hpp"
#include "archsearch/evaluator.hpp"
#include "archsearch/mcts.hpp"
#include "archsearch/session.hpp"
#include "archsearch/util.hpp"
#include "archsearch/wire.hpp"

using namespace archsearch;

namespace {

SessionConfig dist_config(std::uint64_t seed, std::uint64_t budget) {
    SessionConfig cfg;
    cfg.limits.max_nodes = 4;
    cfg.limits.num_op_types = 2;
    cfg.search.seed = seed;
    cfg.search.k = 2;
    cfg.surrogate.hidden_dims = {4};
    cfg.surrogate.train.epochs = 5;
    cfg.evaluator_spec = "synthetic:0";
    cfg.budget = budget;
    cfg.retrain_every = 3;
    return cfg;
}

MasterOptions fast_master(int queue_bound = 0) {
    MasterOptions opt;
    opt.queue_bound = queue_bound;
    opt.poll_interval_ms = 5;
    opt.max_wall_ms = 20000;
    opt.log_protocol_errors = false;
    return opt;
}

WorkerOptions fast_worker(const std::string& id) {
    WorkerOptions opt;
    opt.worker_id = id;
    opt.max_connect_attempts = 100;
    opt.initial_backoff_ms = 2;
    opt.max_backoff_ms = 50;
    return opt;
}

// Runs a standard worker on its own thread; exceptions surface through `err`
// after the join (doctest assertions stay on the main thread).
std::thread spawn_worker(int port, const std::string& spec,
                         const SpaceLimits& limits, const std::string& id,
                         std::exception_ptr& err) {
    return std::thread([port, spec, limits, id, &err] {
        try {
            const std::unique_ptr<Evaluator> eval =
                make_evaluator(spec, limits);
            worker_loop("127.0.0.1", port, *eval, fast_worker(id));
        } catch (...) {
            err = std::current_exception();
        }
    });
}

std::thread spawn_master(Master& master, std::exception_ptr& err) {
    return std::thread([&master, &err] {
        try {
            master.run();
        } catch (...) {
            err = std::current_exception();
        }
    });
}

struct Joiner {
    std::thread t;
    explicit Joiner(std::thread thread) : t(std::move(thread)) {}
    ~Joiner() {
        if (t.joinable()) t.join();
    }
};

// Raw-socket client for scripted protocol scenarios (runs on the main
// thread so it can use doctest assertions).
struct RawClient {
    int fd = -1;
    LineSplitter lines;

    explicit RawClient(int port) {
        fd = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd >= 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr),
                          sizeof(addr)) == 0);
    }
    ~RawClient() {
        if (fd >= 0) ::close(fd);
    }

    void send_raw(const std::string& s) const {
        REQUIRE(::send(fd, s.data(), s.size(), MSG_NOSIGNAL) ==
                static_cast<ssize_t>(s.size()));
    }
    void send(const Message& m) const {
        send_raw(encode_message(m) + "\n");
    }
    // nullopt = connection closed by the master.
    std::optional<std::string> read_line() {
        while (true) {
            if (std::optional<std::string> line = lines.next_line()) {
                return line;
            }
            char buf[4096];
            const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
            if (n <= 0) return std::nullopt;
            lines.append(std::string_view(buf, static_cast<size_t>(n)));
        }
    }
    void close_now() {
        ::close(fd);
        fd = -1;
    }
};

void check_events_match_oracle(const SearchSession& session,
                               const SyntheticOracleConfig& oracle) {
    for (const TraceEvent& e : session.events()) {
        const ArchState state = decode(e.encoding, oracle.limits);
        CHECK(e.accuracy ==
              synthetic_accuracy(std::get<DagArchitecture>(state), oracle));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Wire format

TEST_CASE("wire messages encode to stable bytes") {
    CHECK(encode_message(make_hello("w1")) ==
          R"({"protocol_version":1,"type":"hello","worker_id":"w1"})");
    CHECK(encode_message(make_job_assign(7, "0-1-0-0-4-5", "0-0-0-0-4-5")) ==
          R"({"encoding":"0-1-0-0-4-5","job_id":7,)"
          R"("parent_encoding":"0-0-0-0-4-5","type":"job_assign"})");
    CHECK(encode_message(make_job_assign(7, "0-1-0-0-4-5", std::nullopt)) ==
          R"({"encoding":"0-1-0-0-4-5","job_id":7,"type":"job_assign"})");
    CHECK(encode_message(make_job_result(7, 0.739565)) ==
          R"({"accuracy":0.739565,"job_id":7,"type":"job_result"})");
    CHECK(encode_message(make_shutdown("run complete")) ==
          R"({"reason":"run complete","type":"shutdown"})");
}

TEST_CASE("wire messages round trip") {
    const Message hello = parse_message(encode_message(make_hello("w9")));
    CHECK(hello.type == MessageType::hello);
    CHECK(hello.worker_id == "w9");
    CHECK(hello.protocol_version == 1);

    const Message assign = parse_message(
        encode_message(make_job_assign(42, "0-1-0-0-4-5", "0-0-0-0-4-5")));
    CHECK(assign.type == MessageType::job_assign);
    CHECK(assign.job_id == 42);
    CHECK(assign.encoding == "0-1-0-0-4-5");
    REQUIRE(assign.parent_encoding.has_value());
    CHECK(*assign.parent_encoding == "0-0-0-0-4-5");

    const Message bare =
        parse_message(encode_message(make_job_assign(1, "0-0", std::nullopt)));
    CHECK(!bare.parent_encoding.has_value());

    const Message result =
        parse_message(encode_message(make_job_result(42, 0.5)));
    CHECK(result.type == MessageType::job_result);
    CHECK(result.accuracy == 0.5);

    const Message down = parse_message(encode_message(make_shutdown("bye")));
    CHECK(down.type == MessageType::shutdown);
    CHECK(down.reason == "bye");
}

TEST_CASE("wire parser rejects malformed messages") {
    CHECK_THROWS_AS(parse_message("not json"), ProtocolError);
    CHECK_THROWS_AS(parse_message("[1,2]"), ProtocolError);
    CHECK_THROWS_AS(parse_message(R"({"job_id":1})"), ProtocolError);
    CHECK_THROWS_AS(parse_message(R"({"type":"warp"})"), ProtocolError);
    CHECK_THROWS_AS(parse_message(R"({"type":"hello","worker_id":"w"})"),
                    ProtocolError);
    CHECK_THROWS_AS(
        parse_message(
            R"({"type":"hello","worker_id":7,"protocol_version":1})"),
        ProtocolError);
    CHECK_THROWS_AS(parse_message(R"({"type":"job_assign","job_id":3})"),
                    ProtocolError);
    CHECK_THROWS_AS(
        parse_message(R"({"type":"job_assign","job_id":-3,"encoding":"0"})"),
        ProtocolError);
    CHECK_THROWS_AS(
        parse_message(R"({"type":"job_result","job_id":3})"), ProtocolError);
    CHECK_THROWS_AS(
        parse_message(
            R"({"type":"job_result","job_id":3,"accuracy":"high"})"),
        ProtocolError);
    CHECK_THROWS_AS(
        parse_message(R"({"type":"job_result","job_id":3,"accuracy":1.5})"),
        ProtocolError);
    CHECK_THROWS_AS(
        parse_message(R"({"type":"job_result","job_id":3,"accuracy":-0.1})"),
        ProtocolError);
    CHECK_THROWS_AS(parse_message(R"({"type":"shutdown"})"), ProtocolError);

    // Unknown extra fields are tolerated.
    const Message m = parse_message(
        R"({"type":"job_result","job_id":3,"accuracy":0.9,"extra":true})");
    CHECK(m.accuracy == 0.9);
}

TEST_CASE("line splitter reassembles and bounds lines") {
    LineSplitter lines;
    lines.append("ab");
    CHECK(!lines.next_line().has_value());
    lines.append("c\nde\nf");
    CHECK(*lines.next_line() == "abc");
    CHECK(*lines.next_line() == "de");
    CHECK(!lines.next_line().has_value());
    lines.append("\n");
    CHECK(*lines.next_line() == "f");

    LineSplitter big;
    big.append(std::string(kMaxLineBytes + 1, 'x'));
    CHECK_THROWS_AS(big.next_line(), ProtocolError);

    LineSplitter big2;
    big2.append(std::string(kMaxLineBytes + 1, 'x') + "\n");
    CHECK_THROWS_AS(big2.next_line(), ProtocolError);
}

// ---------------------------------------------------------------------------
// Master / worker loops

TEST_CASE("one synchronous worker equals the sequential runner") {
    const SessionConfig cfg = dist_config(11, 20);

    SearchSession sequential(cfg);
    sequential.run_to_completion(
        *make_evaluator(cfg.evaluator_spec, cfg.limits));

    Master master(cfg, fast_master(/*queue_bound=*/1));
    std::exception_ptr worker_err;
    {
        Joiner worker(spawn_worker(master.port(), cfg.evaluator_spec,
                                   cfg.limits, "w1", worker_err));
        master.run();
    }
    CHECK(!worker_err);

    const SearchSession& served = master.session();
    CHECK(served.unique_evaluations() == 20);
    CHECK(dump_tree(served.engine().tree()) ==
          dump_tree(sequential.engine().tree()));
    CHECK(served.rng().draws() == sequential.rng().draws());
    CHECK(served.best_accuracy() == sequential.best_accuracy());
    REQUIRE(served.events().size() == sequential.events().size());
    for (std::size_t i = 0; i < served.events().size(); ++i) {
        CHECK(served.events()[i].encoding ==
              sequential.events()[i].encoding);
        CHECK(served.events()[i].accuracy ==
              sequential.events()[i].accuracy);
    }
    CHECK(served.surrogate()->net() == sequential.surrogate()->net());
}

TEST_CASE("three async workers finish the budget") {
    const SessionConfig cfg = dist_config(5, 20);
    Master master(cfg, fast_master(/*queue_bound=*/0));

    std::exception_ptr errs[3];
    {
        Joiner w1(spawn_worker(master.port(), cfg.evaluator_spec, cfg.limits,
                               "w1", errs[0]));
        Joiner w2(spawn_worker(master.port(), cfg.evaluator_spec, cfg.limits,
                               "w2", errs[1]));
        Joiner w3(spawn_worker(master.port(), cfg.evaluator_spec, cfg.limits,
                               "w3", errs[2]));
        master.run();
    }
    for (const std::exception_ptr& e : errs) CHECK(!e);

    const SearchSession& s = master.session();
    CHECK(s.done());
    CHECK(s.unique_evaluations() == 20);
    CHECK(s.inflight_count() == 0);
    CHECK(s.engine().pending().empty());
    CHECK(s.events().size() == 20);

    // Workers cannot corrupt rewards: every applied accuracy is exactly what
    // the evaluator defines for that encoding.
    SyntheticOracleConfig oracle;
    oracle.seed = 0;
    oracle.limits = cfg.limits;
    check_events_match_oracle(s, oracle);

    // Visit conservation holds after quiescence regardless of arrival order.
    CHECK(s.engine().tree().node(0).visit_total ==
          static_cast<std::int64_t>(s.iterations()));
    const CostLedger& ledger = s.ledger();
    CHECK(ledger.epochs ==
          70 * (20 - ledger.transferred) + 20 * ledger.transferred);
}

TEST_CASE("a dying worker's job is re-queued") {
    const SessionConfig cfg = dist_config(9, 5);
    Master master(cfg, fast_master());
    std::exception_ptr master_err;
    std::exception_ptr worker_err;
    {
        Joiner master_thread(spawn_master(master, master_err));

        // Scripted casualty: takes the first job and dies without answering.
        std::optional<std::string> assigned;
        {
            RawClient casualty(master.port());
            casualty.send(make_hello("doomed"));
            assigned = casualty.read_line();
            casualty.close_now();
        }
        REQUIRE(assigned.has_value());
        CHECK(parse_message(*assigned).type == MessageType::job_assign);

        Joiner worker(spawn_worker(master.port(), cfg.evaluator_spec,
                                   cfg.limits, "survivor", worker_err));
    }
    CHECK(!master_err);
    CHECK(!worker_err);

    // The lost job was re-dispatched; the casualty cost nothing.
    const SearchSession& s = master.session();
    CHECK(s.unique_evaluations() == 5);
    CHECK(s.done());
    SyntheticOracleConfig oracle;
    oracle.seed = 0;
    oracle.limits = cfg.limits;
    check_events_match_oracle(s, oracle);
}

TEST_CASE("malformed traffic drops that connection only") {
    const SessionConfig cfg = dist_config(2, 3);
    Master master(cfg, fast_master());
    std::exception_ptr master_err;
    std::exception_ptr worker_err;
    {
        Joiner master_thread(spawn_master(master, master_err));

        RawClient noisy(master.port());
        noisy.send_raw("this is not json\n");
        CHECK(!noisy.read_line().has_value());  // master closed it

        Joiner worker(spawn_worker(master.port(), cfg.evaluator_spec,
                                   cfg.limits, "w1", worker_err));
    }
    CHECK(!master_err);
    CHECK(!worker_err);
    CHECK(master.session().unique_evaluations() == 3);
}

TEST_CASE("duplicate job results are ignored") {
    const SessionConfig cfg = dist_config(4, 3);
    Master master(cfg, fast_master(/*queue_bound=*/1));
    std::exception_ptr master_err;
    {
        Joiner master_thread(spawn_master(master, master_err));

        const std::unique_ptr<Evaluator> oracle =
            make_evaluator(cfg.evaluator_spec, cfg.limits);
        RawClient worker(master.port());
        worker.send(make_hello("dup"));
        bool duplicated = false;
        while (true) {
            const std::optional<std::string> line = worker.read_line();
            if (!line) break;
            const Message m = parse_message(*line);
            if (m.type == MessageType::shutdown) break;
            REQUIRE(m.type == MessageType::job_assign);
            const double acc =
                oracle->accuracy_of(EncodedArch::from_text(m.encoding));
            worker.send(make_job_result(m.job_id, acc));
            if (!duplicated) {
                worker.send(make_job_result(m.job_id, acc));
                duplicated = true;
            }
        }
    }
    CHECK(!master_err);

    const SearchSession& s = master.session();
    CHECK(s.unique_evaluations() == 3);
    CHECK(s.events().size() == 3);
    CHECK(s.ledger().evaluations == 3);
    CHECK(s.engine().tree().node(0).visit_total ==
          static_cast<std::int64_t>(s.iterations()));
}

namespace {

struct MissingEverything : Evaluator {
    SpaceLimits lim;
    explicit MissingEverything(const SpaceLimits& l) : lim(l) {}
    double accuracy_of(const EncodedArch& e) const override {
        throw NotInTable("encoding " + e.text() + " has no benchmark entry");
    }
    const SpaceLimits& limits() const override { return lim; }
    std::optional<std::pair<EncodedArch, double>> best() const override {
        return std::nullopt;
    }
};

}  // namespace

TEST_CASE("a worker table miss aborts the run") {
    const SessionConfig cfg = dist_config(1, 5);
    Master master(cfg, fast_master(/*queue_bound=*/1));
    std::exception_ptr worker_err;
    {
        Joiner worker(std::thread([&] {
            try {
                const MissingEverything eval(cfg.limits);
                worker_loop("127.0.0.1", master.port(), eval,
                            fast_worker("mismatched"));
            } catch (...) {
                worker_err = std::current_exception();
            }
        }));
        CHECK_THROWS_AS(master.run(), NotInTable);
    }
    REQUIRE(worker_err);
    CHECK_THROWS_AS(std::rethrow_exception(worker_err), NotInTable);
    CHECK(master.session().unique_evaluations() == 0);
}

TEST_CASE("foreign protocol versions are turned away") {
    const SessionConfig cfg = dist_config(6, 2);
    Master master(cfg, fast_master());
    std::exception_ptr master_err;
    std::exception_ptr worker_err;
    {
        Joiner master_thread(spawn_master(master, master_err));

        RawClient ancient(master.port());
        Message hello = make_hello("museum-piece");
        hello.protocol_version = 2;
        ancient.send(hello);
        const std::optional<std::string> reply = ancient.read_line();
        REQUIRE(reply.has_value());
        const Message m = parse_message(*reply);
        CHECK(m.type == MessageType::shutdown);
        CHECK(m.reason.find("unsupported protocol version") !=
              std::string::npos);
        CHECK(!ancient.read_line().has_value());  // then dropped

        Joiner worker(spawn_worker(master.port(), cfg.evaluator_spec,
                                   cfg.limits, "modern", worker_err));
    }
    CHECK(!master_err);
    CHECK(!worker_err);
    CHECK(master.session().unique_evaluations() == 2);
}

TEST_CASE("zero budget serves an empty run") {
    SessionConfig cfg = dist_config(0, 0);
    Master master(cfg, fast_master());
    master.run();  // returns without any worker
    CHECK(master.session().unique_evaluations() == 0);
    CHECK(master.session().iterations() == 0);
}

TEST_CASE("worker gives up after bounded backoff") {
    // Find a port that refuses connections: bind one, note it, close it.
    const int probe = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(probe >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(::bind(probe, reinterpret_cast<sockaddr*>(&addr),
                   sizeof(addr)) == 0);
    socklen_t len = sizeof(addr);
    ::getsockname(probe, reinterpret_cast<sockaddr*>(&addr), &len);
    const int dead_port = ntohs(addr.sin_port);
    ::close(probe);

    SessionConfig cfg = dist_config(0, 1);
    const std::unique_ptr<Evaluator> eval =
        make_evaluator(cfg.evaluator_spec, cfg.limits);
    WorkerOptions opt = fast_worker("stranded");
    opt.max_connect_attempts = 3;
    opt.initial_backoff_ms = 1;
    opt.max_backoff_ms = 4;
    CHECK_THROWS_AS(worker_loop("127.0.0.1", dead_port, *eval, opt),
                    ProtocolError);
}

TEST_CASE("distributed resume matches a straight sequential run") {
    const std::string snap = "dist_test_resume.snap";

    SessionConfig straight_cfg = dist_config(17, 12);
    SearchSession straight(straight_cfg);
    straight.run_to_completion(
        *make_evaluator(straight_cfg.evaluator_spec, straight_cfg.limits));

    SessionConfig half_cfg = dist_config(17, 6);
    SearchSession half(half_cfg);
    half.run_to_completion(
        *make_evaluator(half_cfg.evaluator_spec, half_cfg.limits));
    half.save_snapshot(snap);

    SearchSession resumed = SearchSession::restore_snapshot(snap);
    resumed.set_budget(12);
    Master master(std::move(resumed), fast_master(/*queue_bound=*/1));
    std::exception_ptr worker_err;
    {
        Joiner worker(spawn_worker(master.port(), straight_cfg.evaluator_spec,
                                   straight_cfg.limits, "w1", worker_err));
        master.run();
    }
    CHECK(!worker_err);

    CHECK(master.session().unique_evaluations() == 12);
    CHECK(dump_tree(master.session().engine().tree()) ==
          dump_tree(straight.engine().tree()));
    CHECK(master.session().best_accuracy() == straight.best_accuracy());
    CHECK(master.session().rng().draws() == straight.rng().draws());
    std::remove(snap.c_str());
}
