// Times the serial reference kernels against their OpenMP counterparts on a
// few representative shapes and cross-checks that both produce the same
// numbers. Build with -DARCHSEARCH_ENABLE_OPENMP=ON to see a real contrast;
// without OpenMP the parallel entry points fall back to the serial loops.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "archsearch/kernels.hpp"
#include "archsearch/rng.hpp"

namespace {

using archsearch::Rng;

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.next_in(-1.0, 1.0);
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
    }
    return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up caches and OpenMP's thread pool once
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct Row {
    std::string name;
    double serial_ms = 0.0;
    double parallel_ms = 0.0;
    double diff = 0.0;
};

void print_row(const Row& r) {
    std::printf("%-28s %10.3f %10.3f %8.2fx   %.3g\n", r.name.c_str(),
                r.serial_ms, r.parallel_ms,
                r.parallel_ms > 0.0 ? r.serial_ms / r.parallel_ms : 0.0,
                r.diff);
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 20;
    const int batch = 256;
    const int in_dim = 128;
    const int out_dim = 128;
    const std::size_t n_elem = 1u << 20;

    Rng rng(42);
    const std::vector<double> X = random_vec(
        static_cast<std::size_t>(batch) * in_dim, rng);
    const std::vector<double> W = random_vec(
        static_cast<std::size_t>(in_dim) * out_dim, rng);
    const std::vector<double> B = random_vec(out_dim, rng);
    const std::vector<double> dY = random_vec(
        static_cast<std::size_t>(batch) * out_dim, rng);
    const std::vector<double> big = random_vec(n_elem, rng);

    std::vector<Row> rows;

    {
        std::vector<double> ys(static_cast<std::size_t>(batch) * out_dim);
        std::vector<double> yp = ys;
        Row r{"matmul_bias 256x128x128"};
        r.serial_ms = time_ms(
            [&] {
                archsearch::kernels::matmul_bias_serial(
                    batch, in_dim, out_dim, X.data(), W.data(), B.data(),
                    ys.data());
            },
            reps);
        r.parallel_ms = time_ms(
            [&] {
                archsearch::kernels::matmul_bias_parallel(
                    batch, in_dim, out_dim, X.data(), W.data(), B.data(),
                    yp.data());
            },
            reps);
        r.diff = max_abs_diff(ys, yp);
        rows.push_back(r);
    }
    {
        std::vector<double> gs(static_cast<std::size_t>(in_dim) * out_dim);
        std::vector<double> gp = gs;
        Row r{"grad_weights 256x128x128"};
        r.serial_ms = time_ms(
            [&] {
                archsearch::kernels::grad_weights_serial(
                    batch, in_dim, out_dim, X.data(), dY.data(), gs.data());
            },
            reps);
        r.parallel_ms = time_ms(
            [&] {
                archsearch::kernels::grad_weights_parallel(
                    batch, in_dim, out_dim, X.data(), dY.data(), gp.data());
            },
            reps);
        r.diff = max_abs_diff(gs, gp);
        rows.push_back(r);
    }
    {
        std::vector<double> gs(static_cast<std::size_t>(batch) * in_dim);
        std::vector<double> gp = gs;
        Row r{"grad_input 256x128x128"};
        r.serial_ms = time_ms(
            [&] {
                archsearch::kernels::grad_input_serial(
                    batch, in_dim, out_dim, dY.data(), W.data(), gs.data());
            },
            reps);
        r.parallel_ms = time_ms(
            [&] {
                archsearch::kernels::grad_input_parallel(
                    batch, in_dim, out_dim, dY.data(), W.data(), gp.data());
            },
            reps);
        r.diff = max_abs_diff(gs, gp);
        rows.push_back(r);
    }
    {
        std::vector<double> ys = big;
        std::vector<double> yp = big;
        Row r{"sigmoid 1M"};
        r.serial_ms = time_ms(
            [&] {
                ys = big;
                archsearch::kernels::sigmoid_serial(ys.size(), ys.data());
            },
            reps);
        r.parallel_ms = time_ms(
            [&] {
                yp = big;
                archsearch::kernels::sigmoid_parallel(yp.size(), yp.data());
            },
            reps);
        r.diff = max_abs_diff(ys, yp);
        rows.push_back(r);
    }
    {
        std::vector<double> ws = big, wp = big;
        std::vector<double> ms(n_elem, 0.0), vs(n_elem, 0.0);
        std::vector<double> mp(n_elem, 0.0), vp(n_elem, 0.0);
        Row r{"adam_step 1M"};
        r.serial_ms = time_ms(
            [&] {
                archsearch::kernels::adam_step_serial(
                    n_elem, ws.data(), big.data(), ms.data(), vs.data(), 1,
                    1e-3, 0.9, 0.999, 1e-8);
            },
            reps);
        r.parallel_ms = time_ms(
            [&] {
                archsearch::kernels::adam_step_parallel(
                    n_elem, wp.data(), big.data(), mp.data(), vp.data(), 1,
                    1e-3, 0.9, 0.999, 1e-8);
            },
            reps);
        // Adam mutates its state every call, so after `reps` identical calls
        // on both sides the weights must still agree exactly.
        r.diff = max_abs_diff(ws, wp);
        rows.push_back(r);
    }

    std::printf("%-28s %10s %10s %9s   %s\n", "kernel", "serial ms",
                "parallel ms", "speedup", "max |diff|");
    bool ok = true;
    for (const Row& r : rows) {
        print_row(r);
        if (!(r.diff <= 1e-12)) ok = false;
    }
    if (!ok) {
        std::fprintf(stderr, "serial and parallel kernels disagree\n");
        return 1;
    }
    return 0;
}
