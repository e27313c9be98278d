// Timing comparison of the serial reference kernels against the
// OpenMP-parallel ones.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "gpf/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = clock_type::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = clock_type::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled (serial build)\n");
#endif
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);

    std::printf("%-10s %6s %12s %12s %8s\n", "kernel", "n", "serial(ms)", "parallel(ms)",
                "speedup");
    for (std::size_t n : {64, 128, 256, 512}) {
        std::vector<double> a(n * n), b(n * n), c(n * n);
        for (auto& v : a) v = dist(rng);
        for (auto& v : b) v = dist(rng);
        const int reps = n <= 128 ? 20 : 5;
        const double ts = time_ms([&] { gpf::kernels::mm_nn_serial(a.data(), b.data(), c.data(), n, n, n); }, reps);
        const double tp = time_ms([&] { gpf::kernels::mm_nn_parallel(a.data(), b.data(), c.data(), n, n, n); }, reps);
        std::printf("%-10s %6zu %12.3f %12.3f %8.2fx\n", "mm_nn", n, ts, tp, ts / tp);
    }
    for (std::size_t n : {1u << 16, 1u << 20}) {
        std::vector<double> x(n), y(n);
        for (auto& v : x) v = dist(rng);
        const double ts = time_ms([&] { gpf::kernels::sigmoid_serial(x.data(), y.data(), n); }, 20);
        const double tp = time_ms([&] { gpf::kernels::sigmoid_parallel(x.data(), y.data(), n); }, 20);
        std::printf("%-10s %6zu %12.3f %12.3f %8.2fx\n", "sigmoid", n, ts, tp, ts / tp);
    }
    return 0;
}
