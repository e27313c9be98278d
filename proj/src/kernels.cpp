#include "gpf/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gpf::kernels {

namespace {

// Work threshold below which the parallel variants are not worth spawning.
constexpr std::size_t kMmParallelFlops = 1u << 16;
constexpr std::size_t kEwParallelSize = 1u << 14;

inline double dot_nn(const double* a, const double* b,
                     std::size_t k, std::size_t n, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t l = 0; l < k; ++l) s += a[i * k + l] * b[l * n + j];
    return s;
}

inline double dot_nt(const double* a, const double* b,
                     std::size_t k, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t l = 0; l < k; ++l) s += a[i * k + l] * b[j * k + l];
    return s;
}

inline double dot_tn(const double* a, const double* b,
                     std::size_t k, std::size_t m, std::size_t n,
                     std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t l = 0; l < k; ++l) s += a[l * m + i] * b[l * n + j];
    return s;
}

}  // namespace

void mm_nn_serial(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double s = dot_nn(a, b, k, n, i, j);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void mm_nn_parallel(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double s = dot_nn(a, b, k, n, i, j);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void mm_nt_serial(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double s = dot_nt(a, b, k, i, j);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void mm_nt_parallel(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double s = dot_nt(a, b, k, i, j);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void mm_tn_serial(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double s = dot_tn(a, b, k, m, n, i, j);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void mm_tn_parallel(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double s = dot_tn(a, b, k, m, n, i, j);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void mm_nn(const double* a, const double* b, double* c,
           std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (m * k * n >= kMmParallelFlops)
        mm_nn_parallel(a, b, c, m, k, n, accumulate);
    else
        mm_nn_serial(a, b, c, m, k, n, accumulate);
}

void mm_nt(const double* a, const double* b, double* c,
           std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (m * k * n >= kMmParallelFlops)
        mm_nt_parallel(a, b, c, m, k, n, accumulate);
    else
        mm_nt_serial(a, b, c, m, k, n, accumulate);
}

void mm_tn(const double* a, const double* b, double* c,
           std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (m * k * n >= kMmParallelFlops)
        mm_tn_parallel(a, b, c, m, k, n, accumulate);
    else
        mm_tn_serial(a, b, c, m, k, n, accumulate);
}

void sigmoid_serial(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void sigmoid_parallel(const double* x, double* y, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void sigmoid(const double* x, double* y, std::size_t n) {
    if (n >= kEwParallelSize)
        sigmoid_parallel(x, y, n);
    else
        sigmoid_serial(x, y, n);
}

}  // namespace gpf::kernels
