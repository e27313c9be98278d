#pragma once

#include <cstddef>

// Dense numeric kernels used by the tensor engine. Each kernel has a serial
// reference implementation and an OpenMP-parallel one with identical
// per-element arithmetic, so results are bit-identical between the two.
// The unsuffixed entry points dispatch on problem size.
namespace gpf::kernels {

// C (+)= A(m x k) * B(k x n), all row-major.
void mm_nn(const double* a, const double* b, double* c,
           std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
// C (+)= A(m x k) * B^T where B is given as n x k.
void mm_nt(const double* a, const double* b, double* c,
           std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
// C (+)= A^T * B where A is given as k x m, B as k x n.
void mm_tn(const double* a, const double* b, double* c,
           std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

void mm_nn_serial(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void mm_nt_serial(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void mm_tn_serial(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

void mm_nn_parallel(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void mm_nt_parallel(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void mm_tn_parallel(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// y[i] = 1 / (1 + exp(-x[i]))
void sigmoid(const double* x, double* y, std::size_t n);
void sigmoid_serial(const double* x, double* y, std::size_t n);
void sigmoid_parallel(const double* x, double* y, std::size_t n);

}  // namespace gpf::kernels
