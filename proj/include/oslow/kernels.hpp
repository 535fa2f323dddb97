#pragma once

#include <cstddef>

namespace oslow::kern {

// Dense kernels used by the autodiff tape and the direct flow evaluators.
// Every kernel has a *_serial reference used in tests; the unsuffixed entry
// points run the same loop nest with OpenMP across output rows whenever the
// problem is large enough, so serial and parallel results are bit-identical
// (each output element is reduced in the same order either way).

// Per-thread switch. Worker pools that already parallelize at the job level
// set this to false to avoid oversubscription.
void set_parallel_enabled(bool enabled);
bool parallel_enabled();

// C(n x m) = A(n x k) * B(k x m)
void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m);
void matmul_nn(const double* a, const double* b, double* c, std::size_t n,
               std::size_t k, std::size_t m);

// C(n x m) = A(n x k) * B(m x k)^T
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m);
void matmul_nt(const double* a, const double* b, double* c, std::size_t n,
               std::size_t k, std::size_t m);

// C(n x m) = A(k x n)^T * B(k x m)
void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m);
void matmul_tn(const double* a, const double* b, double* c, std::size_t n,
               std::size_t k, std::size_t m);

// out[i] = f(x[i]); f identified by a small enum so the OpenMP body stays in
// one translation unit.
enum class Unary { Tanh, Sigmoid, Exp, Softplus, Abs, Neg };
void unary_map_serial(Unary f, const double* x, double* out, std::size_t n);
void unary_map(Unary f, const double* x, double* out, std::size_t n);

void mul_serial(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void add_serial(const double* a, const double* b, double* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);

// Fixed-order chunked sum: partial sums per 4096-element chunk combined in
// chunk order, so the result is independent of the thread count.
double sum_serial(const double* x, std::size_t n);
double sum(const double* x, std::size_t n);

}  // namespace oslow::kern
