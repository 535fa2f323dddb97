#include "oslow/kernels.hpp"

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace oslow::kern {

namespace {
thread_local bool g_parallel = true;

// work threshold below which the parallel entry points stay serial; small
// problems (one training batch at d <= 6) are faster on one core
constexpr std::size_t kParallelCutoff = 1u << 21;

inline double apply(Unary f, double x) {
  switch (f) {
    case Unary::Tanh:
      return std::tanh(x);
    case Unary::Sigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Unary::Exp:
      return std::exp(x);
    case Unary::Softplus:
      // log1p(exp(x)) overflows for large x; branch keeps it exact.
      return x > 30.0 ? x : std::log1p(std::exp(x));
    case Unary::Abs:
      return std::abs(x);
    case Unary::Neg:
      return -x;
  }
  return x;
}

inline bool go_parallel(std::size_t work) {
#ifdef _OPENMP
  return g_parallel && work >= kParallelCutoff && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}
}  // namespace

void set_parallel_enabled(bool enabled) { g_parallel = enabled; }
bool parallel_enabled() { return g_parallel; }

void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nn(const double* a, const double* b, double* c, std::size_t n,
               std::size_t k, std::size_t m) {
  if (!go_parallel(n * k * m)) {
    matmul_nn_serial(a, b, c, n, k, m);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    double* ci = c + static_cast<std::size_t>(i) * m;
    for (std::size_t j = 0; j < m; ++j) ci[j] = 0.0;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
#endif
}

void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t n,
               std::size_t k, std::size_t m) {
  if (!go_parallel(n * k * m)) {
    matmul_nt_serial(a, b, c, n, k, m);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
#endif
}

void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) ci[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[p * n + i];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t n,
               std::size_t k, std::size_t m) {
  if (!go_parallel(n * k * m)) {
    matmul_tn_serial(a, b, c, n, k, m);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    double* ci = c + static_cast<std::size_t>(i) * m;
    for (std::size_t j = 0; j < m; ++j) ci[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[p * n + static_cast<std::size_t>(i)];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
#endif
}

void unary_map_serial(Unary f, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = apply(f, x[i]);
}

void unary_map(Unary f, const double* x, double* out, std::size_t n) {
  if (!go_parallel(n * 8)) {
    unary_map_serial(f, x, out, n);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    out[i] = apply(f, x[i]);
#endif
}

void mul_serial(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  if (!go_parallel(n)) {
    mul_serial(a, b, out, n);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    out[i] = a[i] * b[i];
#endif
}

void add_serial(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  if (!go_parallel(n)) {
    add_serial(a, b, out, n);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    out[i] = a[i] + b[i];
#endif
}

namespace {
constexpr std::size_t kChunk = 4096;

inline double chunk_sum(const double* x, std::size_t lo, std::size_t hi) {
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += x[i];
  return acc;
}
}  // namespace

double sum_serial(const double* x, std::size_t n) {
  std::size_t nchunks = (n + kChunk - 1) / kChunk;
  double acc = 0.0;
  for (std::size_t c = 0; c < nchunks; ++c)
    acc += chunk_sum(x, c * kChunk, std::min(n, (c + 1) * kChunk));
  return acc;
}

double sum(const double* x, std::size_t n) {
  std::size_t nchunks = (n + kChunk - 1) / kChunk;
  if (!go_parallel(n) || nchunks < 2) return sum_serial(x, n);
#ifdef _OPENMP
  std::vector<double> partial(nchunks);
#pragma omp parallel for schedule(static)
  for (long long c = 0; c < static_cast<long long>(nchunks); ++c) {
    std::size_t lo = static_cast<std::size_t>(c) * kChunk;
    partial[static_cast<std::size_t>(c)] =
        chunk_sum(x, lo, std::min(n, lo + kChunk));
  }
  double acc = 0.0;
  for (double p : partial) acc += p;
  return acc;
#else
  return sum_serial(x, n);
#endif
}

}  // namespace oslow::kern
