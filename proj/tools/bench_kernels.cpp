// Timing harness comparing the serial reference kernels against the OpenMP
// entry points, plus a masked-MLP forward pass at training-like sizes.
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "oslow/kernels.hpp"
#include "oslow/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(int reps, const auto& fn) {
  fn();  // warmup
  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void fill(std::vector<double>& v, oslow::Rng& rng) {
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
}

void bench_matmul(std::size_t n, std::size_t k, std::size_t m, int reps) {
  oslow::Rng rng(12);
  std::vector<double> a(n * k), b(k * m), c(n * m);
  fill(a, rng);
  fill(b, rng);
  double serial = time_ms(reps, [&] {
    oslow::kern::matmul_nn_serial(a.data(), b.data(), c.data(), n, k, m);
  });
  double par = time_ms(reps, [&] {
    oslow::kern::matmul_nn(a.data(), b.data(), c.data(), n, k, m);
  });
  std::printf("matmul %4zux%-4zu * %4zux%-4zu  serial %8.3f ms   omp %8.3f ms   speedup %.2fx\n",
              n, k, k, m, serial, par, serial / par);
}

// two hidden layers + two head projections, the shape of one flow transform
void bench_mlp(std::size_t batch, std::size_t d, std::size_t mult, int reps) {
  oslow::Rng rng(34);
  std::size_t h = d * mult;
  std::vector<double> x(batch * d), w1(h * d), h1(batch * h), w2(h * h),
      h2(batch * h), wt(d * h), heads(batch * d);
  fill(x, rng);
  fill(w1, rng);
  fill(w2, rng);
  fill(wt, rng);
  auto pass = [&](bool parallel) {
    oslow::kern::set_parallel_enabled(parallel);
    oslow::kern::matmul_nt(x.data(), w1.data(), h1.data(), batch, d, h);
    oslow::kern::unary_map(oslow::kern::Unary::Tanh, h1.data(), h1.data(),
                           h1.size());
    oslow::kern::matmul_nt(h1.data(), w2.data(), h2.data(), batch, h, h);
    oslow::kern::unary_map(oslow::kern::Unary::Tanh, h2.data(), h2.data(),
                           h2.size());
    oslow::kern::matmul_nt(h2.data(), wt.data(), heads.data(), batch, h, d);
    oslow::kern::set_parallel_enabled(true);
  };
  double serial = time_ms(reps, [&] { pass(false); });
  double par = time_ms(reps, [&] { pass(true); });
  std::printf("mlp    batch=%zu d=%zu mult=%zu      serial %8.3f ms   omp %8.3f ms   speedup %.2fx\n",
              batch, d, mult, serial, par, serial / par);
}

}  // namespace

int main() {
  std::printf("-- kernel benchmark (serial reference vs OpenMP) --\n");
  bench_matmul(128, 60, 60, 200);
  bench_matmul(512, 256, 256, 20);
  bench_matmul(1024, 1024, 1024, 3);
  bench_mlp(128, 6, 10, 200);
  bench_mlp(1024, 25, 10, 20);
  return 0;
}
