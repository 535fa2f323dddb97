#include "oslow/permutation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oslow/common.hpp"

namespace oslow::perm {

PermutationMatrix PermutationMatrix::identity(std::size_t d) {
  PermutationMatrix p;
  p.d = d;
  p.entries.assign(d * d, 0);
  for (std::size_t i = 0; i < d; ++i) p.entries[i * d + i] = 1;
  return p;
}

bool PermutationMatrix::valid() const {
  if (entries.size() != d * d) return false;
  std::vector<int> row(d, 0), col(d, 0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      std::uint8_t e = entries[i * d + j];
      if (e != 0 && e != 1) return false;
      row[i] += e;
      col[j] += e;
    }
  for (std::size_t i = 0; i < d; ++i)
    if (row[i] != 1 || col[i] != 1) return false;
  return true;
}

Tensor PermutationMatrix::to_tensor() const {
  Tensor t = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d * d; ++i) t.values[i] = entries[i];
  return t;
}

bool Ordering::valid() const {
  std::vector<bool> seen(seq.size(), false);
  for (int v : seq) {
    if (v < 0 || static_cast<std::size_t>(v) >= seq.size() || seen[v])
      return false;
    seen[v] = true;
  }
  return true;
}

std::vector<int> Ordering::ranks() const {
  std::vector<int> r(seq.size());
  for (std::size_t k = 0; k < seq.size(); ++k) r[seq[k]] = static_cast<int>(k);
  return r;
}

Ordering to_ordering(const PermutationMatrix& p) {
  if (!p.valid()) throw config_error("to_ordering: invalid permutation matrix");
  Ordering o;
  o.seq.resize(p.d);
  for (std::size_t i = 0; i < p.d; ++i)
    for (std::size_t j = 0; j < p.d; ++j)
      if (p.entries[i * p.d + j]) o.seq[i] = static_cast<int>(j);
  return o;
}

PermutationMatrix from_ordering(const Ordering& o) {
  if (!o.valid()) throw config_error("from_ordering: invalid ordering");
  PermutationMatrix p;
  p.d = o.d();
  p.entries.assign(p.d * p.d, 0);
  for (std::size_t i = 0; i < p.d; ++i)
    p.entries[i * p.d + static_cast<std::size_t>(o.seq[i])] = 1;
  return p;
}

Tensor squash(const GammaParams& g) {
  if (!g.raw.all_finite()) throw numeric_error("squash: non-finite gamma");
  Tensor out = Tensor::zeros(g.raw.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = 1.0 / (1.0 + std::exp(-g.raw.values[i]));
  return out;
}

PermutationMatrix matching(const Tensor& score) {
  if (score.rank() != 2 || score.rows() != score.cols() || score.rows() == 0)
    throw shape_error("matching: square matrix required");
  if (!score.all_finite()) throw numeric_error("matching: non-finite score");
  const int n = static_cast<int>(score.rows());
  const double inf = std::numeric_limits<double>::infinity();

  // shortest-augmenting-path assignment on cost = -score (maximization)
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = -score.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  PermutationMatrix out;
  out.d = static_cast<std::size_t>(n);
  out.entries.assign(out.d * out.d, 0);
  for (int j = 1; j <= n; ++j)
    out.entries[static_cast<std::size_t>(p[j] - 1) * out.d +
                static_cast<std::size_t>(j - 1)] = 1;
  return out;
}

Tensor sinkhorn(const Tensor& score, double tau, int iters) {
  if (score.rank() != 2 || score.rows() != score.cols())
    throw shape_error("sinkhorn: square matrix required");
  if (!(tau > 0)) throw config_error("sinkhorn: tau must be positive");
  if (!score.all_finite()) throw numeric_error("sinkhorn: non-finite score");
  const std::size_t d = score.rows();
  Tensor m = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    double rmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j)
      rmax = std::max(rmax, score.at(i, j));
    for (std::size_t j = 0; j < d; ++j)
      m.at(i, j) = std::exp((score.at(i, j) - rmax) / tau);
  }
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += m.at(i, j);
      for (std::size_t j = 0; j < d; ++j) m.at(i, j) /= s;
    }
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += m.at(i, j);
      for (std::size_t i = 0; i < d; ++i) m.at(i, j) /= s;
    }
  }
  if (!m.all_finite()) throw numeric_error("sinkhorn: non-finite result");
  return m;
}

Tensor sample_gumbel(std::size_t d, double sigma, Rng& rng) {
  Tensor t = Tensor::zeros({d, d});
  for (auto& v : t.values) v = sigma * rng.gumbel();
  return t;
}

std::vector<PermutationMatrix> sample_hard_perms(const GammaParams& g,
                                                 double sigma, int k,
                                                 Rng& rng) {
  if (k < 1) throw config_error("sample_hard_perms: k must be >= 1");
  Tensor base = squash(g);
  std::vector<PermutationMatrix> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s) {
    Tensor noise = sample_gumbel(g.d(), sigma, rng);
    Tensor perturbed = base;
    for (std::size_t i = 0; i < perturbed.values.size(); ++i)
      perturbed.values[i] += noise.values[i];
    out.push_back(matching(perturbed));
  }
  return out;
}

CandidateSet dedupe(const std::vector<PermutationMatrix>& perms) {
  if (perms.empty()) throw config_error("dedupe: empty permutation list");
  CandidateSet set;
  for (const auto& p : perms) {
    bool seen = false;
    for (const auto& q : set.perms)
      if (q == p) {
        seen = true;
        break;
      }
    if (!seen) set.perms.push_back(p);
  }
  return set;
}

double frobenius_inner(const PermutationMatrix& p, const Tensor& m) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.entries.size(); ++i)
    if (p.entries[i]) acc += m.values[i];
  return acc;
}

CandidateSet boltzmann_weights(const GammaParams& g, CandidateSet set) {
  if (set.perms.empty())
    throw config_error("boltzmann_weights: empty candidate set");
  Tensor sq = squash(g);
  std::vector<double> energy(set.perms.size());
  double emax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < set.perms.size(); ++i) {
    energy[i] = frobenius_inner(set.perms[i], sq);
    emax = std::max(emax, energy[i]);
  }
  double z = 0.0;
  set.weights.resize(set.perms.size());
  for (std::size_t i = 0; i < energy.size(); ++i) {
    set.weights[i] = std::exp(energy[i] - emax);
    z += set.weights[i];
  }
  for (auto& w : set.weights) w /= z;
  return set;
}

double schedule_sigma(const NoiseSchedule& s, int epoch) {
  if (epoch < 0 || epoch > s.total_epochs)
    throw config_error("schedule_sigma: epoch out of range");
  return s.sigma_init *
         (1.0 - static_cast<double>(epoch) / static_cast<double>(s.total_epochs));
}

std::vector<PermutationMatrix> all_permutations(std::size_t d) {
  std::vector<int> seq(d);
  std::iota(seq.begin(), seq.end(), 0);
  std::vector<PermutationMatrix> out;
  do {
    out.push_back(from_ordering(Ordering{seq}));
  } while (std::next_permutation(seq.begin(), seq.end()));
  return out;
}

}  // namespace oslow::perm
