#pragma once

#include <cstdint>
#include <vector>

#include "oslow/rng.hpp"
#include "oslow/tensor.hpp"

namespace oslow::perm {

/// 0/1 doubly stochastic matrix with exactly one 1 per row and column.
/// Convention: entries[i*d+j] == 1 means variable j sits at position i.
struct PermutationMatrix {
  std::size_t d = 0;
  std::vector<std::uint8_t> entries;

  static PermutationMatrix identity(std::size_t d);
  bool valid() const;
  Tensor to_tensor() const;

  friend bool operator==(const PermutationMatrix& a,
                         const PermutationMatrix& b) {
    return a.d == b.d && a.entries == b.entries;
  }
  friend bool operator<(const PermutationMatrix& a,
                        const PermutationMatrix& b) {
    return a.entries < b.entries;
  }
};

/// Sequence form: seq[k] = variable placed k-th (0-based internally; file
/// formats use 1-based labels).
struct Ordering {
  std::vector<int> seq;

  std::size_t d() const { return seq.size(); }
  bool valid() const;
  /// rank[v] = position of variable v
  std::vector<int> ranks() const;

  friend bool operator==(const Ordering& a, const Ordering& b) {
    return a.seq == b.seq;
  }
};

Ordering to_ordering(const PermutationMatrix& p);
PermutationMatrix from_ordering(const Ordering& o);

/// Unconstrained permutation-belief parameter.
struct GammaParams {
  Tensor raw;  // d x d

  static GammaParams zeros(std::size_t d) {
    return GammaParams{Tensor::zeros({d, d})};
  }
  std::size_t d() const { return raw.rows(); }
};

/// Elementwise sigmoid of the raw belief.
Tensor squash(const GammaParams& g);

/// Exact argmax of <P, score> over permutation matrices, solved as a linear
/// assignment problem in O(d^3). Ties break on the solver's fixed
/// lowest-row-first scan order.
PermutationMatrix matching(const Tensor& score);

/// exp(score/tau) followed by `iters` rounds of row-then-column
/// normalization. Per-row max subtraction before exponentiation; the first
/// row normalization cancels it exactly.
Tensor sinkhorn(const Tensor& score, double tau, int iters);

/// d x d matrix of sigma-scaled standard Gumbel draws.
Tensor sample_gumbel(std::size_t d, double sigma, Rng& rng);

std::vector<PermutationMatrix> sample_hard_perms(const GammaParams& g,
                                                 double sigma, int k,
                                                 Rng& rng);

struct CandidateSet {
  std::vector<PermutationMatrix> perms;
  std::vector<double> weights;  // empty until boltzmann_weights
};

/// Order-preserving deduplication. Errors on an empty list.
CandidateSet dedupe(const std::vector<PermutationMatrix>& perms);

/// weights[i] proportional to exp<P_i, squash(g)>, normalized over the set
/// with max subtraction.
CandidateSet boltzmann_weights(const GammaParams& g, CandidateSet set);

double frobenius_inner(const PermutationMatrix& p, const Tensor& m);

struct NoiseSchedule {
  double sigma_init = 0.5;
  int total_epochs = 1;
};

/// Linear decay: sigma_init * (1 - epoch/total_epochs).
double schedule_sigma(const NoiseSchedule& s, int epoch);

/// All d! permutation matrices in lexicographic sequence order. Intended for
/// oracles and exhaustive search at small d.
std::vector<PermutationMatrix> all_permutations(std::size_t d);

}  // namespace oslow::perm
