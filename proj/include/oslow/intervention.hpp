#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "oslow/flow.hpp"
#include "oslow/permutation.hpp"
#include "oslow/rng.hpp"
#include "oslow/scm.hpp"
#include "oslow/tensor.hpp"

namespace oslow::intervene {

struct DoQuery {
  int target = 0;  // 0-based variable index
  double value = 0.0;
  std::vector<int> responses;
  int num_samples = 50;
  double confidence = 0.99;
};

/// Trained flow as a generative model. The flow operates on standardized
/// data; means/stds map between model space and data units (empty = identity).
struct FlowGenerator {
  flow::FlowModel model;
  perm::Ordering ordering;
  std::vector<double> means;
  std::vector<double> stds;
};

using Generator = std::variant<scm::ScmSpec, FlowGenerator>;

/// Ancestral sampling with the target coordinate clamped to y; descendants
/// consume the clamped value, non-descendants are untouched. For the flow
/// this is noise replacement: the clamped coordinate's latent is back-solved
/// through every stacked transform. Ground-truth generators ignore
/// normalize_during_generation (the structural equations are taken as-is)
/// and reject nonparametric forms, whose link functions only exist as joint
/// draws during simulation.
Tensor do_sample_batch(const Generator& gen, int target, double value,
                       std::size_t count, Rng& rng);

/// Single draw from the hard-interventional distribution.
std::vector<double> do_sample(const Generator& gen, int target, double value,
                              Rng& rng);

struct DoEstimate {
  double y = 0.0;
  int response = 0;  // 0-based
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int n = 0;
  bool degenerate = false;  // zero-variance response, interval collapsed
};

/// Monte-Carlo mean with a normal-approximation confidence interval per
/// response variable.
std::vector<DoEstimate> estimate_do_expectation(const Generator& gen,
                                                const DoQuery& query,
                                                Rng& rng);

/// One estimate row per grid point, each with an rng derived from
/// (seed, grid index), so grid points are order-independent.
std::vector<DoEstimate> sweep(const Generator& gen, int target,
                              const std::vector<double>& y_grid,
                              const DoQuery& query, std::uint64_t seed);

/// columns: y,response,mean,ci_low,ci_high,n
std::string sweep_to_csv(const std::vector<DoEstimate>& rows);

/// two-sided standard normal quantile at probability p in (0, 1)
double normal_quantile(double p);

}  // namespace oslow::intervene
