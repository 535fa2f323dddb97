#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oslow/flow.hpp"
#include "oslow/permutation.hpp"
#include "oslow/tensor.hpp"

namespace oslow::train {

enum class Method { GumbelTopK, GumbelSinkhornST, SoftSinkhorn };

const char* method_name(Method m);
Method method_from_name(const std::string& s);

struct TrainConfig {
  int k = 16;
  int epochs = 200;
  std::size_t batch_size = 128;
  double lr_theta = 1e-3;
  double lr_gamma = 1e-2;
  double weight_decay = 1e-2;
  double sigma_init = 0.5;
  int phase_theta = 5;  // theta epochs per alternation cycle
  int phase_gamma = 1;  // gamma epochs per cycle
  Method method = Method::GumbelTopK;
  double sinkhorn_tau = 0.1;
  int sinkhorn_iters = 50;
  std::uint64_t seed = 0;
  // literal one-step alternation: every epoch updates theta on all batches,
  // then gamma against the already-updated theta
  bool one_step_alternation = false;
  bool record_gamma_trace = false;
  flow::FlowConfig flow;

  void validate() const;
};

struct StandardizeStats {
  std::vector<double> medians, mads, means, stds;
  std::size_t dropped_rows = 0;
};

/// Per column: drop rows further than 8 scaled MADs from the median, then
/// z-score the survivors. A row is dropped if any column flags it.
std::pair<Tensor, StandardizeStats> standardize(const Tensor& data);

/// Truncated-Boltzmann proxy: sum over the candidate set of
/// boltzmann_weights * average batch log-likelihood. Direct evaluation;
/// the trainer differentiates the same expression on a tape.
double proxy_score(const perm::GammaParams& gamma,
                   const flow::FlowModel& model, const perm::CandidateSet& set,
                   const Tensor& batch);

struct TrainResult {
  perm::Ordering final_ordering;
  std::vector<double> proxy_trace;  // per-epoch mean over batches
  std::vector<Tensor> gamma_trace;  // per-epoch snapshots when requested
  // ordering (1-based, comma separated) -> count among the final k samples
  std::map<std::string, int> perm_frequencies;
  StandardizeStats stats;
  flow::FlowModel model;
  perm::GammaParams gamma;
  std::uint64_t seed = 0;
  // soft-sinkhorn diagnostics
  double cheat_max_proxy = 0.0;
  bool cheat_loop_flag = false;
};

/// Alternating optimization of flow weights and permutation beliefs over
/// Gumbel-sampled candidate orderings; dispatches on cfg.method.
TrainResult train(const Tensor& data, const TrainConfig& cfg);

/// Ablation: hard permutations forward, Sinkhorn-relaxed gradients backward.
TrainResult train_gumbel_sinkhorn_st(const Tensor& data, TrainConfig cfg);

/// Ablation: fully end-to-end through a soft doubly stochastic mask source;
/// records the cheat diagnostics.
TrainResult train_soft_sinkhorn(const Tensor& data, TrainConfig cfg);

struct OracleEntry {
  perm::Ordering ordering;
  double loglik;  // average log-likelihood after fixed-order training
};

/// Trains theta independently for every permutation and ranks them by the
/// achieved likelihood. Exhaustive; requires d <= 5.
std::vector<OracleEntry> exhaustive_oracle(const Tensor& data,
                                           flow::FlowConfig flow_cfg,
                                           int epochs, std::size_t batch_size,
                                           double lr, std::uint64_t seed);

/// Orders variables by ascending marginal variance; ties keep column order.
perm::Ordering varsort(const Tensor& data);

/// Structured JSON document: ordering (1-based), traces, frequencies,
/// standardization stats, config echo, seed.
std::string result_to_json(const TrainResult& result, const TrainConfig& cfg);

std::string ordering_to_string(const perm::Ordering& o);  // "2,3,1" 1-based

}  // namespace oslow::train
