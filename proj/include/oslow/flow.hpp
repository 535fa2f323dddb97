#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "oslow/permutation.hpp"
#include "oslow/rng.hpp"
#include "oslow/tape.hpp"
#include "oslow/tensor.hpp"

namespace oslow::flow {

enum class BaseDistribution { StandardNormal, StandardLaplace };

const char* base_name(BaseDistribution b);
BaseDistribution base_from_name(const std::string& name);

struct FlowConfig {
  std::size_t d = 0;
  std::vector<std::size_t> hidden_multipliers = {10, 10};
  std::size_t num_transforms = 1;
  BaseDistribution base = BaseDistribution::StandardNormal;
  double clamp_a = 5.0;  // pre-scale squashing: exp(tanh(s/a)*b)
  double clamp_b = 2.5;

  void validate() const;
  std::size_t num_hidden_layers() const { return hidden_multipliers.size(); }
  /// neuron count of layer l; l=0 is the input layer
  std::size_t layer_width(std::size_t l) const {
    return l == 0 ? d : hidden_multipliers[l - 1] * d;
  }
};

/// Connectivity masks of one transform, conjugated by the ordering. Entries
/// are real so a doubly stochastic source produces soft masks; hard
/// permutations give exact 0/1.
struct MaskSet {
  std::vector<Tensor> hidden;  // (width_l, width_{l-1}) per hidden layer
  Tensor final_mask;           // (d, last hidden width), strict ordering only
};

/// Block masks for a hard permutation: hidden block (out,in) is live iff
/// rank(in) <= rank(out); the final layer requires strict inequality.
MaskSet build_masks(const FlowConfig& cfg, const perm::PermutationMatrix& p);

/// Same construction from an arbitrary (possibly doubly stochastic) source
/// matrix, via the conjugation P^T M_I P at block granularity.
MaskSet build_masks_from_matrix(const FlowConfig& cfg, const Tensor& p);

/// Weights of the permutation-conditioned flow. Keys follow
/// "f<k>.h<l>.W|b" for hidden layers and "f<k>.t|s.W|b" for the two heads.
struct FlowModel {
  FlowConfig config;
  std::map<std::string, Tensor> params;

  static FlowModel init(const FlowConfig& cfg, Rng& rng);
  static std::vector<std::string> param_names(const FlowConfig& cfg);
};

struct Heads {
  Tensor t;      // N x d location head
  Tensor s_raw;  // N x d unclamped pre-scale head
};

/// Masked forward pass of one transform's shared hidden stack and two final
/// heads. Entry i of each head sees only inputs strictly earlier in the
/// ordering.
Heads heads(const FlowModel& model, const MaskSet& masks, const Tensor& x,
            std::size_t transform = 0);

/// exp(tanh(s_raw/a) * b); output in [e^-b, e^b]
double clamp_scale_value(double s_raw, double a, double b);
Tensor clamp_scale(const Tensor& s_raw, double a, double b);

Tensor base_log_density(const Tensor& u, BaseDistribution base);
double base_log_density_value(double u, BaseDistribution base);

struct InverseResult {
  Tensor u;       // N x d noise reconstruction
  double loglik;  // average per-sample log-likelihood, higher is better
};

InverseResult inverse_and_loglik(const FlowModel& model,
                                 const perm::PermutationMatrix& p,
                                 const Tensor& x);
InverseResult inverse_and_loglik_masked(const FlowModel& model,
                                        const MaskSet& masks, const Tensor& x);

/// Sequential generation along the ordering, one coordinate at a time.
Tensor forward_sample(const FlowModel& model, const perm::PermutationMatrix& p,
                      const Tensor& u);

/// Tape nodes evaluating to the masks of one transform, for gradient paths
/// through a (soft) permutation node.
struct MaskNodes {
  std::vector<autodiff::NodeId> hidden;
  autodiff::NodeId final_mask = -1;
};

MaskNodes append_mask_constants(autodiff::Tape& tape, const MaskSet& masks);
/// Conjugation subgraph: block masks computed from a d x d source node.
MaskNodes append_mask_graph(autodiff::Tape& tape, const FlowConfig& cfg,
                            autodiff::NodeId source);

/// Appends the average log-likelihood of a batch under one mask
/// configuration. Parameters are declared as trainable tape inputs named
/// "<prefix><param>"; the batch input node is shared by the caller.
autodiff::NodeId append_loglik_graph(autodiff::Tape& tape,
                                     const FlowConfig& cfg,
                                     const std::string& prefix,
                                     autodiff::NodeId x, std::size_t batch,
                                     const MaskNodes& masks);

/// Declares every flow parameter once on a tape (trainable inputs).
void declare_params(autodiff::Tape& tape, const FlowConfig& cfg,
                    const std::string& prefix);

/// Self-describing checkpoint: config, permutation belief, all weight
/// tensors with shape headers, free-form metadata. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const FlowModel& model,
                     const perm::GammaParams& gamma,
                     const std::string& meta_json);

struct Checkpoint {
  FlowModel model;
  perm::GammaParams gamma;
  std::string meta_json;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace oslow::flow
