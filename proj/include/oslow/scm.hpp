#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oslow/permutation.hpp"
#include "oslow/rng.hpp"
#include "oslow/tensor.hpp"

namespace oslow::scm {

enum class GraphKind { Path, Tournament, ErdosRenyi };
enum class FunctionalForm { Linear, Sinusoidal, Polynomial, Nonparametric };
enum class NoiseFamily { Normal, Laplace };
enum class ScmMode { Affine, Additive };

const char* to_string(GraphKind k);
const char* to_string(FunctionalForm f);
const char* to_string(NoiseFamily n);
const char* to_string(ScmMode m);
GraphKind graph_from_string(const std::string& s);
FunctionalForm form_from_string(const std::string& s);
NoiseFamily noise_from_string(const std::string& s);
ScmMode mode_from_string(const std::string& s);

struct DagSpec {
  std::size_t d = 0;
  GraphKind kind = GraphKind::Path;
  std::vector<std::pair<int, int>> edges;  // (parent, child), 0-based
  perm::Ordering generating_order;

  std::vector<int> parents_of(int v) const;
  std::size_t num_edges() const { return edges.size(); }
};

/// Random generating order, then: path = consecutive chain, tournament = all
/// forward pairs, Erdos-Renyi = forward pairs kept with probability p.
DagSpec gen_graph(GraphKind kind, std::size_t d, double p, Rng& rng);

/// Parametric descriptors of one node's link functions. Weight magnitudes
/// are uniform in [0.5, 1.5] with random sign; nonparametric nodes draw
/// their functions from a GP during simulation instead.
struct NodeFunctions {
  std::vector<double> loc_weights;
  std::vector<double> scale_weights;  // affine mode only
  double offset = 0.0;                // polynomial location shift
};

struct ScmSpec {
  DagSpec dag;
  FunctionalForm form = FunctionalForm::Linear;
  NoiseFamily noise = NoiseFamily::Normal;
  ScmMode mode = ScmMode::Affine;
  bool normalize_during_generation = false;
  double noise_scale = 1.0;
  std::vector<NodeFunctions> node_fns;
};

/// Fills the per-node function descriptors. Location: linear w'z,
/// sinusoidal sin(w'z) + w'z, polynomial (w'z)^3 + b with b ~ U(-1,1).
/// Scale: additive mode 1 everywhere; affine mode |v'z| + 0.1 for linear
/// and softplus(v'z or GP draw) + 0.1 otherwise. Linear and polynomial
/// datasets normalize during generation.
ScmSpec make_functions(DagSpec dag, FunctionalForm form, ScmMode mode,
                       Rng& rng);

struct Dataset {
  Tensor data;  // N x d
  ScmSpec spec;
  std::uint64_t seed = 0;
};

/// Ancestral sampling along the generating order. Nonparametric link
/// functions are drawn jointly from a squared-exponential GP over the
/// realized (standardized) parent inputs, via Cholesky with escalating
/// jitter. Bit-reproducible from (spec, n, seed).
Dataset simulate(const ScmSpec& spec, std::size_t n, std::uint64_t seed);

struct SuiteRow {
  std::string slug;
  ScmMode mode;
  FunctionalForm form;
  GraphKind graph;
  NoiseFamily noise;
  int num_simulations = 0;
  std::vector<std::size_t> dims;  // empty: d drawn uniformly from {3,4,5,6}
};

/// The benchmark dataset matrix. scale is "small" (30 rows, 20 simulations
/// each, d in 3..6) or "large" (3 Erdos-Renyi rows at d in {10, 25}, 10
/// simulations per size).
std::vector<SuiteRow> benchmark_suite(const std::string& scale);

/// Builds the spec for one simulation of a suite row (graph + functions +
/// noise family defaults) from a derived seed.
ScmSpec spec_for_row(const SuiteRow& row, std::size_t d, std::uint64_t seed);

double erdos_renyi_default_p(std::size_t d);

}  // namespace oslow::scm
