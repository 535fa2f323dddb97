#include "oslow/flow.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oslow/common.hpp"
#include "oslow/kernels.hpp"

namespace oslow::flow {

namespace {
constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)
constexpr double kLogTwo = 0.6931471805599453;

std::string pname(std::size_t k, const std::string& tail) {
  return "f" + std::to_string(k) + "." + tail;
}

// masked weight: W .* mask, materialized
Tensor masked(const Tensor& w, const Tensor& mask) {
  Tensor out = Tensor::zeros(w.shape);
  kern::mul(w.values.data(), mask.values.data(), out.values.data(),
            w.numel());
  return out;
}

// y = x * (mask.*W)^T + b
Tensor dense_masked(const Tensor& x, const Tensor& w, const Tensor& mask,
                    const Tensor& b) {
  Tensor mw = masked(w, mask);
  Tensor y = Tensor::zeros({x.rows(), w.rows()});
  kern::matmul_nt(x.values.data(), mw.values.data(), y.values.data(),
                  x.rows(), x.cols(), w.rows());
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y.at(r, c) += b.values[c];
  return y;
}
}  // namespace

const char* base_name(BaseDistribution b) {
  return b == BaseDistribution::StandardNormal ? "standard-normal"
                                               : "standard-laplace";
}

BaseDistribution base_from_name(const std::string& name) {
  if (name == "standard-normal") return BaseDistribution::StandardNormal;
  if (name == "standard-laplace") return BaseDistribution::StandardLaplace;
  throw config_error("unknown base distribution '" + name + "'");
}

void FlowConfig::validate() const {
  if (d < 1) throw config_error("flow: d must be >= 1");
  if (num_transforms < 1)
    throw config_error("flow: num_transforms must be >= 1");
  if (hidden_multipliers.empty())
    throw config_error("flow: at least one hidden layer required");
  for (auto m : hidden_multipliers)
    if (m < 1) throw config_error("flow: hidden multipliers must be >= 1");
  if (!(clamp_a > 0) || !(clamp_b > 0))
    throw config_error("flow: clamp parameters must be positive");
}

MaskSet build_masks(const FlowConfig& cfg, const perm::PermutationMatrix& p) {
  if (p.d != cfg.d) throw shape_error("build_masks: dimension mismatch");
  if (!p.valid()) throw config_error("build_masks: invalid permutation");
  // rank[v] = position of variable v; block (out,in) live iff
  // rank(in) <= rank(out), strict at the final layer
  auto ranks = perm::to_ordering(p).ranks();
  Tensor small_h = Tensor::zeros({cfg.d, cfg.d});
  Tensor small_f = Tensor::zeros({cfg.d, cfg.d});
  for (std::size_t a = 0; a < cfg.d; ++a)
    for (std::size_t b = 0; b < cfg.d; ++b) {
      small_h.at(a, b) = ranks[b] <= ranks[a] ? 1.0 : 0.0;
      small_f.at(a, b) = ranks[b] < ranks[a] ? 1.0 : 0.0;
    }

  MaskSet set;
  std::size_t layers = cfg.num_hidden_layers();
  for (std::size_t l = 1; l <= layers; ++l) {
    std::size_t win = cfg.layer_width(l - 1), wout = cfg.layer_width(l);
    std::size_t min = win / cfg.d, mout = wout / cfg.d;
    Tensor m = Tensor::zeros({wout, win});
    for (std::size_t q = 0; q < wout; ++q)
      for (std::size_t r = 0; r < win; ++r)
        m.at(q, r) = small_h.at(q / mout, r / min);
    set.hidden.push_back(std::move(m));
  }
  std::size_t wlast = cfg.layer_width(layers);
  std::size_t mlast = wlast / cfg.d;
  set.final_mask = Tensor::zeros({cfg.d, wlast});
  for (std::size_t v = 0; v < cfg.d; ++v)
    for (std::size_t r = 0; r < wlast; ++r)
      set.final_mask.at(v, r) = small_f.at(v, r / mlast);
  return set;
}

MaskSet build_masks_from_matrix(const FlowConfig& cfg, const Tensor& p) {
  if (p.rows() != cfg.d || p.cols() != cfg.d)
    throw shape_error("build_masks_from_matrix: dimension mismatch");
  // P^T * M_I * P with M_I lower triangular (with / without the diagonal)
  auto conj = [&](bool strict) {
    Tensor l = Tensor::zeros({cfg.d, cfg.d});
    for (std::size_t i = 0; i < cfg.d; ++i)
      for (std::size_t j = 0; j < cfg.d; ++j)
        l.at(i, j) = (strict ? j < i : j <= i) ? 1.0 : 0.0;
    Tensor lp = Tensor::zeros({cfg.d, cfg.d});
    kern::matmul_nn(l.values.data(), p.values.data(), lp.values.data(), cfg.d,
                    cfg.d, cfg.d);
    Tensor out = Tensor::zeros({cfg.d, cfg.d});
    kern::matmul_tn(p.values.data(), lp.values.data(), out.values.data(),
                    cfg.d, cfg.d, cfg.d);
    return out;
  };
  Tensor small_h = conj(false);
  Tensor small_f = conj(true);

  MaskSet set;
  std::size_t layers = cfg.num_hidden_layers();
  for (std::size_t l = 1; l <= layers; ++l) {
    std::size_t win = cfg.layer_width(l - 1), wout = cfg.layer_width(l);
    std::size_t min = win / cfg.d, mout = wout / cfg.d;
    Tensor m = Tensor::zeros({wout, win});
    for (std::size_t q = 0; q < wout; ++q)
      for (std::size_t r = 0; r < win; ++r)
        m.at(q, r) = small_h.at(q / mout, r / min);
    set.hidden.push_back(std::move(m));
  }
  std::size_t wlast = cfg.layer_width(layers);
  std::size_t mlast = wlast / cfg.d;
  set.final_mask = Tensor::zeros({cfg.d, wlast});
  for (std::size_t v = 0; v < cfg.d; ++v)
    for (std::size_t r = 0; r < wlast; ++r)
      set.final_mask.at(v, r) = small_f.at(v, r / mlast);
  return set;
}

std::vector<std::string> FlowModel::param_names(const FlowConfig& cfg) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < cfg.num_transforms; ++k) {
    for (std::size_t l = 0; l < cfg.num_hidden_layers(); ++l) {
      names.push_back(pname(k, "h" + std::to_string(l) + ".W"));
      names.push_back(pname(k, "h" + std::to_string(l) + ".b"));
    }
    for (const char* head : {"t", "s"}) {
      names.push_back(pname(k, std::string(head) + ".W"));
      names.push_back(pname(k, std::string(head) + ".b"));
    }
  }
  return names;
}

FlowModel FlowModel::init(const FlowConfig& cfg, Rng& rng) {
  cfg.validate();
  FlowModel m;
  m.config = cfg;
  for (std::size_t k = 0; k < cfg.num_transforms; ++k) {
    std::size_t layers = cfg.num_hidden_layers();
    for (std::size_t l = 0; l < layers; ++l) {
      std::size_t win = cfg.layer_width(l), wout = cfg.layer_width(l + 1);
      Tensor w = Tensor::zeros({wout, win});
      double bound = 1.0 / std::sqrt(static_cast<double>(win));
      for (auto& v : w.values) v = rng.uniform(-bound, bound);
      m.params[pname(k, "h" + std::to_string(l) + ".W")] = std::move(w);
      m.params[pname(k, "h" + std::to_string(l) + ".b")] =
          Tensor::zeros({1, wout});
    }
    std::size_t wlast = cfg.layer_width(layers);
    double bound = 1.0 / std::sqrt(static_cast<double>(wlast));
    for (const char* head : {"t", "s"}) {
      Tensor w = Tensor::zeros({cfg.d, wlast});
      for (auto& v : w.values) v = rng.uniform(-bound, bound);
      m.params[pname(k, std::string(head) + ".W")] = std::move(w);
      m.params[pname(k, std::string(head) + ".b")] = Tensor::zeros({1, cfg.d});
    }
  }
  return m;
}

Heads heads(const FlowModel& model, const MaskSet& masks, const Tensor& x,
            std::size_t transform) {
  const FlowConfig& cfg = model.config;
  if (x.cols() != cfg.d) throw shape_error("heads: input width mismatch");
  if (!x.all_finite()) throw numeric_error("heads: non-finite input");
  Tensor h = x;
  for (std::size_t l = 0; l < cfg.num_hidden_layers(); ++l) {
    h = dense_masked(h,
                     model.params.at(pname(transform, "h" + std::to_string(l) + ".W")),
                     masks.hidden[l],
                     model.params.at(pname(transform, "h" + std::to_string(l) + ".b")));
    kern::unary_map(kern::Unary::Tanh, h.values.data(), h.values.data(),
                    h.numel());
  }
  Heads out;
  out.t = dense_masked(h, model.params.at(pname(transform, "t.W")),
                       masks.final_mask,
                       model.params.at(pname(transform, "t.b")));
  out.s_raw = dense_masked(h, model.params.at(pname(transform, "s.W")),
                           masks.final_mask,
                           model.params.at(pname(transform, "s.b")));
  if (!out.t.all_finite() || !out.s_raw.all_finite())
    throw numeric_error("heads: non-finite head output");
  return out;
}

double clamp_scale_value(double s_raw, double a, double b) {
  return std::exp(std::tanh(s_raw / a) * b);
}

Tensor clamp_scale(const Tensor& s_raw, double a, double b) {
  if (!(a > 0) || !(b > 0)) throw config_error("clamp_scale: a, b must be > 0");
  Tensor out = Tensor::zeros(s_raw.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = clamp_scale_value(s_raw.values[i], a, b);
  return out;
}

double base_log_density_value(double u, BaseDistribution base) {
  if (base == BaseDistribution::StandardNormal)
    return -0.5 * u * u - 0.5 * kLogTwoPi;
  return -std::abs(u) - kLogTwo;
}

Tensor base_log_density(const Tensor& u, BaseDistribution base) {
  Tensor out = Tensor::zeros(u.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = base_log_density_value(u.values[i], base);
  return out;
}

InverseResult inverse_and_loglik_masked(const FlowModel& model,
                                        const MaskSet& masks,
                                        const Tensor& x) {
  const FlowConfig& cfg = model.config;
  if (!x.all_finite())
    throw numeric_error("inverse_and_loglik: non-finite input");
  Tensor v = x;
  double shat_total = 0.0;
  for (std::size_t k = cfg.num_transforms; k-- > 0;) {
    Heads hd = heads(model, masks, v, k);
    for (std::size_t i = 0; i < v.values.size(); ++i) {
      double shat = std::tanh(hd.s_raw.values[i] / cfg.clamp_a) * cfg.clamp_b;
      shat_total += shat;
      v.values[i] = (v.values[i] - hd.t.values[i]) * std::exp(-shat);
    }
  }
  if (!v.all_finite())
    throw numeric_error("inverse_and_loglik: non-finite noise reconstruction");
  double logp = 0.0;
  for (double u : v.values) logp += base_log_density_value(u, cfg.base);
  double n = static_cast<double>(x.rows());
  return InverseResult{std::move(v), (logp - shat_total) / n};
}

InverseResult inverse_and_loglik(const FlowModel& model,
                                 const perm::PermutationMatrix& p,
                                 const Tensor& x) {
  return inverse_and_loglik_masked(model, build_masks(model.config, p), x);
}

Tensor forward_sample(const FlowModel& model, const perm::PermutationMatrix& p,
                      const Tensor& u) {
  const FlowConfig& cfg = model.config;
  if (u.cols() != cfg.d) throw shape_error("forward_sample: width mismatch");
  MaskSet masks = build_masks(cfg, p);
  perm::Ordering order = perm::to_ordering(p);
  Tensor v = u;
  for (std::size_t k = 0; k < cfg.num_transforms; ++k) {
    Tensor z = Tensor::zeros(v.shape);
    for (std::size_t pos = 0; pos < cfg.d; ++pos) {
      std::size_t var = static_cast<std::size_t>(order.seq[pos]);
      // masks guarantee the heads only read coordinates already filled
      Heads hd = heads(model, masks, z, k);
      for (std::size_t r = 0; r < z.rows(); ++r) {
        double s = clamp_scale_value(hd.s_raw.at(r, var), cfg.clamp_a,
                                     cfg.clamp_b);
        z.at(r, var) = hd.t.at(r, var) + s * v.at(r, var);
      }
    }
    v = std::move(z);
  }
  return v;
}

MaskNodes append_mask_constants(autodiff::Tape& tape, const MaskSet& masks) {
  MaskNodes nodes;
  for (const auto& m : masks.hidden) nodes.hidden.push_back(tape.constant(m));
  nodes.final_mask = tape.constant(masks.final_mask);
  return nodes;
}

MaskNodes append_mask_graph(autodiff::Tape& tape, const FlowConfig& cfg,
                            autodiff::NodeId source) {
  using autodiff::NodeId;
  auto tri = [&](bool strict) {
    Tensor l = Tensor::zeros({cfg.d, cfg.d});
    for (std::size_t i = 0; i < cfg.d; ++i)
      for (std::size_t j = 0; j < cfg.d; ++j)
        l.at(i, j) = (strict ? j < i : j <= i) ? 1.0 : 0.0;
    return l;
  };
  NodeId small_h =
      tape.matmul_tn(source, tape.matmul(tape.constant(tri(false)), source));
  NodeId small_f =
      tape.matmul_tn(source, tape.matmul(tape.constant(tri(true)), source));

  // 0/1 block-assignment matrix of a layer: E[a, p] = 1 iff label(p) = a
  auto assignment = [&](std::size_t width) {
    std::size_t mult = width / cfg.d;
    Tensor e = Tensor::zeros({cfg.d, width});
    for (std::size_t p = 0; p < width; ++p) e.at(p / mult, p) = 1.0;
    return e;
  };
  auto expand = [&](NodeId small, std::size_t wout, std::size_t win) {
    NodeId eo = tape.constant(assignment(wout));
    NodeId ei = tape.constant(assignment(win));
    return tape.matmul_tn(eo, tape.matmul(small, ei));
  };

  MaskNodes nodes;
  for (std::size_t l = 1; l <= cfg.num_hidden_layers(); ++l)
    nodes.hidden.push_back(
        expand(small_h, cfg.layer_width(l), cfg.layer_width(l - 1)));
  nodes.final_mask = expand(small_f, cfg.d,
                            cfg.layer_width(cfg.num_hidden_layers()));
  return nodes;
}

void declare_params(autodiff::Tape& tape, const FlowConfig& cfg,
                    const std::string& prefix) {
  for (std::size_t k = 0; k < cfg.num_transforms; ++k) {
    for (std::size_t l = 0; l < cfg.num_hidden_layers(); ++l) {
      tape.input(prefix + pname(k, "h" + std::to_string(l) + ".W"),
                 {cfg.layer_width(l + 1), cfg.layer_width(l)});
      tape.input(prefix + pname(k, "h" + std::to_string(l) + ".b"),
                 {1, cfg.layer_width(l + 1)});
    }
    std::size_t wlast = cfg.layer_width(cfg.num_hidden_layers());
    for (const char* head : {"t", "s"}) {
      tape.input(prefix + pname(k, std::string(head) + ".W"), {cfg.d, wlast});
      tape.input(prefix + pname(k, std::string(head) + ".b"), {1, cfg.d});
    }
  }
}

autodiff::NodeId append_loglik_graph(autodiff::Tape& tape,
                                     const FlowConfig& cfg,
                                     const std::string& prefix,
                                     autodiff::NodeId x, std::size_t batch,
                                     const MaskNodes& masks) {
  using autodiff::NodeId;
  NodeId v = x;
  NodeId shat_sum = tape.constant(Tensor::scalar(0.0));
  for (std::size_t k = cfg.num_transforms; k-- > 0;) {
    NodeId h = v;
    for (std::size_t l = 0; l < cfg.num_hidden_layers(); ++l) {
      NodeId w = tape.input_id(prefix + pname(k, "h" + std::to_string(l) + ".W"));
      NodeId b = tape.input_id(prefix + pname(k, "h" + std::to_string(l) + ".b"));
      h = tape.tanh(tape.add(tape.matmul_nt(h, tape.mul(w, masks.hidden[l])), b));
    }
    NodeId t = tape.add(
        tape.matmul_nt(h, tape.mul(tape.input_id(prefix + pname(k, "t.W")),
                                   masks.final_mask)),
        tape.input_id(prefix + pname(k, "t.b")));
    NodeId s_raw = tape.add(
        tape.matmul_nt(h, tape.mul(tape.input_id(prefix + pname(k, "s.W")),
                                   masks.final_mask)),
        tape.input_id(prefix + pname(k, "s.b")));
    NodeId shat = tape.scale(tape.tanh(tape.scale(s_raw, 1.0 / cfg.clamp_a)),
                             cfg.clamp_b);
    shat_sum = tape.add(shat_sum, tape.sum(shat));
    v = tape.mul(tape.add(v, tape.scale(t, -1.0)),
                 tape.exp(tape.scale(shat, -1.0)));
  }
  NodeId logp_core;
  double per_sample_const;
  if (cfg.base == BaseDistribution::StandardNormal) {
    logp_core = tape.scale(tape.sum(tape.mul(v, v)), -0.5);
    per_sample_const = -0.5 * kLogTwoPi * static_cast<double>(cfg.d);
  } else {
    logp_core = tape.scale(tape.sum(tape.abs(v)), -1.0);
    per_sample_const = -kLogTwo * static_cast<double>(cfg.d);
  }
  NodeId total = tape.add(logp_core, tape.scale(shat_sum, -1.0));
  return tape.add(tape.scale(total, 1.0 / static_cast<double>(batch)),
                  tape.constant(Tensor::scalar(per_sample_const)));
}

namespace {
nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape}, {"values", t.values}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                j.at("values").get<std::vector<double>>());
}
}  // namespace

void save_checkpoint(const std::string& path, const FlowModel& model,
                     const perm::GammaParams& gamma,
                     const std::string& meta_json) {
  nlohmann::json j;
  j["format"] = "oslow-checkpoint";
  j["version"] = 1;
  j["flow"] = {{"d", model.config.d},
               {"hidden_multipliers", model.config.hidden_multipliers},
               {"num_transforms", model.config.num_transforms},
               {"base", base_name(model.config.base)},
               {"clamp_a", model.config.clamp_a},
               {"clamp_b", model.config.clamp_b}};
  j["gamma"] = tensor_to_json(gamma.raw);
  nlohmann::json params;
  for (const auto& [name, t] : model.params) params[name] = tensor_to_json(t);
  j["params"] = std::move(params);
  j["meta"] = meta_json.empty() ? nlohmann::json::object()
                                : nlohmann::json::parse(meta_json);
  std::ofstream out(path);
  if (!out) throw io_error("cannot write checkpoint '" + path + "'");
  out << j.dump(1) << "\n";
  if (!out) throw io_error("short write on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed checkpoint '" + path + "': " + e.what());
  }
  if (j.value("format", "") != "oslow-checkpoint")
    throw io_error("'" + path + "' is not an oslow checkpoint");
  if (j.value("version", 0) != 1)
    throw io_error("unsupported checkpoint version in '" + path + "'");
  Checkpoint ck;
  const auto& f = j.at("flow");
  ck.model.config.d = f.at("d").get<std::size_t>();
  ck.model.config.hidden_multipliers =
      f.at("hidden_multipliers").get<std::vector<std::size_t>>();
  ck.model.config.num_transforms = f.at("num_transforms").get<std::size_t>();
  ck.model.config.base = base_from_name(f.at("base").get<std::string>());
  ck.model.config.clamp_a = f.at("clamp_a").get<double>();
  ck.model.config.clamp_b = f.at("clamp_b").get<double>();
  ck.model.config.validate();
  ck.gamma.raw = tensor_from_json(j.at("gamma"));
  for (const auto& [name, tj] : j.at("params").items())
    ck.model.params[name] = tensor_from_json(tj);
  ck.meta_json = j.at("meta").dump();
  return ck;
}

}  // namespace oslow::flow
