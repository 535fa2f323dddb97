#include "oslow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "oslow/adamw.hpp"
#include "oslow/common.hpp"
#include "oslow/tape.hpp"

namespace oslow::train {

using autodiff::NodeId;
using autodiff::Tape;

const char* method_name(Method m) {
  switch (m) {
    case Method::GumbelTopK: return "gumbel-top-k";
    case Method::GumbelSinkhornST: return "gumbel-sinkhorn-st";
    case Method::SoftSinkhorn: return "soft-sinkhorn";
  }
  return "?";
}

Method method_from_name(const std::string& s) {
  if (s == "gumbel-top-k") return Method::GumbelTopK;
  if (s == "gumbel-sinkhorn-st") return Method::GumbelSinkhornST;
  if (s == "soft-sinkhorn") return Method::SoftSinkhorn;
  throw config_error("unknown training method '" + s + "'");
}

void TrainConfig::validate() const {
  if (k < 1) throw config_error("train: k must be >= 1");
  if (epochs < 1) throw config_error("train: epochs must be >= 1");
  if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
  if (!(lr_theta > 0) || !(lr_gamma > 0))
    throw config_error("train: learning rates must be positive");
  if (phase_theta < 1 || phase_gamma < 1)
    throw config_error("train: phase lengths must be >= 1");
  if (!(sigma_init >= 0)) throw config_error("train: sigma_init must be >= 0");
  if (!(sinkhorn_tau > 0) || sinkhorn_iters < 1)
    throw config_error("train: bad sinkhorn settings");
}

std::pair<Tensor, StandardizeStats> standardize(const Tensor& data) {
  const std::size_t n = data.rows(), d = data.cols();
  if (n < 3) throw config_error("standardize: need at least three rows");
  StandardizeStats stats;
  stats.medians.resize(d);
  stats.mads.resize(d);
  stats.means.resize(d);
  stats.stds.resize(d);

  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };

  std::vector<bool> keep(n, true);
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> col(n);
    for (std::size_t r = 0; r < n; ++r) col[r] = data.at(r, c);
    double med = median_of(col);
    std::vector<double> dev(n);
    for (std::size_t r = 0; r < n; ++r) dev[r] = std::abs(col[r] - med);
    double mad = 1.4826 * median_of(dev);
    stats.medians[c] = med;
    stats.mads[c] = mad;
    if (mad <= 0.0) continue;  // no spread information, skip the filter
    for (std::size_t r = 0; r < n; ++r)
      if (std::abs(col[r] - med) > 8.0 * mad) keep[r] = false;
  }

  std::size_t kept = 0;
  for (bool b : keep) kept += b;
  stats.dropped_rows = n - kept;
  if (kept < 3) throw config_error("standardize: all rows dropped as outliers");

  Tensor out = Tensor::zeros({kept, d});
  std::size_t rr = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!keep[r]) continue;
    for (std::size_t c = 0; c < d; ++c) out.at(rr, c) = data.at(r, c);
    ++rr;
  }
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < kept; ++r) mean += out.at(r, c);
    mean /= static_cast<double>(kept);
    double ss = 0;
    for (std::size_t r = 0; r < kept; ++r) {
      double dlt = out.at(r, c) - mean;
      ss += dlt * dlt;
    }
    double sd = std::sqrt(ss / static_cast<double>(kept - 1));
    if (!(sd > 1e-12))
      throw config_error("standardize: column " + std::to_string(c + 1) +
                         " has zero variance");
    stats.means[c] = mean;
    stats.stds[c] = sd;
    for (std::size_t r = 0; r < kept; ++r)
      out.at(r, c) = (out.at(r, c) - mean) / sd;
  }
  return {std::move(out), std::move(stats)};
}

double proxy_score(const perm::GammaParams& gamma,
                   const flow::FlowModel& model, const perm::CandidateSet& set,
                   const Tensor& batch) {
  perm::CandidateSet weighted = perm::boltzmann_weights(gamma, set);
  double acc = 0.0;
  for (std::size_t i = 0; i < weighted.perms.size(); ++i)
    acc += weighted.weights[i] *
           flow::inverse_and_loglik(model, weighted.perms[i], batch).loglik;
  return acc;
}

perm::Ordering varsort(const Tensor& data) {
  if (data.rows() < 2) throw config_error("varsort: need at least two rows");
  const std::size_t n = data.rows(), d = data.cols();
  std::vector<double> var(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < n; ++r) mean += data.at(r, c);
    mean /= static_cast<double>(n);
    double ss = 0;
    for (std::size_t r = 0; r < n; ++r) {
      double dlt = data.at(r, c) - mean;
      ss += dlt * dlt;
    }
    var[c] = ss / static_cast<double>(n - 1);
  }
  perm::Ordering o;
  o.seq.resize(d);
  std::iota(o.seq.begin(), o.seq.end(), 0);
  std::stable_sort(o.seq.begin(), o.seq.end(),
                   [&](int a, int b) { return var[a] < var[b]; });
  return o;
}

std::string ordering_to_string(const perm::Ordering& o) {
  std::string s;
  for (std::size_t i = 0; i < o.seq.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(o.seq[i] + 1);
  }
  return s;
}

namespace {

// scalar-node softmax over candidate energies with a build-time max shift;
// any constant shift leaves the softmax (and its gradient) unchanged
std::vector<NodeId> boltzmann_weight_nodes(Tape& tape, NodeId gamma,
                                           const perm::CandidateSet& set,
                                           const perm::GammaParams& at_build) {
  Tensor sq = perm::squash(at_build);
  double m = -1e300;
  for (const auto& p : set.perms)
    m = std::max(m, perm::frobenius_inner(p, sq));

  NodeId squashed = tape.sigmoid(gamma);
  std::vector<NodeId> shifted;
  for (const auto& p : set.perms) {
    NodeId e = tape.sum(tape.mask_mul(squashed, p.to_tensor()));
    shifted.push_back(tape.add(e, tape.constant(Tensor::scalar(-m))));
  }
  NodeId z = tape.exp(shifted[0]);
  for (std::size_t i = 1; i < shifted.size(); ++i)
    z = tape.add(z, tape.exp(shifted[i]));
  NodeId logz = tape.log(z);
  std::vector<NodeId> weights;
  for (NodeId e : shifted)
    weights.push_back(tape.exp(tape.add(e, tape.scale(logz, -1.0))));
  return weights;
}

struct EpochTape {
  Tape tape;
  NodeId x = -1;
};

// proxy graph of the default method: Boltzmann-weighted candidate logliks
EpochTape build_topk_tape(const TrainConfig& cfg,
                          const perm::CandidateSet& set,
                          const perm::GammaParams& gamma_now,
                          std::size_t batch_rows) {
  EpochTape et;
  et.x = et.tape.input("x", {batch_rows, cfg.flow.d}, false);
  NodeId gamma = et.tape.input("gamma", {cfg.flow.d, cfg.flow.d});
  flow::declare_params(et.tape, cfg.flow, "");
  auto weights = boltzmann_weight_nodes(et.tape, gamma, set, gamma_now);
  NodeId proxy = -1;
  for (std::size_t i = 0; i < set.perms.size(); ++i) {
    auto masks = flow::append_mask_constants(
        et.tape, flow::build_masks(cfg.flow, set.perms[i]));
    NodeId ll = flow::append_loglik_graph(et.tape, cfg.flow, "", et.x,
                                          batch_rows, masks);
    NodeId term = et.tape.mul(weights[i], ll);
    proxy = proxy < 0 ? term : et.tape.add(proxy, term);
  }
  et.tape.mark_output(proxy, "proxy");
  return et;
}

// sinkhorn subgraph on the tape: exp(source/tau), then alternating
// normalizations
NodeId append_sinkhorn_graph(Tape& tape, NodeId source, double tau,
                             int iters) {
  NodeId m = tape.exp(tape.scale(source, 1.0 / tau));
  for (int i = 0; i < iters; ++i) m = tape.col_norm(tape.row_norm(m));
  return m;
}

// straight-through proxy: mean loglik over k Gumbel samples, hard
// permutations forward, Sinkhorn-relaxed permutations backward
EpochTape build_st_tape(const TrainConfig& cfg,
                        const std::vector<Tensor>& noises,
                        const perm::GammaParams& gamma_now,
                        std::size_t batch_rows) {
  EpochTape et;
  et.x = et.tape.input("x", {batch_rows, cfg.flow.d}, false);
  NodeId gamma = et.tape.input("gamma", {cfg.flow.d, cfg.flow.d});
  flow::declare_params(et.tape, cfg.flow, "");
  Tensor sq = perm::squash(gamma_now);
  NodeId squashed = et.tape.sigmoid(gamma);
  NodeId proxy = -1;
  for (const auto& eps : noises) {
    Tensor perturbed = sq;
    for (std::size_t i = 0; i < perturbed.values.size(); ++i)
      perturbed.values[i] += eps.values[i];
    Tensor hard = perm::matching(perturbed).to_tensor();
    NodeId soft = append_sinkhorn_graph(
        et.tape, et.tape.add(squashed, et.tape.constant(eps)),
        cfg.sinkhorn_tau, cfg.sinkhorn_iters);
    NodeId st = et.tape.straight_through(hard, soft);
    auto masks = flow::append_mask_graph(et.tape, cfg.flow, st);
    NodeId ll = flow::append_loglik_graph(et.tape, cfg.flow, "", et.x,
                                          batch_rows, masks);
    proxy = proxy < 0 ? ll : et.tape.add(proxy, ll);
  }
  et.tape.mark_output(
      et.tape.scale(proxy, 1.0 / static_cast<double>(noises.size())), "proxy");
  return et;
}

// fully end-to-end: one soft mask source per epoch
EpochTape build_soft_tape(const TrainConfig& cfg, const Tensor& eps,
                          std::size_t batch_rows) {
  EpochTape et;
  et.x = et.tape.input("x", {batch_rows, cfg.flow.d}, false);
  NodeId gamma = et.tape.input("gamma", {cfg.flow.d, cfg.flow.d});
  flow::declare_params(et.tape, cfg.flow, "");
  NodeId soft = append_sinkhorn_graph(
      et.tape, et.tape.add(et.tape.sigmoid(gamma), et.tape.constant(eps)),
      cfg.sinkhorn_tau, cfg.sinkhorn_iters);
  auto masks = flow::append_mask_graph(et.tape, cfg.flow, soft);
  et.tape.mark_output(
      flow::append_loglik_graph(et.tape, cfg.flow, "", et.x, batch_rows, masks),
      "proxy");
  return et;
}

Tensor slice_rows(const Tensor& data, const std::vector<std::size_t>& order,
                  std::size_t lo, std::size_t hi) {
  Tensor out = Tensor::zeros({hi - lo, data.cols()});
  for (std::size_t r = lo; r < hi; ++r)
    for (std::size_t c = 0; c < data.cols(); ++c)
      out.at(r - lo, c) = data.at(order[r], c);
  return out;
}

// numeric self-dependency probe: any head reacting to its own input marks a
// mask-induced loop
bool self_jacobian_flag(const flow::FlowModel& model,
                        const flow::MaskSet& masks, const Tensor& x0,
                        double threshold = 1e-6) {
  const double h = 1e-4;
  Tensor x = x0;
  for (std::size_t i = 0; i < x.cols(); ++i) {
    Tensor xp = x, xm = x;
    xp.at(0, i) += h;
    xm.at(0, i) -= h;
    flow::Heads up = flow::heads(model, masks, xp);
    flow::Heads dn = flow::heads(model, masks, xm);
    double dt = std::abs(up.t.at(0, i) - dn.t.at(0, i)) / (2 * h);
    double ds = std::abs(up.s_raw.at(0, i) - dn.s_raw.at(0, i)) / (2 * h);
    if (dt > threshold || ds > threshold) return true;
  }
  return false;
}

struct Phase {
  bool update_theta;
  bool update_gamma;
};

Phase phase_of(const TrainConfig& cfg, int epoch) {
  if (cfg.method == Method::SoftSinkhorn) return {true, true};
  if (cfg.one_step_alternation) return {true, true};
  int cycle = cfg.phase_theta + cfg.phase_gamma;
  bool theta = (epoch % cycle) < cfg.phase_theta;
  return {theta, !theta};
}

TrainResult run_training(const Tensor& raw_data, const TrainConfig& cfg) {
  cfg.validate();
  auto [data, stats] = standardize(raw_data);
  const std::size_t d = data.cols(), n = data.rows();
  TrainConfig local = cfg;
  if (local.flow.d == 0) local.flow.d = d;
  if (local.flow.d != d)
    throw config_error("train: flow dimension does not match the data");
  local.flow.validate();

  Rng rng(local.seed);
  flow::FlowModel model = flow::FlowModel::init(local.flow, rng);
  perm::GammaParams gamma = perm::GammaParams::zeros(d);

  autodiff::AdamWConfig theta_opt_cfg;
  theta_opt_cfg.lr = local.lr_theta;
  theta_opt_cfg.weight_decay = local.weight_decay;
  autodiff::AdamWConfig gamma_opt_cfg;
  gamma_opt_cfg.lr = local.lr_gamma;
  gamma_opt_cfg.weight_decay = local.weight_decay;
  autodiff::AdamWState opt_theta(theta_opt_cfg), opt_gamma(gamma_opt_cfg);

  // the last epoch sees sigma exactly zero, so its samples are deterministic
  perm::NoiseSchedule schedule{local.sigma_init,
                               std::max(1, local.epochs - 1)};

  TrainResult result;
  result.seed = local.seed;
  result.stats = stats;

  std::vector<std::size_t> row_order(n);
  std::iota(row_order.begin(), row_order.end(), 0);

  for (int epoch = 0; epoch < local.epochs; ++epoch) {
    double sigma =
        perm::schedule_sigma(schedule, std::min(epoch, schedule.total_epochs));
    Phase phase = phase_of(local, epoch);

    // per-epoch candidate machinery
    perm::CandidateSet set;
    std::vector<Tensor> noises;
    Tensor soft_eps;
    if (local.method == Method::GumbelTopK) {
      auto samples = perm::sample_hard_perms(gamma, sigma, local.k, rng);
      set = perm::dedupe(samples);
    } else if (local.method == Method::GumbelSinkhornST) {
      for (int j = 0; j < local.k; ++j)
        noises.push_back(perm::sample_gumbel(d, sigma, rng));
    } else {
      soft_eps = perm::sample_gumbel(d, sigma, rng);
    }

    rng.shuffle(row_order);

    std::map<std::size_t, EpochTape> tapes;
    auto tape_for = [&](std::size_t rows) -> EpochTape& {
      auto it = tapes.find(rows);
      if (it != tapes.end()) return it->second;
      EpochTape et;
      switch (local.method) {
        case Method::GumbelTopK:
          et = build_topk_tape(local, set, gamma, rows);
          break;
        case Method::GumbelSinkhornST:
          et = build_st_tape(local, noises, gamma, rows);
          break;
        case Method::SoftSinkhorn:
          et = build_soft_tape(local, soft_eps, rows);
          break;
      }
      return tapes.emplace(rows, std::move(et)).first->second;
    };

    auto one_pass = [&](bool update_theta, bool update_gamma) {
      double proxy_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t lo = 0; lo < n; lo += local.batch_size) {
        std::size_t hi = std::min(n, lo + local.batch_size);
        EpochTape& et = tape_for(hi - lo);
        std::map<std::string, Tensor> inputs = model.params;
        inputs["gamma"] = gamma.raw;
        inputs["x"] = slice_rows(data, row_order, lo, hi);
        double proxy;
        std::map<std::string, Tensor> grads;
        try {
          proxy = et.tape.forward(inputs).at("proxy").values[0];
          grads = et.tape.backward(Tensor::scalar(1.0));
        } catch (const numeric_error& e) {
          throw numeric_error("training diverged at epoch " +
                              std::to_string(epoch) + ": " + e.what());
        }
        proxy_sum += proxy;
        ++batches;
        // gradient ascent: AdamW descends, so negate
        for (auto& [name, g] : grads)
          for (auto& v : g.values) v = -v;
        if (update_theta) opt_theta.step(model.params, grads);
        if (update_gamma) opt_gamma.step("gamma", gamma.raw, grads.at("gamma"));
      }
      return proxy_sum / static_cast<double>(batches);
    };

    double mean_proxy;
    if (local.one_step_alternation && local.method != Method::SoftSinkhorn) {
      one_pass(true, false);
      mean_proxy = one_pass(false, true);
    } else {
      mean_proxy = one_pass(phase.update_theta, phase.update_gamma);
    }

    if (!std::isfinite(mean_proxy))
      throw numeric_error("training diverged at epoch " +
                          std::to_string(epoch) + ": non-finite proxy");
    result.proxy_trace.push_back(mean_proxy);
    if (local.record_gamma_trace) result.gamma_trace.push_back(gamma.raw);
    if (local.method == Method::SoftSinkhorn)
      result.cheat_max_proxy =
          epoch == 0 ? mean_proxy : std::max(result.cheat_max_proxy, mean_proxy);
  }

  // final sampling pass at the annealed-to-zero noise level; the mode of
  // these k draws is the reported ordering
  double sigma_final = perm::schedule_sigma(schedule, schedule.total_epochs);
  auto final_samples =
      perm::sample_hard_perms(gamma, sigma_final, local.k, rng);
  std::map<std::string, int> freq;
  for (const auto& p : final_samples)
    ++freq[ordering_to_string(perm::to_ordering(p))];
  int best = 0;
  perm::PermutationMatrix mode_perm;
  for (const auto& p : final_samples) {
    int c = freq[ordering_to_string(perm::to_ordering(p))];
    if (c > best) {
      best = c;
      mode_perm = p;
    }
  }
  result.perm_frequencies = std::move(freq);
  result.final_ordering = perm::to_ordering(mode_perm);
  result.model = std::move(model);
  result.gamma = std::move(gamma);

  if (local.method == Method::SoftSinkhorn) {
    Tensor soft = perm::sinkhorn(perm::squash(result.gamma),
                                 local.sinkhorn_tau, local.sinkhorn_iters);
    flow::MaskSet masks = flow::build_masks_from_matrix(local.flow, soft);
    Tensor probe = slice_rows(data, row_order, 0, 1);
    result.cheat_loop_flag = self_jacobian_flag(result.model, masks, probe);
  }
  return result;
}

}  // namespace

TrainResult train(const Tensor& data, const TrainConfig& cfg) {
  return run_training(data, cfg);
}

TrainResult train_gumbel_sinkhorn_st(const Tensor& data, TrainConfig cfg) {
  cfg.method = Method::GumbelSinkhornST;
  return run_training(data, cfg);
}

TrainResult train_soft_sinkhorn(const Tensor& data, TrainConfig cfg) {
  cfg.method = Method::SoftSinkhorn;
  return run_training(data, cfg);
}

std::vector<OracleEntry> exhaustive_oracle(const Tensor& data,
                                           flow::FlowConfig flow_cfg,
                                           int epochs, std::size_t batch_size,
                                           double lr, std::uint64_t seed) {
  auto [std_data, stats] = standardize(data);
  (void)stats;
  const std::size_t d = std_data.cols(), n = std_data.rows();
  if (d > 5) throw config_error("exhaustive_oracle: d must be <= 5");
  flow_cfg.d = d;
  flow_cfg.validate();

  std::vector<OracleEntry> entries;
  auto perms = perm::all_permutations(d);
  for (std::size_t pi = 0; pi < perms.size(); ++pi) {
    Rng rng(derive_seed(seed, pi));
    flow::FlowModel model = flow::FlowModel::init(flow_cfg, rng);
    autodiff::AdamWConfig opt_cfg;
    opt_cfg.lr = lr;
    autodiff::AdamWState opt(opt_cfg);

    std::vector<std::size_t> row_order(n);
    std::iota(row_order.begin(), row_order.end(), 0);

    std::map<std::size_t, EpochTape> tapes;
    auto tape_for = [&](std::size_t rows) -> EpochTape& {
      auto it = tapes.find(rows);
      if (it != tapes.end()) return it->second;
      EpochTape et;
      et.x = et.tape.input("x", {rows, d}, false);
      flow::declare_params(et.tape, flow_cfg, "");
      auto masks = flow::append_mask_constants(
          et.tape, flow::build_masks(flow_cfg, perms[pi]));
      et.tape.mark_output(
          flow::append_loglik_graph(et.tape, flow_cfg, "", et.x, rows, masks),
          "loglik");
      return tapes.emplace(rows, std::move(et)).first->second;
    };

    for (int epoch = 0; epoch < epochs; ++epoch) {
      rng.shuffle(row_order);
      for (std::size_t lo = 0; lo < n; lo += batch_size) {
        std::size_t hi = std::min(n, lo + batch_size);
        EpochTape& et = tape_for(hi - lo);
        std::map<std::string, Tensor> inputs = model.params;
        inputs["x"] = slice_rows(std_data, row_order, lo, hi);
        et.tape.forward(inputs);
        auto grads = et.tape.backward(Tensor::scalar(1.0));
        for (auto& [name, g] : grads)
          for (auto& v : g.values) v = -v;
        opt.step(model.params, grads);
      }
    }
    double final_ll =
        flow::inverse_and_loglik(model, perms[pi], std_data).loglik;
    entries.push_back({perm::to_ordering(perms[pi]), final_ll});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const OracleEntry& a, const OracleEntry& b) {
                     return a.loglik > b.loglik;
                   });
  return entries;
}

std::string result_to_json(const TrainResult& result,
                           const TrainConfig& cfg) {
  nlohmann::json j;
  j["format"] = "oslow-train-result";
  j["version"] = 1;
  j["seed"] = result.seed;
  nlohmann::json ordering = nlohmann::json::array();
  for (int v : result.final_ordering.seq) ordering.push_back(v + 1);
  j["final_ordering"] = std::move(ordering);
  j["proxy_trace"] = result.proxy_trace;
  j["perm_frequencies"] = result.perm_frequencies;
  j["standardization"] = {{"medians", result.stats.medians},
                          {"mads", result.stats.mads},
                          {"means", result.stats.means},
                          {"stds", result.stats.stds},
                          {"dropped_rows", result.stats.dropped_rows}};
  j["config"] = {{"method", method_name(cfg.method)},
                 {"k", cfg.k},
                 {"epochs", cfg.epochs},
                 {"batch_size", cfg.batch_size},
                 {"lr_theta", cfg.lr_theta},
                 {"lr_gamma", cfg.lr_gamma},
                 {"weight_decay", cfg.weight_decay},
                 {"sigma_init", cfg.sigma_init},
                 {"phase_theta", cfg.phase_theta},
                 {"phase_gamma", cfg.phase_gamma},
                 {"sinkhorn_tau", cfg.sinkhorn_tau},
                 {"sinkhorn_iters", cfg.sinkhorn_iters},
                 {"one_step_alternation", cfg.one_step_alternation},
                 {"flow",
                  {{"d", cfg.flow.d},
                   {"hidden_multipliers", cfg.flow.hidden_multipliers},
                   {"num_transforms", cfg.flow.num_transforms},
                   {"base", flow::base_name(cfg.flow.base)},
                   {"clamp_a", cfg.flow.clamp_a},
                   {"clamp_b", cfg.flow.clamp_b}}}};
  if (cfg.method == Method::SoftSinkhorn)
    j["cheat_report"] = {{"max_proxy", result.cheat_max_proxy},
                         {"loop_flag", result.cheat_loop_flag}};
  if (!result.gamma_trace.empty()) {
    nlohmann::json traces = nlohmann::json::array();
    for (const auto& g : result.gamma_trace) traces.push_back(g.values);
    j["gamma_trace"] = std::move(traces);
  }
  return j.dump(1) + "\n";
}

}  // namespace oslow::train
