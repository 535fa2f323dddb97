#include "oslow/intervention.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "oslow/common.hpp"

namespace oslow::intervene {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

Tensor do_sample_scm(const scm::ScmSpec& spec, int target, double value,
                     std::size_t count, Rng& rng) {
  if (spec.form == scm::FunctionalForm::Nonparametric)
    throw config_error(
        "do_sample: nonparametric ground-truth functions are draw-time "
        "objects; intervene on a trained flow instead");
  const std::size_t d = spec.dag.d;
  if (target < 0 || static_cast<std::size_t>(target) >= d)
    throw config_error("do_sample: target variable out of range");
  if (!std::isfinite(value))
    throw config_error("do_sample: intervention value must be finite");

  std::vector<std::vector<double>> columns(d, std::vector<double>(count));
  for (std::size_t pos = 0; pos < d; ++pos) {
    int v = spec.dag.generating_order.seq[pos];
    auto& col = columns[static_cast<std::size_t>(v)];
    if (v == target) {
      std::fill(col.begin(), col.end(), value);
      continue;
    }
    const auto& fn = spec.node_fns[static_cast<std::size_t>(v)];
    auto parents = spec.dag.parents_of(v);
    for (std::size_t r = 0; r < count; ++r) {
      double u = spec.noise == scm::NoiseFamily::Normal
                     ? spec.noise_scale * rng.normal()
                     : rng.laplace(spec.noise_scale);
      double t = 0.0, s = 1.0;
      if (!parents.empty()) {
        double q = 0.0;
        for (std::size_t c = 0; c < parents.size(); ++c)
          q += fn.loc_weights[c] *
               columns[static_cast<std::size_t>(parents[c])][r];
        switch (spec.form) {
          case scm::FunctionalForm::Linear: t = q; break;
          case scm::FunctionalForm::Sinusoidal: t = std::sin(q) + q; break;
          case scm::FunctionalForm::Polynomial: t = q * q * q + fn.offset; break;
          default: break;
        }
        if (spec.mode == scm::ScmMode::Affine) {
          double qs = 0.0;
          for (std::size_t c = 0; c < parents.size(); ++c)
            qs += fn.scale_weights[c] *
                  columns[static_cast<std::size_t>(parents[c])][r];
          s = spec.form == scm::FunctionalForm::Linear ? std::abs(qs) + 0.1
                                                       : softplus(qs) + 0.1;
        }
      }
      col[r] = t + s * u;
    }
  }
  Tensor out = Tensor::zeros({count, d});
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < d; ++c) out.at(r, c) = columns[c][r];
  return out;
}

Tensor do_sample_flow(const FlowGenerator& gen, int target, double value,
                      std::size_t count, Rng& rng) {
  const flow::FlowConfig& cfg = gen.model.config;
  const std::size_t d = cfg.d;
  if (target < 0 || static_cast<std::size_t>(target) >= d)
    throw config_error("do_sample: target variable out of range");
  if (gen.ordering.d() != d)
    throw config_error("do_sample: ordering/model dimension mismatch");
  bool mapped = !gen.means.empty();
  if (mapped && (gen.means.size() != d || gen.stds.size() != d))
    throw config_error("do_sample: standardization stats dimension mismatch");

  double y_model =
      mapped ? (value - gen.means[static_cast<std::size_t>(target)]) /
                   gen.stds[static_cast<std::size_t>(target)]
             : value;

  auto p = perm::from_ordering(gen.ordering);
  flow::MaskSet masks = flow::build_masks(cfg, p);
  const std::size_t levels = cfg.num_transforms;

  // z[0] = base noise, z[k] = output of transform k; filled coordinate by
  // coordinate along the ordering so the masked heads only see known values
  std::vector<Tensor> z(levels + 1, Tensor::zeros({count, d}));
  for (auto& v : z[0].values)
    v = cfg.base == flow::BaseDistribution::StandardNormal
            ? rng.normal()
            : rng.laplace(1.0);

  for (std::size_t pos = 0; pos < d; ++pos) {
    std::size_t var = static_cast<std::size_t>(gen.ordering.seq[pos]);
    if (static_cast<int>(var) == target) {
      // clamp the data-side value, then back-solve the latent at every level
      for (std::size_t r = 0; r < count; ++r) z[levels].at(r, var) = y_model;
      for (std::size_t k = levels; k-- > 0;) {
        flow::Heads hd = flow::heads(gen.model, masks, z[k + 1], k);
        for (std::size_t r = 0; r < count; ++r) {
          double s = flow::clamp_scale_value(hd.s_raw.at(r, var), cfg.clamp_a,
                                             cfg.clamp_b);
          z[k].at(r, var) = (z[k + 1].at(r, var) - hd.t.at(r, var)) / s;
        }
      }
    } else {
      for (std::size_t k = 0; k < levels; ++k) {
        flow::Heads hd = flow::heads(gen.model, masks, z[k + 1], k);
        for (std::size_t r = 0; r < count; ++r) {
          double s = flow::clamp_scale_value(hd.s_raw.at(r, var), cfg.clamp_a,
                                             cfg.clamp_b);
          z[k + 1].at(r, var) = hd.t.at(r, var) + s * z[k].at(r, var);
        }
      }
    }
  }

  Tensor out = z[levels];
  if (mapped)
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t c = 0; c < d; ++c)
        out.at(r, c) = out.at(r, c) * gen.stds[c] + gen.means[c];
  // the clamp must survive the unit mapping exactly
  for (std::size_t r = 0; r < count; ++r)
    out.at(r, static_cast<std::size_t>(target)) = value;
  return out;
}

}  // namespace

Tensor do_sample_batch(const Generator& gen, int target, double value,
                       std::size_t count, Rng& rng) {
  if (std::holds_alternative<scm::ScmSpec>(gen))
    return do_sample_scm(std::get<scm::ScmSpec>(gen), target, value, count,
                         rng);
  return do_sample_flow(std::get<FlowGenerator>(gen), target, value, count,
                        rng);
}

std::vector<double> do_sample(const Generator& gen, int target, double value,
                              Rng& rng) {
  Tensor batch = do_sample_batch(gen, target, value, 1, rng);
  return batch.values;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw config_error("normal_quantile: p must be inside (0, 1)");
  // Acklam's rational approximation, |rel err| < 1.2e-9
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
          a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

std::vector<DoEstimate> estimate_do_expectation(const Generator& gen,
                                                const DoQuery& query,
                                                Rng& rng) {
  if (query.num_samples < 2)
    throw config_error("estimate_do_expectation: need at least two samples");
  if (!(query.confidence > 0 && query.confidence < 1))
    throw config_error("estimate_do_expectation: confidence in (0, 1)");
  Tensor batch = do_sample_batch(gen, query.target, query.value,
                                 static_cast<std::size_t>(query.num_samples),
                                 rng);
  double z = normal_quantile(0.5 + query.confidence / 2.0);
  std::vector<DoEstimate> out;
  std::vector<int> responses = query.responses;
  if (responses.empty())
    for (std::size_t c = 0; c < batch.cols(); ++c)
      responses.push_back(static_cast<int>(c));
  for (int r : responses) {
    if (r < 0 || static_cast<std::size_t>(r) >= batch.cols())
      throw config_error("estimate_do_expectation: response out of range");
    std::size_t col = static_cast<std::size_t>(r);
    double n = static_cast<double>(batch.rows());
    double mean = 0;
    for (std::size_t i = 0; i < batch.rows(); ++i) mean += batch.at(i, col);
    mean /= n;
    double ss = 0;
    for (std::size_t i = 0; i < batch.rows(); ++i) {
      double dlt = batch.at(i, col) - mean;
      ss += dlt * dlt;
    }
    double sd = std::sqrt(ss / (n - 1));
    DoEstimate e;
    e.y = query.value;
    e.response = r;
    e.mean = mean;
    e.n = query.num_samples;
    e.degenerate = sd == 0.0;
    double hw = z * sd / std::sqrt(n);
    e.ci_low = mean - hw;
    e.ci_high = mean + hw;
    out.push_back(e);
  }
  return out;
}

std::vector<DoEstimate> sweep(const Generator& gen, int target,
                              const std::vector<double>& y_grid,
                              const DoQuery& query, std::uint64_t seed) {
  if (y_grid.empty()) throw config_error("sweep: empty grid");
  std::vector<DoEstimate> rows;
  for (std::size_t gi = 0; gi < y_grid.size(); ++gi) {
    DoQuery q = query;
    q.target = target;
    q.value = y_grid[gi];
    Rng rng(derive_seed(seed, gi));
    auto estimates = estimate_do_expectation(gen, q, rng);
    rows.insert(rows.end(), estimates.begin(), estimates.end());
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<DoEstimate>& rows) {
  std::string out = "y,response,mean,ci_low,ci_high,n\n";
  char buf[32];
  auto put = [&](double v, char sep) {
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
    out += sep;
  };
  for (const auto& r : rows) {
    put(r.y, ',');
    out += "x" + std::to_string(r.response + 1) + ",";
    put(r.mean, ',');
    put(r.ci_low, ',');
    put(r.ci_high, ',');
    out += std::to_string(r.n) + "\n";
  }
  return out;
}

}  // namespace oslow::intervene
