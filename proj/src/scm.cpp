#include "oslow/scm.hpp"

#include <algorithm>
#include <cmath>

#include "oslow/common.hpp"

namespace oslow::scm {

const char* to_string(GraphKind k) {
  switch (k) {
    case GraphKind::Path: return "path";
    case GraphKind::Tournament: return "tournament";
    case GraphKind::ErdosRenyi: return "erdos-renyi";
  }
  return "?";
}
const char* to_string(FunctionalForm f) {
  switch (f) {
    case FunctionalForm::Linear: return "linear";
    case FunctionalForm::Sinusoidal: return "sinusoidal";
    case FunctionalForm::Polynomial: return "polynomial";
    case FunctionalForm::Nonparametric: return "nonparametric";
  }
  return "?";
}
const char* to_string(NoiseFamily n) {
  return n == NoiseFamily::Normal ? "normal" : "laplace";
}
const char* to_string(ScmMode m) {
  return m == ScmMode::Affine ? "affine" : "additive";
}

GraphKind graph_from_string(const std::string& s) {
  if (s == "path") return GraphKind::Path;
  if (s == "tournament") return GraphKind::Tournament;
  if (s == "erdos-renyi" || s == "er") return GraphKind::ErdosRenyi;
  throw config_error("unknown graph kind '" + s + "'");
}
FunctionalForm form_from_string(const std::string& s) {
  if (s == "linear") return FunctionalForm::Linear;
  if (s == "sinusoidal") return FunctionalForm::Sinusoidal;
  if (s == "polynomial") return FunctionalForm::Polynomial;
  if (s == "nonparametric") return FunctionalForm::Nonparametric;
  throw config_error("unknown functional form '" + s + "'");
}
NoiseFamily noise_from_string(const std::string& s) {
  if (s == "normal") return NoiseFamily::Normal;
  if (s == "laplace") return NoiseFamily::Laplace;
  throw config_error("unknown noise family '" + s + "'");
}
ScmMode mode_from_string(const std::string& s) {
  if (s == "affine") return ScmMode::Affine;
  if (s == "additive") return ScmMode::Additive;
  throw config_error("unknown mode '" + s + "'");
}

std::vector<int> DagSpec::parents_of(int v) const {
  std::vector<int> out;
  for (const auto& [p, c] : edges)
    if (c == v) out.push_back(p);
  std::sort(out.begin(), out.end());
  return out;
}

DagSpec gen_graph(GraphKind kind, std::size_t d, double p, Rng& rng) {
  if (d < 2) throw config_error("gen_graph: d must be >= 2");
  if (kind == GraphKind::ErdosRenyi && !(p > 0.0 && p <= 1.0))
    throw config_error("gen_graph: edge probability must be in (0, 1]");
  DagSpec dag;
  dag.d = d;
  dag.kind = kind;
  dag.generating_order.seq.resize(d);
  for (std::size_t i = 0; i < d; ++i)
    dag.generating_order.seq[i] = static_cast<int>(i);
  rng.shuffle(dag.generating_order.seq);

  const auto& seq = dag.generating_order.seq;
  switch (kind) {
    case GraphKind::Path:
      for (std::size_t i = 0; i + 1 < d; ++i)
        dag.edges.emplace_back(seq[i], seq[i + 1]);
      break;
    case GraphKind::Tournament:
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
          dag.edges.emplace_back(seq[i], seq[j]);
      break;
    case GraphKind::ErdosRenyi:
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
          if (rng.uniform() < p) dag.edges.emplace_back(seq[i], seq[j]);
      break;
  }
  return dag;
}

namespace {
double signed_weight(Rng& rng) {
  double w = rng.uniform(0.5, 1.5);
  return rng.coin() ? w : -w;
}
}  // namespace

ScmSpec make_functions(DagSpec dag, FunctionalForm form, ScmMode mode,
                       Rng& rng) {
  ScmSpec spec;
  spec.form = form;
  spec.mode = mode;
  spec.normalize_during_generation =
      form == FunctionalForm::Linear || form == FunctionalForm::Polynomial;
  spec.node_fns.resize(dag.d);
  for (std::size_t v = 0; v < dag.d; ++v) {
    auto parents = dag.parents_of(static_cast<int>(v));
    NodeFunctions& fn = spec.node_fns[v];
    if (parents.empty()) continue;  // root: pure noise, t = 0, s = 1
    if (form != FunctionalForm::Nonparametric) {
      for (std::size_t k = 0; k < parents.size(); ++k)
        fn.loc_weights.push_back(signed_weight(rng));
      if (form == FunctionalForm::Polynomial) fn.offset = rng.uniform(-1, 1);
    }
    if (mode == ScmMode::Affine && form != FunctionalForm::Nonparametric) {
      for (std::size_t k = 0; k < parents.size(); ++k)
        fn.scale_weights.push_back(signed_weight(rng));
    }
  }
  spec.dag = std::move(dag);
  return spec;
}

namespace {

// lower Cholesky with escalating jitter; jitter doubles from 1e-8 to 1e-4
std::vector<double> cholesky_with_jitter(std::vector<double> k,
                                         std::size_t n) {
  for (double jitter = 1e-8; jitter <= 1e-4 + 1e-12; jitter *= 2.0) {
    std::vector<double> a = k;
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] += jitter;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = a[i * n + j];
        for (std::size_t m = 0; m < j; ++m) s -= a[i * n + m] * a[j * n + m];
        if (i == j) {
          if (s <= 0.0) {
            ok = false;
            break;
          }
          a[i * n + i] = std::sqrt(s);
        } else {
          a[i * n + j] = s / a[j * n + j];
        }
      }
    }
    if (ok) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
      return a;
    }
  }
  throw numeric_error("gp: Cholesky failed at maximum jitter");
}

// GP machinery of one node: kernel over standardized parent inputs, shared
// by the location and scale draws.
struct GpSampler {
  std::size_t n;
  std::vector<double> chol;

  GpSampler(const std::vector<std::vector<double>>& z, std::size_t n_rows)
      : n(n_rows) {
    std::size_t p = z.size();
    // standardize each parent column for the kernel distances
    std::vector<std::vector<double>> zs(p, std::vector<double>(n));
    for (std::size_t c = 0; c < p; ++c) {
      double mean = 0, var = 0;
      for (double v : z[c]) mean += v;
      mean /= static_cast<double>(n);
      for (double v : z[c]) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n);
      double sd = std::sqrt(var);
      if (sd < 1e-12) sd = 1.0;
      for (std::size_t r = 0; r < n; ++r) zs[c][r] = (z[c][r] - mean) / sd;
    }
    std::vector<double> k(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        double d2 = 0;
        for (std::size_t c = 0; c < p; ++c) {
          double diff = zs[c][i] - zs[c][j];
          d2 += diff * diff;
        }
        double v = std::exp(-0.5 * d2);
        k[i * n + j] = v;
        k[j * n + i] = v;
      }
    chol = cholesky_with_jitter(std::move(k), n);
  }

  std::vector<double> draw(Rng& rng) const {
    std::vector<double> eps(n), f(n, 0.0);
    for (auto& e : eps) e = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j <= i; ++j) s += chol[i * n + j] * eps[j];
      f[i] = s;
    }
    return f;
  }
};

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

void standardize_column(std::vector<double>& col) {
  double mean = 0;
  for (double v : col) mean += v;
  mean /= static_cast<double>(col.size());
  double var = 0;
  for (double v : col) var += (v - mean) * (v - mean);
  var /= static_cast<double>(col.size() - 1);
  double sd = std::sqrt(var);
  if (sd < 1e-12)
    throw numeric_error("simulate: degenerate column during normalization");
  for (auto& v : col) v = (v - mean) / sd;
}

}  // namespace

Dataset simulate(const ScmSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw config_error("simulate: need at least two samples");
  const std::size_t d = spec.dag.d;
  Rng rng(seed);
  std::vector<std::vector<double>> columns(d, std::vector<double>(n, 0.0));

  for (std::size_t pos = 0; pos < d; ++pos) {
    int v = spec.dag.generating_order.seq[pos];
    auto parents = spec.dag.parents_of(v);
    const NodeFunctions& fn = spec.node_fns[static_cast<std::size_t>(v)];

    std::vector<double> u(n);
    for (auto& e : u)
      e = spec.noise == NoiseFamily::Normal ? spec.noise_scale * rng.normal()
                                            : rng.laplace(spec.noise_scale);

    std::vector<double> t(n, 0.0), s(n, 1.0);
    if (!parents.empty()) {
      std::vector<std::vector<double>> z;
      for (int p : parents) z.push_back(columns[static_cast<std::size_t>(p)]);

      if (spec.form == FunctionalForm::Nonparametric) {
        GpSampler gp(z, n);
        t = gp.draw(rng);
        if (spec.mode == ScmMode::Affine) {
          auto raw = gp.draw(rng);
          for (std::size_t r = 0; r < n; ++r) s[r] = softplus(raw[r]) + 0.1;
        }
      } else {
        std::vector<double> q(n, 0.0);
        for (std::size_t c = 0; c < parents.size(); ++c)
          for (std::size_t r = 0; r < n; ++r)
            q[r] += fn.loc_weights[c] * z[c][r];
        switch (spec.form) {
          case FunctionalForm::Linear:
            t = q;
            break;
          case FunctionalForm::Sinusoidal:
            for (std::size_t r = 0; r < n; ++r) t[r] = std::sin(q[r]) + q[r];
            break;
          case FunctionalForm::Polynomial:
            for (std::size_t r = 0; r < n; ++r)
              t[r] = q[r] * q[r] * q[r] + fn.offset;
            break;
          default:
            break;
        }
        if (spec.mode == ScmMode::Affine) {
          std::vector<double> qs(n, 0.0);
          for (std::size_t c = 0; c < parents.size(); ++c)
            for (std::size_t r = 0; r < n; ++r)
              qs[r] += fn.scale_weights[c] * z[c][r];
          if (spec.form == FunctionalForm::Linear) {
            for (std::size_t r = 0; r < n; ++r) s[r] = std::abs(qs[r]) + 0.1;
          } else {
            for (std::size_t r = 0; r < n; ++r) s[r] = softplus(qs[r]) + 0.1;
          }
        }
      }
    }

    auto& col = columns[static_cast<std::size_t>(v)];
    for (std::size_t r = 0; r < n; ++r) col[r] = t[r] + s[r] * u[r];
    if (spec.normalize_during_generation) standardize_column(col);
  }

  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.data = Tensor::zeros({n, d});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) ds.data.at(r, c) = columns[c][r];
  if (!ds.data.all_finite())
    throw numeric_error("simulate: non-finite sample generated");
  return ds;
}

double erdos_renyi_default_p(std::size_t d) {
  // expected edge count ~2d on large graphs, dense-ish otherwise
  return d > 6 ? std::min(1.0, 4.0 / static_cast<double>(d - 1)) : 0.5;
}

std::vector<SuiteRow> benchmark_suite(const std::string& scale) {
  auto row = [](ScmMode m, FunctionalForm f, GraphKind g, NoiseFamily n,
                int sims, std::vector<std::size_t> dims = {}) {
    SuiteRow r;
    r.mode = m;
    r.form = f;
    r.graph = g;
    r.noise = n;
    r.num_simulations = sims;
    r.dims = std::move(dims);
    r.slug = std::string(to_string(m)) + "_" + to_string(f) + "_" +
             to_string(g) + "_" + to_string(n);
    return r;
  };
  using GK = GraphKind;
  using FF = FunctionalForm;
  using NF = NoiseFamily;
  using SM = ScmMode;
  const GK graphs[3] = {GK::ErdosRenyi, GK::Tournament, GK::Path};

  std::vector<SuiteRow> rows;
  if (scale == "small") {
    for (auto g : graphs) rows.push_back(row(SM::Affine, FF::Nonparametric, g, NF::Normal, 20));
    for (auto g : graphs) rows.push_back(row(SM::Additive, FF::Nonparametric, g, NF::Normal, 20));
    for (auto g : graphs) rows.push_back(row(SM::Affine, FF::Linear, g, NF::Laplace, 20));
    for (auto g : graphs) rows.push_back(row(SM::Additive, FF::Linear, g, NF::Laplace, 20));
    for (auto g : graphs) rows.push_back(row(SM::Affine, FF::Sinusoidal, g, NF::Normal, 20));
    for (auto g : graphs) rows.push_back(row(SM::Affine, FF::Polynomial, g, NF::Normal, 20));
    for (auto g : graphs) rows.push_back(row(SM::Affine, FF::Linear, g, NF::Normal, 20));
    for (auto g : graphs) rows.push_back(row(SM::Additive, FF::Sinusoidal, g, NF::Normal, 20));
    for (auto g : graphs) rows.push_back(row(SM::Additive, FF::Polynomial, g, NF::Normal, 20));
    for (auto g : graphs) rows.push_back(row(SM::Additive, FF::Linear, g, NF::Normal, 20));
    return rows;
  }
  if (scale == "large") {
    rows.push_back(row(SM::Affine, FF::Nonparametric, GK::ErdosRenyi, NF::Normal, 10, {10, 25}));
    rows.push_back(row(SM::Affine, FF::Sinusoidal, GK::ErdosRenyi, NF::Normal, 10, {10, 25}));
    rows.push_back(row(SM::Affine, FF::Polynomial, GK::ErdosRenyi, NF::Normal, 10, {10, 25}));
    return rows;
  }
  throw config_error("benchmark_suite: scale must be 'small' or 'large'");
}

ScmSpec spec_for_row(const SuiteRow& row, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  DagSpec dag = gen_graph(row.graph, d, erdos_renyi_default_p(d), rng);
  ScmSpec spec = make_functions(std::move(dag), row.form, row.mode, rng);
  spec.noise = row.noise;
  spec.noise_scale =
      row.noise == NoiseFamily::Laplace ? 1.0 / std::sqrt(2.0) : 1.0;
  // suite datasets standardize marginals during generation across the
  // board, so no method can read the order off raw variances
  spec.normalize_during_generation = true;
  return spec;
}

}  // namespace oslow::scm
