#include "oslow/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "oslow/common.hpp"
#include "oslow/dataset_io.hpp"
#include "oslow/intervention.hpp"
#include "oslow/kernels.hpp"
#include "oslow/metrics.hpp"
#include "oslow/sha256.hpp"

namespace oslow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// manifest: one json file per output directory, single writer
class Manifest {
 public:
  explicit Manifest(const fs::path& dir) : path_(dir / "manifest.json") {
    if (fs::exists(path_)) {
      try {
        doc_ = json::parse(io::read_file(path_.string()));
      } catch (const json::exception& e) {
        throw io_error("malformed manifest '" + path_.string() +
                       "': " + e.what());
      }
      if (doc_.value("format", "") != "oslow-manifest")
        throw io_error("'" + path_.string() + "' is not an oslow manifest");
    } else {
      doc_ = {{"format", "oslow-manifest"},
              {"version", 1},
              {"tool_version", kVersion},
              {"runs", json::array()}};
    }
  }

  bool has_run(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& run : doc_.at("runs"))
      if (run.value("id", "") == id && run.value("ok", false)) return true;
    return false;
  }

  json get_run(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& run : doc_.at("runs"))
      if (run.value("id", "") == id && run.value("ok", false)) return run;
    return json();
  }

  void append(json run) {
    std::lock_guard<std::mutex> lock(mu_);
    doc_["runs"].push_back(std::move(run));
  }

  void save() {
    std::lock_guard<std::mutex> lock(mu_);
    // verify recorded hashes still match what sits on disk
    for (const auto& run : doc_.at("runs")) {
      if (!run.contains("files")) continue;
      for (const auto& [file, hash] : run.at("files").items()) {
        fs::path p = path_.parent_path() / file;
        if (fs::exists(p) && io::sha256_file(p.string()) != hash)
          throw io_error("manifest: hash mismatch for '" + file + "'");
      }
    }
    io::write_file(path_.string(), doc_.dump(1) + "\n");
  }

 private:
  fs::path path_;
  json doc_;
  mutable std::mutex mu_;
};

void run_pool(std::size_t jobs, unsigned workers,
              const std::function<void(std::size_t)>& work) {
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      // job-level parallelism owns the cores; keep kernels serial
      kern::set_parallel_enabled(false);
      try {
        for (std::size_t i = next.fetch_add(1); i < jobs;
             i = next.fetch_add(1))
          work(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct DatasetJob {
  scm::SuiteRow row;
  std::size_t d = 0;
  int sim = 0;
  std::uint64_t spec_seed = 0;
  std::uint64_t sim_seed = 0;
  std::string id;
};

std::string family_of(const scm::ScmSpec& spec) {
  return std::string(scm::to_string(spec.form)) + "/" +
         scm::to_string(spec.mode);
}

flow::BaseDistribution base_for_noise(scm::NoiseFamily noise) {
  return noise == scm::NoiseFamily::Laplace
             ? flow::BaseDistribution::StandardLaplace
             : flow::BaseDistribution::StandardNormal;
}

json checkpoint_meta(const train::TrainResult& result,
                     const train::TrainConfig& cfg,
                     const std::string& dataset_id) {
  json ordering = json::array();
  for (int v : result.final_ordering.seq) ordering.push_back(v + 1);
  return {{"dataset_id", dataset_id},
          {"final_ordering", ordering},
          {"seed", result.seed},
          {"method", train::method_name(cfg.method)},
          {"standardization",
           {{"means", result.stats.means},
            {"stds", result.stats.stds},
            {"dropped_rows", result.stats.dropped_rows}}}};
}

struct TrainRun {
  train::TrainResult result;
  double wall_time_s = 0.0;
};

TrainRun run_train(const Tensor& data, const train::TrainConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  TrainRun run;
  run.result = train::train(data, cfg);
  run.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return run;
}

}  // namespace

unsigned worker_count(std::size_t jobs) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("OSLOW_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || v < 1)
      throw config_error("OSLOW_THREADS must be a positive integer");
    hw = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(
      std::min<std::size_t>(hw, std::max<std::size_t>(1, jobs)));
}

std::string method_to_result_name(const std::string& method) {
  std::string safe = method;
  for (auto& c : safe)
    if (c == '/' || c == ' ') c = '_';
  return safe;
}

train::TrainConfig train_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  train::TrainConfig cfg;
  auto tr = j.value("train", json::object());
  auto get = [&](const char* key, auto dflt) {
    using T = decltype(dflt);
    if (!tr.contains(key)) return dflt;
    try {
      return tr.at(key).get<T>();
    } catch (const json::exception&) {
      throw config_error(std::string("config: /train/") + key +
                         " has the wrong type");
    }
  };
  cfg.k = get("k", cfg.k);
  cfg.epochs = get("epochs", cfg.epochs);
  cfg.batch_size = get("batch_size", cfg.batch_size);
  cfg.lr_theta = get("lr_theta", cfg.lr_theta);
  cfg.lr_gamma = get("lr_gamma", cfg.lr_gamma);
  cfg.weight_decay = get("weight_decay", cfg.weight_decay);
  cfg.sigma_init = get("sigma_init", cfg.sigma_init);
  cfg.phase_theta = get("phase_theta", cfg.phase_theta);
  cfg.phase_gamma = get("phase_gamma", cfg.phase_gamma);
  cfg.sinkhorn_tau = get("sinkhorn_tau", cfg.sinkhorn_tau);
  cfg.sinkhorn_iters = get("sinkhorn_iters", cfg.sinkhorn_iters);
  cfg.one_step_alternation =
      get("one_step_alternation", cfg.one_step_alternation);
  cfg.record_gamma_trace = get("record_gamma_trace", cfg.record_gamma_trace);
  if (tr.contains("method"))
    cfg.method = train::method_from_name(tr.at("method").get<std::string>());
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();

  auto fl = tr.value("flow", json::object());
  auto getf = [&](const char* key, auto dflt) {
    using T = decltype(dflt);
    if (!fl.contains(key)) return dflt;
    try {
      return fl.at(key).get<T>();
    } catch (const json::exception&) {
      throw config_error(std::string("config: /train/flow/") + key +
                         " has the wrong type");
    }
  };
  cfg.flow.hidden_multipliers =
      getf("hidden_multipliers", cfg.flow.hidden_multipliers);
  cfg.flow.num_transforms = getf("num_transforms", cfg.flow.num_transforms);
  cfg.flow.clamp_a = getf("clamp_a", cfg.flow.clamp_a);
  cfg.flow.clamp_b = getf("clamp_b", cfg.flow.clamp_b);
  if (fl.contains("base"))
    cfg.flow.base = flow::base_from_name(fl.at("base").get<std::string>());
  return cfg;
}

std::vector<double> parse_grid(const std::string& spec) {
  // "lo:hi:count" or a single value
  std::vector<double> out;
  auto c1 = spec.find(':');
  if (c1 == std::string::npos) {
    out.push_back(std::stod(spec));
    return out;
  }
  auto c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos)
    throw config_error("grid must be lo:hi:count, got '" + spec + "'");
  double lo = std::stod(spec.substr(0, c1));
  double hi = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
  int count = std::stoi(spec.substr(c2 + 1));
  if (count < 1) throw config_error("grid count must be >= 1");
  if (count == 1) {
    out.push_back(lo);
    return out;
  }
  for (int i = 0; i < count; ++i)
    out.push_back(lo + (hi - lo) * static_cast<double>(i) /
                           static_cast<double>(count - 1));
  return out;
}

int cmd_gen(const GenOptions& opts) {
  if (opts.out_dir.empty()) throw config_error("gen: --out is required");
  fs::create_directories(opts.out_dir);
  auto rows = scm::benchmark_suite(opts.suite);

  std::vector<DatasetJob> jobs;
  for (const auto& row : rows) {
    std::vector<std::size_t> dims = row.dims;
    for (int sim = 0; sim < row.num_simulations; ++sim) {
      if (row.dims.empty()) {
        // d drawn uniformly from {3,4,5,6}, derived from the suite seed
        Rng pick(derive_seed(opts.seed, std::hash<std::string>{}(row.slug),
                             static_cast<std::uint64_t>(sim)));
        dims = {3 + static_cast<std::size_t>(pick.integer(4))};
      }
      for (std::size_t d : dims) {
        DatasetJob job;
        job.row = row;
        job.d = d;
        job.sim = sim;
        job.spec_seed = derive_seed(
            opts.seed, std::hash<std::string>{}(row.slug + "#spec"),
            static_cast<std::uint64_t>(sim) * 1000 + d);
        job.sim_seed = derive_seed(
            opts.seed, std::hash<std::string>{}(row.slug + "#sim"),
            static_cast<std::uint64_t>(sim) * 1000 + d);
        job.id = row.slug + "__d" + std::to_string(d) + "__sim" +
                 std::to_string(sim);
        jobs.push_back(std::move(job));
      }
    }
  }

  Manifest manifest(opts.out_dir);
  std::atomic<std::size_t> skipped{0};
  run_pool(jobs.size(), worker_count(jobs.size()), [&](std::size_t i) {
    const DatasetJob& job = jobs[i];
    if (manifest.has_run("gen:" + job.id)) {
      ++skipped;
      return;
    }
    std::string started = timestamp_utc();
    scm::ScmSpec spec = scm::spec_for_row(job.row, job.d, job.spec_seed);
    scm::Dataset ds = scm::simulate(spec, opts.n_samples, job.sim_seed);
    std::string csv = io::dataset_to_csv(ds.data);
    std::string hash = Sha256::hash_hex(csv);
    fs::path csv_path = fs::path(opts.out_dir) / (job.id + ".csv");
    fs::path side_path = fs::path(opts.out_dir) / (job.id + ".json");
    io::write_file(csv_path.string(), csv);
    io::write_sidecar(side_path.string(), ds, opts.n_samples, hash);
    manifest.append(
        {{"kind", "gen"},
         {"id", "gen:" + job.id},
         {"ok", true},
         {"seed", job.sim_seed},
         {"config",
          {{"suite", opts.suite},
           {"n", opts.n_samples},
           {"row", job.row.slug},
           {"d", job.d},
           {"sim", job.sim}}},
         {"files",
          {{job.id + ".csv", hash},
           {job.id + ".json",
            Sha256::hash_hex(io::read_file(side_path.string()))}}},
         {"started", started},
         {"finished", timestamp_utc()}});
  });
  manifest.save();
  std::printf("gen: wrote %zu datasets to %s (%zu already present)\n",
              jobs.size() - skipped.load(), opts.out_dir.c_str(), skipped.load());
  return 0;
}

int cmd_train(const TrainOptions& opts) {
  if (opts.dataset_csv.empty())
    throw config_error("train: --dataset is required");
  Tensor data = io::read_dataset_csv(opts.dataset_csv);
  fs::create_directories(opts.out_dir);

  train::TrainConfig cfg = opts.cfg;
  cfg.method = train::method_from_name(
      opts.method == "oslow" ? "gumbel-top-k"
      : opts.method == "oslow-gs" ? "gumbel-sinkhorn-st"
      : opts.method == "oslow-soft" ? "soft-sinkhorn"
                                    : opts.method);
  std::string dataset_id = fs::path(opts.dataset_csv).stem().string();
  std::string run_id =
      opts.run_id.empty()
          ? dataset_id + "__" + method_to_result_name(opts.method) + "__s" +
                std::to_string(cfg.seed)
          : opts.run_id;

  std::string started = timestamp_utc();
  TrainRun run = run_train(data, cfg);

  json result_doc = json::parse(train::result_to_json(run.result, cfg));
  result_doc["dataset_id"] = dataset_id;
  result_doc["dataset_csv_sha256"] = io::sha256_file(opts.dataset_csv);
  result_doc["method"] = opts.method;
  result_doc["wall_time_s"] = run.wall_time_s;

  fs::path result_path = fs::path(opts.out_dir) / (run_id + ".result.json");
  fs::path ckpt_path = fs::path(opts.out_dir) / (run_id + ".ckpt.json");
  io::write_file(result_path.string(), result_doc.dump(1) + "\n");
  flow::save_checkpoint(ckpt_path.string(), run.result.model,
                        run.result.gamma,
                        checkpoint_meta(run.result, cfg, dataset_id).dump());

  Manifest manifest(opts.out_dir);
  manifest.append(
      {{"kind", "train"},
       {"id", "train:" + run_id},
       {"ok", true},
       {"seed", cfg.seed},
       {"config", json::parse(train::result_to_json(run.result, cfg))["config"]},
       {"files",
        {{run_id + ".result.json",
          Sha256::hash_hex(result_doc.dump(1) + "\n")},
         {run_id + ".ckpt.json", io::sha256_file(ckpt_path.string())}}},
       {"started", started},
       {"finished", timestamp_utc()}});
  manifest.save();
  std::printf("train: %s -> ordering %s (%.1fs)\n", dataset_id.c_str(),
              train::ordering_to_string(run.result.final_ordering).c_str(),
              run.wall_time_s);
  return 0;
}

namespace {

struct BenchJob {
  std::string dataset_id;
  fs::path csv, sidecar;
  std::string method;
  std::uint64_t seed;
};

struct BenchOutcome {
  metrics::MetricRecord record;
  bool ok = false;
  bool numeric_failure = false;
  std::string error;
  json result_doc;  // written for train-backed methods
};

}  // namespace

int cmd_bench(const BenchOptions& opts) {
  if (opts.data_dir.empty() || opts.out_dir.empty())
    throw config_error("bench: --data and --out are required");
  fs::create_directories(opts.out_dir);

  std::vector<std::pair<std::string, fs::path>> datasets;
  for (const auto& entry : fs::directory_iterator(opts.data_dir)) {
    if (entry.path().extension() != ".csv") continue;
    std::string id = entry.path().stem().string();
    if (!opts.filter.empty() && id.find(opts.filter) == std::string::npos)
      continue;
    datasets.emplace_back(id, entry.path());
  }
  std::sort(datasets.begin(), datasets.end());
  if (opts.max_datasets >= 0 &&
      datasets.size() > static_cast<std::size_t>(opts.max_datasets))
    datasets.resize(static_cast<std::size_t>(opts.max_datasets));
  if (datasets.empty())
    throw config_error("bench: no datasets found in '" + opts.data_dir + "'");

  Manifest manifest(opts.out_dir);
  std::vector<BenchJob> jobs;
  std::vector<metrics::MetricRecord> prior_records;
  for (const auto& [id, csv] : datasets) {
    fs::path sidecar = csv;
    sidecar.replace_extension(".json");
    if (!fs::exists(sidecar))
      throw io_error("bench: missing sidecar for '" + id + "'");
    for (const auto& method : opts.methods)
      for (std::uint64_t seed : opts.seeds) {
        std::string run_id = id + "__" + method_to_result_name(method) +
                             "__s" + std::to_string(seed);
        json done = manifest.get_run("bench:" + run_id);
        if (!done.is_null()) {
          // completed on a previous invocation; fold its record back in
          const json& rec = done.at("record");
          metrics::MetricRecord r;
          r.dataset_id = id;
          r.method = method;
          r.family = rec.at("family").get<std::string>();
          r.seed = seed;
          if (!rec.at("cbc").is_null()) r.cbc = rec.at("cbc").get<double>();
          r.valid = rec.at("valid").get<bool>();
          r.vacuous = rec.at("vacuous").get<bool>();
          r.proxy_final = rec.at("proxy_final").get<double>();
          r.wall_time_s = rec.at("wall_time_s").get<double>();
          prior_records.push_back(std::move(r));
          continue;
        }
        jobs.push_back({id, csv, sidecar, method, seed});
      }
  }

  std::vector<BenchOutcome> outcomes(jobs.size());
  run_pool(jobs.size(), worker_count(jobs.size()), [&](std::size_t i) {
    const BenchJob& job = jobs[i];
    BenchOutcome& out = outcomes[i];
    try {
      Tensor data = io::read_dataset_csv(job.csv.string());
      io::Sidecar sc = io::read_sidecar(job.sidecar.string());
      out.record.dataset_id = job.dataset_id;
      out.record.method = job.method;
      out.record.family = family_of(sc.spec);
      out.record.seed = job.seed;

      perm::Ordering ordering;
      auto t0 = std::chrono::steady_clock::now();
      if (job.method == "varsort") {
        ordering = train::varsort(data);
        out.record.proxy_final = 0.0;
      } else {
        train::TrainConfig cfg = opts.cfg;
        cfg.seed = derive_seed(job.seed,
                               std::hash<std::string>{}(job.dataset_id),
                               std::hash<std::string>{}(job.method));
        cfg.method = train::method_from_name(
            job.method == "oslow" ? "gumbel-top-k"
            : job.method == "oslow-gs" ? "gumbel-sinkhorn-st"
            : job.method == "oslow-soft" ? "soft-sinkhorn"
                                         : job.method);
        if (opts.auto_base) cfg.flow.base = base_for_noise(sc.spec.noise);
        train::TrainResult result = train::train(data, cfg);
        ordering = result.final_ordering;
        out.record.proxy_final = result.proxy_trace.back();
        json doc = json::parse(train::result_to_json(result, cfg));
        doc["dataset_id"] = job.dataset_id;
        doc["method"] = job.method;
        out.result_doc = std::move(doc);
      }
      out.record.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      auto validity = metrics::is_valid_ordering(ordering, sc.spec.dag);
      out.record.valid = validity.valid;
      out.record.vacuous = validity.vacuous;
      if (!validity.vacuous)
        out.record.cbc = metrics::cbc(ordering, sc.spec.dag);
      out.ok = true;
    } catch (const numeric_error& e) {
      out.error = e.what();
      out.numeric_failure = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  // merge outcomes (single writer), then aggregate everything on record
  std::size_t failures = 0;
  bool any_numeric = false;
  std::vector<metrics::MetricRecord> records = prior_records;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const BenchJob& job = jobs[i];
    const BenchOutcome& out = outcomes[i];
    std::string run_id = job.dataset_id + "__" +
                         method_to_result_name(job.method) + "__s" +
                         std::to_string(job.seed);
    json entry = {{"kind", "bench-run"},
                  {"id", "bench:" + run_id},
                  {"ok", out.ok},
                  {"seed", job.seed},
                  {"dataset", job.dataset_id},
                  {"method", job.method},
                  {"finished", timestamp_utc()}};
    if (out.ok) {
      entry["record"] = {{"family", out.record.family},
                         {"cbc", out.record.cbc.has_value()
                                     ? json(*out.record.cbc)
                                     : json(nullptr)},
                         {"valid", out.record.valid},
                         {"vacuous", out.record.vacuous},
                         {"proxy_final", out.record.proxy_final},
                         {"wall_time_s", out.record.wall_time_s}};
      if (!out.result_doc.is_null()) {
        fs::path rp = fs::path(opts.out_dir) / (run_id + ".result.json");
        io::write_file(rp.string(), out.result_doc.dump(1) + "\n");
      }
      records.push_back(out.record);
    } else {
      entry["error"] = out.error;
      ++failures;
      any_numeric = any_numeric || out.numeric_failure;
    }
    manifest.append(std::move(entry));
  }

  if (!records.empty()) {
    auto rows = metrics::aggregate(records);
    std::string csv =
        "method,family,n,excluded,cbc_mean,cbc_std,wall_time_mean_s\n";
    json jrows = json::array();
    for (const auto& r : rows) {
      char line[256];
      std::snprintf(line, sizeof(line), "%s,%s,%zu,%zu,%.6f,%.6f,%.3f\n",
                    r.method.c_str(), r.family.c_str(), r.n, r.excluded,
                    r.cbc_mean, r.cbc_std, r.wall_time_mean_s);
      csv += line;
      jrows.push_back({{"method", r.method},
                       {"family", r.family},
                       {"n", r.n},
                       {"excluded", r.excluded},
                       {"cbc_mean", r.cbc_mean},
                       {"cbc_std", r.cbc_std},
                       {"wall_time_mean_s", r.wall_time_mean_s}});
    }
    io::write_file(
        (fs::path(opts.out_dir) / "aggregate.csv").string(), csv);
    io::write_file((fs::path(opts.out_dir) / "aggregate.json").string(),
                   jrows.dump(1) + "\n");
    std::fputs(csv.c_str(), stdout);
  }
  manifest.save();
  if (failures) {
    std::fprintf(stderr, "bench: %zu of %zu runs failed\n", failures,
                 jobs.size());
    return any_numeric ? 2 : 1;
  }
  return 0;
}

int cmd_intervene(const InterveneOptions& opts) {
  if (opts.checkpoint.empty() == opts.sidecar.empty())
    throw config_error(
        "intervene: exactly one of --checkpoint or --truth is required");
  if (opts.out_csv.empty()) throw config_error("intervene: --out is required");

  intervene::Generator gen = scm::ScmSpec{};
  std::size_t d;
  if (!opts.checkpoint.empty()) {
    flow::Checkpoint ck = flow::load_checkpoint(opts.checkpoint);
    json meta = json::parse(ck.meta_json);
    intervene::FlowGenerator fg;
    fg.model = std::move(ck.model);
    if (!meta.contains("final_ordering"))
      throw io_error("intervene: checkpoint lacks an ordering");
    for (const auto& v : meta.at("final_ordering"))
      fg.ordering.seq.push_back(v.get<int>() - 1);
    if (meta.contains("standardization")) {
      fg.means =
          meta["standardization"].at("means").get<std::vector<double>>();
      fg.stds = meta["standardization"].at("stds").get<std::vector<double>>();
    }
    d = fg.model.config.d;
    gen = std::move(fg);
  } else {
    io::Sidecar sc = io::read_sidecar(opts.sidecar);
    d = sc.spec.dag.d;
    gen = std::move(sc.spec);
  }

  if (opts.target < 1 || static_cast<std::size_t>(opts.target) > d)
    throw config_error("intervene: --target out of range");
  intervene::DoQuery query;
  query.num_samples = opts.num_samples;
  query.confidence = opts.confidence;
  for (int r : opts.responses) {
    if (r < 1 || static_cast<std::size_t>(r) > d)
      throw config_error("intervene: response out of range");
    query.responses.push_back(r - 1);
  }
  auto rows = intervene::sweep(gen, opts.target - 1, parse_grid(opts.grid),
                               query, opts.seed);
  io::write_file(opts.out_csv, intervene::sweep_to_csv(rows));
  std::printf("intervene: wrote %zu rows to %s\n", rows.size(),
              opts.out_csv.c_str());
  return 0;
}

int cmd_eval(const EvalOptions& opts) {
  if (opts.results.empty()) throw config_error("eval: no result files given");
  if (opts.out_prefix.empty())
    throw config_error("eval: --out prefix is required");
  std::vector<metrics::MetricRecord> records;
  for (const auto& path : opts.results) {
    json doc;
    try {
      doc = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
      throw io_error("malformed result '" + path + "': " + e.what());
    }
    if (doc.value("format", "") != "oslow-train-result")
      throw io_error("'" + path + "' is not an oslow train result");
    std::string dataset_id = doc.value("dataset_id", "");
    fs::path sidecar = fs::path(opts.data_dir) / (dataset_id + ".json");
    if (!fs::exists(sidecar))
      throw io_error("eval: missing sidecar '" + sidecar.string() + "'");
    io::Sidecar sc = io::read_sidecar(sidecar.string());

    perm::Ordering ordering;
    for (const auto& v : doc.at("final_ordering"))
      ordering.seq.push_back(v.get<int>() - 1);

    metrics::MetricRecord rec;
    rec.dataset_id = dataset_id;
    rec.method = doc.value("method", "oslow");
    rec.family = family_of(sc.spec);
    rec.seed = doc.value("seed", std::uint64_t{0});
    auto validity = metrics::is_valid_ordering(ordering, sc.spec.dag);
    rec.valid = validity.valid;
    rec.vacuous = validity.vacuous;
    if (!validity.vacuous) rec.cbc = metrics::cbc(ordering, sc.spec.dag);
    if (doc.contains("proxy_trace") && !doc["proxy_trace"].empty())
      rec.proxy_final = doc["proxy_trace"].back().get<double>();
    rec.wall_time_s = doc.value("wall_time_s", 0.0);
    records.push_back(std::move(rec));
  }
  auto rows = metrics::aggregate(records);
  std::string csv =
      "method,family,n,excluded,cbc_mean,cbc_std,wall_time_mean_s\n";
  json jrows = json::array();
  for (const auto& r : rows) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%s,%zu,%zu,%.6f,%.6f,%.3f\n",
                  r.method.c_str(), r.family.c_str(), r.n, r.excluded,
                  r.cbc_mean, r.cbc_std, r.wall_time_mean_s);
    csv += line;
    jrows.push_back({{"method", r.method},
                     {"family", r.family},
                     {"n", r.n},
                     {"excluded", r.excluded},
                     {"cbc_mean", r.cbc_mean},
                     {"cbc_std", r.cbc_std},
                     {"wall_time_mean_s", r.wall_time_mean_s}});
  }
  io::write_file(opts.out_prefix + ".csv", csv);
  io::write_file(opts.out_prefix + ".json", jrows.dump(1) + "\n");
  std::fputs(csv.c_str(), stdout);
  return 0;
}

}  // namespace oslow::cli
