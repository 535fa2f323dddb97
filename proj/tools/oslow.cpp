// Command-line front end: gen / train / bench / intervene / eval.
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "oslow/commands.hpp"
#include "oslow/common.hpp"
#include "oslow/dataset_io.hpp"

using namespace oslow;

namespace {

// Training flags live in this holder so a config file can be applied first
// and explicitly passed flags override it afterwards.
struct TrainFlags {
  std::uint64_t seed = 0;
  int epochs = 0, k = 0, phase_theta = 0, phase_gamma = 0, sinkhorn_iters = 0;
  std::size_t batch = 0, num_transforms = 0;
  double lr_theta = 0, lr_gamma = 0, sigma_init = 0, sinkhorn_tau = 0;
  bool one_step = false;
  std::string base;
  std::string config_path;

  std::vector<std::pair<CLI::Option*, std::function<void(train::TrainConfig&)>>>
      appliers;

  void attach(CLI::App* app) {
    auto opt = [&](CLI::Option* o, std::function<void(train::TrainConfig&)> f) {
      appliers.emplace_back(o, std::move(f));
    };
    app->add_option("--config", config_path, "json config file");
    opt(app->add_option("--seed", seed, "run seed"),
        [this](train::TrainConfig& c) { c.seed = seed; });
    opt(app->add_option("--epochs", epochs, "training epochs"),
        [this](train::TrainConfig& c) { c.epochs = epochs; });
    opt(app->add_option("--k", k, "hard permutation samples per epoch"),
        [this](train::TrainConfig& c) { c.k = k; });
    opt(app->add_option("--batch", batch, "minibatch size"),
        [this](train::TrainConfig& c) { c.batch_size = batch; });
    opt(app->add_option("--lr-theta", lr_theta, "flow learning rate"),
        [this](train::TrainConfig& c) { c.lr_theta = lr_theta; });
    opt(app->add_option("--lr-gamma", lr_gamma, "belief learning rate"),
        [this](train::TrainConfig& c) { c.lr_gamma = lr_gamma; });
    opt(app->add_option("--sigma-init", sigma_init,
                        "initial Gumbel noise scale"),
        [this](train::TrainConfig& c) { c.sigma_init = sigma_init; });
    opt(app->add_option("--phase-theta", phase_theta,
                        "flow epochs per alternation cycle"),
        [this](train::TrainConfig& c) { c.phase_theta = phase_theta; });
    opt(app->add_option("--phase-gamma", phase_gamma,
                        "belief epochs per alternation cycle"),
        [this](train::TrainConfig& c) { c.phase_gamma = phase_gamma; });
    opt(app->add_option("--sinkhorn-tau", sinkhorn_tau,
                        "sinkhorn temperature (relaxed modes)"),
        [this](train::TrainConfig& c) { c.sinkhorn_tau = sinkhorn_tau; });
    opt(app->add_option("--sinkhorn-iters", sinkhorn_iters,
                        "sinkhorn normalization rounds"),
        [this](train::TrainConfig& c) { c.sinkhorn_iters = sinkhorn_iters; });
    opt(app->add_option("--num-transforms", num_transforms,
                        "stacked affine transforms"),
        [this](train::TrainConfig& c) {
          c.flow.num_transforms = num_transforms;
        });
    opt(app->add_flag("--one-step-alternation", one_step,
                      "literal per-epoch theta/gamma alternation"),
        [this](train::TrainConfig& c) { c.one_step_alternation = one_step; });
    opt(app->add_option("--base", base, "base distribution: normal | laplace")
            ->check(CLI::IsMember({"normal", "laplace"})),
        [this](train::TrainConfig& c) {
          c.flow.base = base == "laplace"
                            ? flow::BaseDistribution::StandardLaplace
                            : flow::BaseDistribution::StandardNormal;
        });
  }

  void resolve(train::TrainConfig& cfg) const {
    if (!config_path.empty())
      cfg = cli::train_config_from_json(io::read_file(config_path));
    for (const auto& [option, apply] : appliers)
      if (option->count() > 0) apply(cfg);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"order-based causal discovery with masked autoregressive flows"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  cli::GenOptions gen_opts;
  auto* gen = app.add_subcommand("gen", "generate a benchmark dataset suite");
  gen->add_option("--suite", gen_opts.suite, "small | large")
      ->check(CLI::IsMember({"small", "large"}));
  gen->add_option("--out", gen_opts.out_dir, "output directory")->required();
  gen->add_option("--seed", gen_opts.seed, "suite seed");
  gen->add_option("--n", gen_opts.n_samples, "samples per dataset");

  cli::TrainOptions train_opts;
  TrainFlags train_flags;
  auto* tr = app.add_subcommand("train", "learn an ordering on one dataset");
  tr->add_option("--dataset", train_opts.dataset_csv, "dataset csv")
      ->required();
  tr->add_option("--out", train_opts.out_dir, "output directory");
  tr->add_option("--method", train_opts.method,
                 "oslow | oslow-gs | oslow-soft")
      ->check(CLI::IsMember({"oslow", "oslow-gs", "oslow-soft"}));
  tr->add_option("--run-id", train_opts.run_id, "output basename");
  train_flags.attach(tr);

  cli::BenchOptions bench_opts;
  TrainFlags bench_flags;
  auto* be = app.add_subcommand("bench", "run methods across a dataset suite");
  be->add_option("--data", bench_opts.data_dir, "generated dataset directory")
      ->required();
  be->add_option("--out", bench_opts.out_dir, "output directory")->required();
  be->add_option("--methods", bench_opts.methods,
                 "comma list: oslow,oslow-gs,oslow-soft,varsort")
      ->delimiter(',');
  be->add_option("--seeds", bench_opts.seeds, "comma list of seeds")
      ->delimiter(',');
  be->add_option("--max-datasets", bench_opts.max_datasets,
                 "cap the number of datasets");
  be->add_option("--filter", bench_opts.filter,
                 "substring filter on dataset ids");
  be->add_flag("!--no-auto-base", bench_opts.auto_base,
               "disable matching the base to the dataset noise");
  bench_flags.attach(be);

  cli::InterveneOptions iv_opts;
  auto* iv = app.add_subcommand("intervene",
                                "estimate hard-intervention expectations");
  iv->add_option("--checkpoint", iv_opts.checkpoint, "trained flow checkpoint");
  iv->add_option("--truth", iv_opts.sidecar,
                 "dataset sidecar: use the ground-truth generator");
  iv->add_option("--target", iv_opts.target, "intervened variable (1-based)")
      ->required();
  iv->add_option("--responses", iv_opts.responses,
                 "response variables (1-based, default all)")
      ->delimiter(',');
  iv->add_option("--grid", iv_opts.grid, "lo:hi:count sweep grid");
  iv->add_option("--num-samples", iv_opts.num_samples,
                 "Monte-Carlo draws per grid point");
  iv->add_option("--confidence", iv_opts.confidence, "interval level");
  iv->add_option("--seed", iv_opts.seed, "sweep seed");
  iv->add_option("--out", iv_opts.out_csv, "output csv")->required();

  cli::EvalOptions ev_opts;
  auto* ev = app.add_subcommand("eval", "aggregate train results against truth");
  ev->add_option("--results", ev_opts.results, "result json files")
      ->required()
      ->delimiter(',');
  ev->add_option("--data", ev_opts.data_dir, "dataset directory with sidecars")
      ->required();
  ev->add_option("--out", ev_opts.out_prefix, "output prefix")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cli::cmd_gen(gen_opts);
    if (tr->parsed()) {
      train_flags.resolve(train_opts.cfg);
      return cli::cmd_train(train_opts);
    }
    if (be->parsed()) {
      bench_flags.resolve(bench_opts.cfg);
      return cli::cmd_bench(bench_opts);
    }
    if (iv->parsed()) return cli::cmd_intervene(iv_opts);
    if (ev->parsed()) return cli::cmd_eval(ev_opts);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
