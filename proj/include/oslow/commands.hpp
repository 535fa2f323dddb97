#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oslow/trainer.hpp"

namespace oslow::cli {

/// Worker-pool width: OSLOW_THREADS when set, hardware concurrency otherwise.
unsigned worker_count(std::size_t jobs);

struct GenOptions {
  std::string suite = "small";
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t n_samples = 1000;
};

struct TrainOptions {
  std::string dataset_csv;
  std::string out_dir = ".";
  std::string method = "oslow";
  train::TrainConfig cfg;
  std::string run_id;  // defaults to <dataset>__<method>__s<seed>
};

struct BenchOptions {
  std::string data_dir;
  std::string out_dir;
  std::vector<std::string> methods = {"oslow", "varsort"};
  std::vector<std::uint64_t> seeds = {0};
  train::TrainConfig cfg;
  // pick the flow base matching the dataset's noise family
  bool auto_base = true;
  int max_datasets = -1;     // cap, -1 = all
  std::string filter;        // substring filter on dataset ids
};

struct InterveneOptions {
  std::string checkpoint;  // trained-flow generator
  std::string sidecar;     // ground-truth generator (--truth)
  int target = 1;          // 1-based
  std::vector<int> responses;  // 1-based; empty = all
  std::string grid = "-2.5:2.5:21";
  int num_samples = 50;
  double confidence = 0.99;
  std::uint64_t seed = 0;
  std::string out_csv;
};

struct EvalOptions {
  std::vector<std::string> results;
  std::string data_dir;
  std::string out_prefix;  // writes <prefix>.csv and <prefix>.json
};

/// All commands return a process exit code: 0 ok, 1 usage/io, 2 numeric.
int cmd_gen(const GenOptions& opts);
int cmd_train(const TrainOptions& opts);
int cmd_bench(const BenchOptions& opts);
int cmd_intervene(const InterveneOptions& opts);
int cmd_eval(const EvalOptions& opts);

/// Applies a JSON config file (documented in the README) onto defaults;
/// flags override afterwards.
train::TrainConfig train_config_from_json(const std::string& json_text);

std::vector<double> parse_grid(const std::string& spec);
std::string method_to_result_name(const std::string& method);

}  // namespace oslow::cli
