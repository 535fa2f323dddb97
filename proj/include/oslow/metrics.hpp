#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oslow/permutation.hpp"
#include "oslow/scm.hpp"

namespace oslow::metrics {

/// Fraction of ground-truth edges the ordering places backward. Errors when
/// the DAG has no edges (the ratio is undefined there).
double cbc(const perm::Ordering& ordering, const scm::DagSpec& dag);

struct Validity {
  bool valid = false;
  bool vacuous = false;  // empty edge set: valid by convention, flagged
};

Validity is_valid_ordering(const perm::Ordering& ordering,
                           const scm::DagSpec& dag);

struct MetricRecord {
  std::string dataset_id;
  std::string method;
  std::string family;  // grouping key, e.g. "sinusoidal/affine"
  std::uint64_t seed = 0;
  std::optional<double> cbc;  // absent on vacuous (edgeless) graphs
  bool valid = false;
  bool vacuous = false;
  double proxy_final = 0.0;
  double wall_time_s = 0.0;
};

struct AggregateRow {
  std::string method;
  std::string family;
  std::size_t n = 0;         // records with a defined cbc
  std::size_t excluded = 0;  // vacuous records skipped
  double cbc_mean = 0.0;
  double cbc_std = 0.0;  // sample std (n-1); 0 when n == 1
  double wall_time_mean_s = 0.0;
};

/// Mean +/- sample standard deviation per (method, family), keys sorted.
std::vector<AggregateRow> aggregate(const std::vector<MetricRecord>& records);

}  // namespace oslow::metrics
