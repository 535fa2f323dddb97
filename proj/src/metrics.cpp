#include "oslow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "oslow/common.hpp"

namespace oslow::metrics {

double cbc(const perm::Ordering& ordering, const scm::DagSpec& dag) {
  if (ordering.d() != dag.d) throw config_error("cbc: dimension mismatch");
  if (!ordering.valid()) throw config_error("cbc: invalid ordering");
  if (dag.edges.empty())
    throw config_error("cbc: undefined on an empty edge set");
  auto rank = ordering.ranks();
  std::size_t backward = 0;
  for (const auto& [parent, child] : dag.edges)
    if (rank[parent] > rank[child]) ++backward;
  return static_cast<double>(backward) / static_cast<double>(dag.edges.size());
}

Validity is_valid_ordering(const perm::Ordering& ordering,
                           const scm::DagSpec& dag) {
  if (dag.edges.empty()) return {true, true};
  return {cbc(ordering, dag) == 0.0, false};
}

std::vector<AggregateRow> aggregate(const std::vector<MetricRecord>& records) {
  if (records.empty()) throw config_error("aggregate: no records");
  std::map<std::pair<std::string, std::string>, std::vector<const MetricRecord*>>
      groups;
  for (const auto& r : records) groups[{r.method, r.family}].push_back(&r);

  std::vector<AggregateRow> rows;
  for (const auto& [key, members] : groups) {
    AggregateRow row;
    row.method = key.first;
    row.family = key.second;
    double sum = 0, time_sum = 0;
    for (const auto* r : members) {
      time_sum += r->wall_time_s;
      if (r->cbc.has_value()) {
        sum += *r->cbc;
        ++row.n;
      } else {
        ++row.excluded;
      }
    }
    row.wall_time_mean_s = time_sum / static_cast<double>(members.size());
    if (row.n > 0) {
      row.cbc_mean = sum / static_cast<double>(row.n);
      if (row.n > 1) {
        double ss = 0;
        for (const auto* r : members)
          if (r->cbc.has_value()) {
            double dlt = *r->cbc - row.cbc_mean;
            ss += dlt * dlt;
          }
        row.cbc_std = std::sqrt(ss / static_cast<double>(row.n - 1));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace oslow::metrics
