#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "oslow/tensor.hpp"

namespace oslow::autodiff {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled-weight-decay Adam. One state per parameter tensor; moments are
/// lazily initialized to zeros of the parameter shape.
class AdamWState {
 public:
  explicit AdamWState(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::string& name, Tensor& params, const Tensor& grads);
  void step(std::map<std::string, Tensor>& params,
            const std::map<std::string, Tensor>& grads);

  std::int64_t step_count(const std::string& name) const {
    auto it = slots_.find(name);
    return it == slots_.end() ? 0 : it->second.t;
  }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Slot {
    Tensor m, v;
    std::int64_t t = 0;
  };
  AdamWConfig cfg_;
  std::map<std::string, Slot> slots_;
};

}  // namespace oslow::autodiff
