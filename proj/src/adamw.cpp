#include "oslow/adamw.hpp"

#include <cmath>

#include "oslow/common.hpp"

namespace oslow::autodiff {

void AdamWState::step(const std::string& name, Tensor& params,
                      const Tensor& grads) {
  if (!params.same_shape(grads))
    throw shape_error("adamw: param/grad shape mismatch for '" + name + "'");
  Slot& s = slots_[name];
  if (s.m.shape != params.shape) {
    s.m = Tensor::zeros(params.shape);
    s.v = Tensor::zeros(params.shape);
    s.t = 0;
  }
  ++s.t;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    double g = grads.values[i];
    s.m.values[i] = cfg_.beta1 * s.m.values[i] + (1.0 - cfg_.beta1) * g;
    s.v.values[i] = cfg_.beta2 * s.v.values[i] + (1.0 - cfg_.beta2) * g * g;
    double mhat = s.m.values[i] / bc1;
    double vhat = s.v.values[i] / bc2;
    params.values[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                   cfg_.weight_decay * params.values[i]);
  }
  if (!params.all_finite()) throw numeric_error("adamw: non-finite update");
}

void AdamWState::step(std::map<std::string, Tensor>& params,
                      const std::map<std::string, Tensor>& grads) {
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it != grads.end()) step(name, p, it->second);
  }
}

}  // namespace oslow::autodiff
