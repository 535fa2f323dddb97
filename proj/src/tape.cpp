#include "oslow/tape.hpp"

#include <cmath>

#include "oslow/common.hpp"
#include "oslow/kernels.hpp"

namespace oslow::autodiff {

namespace {

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::MatMulNN: return "matmul";
    case Op::MatMulNT: return "matmul_nt";
    case Op::MatMulTN: return "matmul_tn";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::MaskMul: return "mask_mul";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Softplus: return "softplus";
    case Op::Abs: return "abs";
    case Op::Sum: return "sum";
    case Op::RowNorm: return "row_norm";
    case Op::ColNorm: return "col_norm";
    case Op::StraightThrough: return "straight_through";
  }
  return "?";
}

bool is_rank2(const std::vector<std::size_t>& s) { return s.size() == 2; }

// b may row-broadcast over a
bool add_compatible(const std::vector<std::size_t>& a,
                    const std::vector<std::size_t>& b) {
  if (a == b) return true;
  return a.size() == 2 && b.size() == 2 && b[0] == 1 && b[1] == a[1];
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  forward_done_ = false;
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::input(const std::string& name, std::vector<std::size_t> shape,
                   bool trainable) {
  if (inputs_by_name_.count(name))
    throw config_error("tape: duplicate input name '" + name + "'");
  Node n;
  n.op = Op::Input;
  n.name = name;
  n.trainable = trainable;
  n.shape = std::move(shape);
  NodeId id = push(std::move(n));
  inputs_by_name_[name] = id;
  return id;
}

NodeId Tape::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.shape = value.shape;
  n.payload = std::move(value);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const auto& sa = shape(a);
  const auto& sb = shape(b);
  if (!is_rank2(sa) || !is_rank2(sb) || sa[1] != sb[0])
    throw shape_error("matmul: incompatible shapes");
  Node n;
  n.op = Op::MatMulNN;
  n.a = a;
  n.b = b;
  n.shape = {sa[0], sb[1]};
  return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const auto& sa = shape(a);
  const auto& sb = shape(b);
  if (!is_rank2(sa) || !is_rank2(sb) || sa[1] != sb[1])
    throw shape_error("matmul_nt: incompatible shapes");
  Node n;
  n.op = Op::MatMulNT;
  n.a = a;
  n.b = b;
  n.shape = {sa[0], sb[0]};
  return push(std::move(n));
}

NodeId Tape::matmul_tn(NodeId a, NodeId b) {
  const auto& sa = shape(a);
  const auto& sb = shape(b);
  if (!is_rank2(sa) || !is_rank2(sb) || sa[0] != sb[0])
    throw shape_error("matmul_tn: incompatible shapes");
  Node n;
  n.op = Op::MatMulTN;
  n.a = a;
  n.b = b;
  n.shape = {sa[1], sb[1]};
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  if (!add_compatible(shape(a), shape(b)))
    throw shape_error("add: incompatible shapes");
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.shape = shape(a);
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  if (shape(a) != shape(b)) throw shape_error("mul: shape mismatch");
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  n.shape = shape(a);
  return push(std::move(n));
}

NodeId Tape::mask_mul(NodeId a, Tensor mask) {
  if (shape(a) != mask.shape) throw shape_error("mask_mul: shape mismatch");
  Node n;
  n.op = Op::MaskMul;
  n.a = a;
  n.shape = shape(a);
  n.payload = std::move(mask);
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double factor) {
  return mask_mul(a, Tensor::full(shape(a), factor));
}

#define OSLOW_UNARY(method, opcode)                  \
  NodeId Tape::method(NodeId a) {                    \
    Node n;                                          \
    n.op = opcode;                                   \
    n.a = a;                                         \
    n.shape = shape(a);                              \
    return push(std::move(n));                       \
  }

OSLOW_UNARY(tanh, Op::Tanh)
OSLOW_UNARY(sigmoid, Op::Sigmoid)
OSLOW_UNARY(exp, Op::Exp)
OSLOW_UNARY(log, Op::Log)
OSLOW_UNARY(softplus, Op::Softplus)
OSLOW_UNARY(abs, Op::Abs)
#undef OSLOW_UNARY

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::Sum;
  n.a = a;
  n.shape = {1};
  return push(std::move(n));
}

NodeId Tape::row_norm(NodeId a) {
  if (!is_rank2(shape(a))) throw shape_error("row_norm: rank-2 required");
  Node n;
  n.op = Op::RowNorm;
  n.a = a;
  n.shape = shape(a);
  return push(std::move(n));
}

NodeId Tape::col_norm(NodeId a) {
  if (!is_rank2(shape(a))) throw shape_error("col_norm: rank-2 required");
  Node n;
  n.op = Op::ColNorm;
  n.a = a;
  n.shape = shape(a);
  return push(std::move(n));
}

NodeId Tape::straight_through(Tensor hard, NodeId soft) {
  if (hard.shape != shape(soft))
    throw shape_error("straight_through: shape mismatch");
  Node n;
  n.op = Op::StraightThrough;
  n.a = soft;
  n.shape = hard.shape;
  n.payload = std::move(hard);
  return push(std::move(n));
}

void Tape::mark_output(NodeId id, const std::string& name) {
  output_ids_.push_back(id);
  output_names_.push_back(name);
}

const Tensor& Tape::value(NodeId id) const {
  if (!forward_done_) throw config_error("tape: value() before forward()");
  return values_[static_cast<std::size_t>(id)];
}

NodeId Tape::input_id(const std::string& name) const {
  auto it = inputs_by_name_.find(name);
  if (it == inputs_by_name_.end())
    throw config_error("tape: no input named '" + name + "'");
  return it->second;
}

const std::vector<std::size_t>& Tape::shape(NodeId id) const {
  return nodes_[static_cast<std::size_t>(id)].shape;
}

std::map<std::string, Tensor> Tape::forward(
    const std::map<std::string, Tensor>& inputs) {
  values_.resize(nodes_.size());
  for (const auto& [name, id] : inputs_by_name_) {
    auto it = inputs.find(name);
    if (it == inputs.end())
      throw config_error("tape: unbound input '" + name + "'");
    if (it->second.shape != nodes_[static_cast<std::size_t>(id)].shape)
      throw shape_error("tape: input '" + name + "' has shape " +
                        it->second.shape_str());
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    Tensor& out = values_[i];
    if (out.shape != n.shape) out = Tensor::zeros(n.shape);
    const double* a = n.a >= 0 ? values_[static_cast<std::size_t>(n.a)].values.data() : nullptr;
    const double* b = n.b >= 0 ? values_[static_cast<std::size_t>(n.b)].values.data() : nullptr;
    std::size_t count = out.numel();
    switch (n.op) {
      case Op::Input:
        out = inputs.at(n.name);
        break;
      case Op::Constant:
      case Op::StraightThrough:
        out = n.payload;
        break;
      case Op::MatMulNN: {
        const auto& sa = nodes_[static_cast<std::size_t>(n.a)].shape;
        kern::matmul_nn(a, b, out.values.data(), sa[0], sa[1], n.shape[1]);
        break;
      }
      case Op::MatMulNT: {
        const auto& sa = nodes_[static_cast<std::size_t>(n.a)].shape;
        kern::matmul_nt(a, b, out.values.data(), sa[0], sa[1], n.shape[1]);
        break;
      }
      case Op::MatMulTN: {
        const auto& sa = nodes_[static_cast<std::size_t>(n.a)].shape;
        kern::matmul_tn(a, b, out.values.data(), n.shape[0], sa[0],
                        n.shape[1]);
        break;
      }
      case Op::Add: {
        const auto& sb = nodes_[static_cast<std::size_t>(n.b)].shape;
        if (sb == n.shape) {
          kern::add(a, b, out.values.data(), count);
        } else {  // row broadcast
          std::size_t rows = n.shape[0], cols = n.shape[1];
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
              out.values[r * cols + c] = a[r * cols + c] + b[c];
        }
        break;
      }
      case Op::Mul:
        kern::mul(a, b, out.values.data(), count);
        break;
      case Op::MaskMul:
        kern::mul(a, n.payload.values.data(), out.values.data(), count);
        break;
      case Op::Tanh:
        kern::unary_map(kern::Unary::Tanh, a, out.values.data(), count);
        break;
      case Op::Sigmoid:
        kern::unary_map(kern::Unary::Sigmoid, a, out.values.data(), count);
        break;
      case Op::Exp:
        kern::unary_map(kern::Unary::Exp, a, out.values.data(), count);
        break;
      case Op::Log:
        for (std::size_t j = 0; j < count; ++j) {
          if (!(a[j] > 1e-300))
            throw numeric_error("tape: log of non-positive value");
          out.values[j] = std::log(a[j]);
        }
        break;
      case Op::Softplus:
        kern::unary_map(kern::Unary::Softplus, a, out.values.data(), count);
        break;
      case Op::Abs:
        kern::unary_map(kern::Unary::Abs, a, out.values.data(), count);
        break;
      case Op::Sum:
        out.values[0] = kern::sum(a, values_[static_cast<std::size_t>(n.a)].numel());
        break;
      case Op::RowNorm: {
        std::size_t rows = n.shape[0], cols = n.shape[1];
        for (std::size_t r = 0; r < rows; ++r) {
          double s = kern::sum_serial(a + r * cols, cols);
          if (!(std::abs(s) > 1e-300))
            throw numeric_error("tape: row_norm with zero row sum");
          for (std::size_t c = 0; c < cols; ++c)
            out.values[r * cols + c] = a[r * cols + c] / s;
        }
        break;
      }
      case Op::ColNorm: {
        std::size_t rows = n.shape[0], cols = n.shape[1];
        for (std::size_t c = 0; c < cols; ++c) {
          double s = 0.0;
          for (std::size_t r = 0; r < rows; ++r) s += a[r * cols + c];
          if (!(std::abs(s) > 1e-300))
            throw numeric_error("tape: col_norm with zero column sum");
          for (std::size_t r = 0; r < rows; ++r)
            out.values[r * cols + c] = a[r * cols + c] / s;
        }
        break;
      }
    }
    if (!out.all_finite())
      throw numeric_error(std::string("tape: non-finite value out of ") +
                          op_name(n.op));
  }

  forward_done_ = true;
  std::map<std::string, Tensor> outputs;
  for (std::size_t i = 0; i < output_ids_.size(); ++i)
    outputs[output_names_[i]] = values_[static_cast<std::size_t>(output_ids_[i])];
  return outputs;
}

std::map<std::string, Tensor> Tape::backward(const Tensor& output_grad) {
  if (output_names_.size() != 1)
    throw config_error("tape: backward() needs exactly one marked output");
  return backward(output_names_[0], output_grad);
}

std::map<std::string, Tensor> Tape::backward(const std::string& output,
                                             const Tensor& output_grad) {
  if (!forward_done_) throw config_error("tape: backward() before forward()");
  NodeId out_id = -1;
  for (std::size_t i = 0; i < output_names_.size(); ++i)
    if (output_names_[i] == output) out_id = output_ids_[i];
  if (out_id < 0) throw config_error("tape: unknown output '" + output + "'");
  if (output_grad.shape != nodes_[static_cast<std::size_t>(out_id)].shape)
    throw shape_error("tape: output_grad shape mismatch");

  std::vector<Tensor> grads(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    grads[i] = Tensor::zeros(nodes_[i].shape);
  grads[static_cast<std::size_t>(out_id)] = output_grad;

  auto axpy = [](Tensor& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst.values[i] += src[i];
  };

  // exact reverse order of recording
  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    const Node& n = nodes_[idx];
    const Tensor& g = grads[idx];
    if (n.a < 0) continue;
    Tensor& ga = grads[static_cast<std::size_t>(n.a)];
    const Tensor& va = values_[static_cast<std::size_t>(n.a)];
    std::size_t count = g.numel();
    switch (n.op) {
      case Op::Input:
      case Op::Constant:
        break;
      case Op::MatMulNN: {
        // C = A*B : gA += g*B^T, gB += A^T*g
        const Tensor& vb = values_[static_cast<std::size_t>(n.b)];
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        std::vector<double> tmp(ga.numel());
        kern::matmul_nt(g.values.data(), vb.values.data(), tmp.data(),
                        g.shape[0], g.shape[1], va.shape[1]);
        axpy(ga, tmp);
        tmp.assign(gb.numel(), 0.0);
        kern::matmul_tn(va.values.data(), g.values.data(), tmp.data(),
                        va.shape[1], va.shape[0], g.shape[1]);
        axpy(gb, tmp);
        break;
      }
      case Op::MatMulNT: {
        // C = A*B^T : gA += g*B, gB += g^T*A
        const Tensor& vb = values_[static_cast<std::size_t>(n.b)];
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        std::vector<double> tmp(ga.numel());
        kern::matmul_nn(g.values.data(), vb.values.data(), tmp.data(),
                        g.shape[0], g.shape[1], va.shape[1]);
        axpy(ga, tmp);
        tmp.assign(gb.numel(), 0.0);
        kern::matmul_tn(g.values.data(), va.values.data(), tmp.data(),
                        g.shape[1], g.shape[0], va.shape[1]);
        axpy(gb, tmp);
        break;
      }
      case Op::MatMulTN: {
        // C = A^T*B : gA += B*g^T, gB += A*g
        const Tensor& vb = values_[static_cast<std::size_t>(n.b)];
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        std::vector<double> tmp(ga.numel());
        kern::matmul_nt(vb.values.data(), g.values.data(), tmp.data(),
                        vb.shape[0], vb.shape[1], g.shape[0]);
        axpy(ga, tmp);
        tmp.assign(gb.numel(), 0.0);
        kern::matmul_nn(va.values.data(), g.values.data(), tmp.data(),
                        va.shape[0], va.shape[1], g.shape[1]);
        axpy(gb, tmp);
        break;
      }
      case Op::Add: {
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        axpy(ga, g.values);
        if (gb.shape == g.shape) {
          axpy(gb, g.values);
        } else {  // reduce over broadcast rows
          std::size_t rows = g.shape[0], cols = g.shape[1];
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
              gb.values[c] += g.values[r * cols + c];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& vb = values_[static_cast<std::size_t>(n.b)];
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        for (std::size_t i = 0; i < count; ++i) {
          ga.values[i] += g.values[i] * vb.values[i];
          gb.values[i] += g.values[i] * va.values[i];
        }
        break;
      }
      case Op::MaskMul:
        for (std::size_t i = 0; i < count; ++i)
          ga.values[i] += g.values[i] * n.payload.values[i];
        break;
      case Op::Tanh: {
        const Tensor& y = values_[idx];
        for (std::size_t i = 0; i < count; ++i)
          ga.values[i] += g.values[i] * (1.0 - y.values[i] * y.values[i]);
        break;
      }
      case Op::Sigmoid: {
        const Tensor& y = values_[idx];
        for (std::size_t i = 0; i < count; ++i)
          ga.values[i] += g.values[i] * y.values[i] * (1.0 - y.values[i]);
        break;
      }
      case Op::Exp: {
        const Tensor& y = values_[idx];
        for (std::size_t i = 0; i < count; ++i)
          ga.values[i] += g.values[i] * y.values[i];
        break;
      }
      case Op::Log:
        for (std::size_t i = 0; i < count; ++i)
          ga.values[i] += g.values[i] / va.values[i];
        break;
      case Op::Softplus:
        for (std::size_t i = 0; i < count; ++i)
          ga.values[i] +=
              g.values[i] / (1.0 + std::exp(-va.values[i]));
        break;
      case Op::Abs:
        for (std::size_t i = 0; i < count; ++i) {
          double s = va.values[i] > 0 ? 1.0 : (va.values[i] < 0 ? -1.0 : 0.0);
          ga.values[i] += g.values[i] * s;
        }
        break;
      case Op::Sum:
        for (std::size_t i = 0; i < ga.numel(); ++i)
          ga.values[i] += g.values[0];
        break;
      case Op::RowNorm: {
        std::size_t rows = g.shape[0], cols = g.shape[1];
        const Tensor& y = values_[idx];
        for (std::size_t r = 0; r < rows; ++r) {
          double s = kern::sum_serial(va.values.data() + r * cols, cols);
          double gy = 0.0;
          for (std::size_t c = 0; c < cols; ++c)
            gy += g.values[r * cols + c] * y.values[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c)
            ga.values[r * cols + c] += (g.values[r * cols + c] - gy) / s;
        }
        break;
      }
      case Op::ColNorm: {
        std::size_t rows = g.shape[0], cols = g.shape[1];
        const Tensor& y = values_[idx];
        for (std::size_t c = 0; c < cols; ++c) {
          double s = 0.0, gy = 0.0;
          for (std::size_t r = 0; r < rows; ++r) {
            s += va.values[r * cols + c];
            gy += g.values[r * cols + c] * y.values[r * cols + c];
          }
          for (std::size_t r = 0; r < rows; ++r)
            ga.values[r * cols + c] += (g.values[r * cols + c] - gy) / s;
        }
        break;
      }
      case Op::StraightThrough:
        axpy(ga, g.values);
        break;
    }
  }

  std::map<std::string, Tensor> result;
  for (const auto& [name, id] : inputs_by_name_)
    if (nodes_[static_cast<std::size_t>(id)].trainable)
      result[name] = grads[static_cast<std::size_t>(id)];
  return result;
}

GradCheckReport compare_grads(const std::map<std::string, Tensor>& got,
                              const std::map<std::string, Tensor>& expected,
                              double tolerance) {
  GradCheckReport report;
  for (const auto& [name, g] : expected) {
    const Tensor& a = got.at(name);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      double denom =
          std::max({std::abs(a.values[i]), std::abs(g.values[i]), 1e-3});
      report.max_rel_error = std::max(
          report.max_rel_error, std::abs(a.values[i] - g.values[i]) / denom);
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

GradCheckReport grad_check(Tape& tape,
                           const std::map<std::string, Tensor>& inputs,
                           double tolerance) {
  auto out = tape.forward(inputs);
  if (tape.output_names().size() != 1)
    throw config_error("grad_check: exactly one output required");
  const std::string& out_name = tape.output_names()[0];
  if (out.at(out_name).numel() != 1)
    throw config_error("grad_check: scalar output required");

  auto analytic = tape.backward(Tensor::scalar(1.0));

  const double h = 1e-5;
  std::map<std::string, Tensor> fd;
  std::map<std::string, Tensor> work = inputs;
  for (auto& [name, grad] : analytic) {
    Tensor& t = work[name];
    Tensor g = Tensor::zeros(t.shape);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      double keep = t.values[i];
      t.values[i] = keep + h;
      double up = tape.forward(work).at(out_name).values[0];
      t.values[i] = keep - h;
      double dn = tape.forward(work).at(out_name).values[0];
      t.values[i] = keep;
      g.values[i] = (up - dn) / (2.0 * h);
    }
    fd[name] = std::move(g);
    (void)grad;
  }
  tape.forward(inputs);  // restore unperturbed state
  return compare_grads(analytic, fd, tolerance);
}

}  // namespace oslow::autodiff
