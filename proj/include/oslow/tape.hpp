#pragma once

#include <map>
#include <string>
#include <vector>

#include "oslow/tensor.hpp"

namespace oslow::autodiff {

using NodeId = int;

// Closed primitive set. Everything differentiable in the project is composed
// from these; the three matmul layout variants count as one primitive with
// its transpose flavours.
enum class Op {
  Input,
  Constant,
  MatMulNN,  // A * B
  MatMulNT,  // A * B^T
  MatMulTN,  // A^T * B
  Add,       // same shape, or (N x C) + (1 x C) row broadcast
  Mul,       // elementwise, same shape
  MaskMul,   // elementwise multiply by a constant payload
  Tanh,
  Sigmoid,
  Exp,
  Log,  // guarded: operand must exceed 1e-300
  Softplus,
  Abs,
  Sum,      // all entries -> scalar
  RowNorm,  // divide each row by its sum
  ColNorm,  // divide each column by its sum
  // forward yields the constant payload, backward passes the incoming
  // gradient to the operand unchanged
  StraightThrough,
};

struct Node {
  Op op;
  NodeId a = -1;
  NodeId b = -1;
  Tensor payload;
  std::string name;
  bool trainable = false;
  std::vector<std::size_t> shape;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
};

/// Reverse-mode tape over dense tensors. Build the graph once, then run
/// forward/backward repeatedly with fresh input bindings. A tape instance is
/// single-threaded; distinct instances share nothing.
class Tape {
 public:
  NodeId input(const std::string& name, std::vector<std::size_t> shape,
               bool trainable = true);
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);
  NodeId matmul_tn(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId mask_mul(NodeId a, Tensor mask);
  NodeId scale(NodeId a, double factor);  // mask_mul by a filled tensor
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId softplus(NodeId a);
  NodeId abs(NodeId a);
  NodeId sum(NodeId a);
  NodeId row_norm(NodeId a);
  NodeId col_norm(NodeId a);
  NodeId straight_through(Tensor hard, NodeId soft);

  void mark_output(NodeId id, const std::string& name);

  /// Executes the graph. Every declared input must be bound with a matching
  /// shape. Pure: identical bindings give bit-identical outputs.
  std::map<std::string, Tensor> forward(
      const std::map<std::string, Tensor>& inputs);

  /// Gradients of the sole marked output w.r.t. every trainable input.
  /// Inputs that do not reach the output get zero gradients.
  std::map<std::string, Tensor> backward(const Tensor& output_grad);
  std::map<std::string, Tensor> backward(const std::string& output,
                                         const Tensor& output_grad);

  const Tensor& value(NodeId id) const;
  NodeId input_id(const std::string& name) const;
  const std::vector<std::size_t>& shape(NodeId id) const;
  std::size_t num_nodes() const { return nodes_.size(); }
  const std::vector<std::string>& output_names() const {
    return output_names_;
  }

 private:
  NodeId push(Node n);
  void check_arity(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::map<std::string, NodeId> inputs_by_name_;
  std::vector<NodeId> output_ids_;
  std::vector<std::string> output_names_;
  bool forward_done_ = false;
};

/// Central finite differences of all trainable inputs against backward().
/// Output must be scalar. Relative error uses max(|ad|, |fd|, 1e-3) as the
/// denominator.
GradCheckReport grad_check(Tape& tape,
                           const std::map<std::string, Tensor>& inputs,
                           double tolerance);

/// Comparison half of grad_check, split out so tests can inject known errors.
GradCheckReport compare_grads(const std::map<std::string, Tensor>& got,
                              const std::map<std::string, Tensor>& expected,
                              double tolerance);

}  // namespace oslow::autodiff
