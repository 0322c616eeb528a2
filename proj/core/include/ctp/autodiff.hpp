#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace ctp {

// Dense row-major tensor of doubles, rank 0..2.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  static Tensor scalar(double v) { return Tensor{{}, {v}}; }
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros(std::vector<std::size_t> shape);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return shape.empty(); }
  bool is_vector() const { return shape.size() == 1; }
  bool is_matrix() const { return shape.size() == 2; }
  double scalar_value() const { return data.at(0); }
  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  bool finite() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool operator==(const Tensor&) const = default;
};

enum class Op {
  leaf,
  add,
  sub,
  mul,
  scale,
  matvec,
  tmatvec,
  concat,
  stack,
  softmax,
  gaussian_kernel,
  reduce_min,
  reduce_max,
  reduce_sum,
  log,
  negate,
  sigmoid,
  pick,
  clamp,
};

const char* op_name(Op op);

struct Node;
using NodePtr = std::shared_ptr<const Node>;

// A value in the computation graph. Immutable once created; the graph is a DAG.
struct Node {
  Tensor value;
  Op op = Op::leaf;
  std::vector<NodePtr> inputs;
  bool requires_grad = false;
  int aux_index = -1;   // selected index for reduce_min/reduce_max/pick
  double aux_a = 0.0;   // kernel bandwidth / clamp low
  double aux_b = 0.0;   // clamp high
  std::string name;     // optional, for parameters and diagnostics
};

// Leaf node; rejects non-finite values.
NodePtr make(Tensor value, bool requires_grad, std::string name = {});
NodePtr constant(double v);
NodePtr constant(Tensor v);

// Generic dispatch; validates input shapes and computes the forward value.
NodePtr apply(Op op, std::vector<NodePtr> inputs);

NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& x, const NodePtr& s);  // s scalar
NodePtr matvec(const NodePtr& m, const NodePtr& x);
NodePtr tmatvec(const NodePtr& m, const NodePtr& x);  // transpose(m) * x
NodePtr concat(std::vector<NodePtr> parts);
NodePtr stack(std::vector<NodePtr> rows);
NodePtr softmax(const NodePtr& x);
// exp(-||x - y||^2 / bandwidth), in (0, 1], equal to 1 iff x == y
NodePtr gaussian_kernel(const NodePtr& x, const NodePtr& y, double bandwidth = 1.0);
NodePtr reduce_min(const NodePtr& x);
NodePtr reduce_max(const NodePtr& x);
NodePtr reduce_sum(const NodePtr& x);
NodePtr log(const NodePtr& x);
NodePtr negate(const NodePtr& x);
NodePtr sigmoid(const NodePtr& x);
NodePtr pick(const NodePtr& x, std::size_t index);
NodePtr clamp(const NodePtr& x, double lo, double hi);

// Gradients for the requires_grad leaf parameters reachable from a root.
struct GradientMap {
  std::unordered_map<const Node*, Tensor> grads;

  const Tensor* find(const NodePtr& param) const {
    auto it = grads.find(param.get());
    return it == grads.end() ? nullptr : &it->second;
  }
  std::size_t size() const { return grads.size(); }
};

GradientMap backward(const NodePtr& root);

// A named trainable leaf. Optimizer steps swap in a fresh leaf node, so graphs
// built earlier keep their original values.
struct Parameter {
  std::string name;
  NodePtr node;

  static Parameter create(std::string name, Tensor value) {
    NodePtr n = make(std::move(value), true, name);
    return Parameter{std::move(name), std::move(n)};
  }
};

// Central finite differences vs reverse-mode, element-wise over all parameter
// entries; returns the max relative error (denominator max(|a|,|b|,1e-8)).
double grad_check(const std::function<NodePtr(const std::vector<NodePtr>&)>& builder,
                  const std::vector<Tensor>& params, double epsilon);

}  // namespace ctp
