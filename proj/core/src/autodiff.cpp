#include "ctp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ctp {

Tensor Tensor::vec(std::vector<double> values) {
  return Tensor{{values.size()}, std::move(values)};
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) throw std::invalid_argument("matrix data size mismatch");
  return Tensor{{rows, cols}, std::move(values)};
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return Tensor{std::move(shape), std::vector<double>(n, 0.0)};
}

bool Tensor::finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::matvec: return "matvec";
    case Op::tmatvec: return "tmatvec";
    case Op::concat: return "concat";
    case Op::stack: return "stack";
    case Op::softmax: return "softmax";
    case Op::gaussian_kernel: return "gaussian_kernel";
    case Op::reduce_min: return "reduce_min";
    case Op::reduce_max: return "reduce_max";
    case Op::reduce_sum: return "reduce_sum";
    case Op::log: return "log";
    case Op::negate: return "negate";
    case Op::sigmoid: return "sigmoid";
    case Op::pick: return "pick";
    case Op::clamp: return "clamp";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(Op op, const std::string& detail) {
  throw std::invalid_argument(std::string("op ") + op_name(op) + ": " + detail);
}

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) os << (i ? "," : "") << t.shape[i];
  os << "]";
  return os.str();
}

bool any_requires_grad(const std::vector<NodePtr>& inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const NodePtr& n) { return n->requires_grad; });
}

NodePtr finish(Tensor value, Op op, std::vector<NodePtr> inputs, int aux_index = -1,
               double aux_a = 0.0, double aux_b = 0.0) {
  if (!value.finite())
    throw std::domain_error(std::string("op ") + op_name(op) + " produced non-finite values");
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.requires_grad = any_requires_grad(inputs);
  n.inputs = std::move(inputs);
  n.aux_index = aux_index;
  n.aux_a = aux_a;
  n.aux_b = aux_b;
  return std::make_shared<const Node>(std::move(n));
}

void require_same_shape(Op op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    shape_error(op, "shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

NodePtr make(Tensor value, bool requires_grad, std::string name) {
  if (!value.finite()) throw std::domain_error("leaf value must be finite");
  Node n;
  n.value = std::move(value);
  n.op = Op::leaf;
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  return std::make_shared<const Node>(std::move(n));
}

NodePtr constant(double v) { return make(Tensor::scalar(v), false); }
NodePtr constant(Tensor v) { return make(std::move(v), false); }

NodePtr add(const NodePtr& a, const NodePtr& b) {
  require_same_shape(Op::add, a->value, b->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  return finish(std::move(out), Op::add, {a, b});
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  require_same_shape(Op::sub, a->value, b->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
  return finish(std::move(out), Op::sub, {a, b});
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  require_same_shape(Op::mul, a->value, b->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
  return finish(std::move(out), Op::mul, {a, b});
}

NodePtr scale(const NodePtr& x, const NodePtr& s) {
  if (!s->value.is_scalar()) shape_error(Op::scale, "second input must be scalar");
  double c = s->value.scalar_value();
  Tensor out = x->value;
  for (double& v : out.data) v *= c;
  return finish(std::move(out), Op::scale, {x, s});
}

NodePtr matvec(const NodePtr& m, const NodePtr& x) {
  const Tensor& mv = m->value;
  const Tensor& xv = x->value;
  if (!mv.is_matrix() || !xv.is_vector() || mv.shape[1] != xv.shape[0])
    shape_error(Op::matvec, shape_str(mv) + " * " + shape_str(xv));
  Tensor out = Tensor::zeros({mv.shape[0]});
  for (std::size_t i = 0; i < mv.shape[0]; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < mv.shape[1]; ++j) acc += mv.at(i, j) * xv.at(j);
    out.at(i) = acc;
  }
  return finish(std::move(out), Op::matvec, {m, x});
}

NodePtr tmatvec(const NodePtr& m, const NodePtr& x) {
  const Tensor& mv = m->value;
  const Tensor& xv = x->value;
  if (!mv.is_matrix() || !xv.is_vector() || mv.shape[0] != xv.shape[0])
    shape_error(Op::tmatvec, "transpose" + shape_str(mv) + " * " + shape_str(xv));
  Tensor out = Tensor::zeros({mv.shape[1]});
  for (std::size_t i = 0; i < mv.shape[0]; ++i) {
    double xi = xv.at(i);
    for (std::size_t j = 0; j < mv.shape[1]; ++j) out.at(j) += mv.at(i, j) * xi;
  }
  return finish(std::move(out), Op::tmatvec, {m, x});
}

NodePtr concat(std::vector<NodePtr> parts) {
  if (parts.empty()) shape_error(Op::concat, "needs at least one input");
  std::size_t total = 0;
  for (const NodePtr& p : parts) {
    if (p->value.rank() > 1) shape_error(Op::concat, "inputs must be scalars or vectors");
    total += p->value.size();
  }
  Tensor out = Tensor::zeros({total});
  std::size_t offset = 0;
  for (const NodePtr& p : parts)
    for (double v : p->value.data) out.at(offset++) = v;
  return finish(std::move(out), Op::concat, std::move(parts));
}

NodePtr stack(std::vector<NodePtr> rows) {
  if (rows.empty()) shape_error(Op::stack, "needs at least one row");
  std::size_t cols = rows[0]->value.size();
  for (const NodePtr& r : rows)
    if (!r->value.is_vector() || r->value.size() != cols)
      shape_error(Op::stack, "rows must be equal-length vectors");
  Tensor out = Tensor::zeros({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = rows[i]->value.at(j);
  return finish(std::move(out), Op::stack, std::move(rows));
}

NodePtr softmax(const NodePtr& x) {
  if (!x->value.is_vector() || x->value.size() == 0)
    shape_error(Op::softmax, "input must be a non-empty vector");
  const Tensor& xv = x->value;
  double mx = *std::max_element(xv.data.begin(), xv.data.end());
  Tensor out = Tensor::zeros(xv.shape);
  double sum = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out.at(i) = std::exp(xv.at(i) - mx);
    sum += out.at(i);
  }
  for (double& v : out.data) v /= sum;
  return finish(std::move(out), Op::softmax, {x});
}

NodePtr gaussian_kernel(const NodePtr& x, const NodePtr& y, double bandwidth) {
  if (!(bandwidth > 0)) shape_error(Op::gaussian_kernel, "bandwidth must be positive");
  const Tensor& xv = x->value;
  const Tensor& yv = y->value;
  if (!xv.is_vector() || !yv.is_vector() || xv.size() != yv.size())
    shape_error(Op::gaussian_kernel, shape_str(xv) + " vs " + shape_str(yv));
  double dist2 = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    double d = xv.at(i) - yv.at(i);
    dist2 += d * d;
  }
  return finish(Tensor::scalar(std::exp(-dist2 / bandwidth)), Op::gaussian_kernel, {x, y}, -1,
                bandwidth);
}

namespace {

NodePtr reduce_select(Op op, const NodePtr& x, bool take_min) {
  if (!x->value.is_vector() || x->value.size() == 0)
    shape_error(op, "input must be a non-empty vector");
  const auto& d = x->value.data;
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (take_min ? d[i] < d[best] : d[i] > d[best]) best = i;  // first index wins ties
  return finish(Tensor::scalar(d[best]), op, {x}, static_cast<int>(best));
}

}  // namespace

NodePtr reduce_min(const NodePtr& x) { return reduce_select(Op::reduce_min, x, true); }
NodePtr reduce_max(const NodePtr& x) { return reduce_select(Op::reduce_max, x, false); }

NodePtr reduce_sum(const NodePtr& x) {
  if (!x->value.is_vector()) shape_error(Op::reduce_sum, "input must be a vector");
  double acc = 0.0;
  for (double v : x->value.data) acc += v;
  return finish(Tensor::scalar(acc), Op::reduce_sum, {x});
}

NodePtr log(const NodePtr& x) {
  Tensor out = x->value;
  for (double& v : out.data) {
    if (v <= 0.0) throw std::domain_error("op log: input must be positive");
    v = std::log(v);
  }
  return finish(std::move(out), Op::log, {x});
}

NodePtr negate(const NodePtr& x) {
  Tensor out = x->value;
  for (double& v : out.data) v = -v;
  return finish(std::move(out), Op::negate, {x});
}

NodePtr sigmoid(const NodePtr& x) {
  Tensor out = x->value;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return finish(std::move(out), Op::sigmoid, {x});
}

NodePtr pick(const NodePtr& x, std::size_t index) {
  if (!x->value.is_vector() || index >= x->value.size())
    shape_error(Op::pick, "index out of range");
  return finish(Tensor::scalar(x->value.at(index)), Op::pick, {x}, static_cast<int>(index));
}

NodePtr clamp(const NodePtr& x, double lo, double hi) {
  if (!(lo < hi)) shape_error(Op::clamp, "lo must be < hi");
  Tensor out = x->value;
  for (double& v : out.data) v = std::min(hi, std::max(lo, v));
  return finish(std::move(out), Op::clamp, {x}, -1, lo, hi);
}

NodePtr apply(Op op, std::vector<NodePtr> inputs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n)
      shape_error(op, "expected " + std::to_string(n) + " inputs, got " +
                          std::to_string(inputs.size()));
  };
  switch (op) {
    case Op::add: need(2); return add(inputs[0], inputs[1]);
    case Op::sub: need(2); return sub(inputs[0], inputs[1]);
    case Op::mul: need(2); return mul(inputs[0], inputs[1]);
    case Op::scale: need(2); return scale(inputs[0], inputs[1]);
    case Op::matvec: need(2); return matvec(inputs[0], inputs[1]);
    case Op::tmatvec: need(2); return tmatvec(inputs[0], inputs[1]);
    case Op::concat: return concat(std::move(inputs));
    case Op::stack: return stack(std::move(inputs));
    case Op::softmax: need(1); return softmax(inputs[0]);
    case Op::gaussian_kernel: need(2); return gaussian_kernel(inputs[0], inputs[1]);
    case Op::reduce_min: need(1); return reduce_min(inputs[0]);
    case Op::reduce_max: need(1); return reduce_max(inputs[0]);
    case Op::reduce_sum: need(1); return reduce_sum(inputs[0]);
    case Op::log: need(1); return log(inputs[0]);
    case Op::negate: need(1); return negate(inputs[0]);
    case Op::sigmoid: need(1); return sigmoid(inputs[0]);
    case Op::pick: shape_error(op, "use pick(x, index)");
    case Op::clamp: shape_error(op, "use clamp(x, lo, hi)");
    case Op::leaf: shape_error(op, "use make() for leaves");
  }
  shape_error(op, "unknown op");
}

namespace {

struct BackwardPass {
  std::unordered_map<const Node*, Tensor> grads;

  Tensor& slot(const NodePtr& n) {
    auto it = grads.find(n.get());
    if (it == grads.end())
      it = grads.emplace(n.get(), Tensor::zeros(n->value.shape)).first;
    return it->second;
  }

  void accumulate(const Node* node, const Tensor& g) {
    const auto& in = node->inputs;
    switch (node->op) {
      case Op::leaf:
        break;
      case Op::add: {
        if (in[0]->requires_grad) axpy(slot(in[0]), g, 1.0);
        if (in[1]->requires_grad) axpy(slot(in[1]), g, 1.0);
        break;
      }
      case Op::sub: {
        if (in[0]->requires_grad) axpy(slot(in[0]), g, 1.0);
        if (in[1]->requires_grad) axpy(slot(in[1]), g, -1.0);
        break;
      }
      case Op::mul: {
        if (in[0]->requires_grad) {
          Tensor& d = slot(in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * in[1]->value.data[i];
        }
        if (in[1]->requires_grad) {
          Tensor& d = slot(in[1]);
          for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * in[0]->value.data[i];
        }
        break;
      }
      case Op::scale: {
        double c = in[1]->value.scalar_value();
        if (in[0]->requires_grad) axpy(slot(in[0]), g, c);
        if (in[1]->requires_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g.data[i] * in[0]->value.data[i];
          slot(in[1]).data[0] += acc;
        }
        break;
      }
      case Op::matvec: {
        const Tensor& m = in[0]->value;
        const Tensor& x = in[1]->value;
        if (in[0]->requires_grad) {
          Tensor& dm = slot(in[0]);
          for (std::size_t i = 0; i < m.shape[0]; ++i)
            for (std::size_t j = 0; j < m.shape[1]; ++j) dm.at(i, j) += g.at(i) * x.at(j);
        }
        if (in[1]->requires_grad) {
          Tensor& dx = slot(in[1]);
          for (std::size_t i = 0; i < m.shape[0]; ++i)
            for (std::size_t j = 0; j < m.shape[1]; ++j) dx.at(j) += m.at(i, j) * g.at(i);
        }
        break;
      }
      case Op::tmatvec: {
        const Tensor& m = in[0]->value;
        const Tensor& x = in[1]->value;
        if (in[0]->requires_grad) {
          Tensor& dm = slot(in[0]);
          for (std::size_t i = 0; i < m.shape[0]; ++i)
            for (std::size_t j = 0; j < m.shape[1]; ++j) dm.at(i, j) += x.at(i) * g.at(j);
        }
        if (in[1]->requires_grad) {
          Tensor& dx = slot(in[1]);
          for (std::size_t i = 0; i < m.shape[0]; ++i)
            for (std::size_t j = 0; j < m.shape[1]; ++j) dx.at(i) += m.at(i, j) * g.at(j);
        }
        break;
      }
      case Op::concat: {
        std::size_t offset = 0;
        for (const NodePtr& p : in) {
          if (p->requires_grad) {
            Tensor& d = slot(p);
            for (std::size_t i = 0; i < p->value.size(); ++i) d.data[i] += g.at(offset + i);
          }
          offset += p->value.size();
        }
        break;
      }
      case Op::stack: {
        std::size_t cols = node->value.shape[1];
        for (std::size_t r = 0; r < in.size(); ++r) {
          if (!in[r]->requires_grad) continue;
          Tensor& d = slot(in[r]);
          for (std::size_t j = 0; j < cols; ++j) d.at(j) += g.at(r * cols + j);
        }
        break;
      }
      case Op::softmax: {
        if (!in[0]->requires_grad) break;
        const Tensor& y = node->value;
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) dot += y.at(i) * g.at(i);
        Tensor& d = slot(in[0]);
        for (std::size_t i = 0; i < y.size(); ++i) d.at(i) += y.at(i) * (g.at(i) - dot);
        break;
      }
      case Op::gaussian_kernel: {
        double k = node->value.scalar_value();
        double gs = g.scalar_value();
        double coeff = -2.0 * gs * k / node->aux_a;
        const Tensor& x = in[0]->value;
        const Tensor& y = in[1]->value;
        if (in[0]->requires_grad) {
          Tensor& d = slot(in[0]);
          for (std::size_t i = 0; i < x.size(); ++i) d.at(i) += coeff * (x.at(i) - y.at(i));
        }
        if (in[1]->requires_grad) {
          Tensor& d = slot(in[1]);
          for (std::size_t i = 0; i < x.size(); ++i) d.at(i) -= coeff * (x.at(i) - y.at(i));
        }
        break;
      }
      case Op::reduce_min:
      case Op::reduce_max:
      case Op::pick: {
        if (in[0]->requires_grad)
          slot(in[0]).at(static_cast<std::size_t>(node->aux_index)) += g.scalar_value();
        break;
      }
      case Op::reduce_sum: {
        if (!in[0]->requires_grad) break;
        Tensor& d = slot(in[0]);
        for (double& v : d.data) v += g.scalar_value();
        break;
      }
      case Op::log: {
        if (!in[0]->requires_grad) break;
        Tensor& d = slot(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] / in[0]->value.data[i];
        break;
      }
      case Op::negate: {
        if (in[0]->requires_grad) axpy(slot(in[0]), g, -1.0);
        break;
      }
      case Op::sigmoid: {
        if (!in[0]->requires_grad) break;
        const Tensor& y = node->value;
        Tensor& d = slot(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i)
          d.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        break;
      }
      case Op::clamp: {
        if (!in[0]->requires_grad) break;
        Tensor& d = slot(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          double v = in[0]->value.data[i];
          if (v >= node->aux_a && v <= node->aux_b) d.data[i] += g.data[i];
        }
        break;
      }
    }
  }

  static void axpy(Tensor& dst, const Tensor& src, double a) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += a * src.data[i];
  }
};

}  // namespace

GradientMap backward(const NodePtr& root) {
  if (!root->value.is_scalar())
    throw std::invalid_argument("backward: root must be a scalar node");
  GradientMap out;
  if (!root->requires_grad) return out;

  // Iterative post-order over the requires_grad sub-DAG.
  std::vector<const Node*> topo;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<const Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.push_back({child, 0});
        descended = true;
        break;
      }
    }
    if (descended) continue;
    topo.push_back(node);
    stack.pop_back();
  }

  BackwardPass pass;
  pass.grads.emplace(root.get(), Tensor::scalar(1.0));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const Node* node = *it;
    auto git = pass.grads.find(node);
    if (git == pass.grads.end()) continue;
    pass.accumulate(node, git->second);
  }

  for (const Node* node : topo)
    if (node->op == Op::leaf && node->requires_grad) {
      auto git = pass.grads.find(node);
      out.grads.emplace(node, git != pass.grads.end() ? std::move(git->second)
                                                      : Tensor::zeros(node->value.shape));
    }
  return out;
}

double grad_check(const std::function<NodePtr(const std::vector<NodePtr>&)>& builder,
                  const std::vector<Tensor>& params, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2))
    throw std::invalid_argument("grad_check: epsilon must be in (0, 1e-2]");

  std::vector<NodePtr> leaves;
  leaves.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    leaves.push_back(make(params[i], true, "p" + std::to_string(i)));
  NodePtr root = builder(leaves);
  if (!root->value.is_scalar()) throw std::invalid_argument("grad_check: builder must be scalar");
  GradientMap gm = backward(root);

  auto eval_at = [&](const std::vector<Tensor>& values) {
    std::vector<NodePtr> ls;
    ls.reserve(values.size());
    for (const Tensor& t : values) ls.push_back(make(t, false));
    return builder(ls)->value.scalar_value();
  };

  double max_rel = 0.0;
  std::vector<Tensor> work = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* analytic = gm.find(leaves[i]);
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      double original = work[i].data[j];
      work[i].data[j] = original + epsilon;
      double up = eval_at(work);
      work[i].data[j] = original - epsilon;
      double down = eval_at(work);
      work[i].data[j] = original;
      double fd = (up - down) / (2.0 * epsilon);
      double an = analytic ? analytic->data[j] : 0.0;
      double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace ctp
