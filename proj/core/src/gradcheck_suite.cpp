#include "ctp/gradcheck_suite.hpp"

#include <algorithm>
#include <stdexcept>

#include "ctp/rng.hpp"

namespace ctp {

Model clone_with_parameters(const Model& prototype, const std::vector<NodePtr>& leaves) {
  Model clone = prototype;
  std::vector<Parameter*> params = clone.parameters();
  if (params.size() != leaves.size())
    throw std::invalid_argument("clone_with_parameters: leaf count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->node->value.same_shape(leaves[i]->value))
      throw std::invalid_argument("clone_with_parameters: shape mismatch at " + params[i]->name);
    params[i]->node = leaves[i];
  }
  return clone;
}

namespace {

Tensor rand_vec(std::size_t n, Rng& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.next_double();
  return Tensor::vec(std::move(v));
}

Tensor rand_mat(std::size_t r, std::size_t c, Rng& rng, double lo, double hi) {
  std::vector<double> v(r * c);
  for (double& x : v) x = lo + (hi - lo) * rng.next_double();
  return Tensor::matrix(r, c, std::move(v));
}

double check_one(Op op, Rng& rng, double epsilon) {
  std::size_t n = 2 + rng.next_index(4);
  switch (op) {
    case Op::add:
    case Op::sub:
    case Op::mul: {
      Tensor a = rand_vec(n, rng, -1.5, 1.5), b = rand_vec(n, rng, -1.5, 1.5);
      Tensor w = rand_vec(n, rng, -1.0, 1.0);
      return grad_check(
          [&](const std::vector<NodePtr>& p) {
            return reduce_sum(mul(apply(op, {p[0], p[1]}), constant(w)));
          },
          {a, b}, epsilon);
    }
    case Op::scale: {
      Tensor a = rand_vec(n, rng, -1.5, 1.5), s = Tensor::scalar(rng.next_double() * 2 - 1);
      Tensor w = rand_vec(n, rng, -1.0, 1.0);
      return grad_check(
          [&](const std::vector<NodePtr>& p) {
            return reduce_sum(mul(scale(p[0], p[1]), constant(w)));
          },
          {a, s}, epsilon);
    }
    case Op::matvec:
    case Op::tmatvec: {
      std::size_t m = 2 + rng.next_index(3);
      Tensor mat = rand_mat(m, n, rng, -1.0, 1.0);
      Tensor x = rand_vec(op == Op::matvec ? n : m, rng, -1.5, 1.5);
      Tensor w = rand_vec(op == Op::matvec ? m : n, rng, -1.0, 1.0);
      return grad_check(
          [&](const std::vector<NodePtr>& p) {
            return reduce_sum(mul(apply(op, {p[0], p[1]}), constant(w)));
          },
          {mat, x}, epsilon);
    }
    case Op::concat: {
      Tensor a = rand_vec(n, rng, -1.5, 1.5), b = rand_vec(n + 1, rng, -1.5, 1.5);
      Tensor w = rand_vec(2 * n + 1, rng, -1.0, 1.0);
      return grad_check(
          [&](const std::vector<NodePtr>& p) {
            return reduce_sum(mul(concat({p[0], p[1]}), constant(w)));
          },
          {a, b}, epsilon);
    }
    case Op::stack: {
      Tensor a = rand_vec(n, rng, -1.5, 1.5), b = rand_vec(n, rng, -1.5, 1.5);
      Tensor x = rand_vec(2, rng, -1.0, 1.0);
      Tensor w = rand_vec(n, rng, -1.0, 1.0);
      return grad_check(
          [&](const std::vector<NodePtr>& p) {
            return reduce_sum(mul(tmatvec(stack({p[0], p[1]}), constant(x)), constant(w)));
          },
          {a, b}, epsilon);
    }
    case Op::softmax:
    case Op::sigmoid:
    case Op::negate: {
      Tensor a = rand_vec(n, rng, -1.5, 1.5);
      Tensor w = rand_vec(n, rng, -1.0, 1.0);
      return grad_check(
          [&](const std::vector<NodePtr>& p) {
            return reduce_sum(mul(apply(op, {p[0]}), constant(w)));
          },
          {a}, epsilon);
    }
    case Op::gaussian_kernel: {
      Tensor a = rand_vec(n, rng, -1.0, 1.0), b = rand_vec(n, rng, -1.0, 1.0);
      return grad_check(
          [&](const std::vector<NodePtr>& p) { return gaussian_kernel(p[0], p[1]); }, {a, b},
          epsilon);
    }
    case Op::reduce_min:
    case Op::reduce_max:
    case Op::reduce_sum: {
      Tensor a = rand_vec(n, rng, -1.5, 1.5);
      return grad_check([&](const std::vector<NodePtr>& p) { return apply(op, {p[0]}); }, {a},
                        epsilon);
    }
    case Op::log: {
      Tensor a = rand_vec(n, rng, 0.2, 2.0);
      Tensor w = rand_vec(n, rng, -1.0, 1.0);
      return grad_check(
          [&](const std::vector<NodePtr>& p) { return reduce_sum(mul(log(p[0]), constant(w))); },
          {a}, epsilon);
    }
    case Op::pick: {
      Tensor a = rand_vec(n, rng, -1.5, 1.5);
      std::size_t idx = rng.next_index(n);
      return grad_check([&](const std::vector<NodePtr>& p) { return pick(p[0], idx); }, {a},
                        epsilon);
    }
    case Op::clamp: {
      // Values kept away from the clamp boundaries so the subgradient is exact.
      Tensor a = rand_vec(n, rng, 0.0, 1.0);
      for (double& v : a.data) v = v < 0.5 ? 0.2 + v * 0.5 : 1.2 + v;
      Tensor w = rand_vec(n, rng, -1.0, 1.0);
      return grad_check(
          [&](const std::vector<NodePtr>& p) {
            return reduce_sum(mul(clamp(p[0], 0.1, 1.0), constant(w)));
          },
          {a}, epsilon);
    }
    case Op::leaf:
      return 0.0;
  }
  return 0.0;
}

}  // namespace

GradCheckReport gradcheck_ops(std::uint64_t seed, int samples_per_op, double epsilon) {
  static constexpr Op kOps[] = {
      Op::add,    Op::sub,        Op::mul,        Op::scale,      Op::matvec,
      Op::tmatvec, Op::concat,    Op::stack,      Op::softmax,    Op::gaussian_kernel,
      Op::reduce_min, Op::reduce_max, Op::reduce_sum, Op::log,    Op::negate,
      Op::sigmoid, Op::pick,      Op::clamp};
  Rng rng(seed);
  GradCheckReport report;
  for (Op op : kOps)
    for (int s = 0; s < samples_per_op; ++s) {
      report.max_rel_error = std::max(report.max_rel_error, check_one(op, rng, epsilon));
      ++report.graphs;
    }
  return report;
}

double gradcheck_prove(std::uint64_t seed, double epsilon) {
  KnowledgeBase kb;
  auto c = [](const char* s) { return Term::constant(s); };
  kb.add_fact(Atom{"p", {c("rick"), c("beth")}});
  kb.add_fact(Atom{"p", {c("beth"), c("morty")}});
  kb.add_predicate("g");

  std::vector<ReformSpec> specs(2);
  specs[0].pattern = RulePattern::chain;
  specs[1].pattern = RulePattern::direct;
  Model prototype = build_model(kb, 4, seed, 0.35, specs);

  std::vector<Tensor> values;
  for (Parameter* p : prototype.parameters()) values.push_back(p->node->value);

  Atom goal{"g", {c("rick"), c("morty")}};
  return grad_check(
      [&](const std::vector<NodePtr>& leaves) {
        Model model = clone_with_parameters(prototype, leaves);
        ProverConfig cfg = model.prover_config(1);
        return prove(kb, model.store, cfg, goal).score;
      },
      values, epsilon);
}

}  // namespace ctp
