#pragma once

#include <cstdint>

#include "ctp/model.hpp"

namespace ctp {

// Copy of the model with every trainable parameter replaced by the given
// leaves, in parameters() order. Used to rebuild differentiable graphs over
// externally supplied values (finite-difference checking).
Model clone_with_parameters(const Model& prototype, const std::vector<NodePtr>& leaves);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t graphs = 0;
};

// Random small graphs for every op kind, checked against central finite
// differences.
GradCheckReport gradcheck_ops(std::uint64_t seed, int samples_per_op, double epsilon = 1e-5);

// Full proof-score graph over a two-fact parent/grandparent KB with linear
// chain and direct reformulators; checks every parameter.
double gradcheck_prove(std::uint64_t seed, double epsilon = 1e-5);

}  // namespace ctp
