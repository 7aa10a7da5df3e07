#pragma once

#include <vector>

#include "gbw/types.hpp"

namespace gbw {

// The weight-selection problem:
//   minimize    -g'v + lambda * ||v||^2
//   subject to  v >= 0,  sum(v) = target_sum
// over per-class squared gradient norms g.
struct QpProblem {
  std::vector<double> g;
  double lambda = 1.0;
  double target_sum = 1.0;

  void validate() const;
};

// Euclidean projection of x onto the scaled simplex {v >= 0, sum(v) = s},
// by sorted thresholding. Stable sort, ties broken by index.
std::vector<double> project_scaled_simplex(const std::vector<double>& x, double s);

// Closed-form solve: the minimizer is the projection of g/(2*lambda) onto
// the scaled simplex.
ClassWeights solve_gbw_qp(const QpProblem& problem);

// Independent verification oracle: enumerates every subset of classes as
// the clamped-to-zero set, solves the equality-constrained stationarity
// system on the complement and checks primal and dual feasibility.
// Dimension capped at 15.
ClassWeights oracle_solve_active_set(const QpProblem& problem);

// Objective value -g'v + lambda*||v||^2, for optimality checks.
double qp_objective(const QpProblem& problem, const std::vector<double>& v);

}  // namespace gbw
