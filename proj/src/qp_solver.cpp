#include "gbw/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gbw {

void QpProblem::validate() const {
  if (g.empty()) throw InvalidInput("QpProblem: empty gradient vector");
  for (double gc : g) {
    if (!std::isfinite(gc)) throw InvalidInput("QpProblem: non-finite gradient norm");
    if (gc < 0.0) throw InvalidInput("QpProblem: negative gradient norm");
  }
  if (!std::isfinite(lambda) || lambda <= 0.0)
    throw InvalidInput("QpProblem: lambda must be positive");
  if (!std::isfinite(target_sum) || target_sum <= 0.0)
    throw InvalidInput("QpProblem: target_sum must be positive");
}

std::vector<double> project_scaled_simplex(const std::vector<double>& x, double s) {
  if (x.empty()) throw InvalidInput("project_scaled_simplex: empty input");
  if (!std::isfinite(s) || s <= 0.0)
    throw InvalidInput("project_scaled_simplex: sum must be positive");
  for (double xi : x) {
    if (!std::isfinite(xi))
      throw InvalidInput("project_scaled_simplex: non-finite input");
  }

  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&x](std::size_t a, std::size_t b) { return x[a] > x[b]; });

  // Largest k such that x_(k) - (sum of top k - s)/k > 0.
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cumsum += x[order[k]];
    const double candidate = (cumsum - s) / static_cast<double>(k + 1);
    if (x[order[k]] - candidate > 0.0) tau = candidate;
  }

  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::max(x[i] - tau, 0.0);
  return v;
}

ClassWeights solve_gbw_qp(const QpProblem& problem) {
  problem.validate();

  std::vector<double> x(problem.g.size());
  for (std::size_t c = 0; c < x.size(); ++c)
    x[c] = problem.g[c] / (2.0 * problem.lambda);

  ClassWeights out;
  out.v = project_scaled_simplex(x, problem.target_sum);
  out.active_mask.assign(out.v.size(), true);
  return out;
}

ClassWeights oracle_solve_active_set(const QpProblem& problem) {
  problem.validate();
  const std::size_t n = problem.g.size();
  if (n > 15) throw UnsupportedSize("oracle_solve_active_set: dimension > 15");

  const double lambda = problem.lambda;
  const double s = problem.target_sum;
  constexpr double kFeasTol = 1e-12;

  ClassWeights best;
  double best_obj = std::numeric_limits<double>::infinity();

  // zero_set bitmask: bit c set means v_c is clamped to 0.
  for (std::uint32_t zero_set = 0; zero_set < (1u << n); ++zero_set) {
    std::size_t n_free = 0;
    double g_sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (!(zero_set & (1u << c))) {
        ++n_free;
        g_sum += problem.g[c];
      }
    }
    if (n_free == 0) continue;

    // Stationarity on the free set: 2*lambda*v_c - g_c + mu = 0, with the
    // equality constraint fixing mu.
    const double mu = (g_sum - 2.0 * lambda * s) / static_cast<double>(n_free);

    std::vector<double> v(n, 0.0);
    bool feasible = true;
    for (std::size_t c = 0; c < n; ++c) {
      if (zero_set & (1u << c)) {
        // dual feasibility for the clamped class
        if (mu - problem.g[c] < -kFeasTol) feasible = false;
      } else {
        v[c] = (problem.g[c] - mu) / (2.0 * lambda);
        if (v[c] < -kFeasTol) feasible = false;
      }
    }
    if (!feasible) continue;

    const double obj = qp_objective(problem, v);
    if (obj < best_obj) {
      best_obj = obj;
      best.v = std::move(v);
    }
  }

  if (best.v.empty())
    throw InvalidInput("oracle_solve_active_set: no feasible KKT point found");
  best.active_mask.assign(n, true);
  return best;
}

double qp_objective(const QpProblem& problem, const std::vector<double>& v) {
  double obj = 0.0;
  for (std::size_t c = 0; c < v.size(); ++c)
    obj += -problem.g[c] * v[c] + problem.lambda * v[c] * v[c];
  return obj;
}

}  // namespace gbw
