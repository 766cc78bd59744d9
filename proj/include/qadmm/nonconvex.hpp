#pragma once

#include "qadmm/core.hpp"
#include "qadmm/solvers.hpp"

namespace qadmm {

//! SCAD penalty derivative at |beta|; the LLA weight of one coordinate.
inline double scad_derivative(double abs_beta, double lambda, double a) {
  if (!(a > 2.0)) throw ParamError("SCAD requires a > 2");
  if (abs_beta <= lambda) return lambda;
  if (abs_beta < a * lambda) return (a * lambda - abs_beta) / (a - 1.0);
  return 0.0;
}

//! MCP penalty derivative at |beta|.
inline double mcp_derivative(double abs_beta, double lambda, double a) {
  if (!(a > 1.0)) throw ParamError("MCP requires a > 1");
  if (abs_beta <= a * lambda) return lambda - abs_beta / a;
  return 0.0;
}

//! Per-coordinate majorization weights at the current iterate.
inline Vector lla_weights(const PenaltySpec& penalty, const Vector& beta) {
  if (beta.size() != penalty.lambda.size()) throw ParamError("lla_weights: length mismatch");
  Vector w(beta.size());
  for (Index j = 0; j < beta.size(); ++j) {
    const double ab = std::abs(beta[j]);
    w[j] = penalty.kind == PenaltyKind::SCAD
               ? scad_derivative(ab, penalty.lambda[j], penalty.a)
               : mcp_derivative(ab, penalty.lambda[j], penalty.a);
  }
  return w;
}

struct LLAConfig {
  int max_outer = 3;  // two to three steps reach the folded-concave solution
  SolverConfig inner;
  bool warm_start = true;

  void validate() const {
    if (max_outer < 1) throw ParamError("max_outer must be >= 1");
  }
};

//! Run the LLA loop on an existing solver (reusing its cached factorizations).
//! Step 1 solves plain l1 at the raw lambda; each later step re-solves with the
//! derivative weights, warm-started. Stops once the weight vector stabilizes.
//! Iteration counts of all inner solves are accumulated.
inline FitResult lla_run(AdmmSolver& solver, const PenaltySpec& penalty, int max_outer,
                         bool warm_start, bool warm_first = false) {
  if (penalty.kind == PenaltyKind::WeightedL1)
    throw ParamError("lla_run expects a SCAD or MCP penalty");
  penalty.validate();
  const double tol = solver.config().tol;

  Vector w = penalty.lambda;
  FitResult cur = warm_first ? solver.refit(w) : solver.fit(w);
  int total_iters = cur.iterations;
  std::vector<int> inner_iters{cur.iterations};
  int outer = 1;
  Vector w_prev = w;
  while (outer < max_outer) {
    Vector w_new = lla_weights(penalty, cur.beta);
    const double rel = (w_new - w_prev).norm() / std::max(1.0, w_new.norm());
    if (rel <= tol) break;
    w_prev = w_new;
    cur = warm_start ? solver.refit(w_new) : solver.fit(w_new);
    total_iters += cur.iterations;
    inner_iters.push_back(cur.iterations);
    ++outer;
  }
  cur.iterations = total_iters;
  cur.outer_steps = outer;
  cur.inner_iters = std::move(inner_iters);
  return cur;
}

inline FitResult lla_solve(const Dataset& data, const PenaltySpec& penalty,
                           const LLAConfig& cfg) {
  cfg.validate();
  AdmmSolver solver(data, cfg.inner);
  return lla_run(solver, penalty, cfg.max_outer, cfg.warm_start);
}

}  // namespace qadmm
