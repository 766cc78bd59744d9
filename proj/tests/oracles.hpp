#pragma once

// Independent oracles and shared fixtures used by the tests. The oracles
// deliberately avoid the library's own computational paths: brute-force grid
// minimizers, explicit dense inverses, and a self-contained simplex solver for
// the quantile LP.

#include <Eigen/Dense>

#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "qadmm/core.hpp"
#include "qadmm/data.hpp"

namespace oracle {

using qadmm::Index;
using qadmm::Matrix;
using qadmm::Vector;

//! Separable classification fixture whose rows all carry the margin +-c exactly
//! (a margin direction plus orthogonal noise). The regularized hinge path then
//! approaches the unit-margin kink from below, which is the regime where the
//! tau = 1 negative-slack updates stay at zero.
inline qadmm::ClassificationToy uniform_margin_toy(Index n, Index p, double c, double noise,
                                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector w = Vector::Zero(p);
  for (Index j : qadmm::synth_support()) w[j] = 1.0;
  const double wnorm2 = w.squaredNorm();
  qadmm::ClassificationToy toy;
  toy.raw_features.resize(n, p);
  toy.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double y = (i % 2 == 0) ? 1.0 : -1.0;
    Vector z(p);
    for (Index j = 0; j < p; ++j) z[j] = noise * g(rng);
    z -= (z.dot(w) / wnorm2) * w;
    toy.raw_features.row(i) = (y * c / wnorm2) * w + z;
    toy.labels[i] = y;
  }
  toy.data = qadmm::classification_ingest(toy.raw_features, toy.labels);
  return toy;
}

//! Brute-force minimizer over a uniform grid.
template <typename F>
double grid_min(F f, double lo, double hi, double step) {
  double best_x = lo;
  double best_v = f(lo);
  for (double x = lo + step; x <= hi + step / 2; x += step) {
    const double v = f(x);
    if (v < best_v) {
      best_v = v;
      best_x = x;
    }
  }
  return best_x;
}

inline double check_loss_direct(double u, double tau) {
  return u * (tau - (u < 0.0 ? 1.0 : 0.0));
}

//! Grid-search argmin of rho_tau(r) + mu/2 (r-u)^2; the minimizer lies between
//! 0 and u, so the grid spans that interval with a small margin.
inline double prox_check_grid(double u, double tau, double mu, double step = 1e-5) {
  const double lo = std::min(0.0, u) - 10 * step;
  const double hi = std::max(0.0, u) + 10 * step;
  return grid_min([&](double r) { return check_loss_direct(r, tau) + 0.5 * mu * (r - u) * (r - u); },
                  lo, hi, step);
}

//! Grid-search argmin of w|b| + c/2 (b-v)^2.
inline double prox_abs_grid(double v, double w, double c, double step = 1e-5) {
  const double lo = std::min(0.0, v) - 10 * step;
  const double hi = std::max(0.0, v) + 10 * step;
  return grid_min([&](double b) { return w * std::abs(b) + 0.5 * c * (b - v) * (b - v); },
                  lo, hi, step);
}

//! Solve (X'X + I) u = v through an explicit dense inverse.
inline Vector dense_ridge_solve(const Matrix& X, const Vector& v) {
  Matrix K = Matrix::Identity(X.cols(), X.cols());
  K += X.transpose() * X;
  return K.inverse() * v;
}

// ---------------------------------------------------------------------------
// simplex oracle for the quantile-loss LP
//   min  tau 1'xi + (1-tau) 1'eta + lambda'(bp + bn)
//   s.t. X(bp - bn) + xi - eta = y,   bp, bn, xi, eta >= 0
// ---------------------------------------------------------------------------

struct LpResult {
  Vector beta;
  double objective = 0.0;
  int iterations = 0;
};

inline LpResult quantile_lasso_lp(const Matrix& X, const Vector& y, const Vector& lambda,
                                  double tau, int max_iter = 50000) {
  const Index n = X.rows();
  const Index p = X.cols();
  const Index nv = 2 * p + 2 * n;

  Matrix A(n, nv);
  A << X, -X, Matrix::Identity(n, n), -Matrix::Identity(n, n);
  Vector cost(nv);
  cost << lambda, lambda, Vector::Constant(n, tau), Vector::Constant(n, 1.0 - tau);

  // xi_i or eta_i (whichever keeps the basic value nonnegative) forms the
  // starting basis, so no phase-1 is needed.
  std::vector<Index> basis(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i)
    basis[static_cast<size_t>(i)] = y[i] >= 0.0 ? 2 * p + i : 2 * p + n + i;

  std::vector<char> in_basis(static_cast<size_t>(nv), 0);
  for (Index j : basis) in_basis[static_cast<size_t>(j)] = 1;

  const double eps = 1e-9;
  int iter = 0;
  Matrix B(n, n);
  for (; iter < max_iter; ++iter) {
    for (Index i = 0; i < n; ++i) B.col(i) = A.col(basis[static_cast<size_t>(i)]);
    Eigen::PartialPivLU<Matrix> lu(B);
    Eigen::PartialPivLU<Matrix> luT(B.transpose());

    Vector xb = lu.solve(y);
    Vector cb(n);
    for (Index i = 0; i < n; ++i) cb[i] = cost[basis[static_cast<size_t>(i)]];
    Vector dual = luT.solve(cb);

    // entering column: most negative reduced cost, Bland after long stalls
    const bool bland = iter > 2 * max_iter / 3;
    Index enter = -1;
    double best = -eps;
    for (Index j = 0; j < nv; ++j) {
      if (in_basis[static_cast<size_t>(j)]) continue;
      const double rc = cost[j] - A.col(j).dot(dual);
      if (bland) {
        if (rc < -eps) {
          enter = j;
          break;
        }
      } else if (rc < best) {
        best = rc;
        enter = j;
      }
    }
    if (enter < 0) break;  // optimal

    Vector dir = lu.solve(A.col(enter));
    Index leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      if (dir[i] > eps) {
        const double ratio = std::max(xb[i], 0.0) / dir[i];
        if (ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 &&
             (leave < 0 || basis[static_cast<size_t>(i)] < basis[static_cast<size_t>(leave)]))) {
          best_ratio = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) throw std::runtime_error("lp oracle: unbounded problem");
    in_basis[static_cast<size_t>(basis[static_cast<size_t>(leave)])] = 0;
    in_basis[static_cast<size_t>(enter)] = 1;
    basis[static_cast<size_t>(leave)] = enter;
  }
  if (iter >= max_iter) throw std::runtime_error("lp oracle: iteration limit reached");

  for (Index i = 0; i < n; ++i) B.col(i) = A.col(basis[static_cast<size_t>(i)]);
  Vector xb = Eigen::PartialPivLU<Matrix>(B).solve(y);
  Vector z = Vector::Zero(nv);
  for (Index i = 0; i < n; ++i) z[basis[static_cast<size_t>(i)]] = xb[i];

  LpResult res;
  res.beta = z.head(p) - z.segment(p, p);
  res.objective = cost.dot(z);
  res.iterations = iter;
  return res;
}

//! Quadratic-minimizer oracle for the block subproblem: assemble the Lagrangian
//! terms that involve beta_b and solve the stationarity system densely.
inline Vector block_subproblem_min(const Matrix& X, const Vector& y, const Vector& beta_ref,
                                   const Vector& dual_consensus, const Vector& slack_pos,
                                   const Vector& slack_neg, const Vector& dual_resid,
                                   double mu) {
  const Index p = X.cols();
  Matrix P = mu * (Matrix::Identity(p, p) + X.transpose() * X);
  Vector g = dual_consensus - mu * beta_ref - X.transpose() * dual_resid -
             mu * X.transpose() * (y - slack_pos + slack_neg);
  return Eigen::FullPivLU<Matrix>(P).solve(-g);
}

//! The block Lagrangian value, for perturbation-based minimality checks.
inline double block_lagrangian(const Vector& beta_b, const Matrix& X, const Vector& y,
                               const Vector& beta_ref, const Vector& dual_consensus,
                               const Vector& slack_pos, const Vector& slack_neg,
                               const Vector& dual_resid, double mu) {
  const Vector fit = y - X * beta_b - slack_pos + slack_neg;
  return dual_consensus.dot(beta_b - beta_ref) + 0.5 * mu * (beta_b - beta_ref).squaredNorm() +
         dual_resid.dot(fit) + 0.5 * mu * fit.squaredNorm();
}

}  // namespace oracle
