#pragma once

#include <algorithm>
#include <thread>
#include <vector>

#include "qadmm/core.hpp"
#include "qadmm/metrics.hpp"
#include "qadmm/nonconvex.hpp"
#include "qadmm/solvers.hpp"

namespace qadmm {

//! High-dimensional BIC: log of the total check loss plus
//! |S| * (log log n / n) * C_n with C_n = 6 log p. A perfectly interpolating
//! fit returns the -inf sentinel (flagged by the caller via std::isinf).
inline double hbic(const Vector& fit_beta, const Dataset& data, double tau,
                   double zero_threshold = kZeroThreshold) {
  const Index n = data.n();
  if (n < 3) throw ParamError("hbic requires n >= 3");
  const double loss = check_loss_sum(data.response - data.features * fit_beta, tau);
  Index support = 0;
  for (Index j = data.has_intercept ? 1 : 0; j < data.p(); ++j)
    if (std::abs(fit_beta[j]) > zero_threshold) ++support;
  const double cn = 6.0 * std::log(static_cast<double>(data.p()));
  const double complexity =
      static_cast<double>(support) * (std::log(std::log(static_cast<double>(n))) /
                                      static_cast<double>(n)) * cn;
  if (loss <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(loss) + complexity;
}

struct HbicRecord {
  double lambda_scalar = 0.0;
  double hbic = std::numeric_limits<double>::quiet_NaN();
  int support_size = 0;
  bool degenerate = false;  // zero total loss (hbic is -inf)
  bool failed = false;      // fit diverged at this grid point
  FitResult fit;
};

struct GridResult {
  HbicRecord best;
  std::vector<HbicRecord> all;  // descending lambda order
};

//! Smallest lambda at which beta = 0 is optimal for the pooled objective:
//! max_j |sum_i x_ij psi_tau(y_i)| with psi_tau(u) = tau - 1{u < 0}.
inline double lambda_zero_threshold(const Dataset& data, double tau) {
  Vector psi(data.n());
  for (Index i = 0; i < data.n(); ++i)
    psi[i] = data.response[i] < 0.0 ? tau - 1.0 : tau;
  Vector score = data.features.transpose() * psi;
  if (data.has_intercept && data.p() > 1) score[0] = 0.0;
  return score.cwiseAbs().maxCoeff();
}

inline std::vector<double> default_grid(const Dataset& data, double tau, int points = 20,
                                        double min_ratio = 0.01) {
  if (points < 1) throw ParamError("grid needs at least one point");
  const double lmax = std::max(lambda_zero_threshold(data, tau), 1e-8);
  std::vector<double> grid;
  if (points == 1) return {lmax};
  const double lmin = min_ratio * lmax;
  for (int i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    grid.push_back(std::exp(std::log(lmax) + t * (std::log(lmin) - std::log(lmax))));
  }
  return grid;
}

//! Sweep the grid large-to-small (warm-started), score each fit by HBIC and
//! return the argmin; ties break toward the larger lambda. With warm starts off
//! the grid points run concurrently.
inline GridResult grid_search(const Dataset& data, std::vector<double> grid,
                              PenaltyKind kind, const SolverConfig& cfg,
                              double a = 3.7, int lla_max_outer = 3,
                              bool warm_start = true, int workers = 0) {
  if (grid.empty()) throw ParamError("grid_search: empty grid");
  std::sort(grid.begin(), grid.end(), std::greater<double>());

  auto fit_point = [&](AdmmSolver& solver, double lam, bool warm) {
    HbicRecord rec;
    rec.lambda_scalar = lam;
    Vector w = PenaltySpec::broadcast(lam, data.p(), data.has_intercept);
    try {
      if (kind == PenaltyKind::WeightedL1) {
        rec.fit = warm ? solver.refit(w) : solver.fit(w);
      } else {
        PenaltySpec pen = kind == PenaltyKind::SCAD ? PenaltySpec::scad(w, a)
                                                    : PenaltySpec::mcp(w, a);
        rec.fit = lla_run(solver, pen, lla_max_outer, true, warm);
      }
      rec.hbic = hbic(rec.fit.beta, data, cfg.tau);
      rec.degenerate = std::isinf(rec.hbic);
      for (Index j = data.has_intercept ? 1 : 0; j < data.p(); ++j)
        if (std::abs(rec.fit.beta[j]) > kZeroThreshold) ++rec.support_size;
    } catch (const DivergedError&) {
      rec.failed = true;
    }
    return rec;
  };

  GridResult out;
  out.all.resize(grid.size());
  if (warm_start) {
    AdmmSolver solver(data, cfg);
    for (size_t i = 0; i < grid.size(); ++i)
      out.all[i] = fit_point(solver, grid[i], i > 0);
  } else {
    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min<int>(workers, static_cast<int>(grid.size())));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (size_t i = static_cast<size_t>(w); i < grid.size();
             i += static_cast<size_t>(workers)) {
          AdmmSolver solver(data, cfg);
          out.all[i] = fit_point(solver, grid[i], false);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  bool found = false;
  for (const HbicRecord& rec : out.all) {
    if (rec.failed) continue;
    if (!found || rec.hbic < out.best.hbic) {  // strict: ties keep the larger lambda
      out.best = rec;
      found = true;
    }
  }
  if (!found) throw DataError("grid_search: every grid point diverged");
  return out;
}

}  // namespace qadmm
