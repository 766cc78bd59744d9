#pragma once

#include <algorithm>
#include <chrono>
#include <limits>
#include <thread>
#include <vector>

#include "qadmm/core.hpp"
#include "qadmm/data.hpp"
#include "qadmm/linalg.hpp"

namespace qadmm {

constexpr double kDivergenceGuard = 1e12;

// ---------------------------------------------------------------------------
// iteration state
// ---------------------------------------------------------------------------

struct BlockState {
  Vector beta_b;          // block coefficient copy, length p
  Vector slack_pos;       // positive residual slack, length n_m
  Vector slack_neg;       // negative residual slack, length n_m
  Vector resid;           // residual variable of the baseline scheme, length n_m
  Vector dual_consensus;  // dual for beta_b = beta, length p
  Vector dual_resid;      // dual for the residual constraint, length n_m
  // pre-correction values retained for the deferred dual update
  Vector slack_pos_tilde;
  Vector slack_neg_tilde;
};

struct CentralState {
  Vector beta;
  Vector beta_tilde;  // pre-correction central estimate (modified ordering)
};

struct TraceRow {
  double objective = 0.0;
  double consensus_resid = 0.0;  // max_m ||beta_b - beta||
  double fit_resid = 0.0;        // max_m ||y_m - X_m beta_b - xi + eta||
  double rel_change = 0.0;       // stopping statistic
  double clamp = 0.0;            // negative slack mass after correction (clipped if clamp_slacks)
  double h_norm = std::numeric_limits<double>::quiet_NaN();  // filled by diagnostics
};

//! Full post-iteration state, kept only when SolverConfig::record_iterates is set.
struct IterateSnapshot {
  Vector beta;
  std::vector<Vector> beta_b;
  std::vector<Vector> slack_pos;
  std::vector<Vector> slack_neg;
  std::vector<Vector> dual_consensus;
  std::vector<Vector> dual_resid;
};

struct FitResult {
  Vector beta;
  int iterations = 0;
  bool converged = false;
  std::vector<TraceRow> trace;
  std::vector<IterateSnapshot> iterates;  // [0] is the initial state
  double seconds = 0.0;
  int outer_steps = 1;            // > 1 only for LLA-driven fits
  std::vector<int> inner_iters;   // per-outer-step counts when LLA drove the fit
};

// ---------------------------------------------------------------------------
// subproblem closed forms; the caller picks which iterates populate each
// argument, which is the only place the variants differ
// ---------------------------------------------------------------------------

//! (X'X + I)^{-1} [ (beta_ref - d/mu) + X'(y - xi + eta + e/mu) ]
inline Vector update_block_beta(const RidgeFactor& factor, const Matrix& Xm, const Vector& ym,
                                const Vector& beta_ref, const Vector& dual_consensus,
                                const Vector& slack_pos, const Vector& slack_neg,
                                const Vector& dual_resid, double mu) {
  Vector rhs = beta_ref - dual_consensus / mu;
  rhs.noalias() += Xm.transpose() * (ym - slack_pos + slack_neg + dual_resid / mu);
  return factor.apply(rhs);
}

//! max{ y - X beta_b + eta + e/mu - tau/mu, 0 }
inline Vector update_slack_pos(const Vector& ym, const Vector& Xb, const Vector& slack_neg,
                               const Vector& dual_resid, double mu, double tau) {
  return ((ym - Xb + slack_neg + dual_resid / mu).array() - tau / mu).max(0.0).matrix();
}

//! max{ (tau-1)/mu - (y - X beta_b - xi + e/mu), 0 }
inline Vector update_slack_neg(const Vector& ym, const Vector& Xb, const Vector& slack_pos_new,
                               const Vector& dual_resid, double mu, double tau) {
  return ((tau - 1.0) / mu - (ym - Xb - slack_pos_new + dual_resid / mu).array())
      .max(0.0)
      .matrix();
}

//! Proximal central update over the block average: prox_{P/(mu M)}(mean alpha_m).
inline Vector update_central_beta(const std::vector<Vector>& alphas, const Vector& weights,
                                  double mu) {
  if (alphas.empty()) throw ParamError("update_central_beta: empty block average");
  Vector mean = Vector::Zero(alphas.front().size());
  for (const Vector& a : alphas) mean += a;  // fixed block order
  mean /= static_cast<double>(alphas.size());
  return prox_weighted_l1(mean, weights, mu * static_cast<double>(alphas.size()));
}

//! Standard-ordering correction of (eta, beta_b). `flip_cross` is the negative
//! control that mis-signs the cross term.
inline void gb_correct_standard(Vector& slack_neg, Vector& beta_b, const Vector& slack_neg_tilde,
                                const Vector& beta_b_tilde, const Vector& Xb_old,
                                const Vector& Xb_tilde, double nu, bool flip_cross = false) {
  if (!(nu > 0.0 && nu < 1.0)) throw ParamError("nu must lie in (0, 1)");
  const double sign = flip_cross ? 1.0 : -1.0;
  slack_neg = (1.0 - nu) * slack_neg + nu * slack_neg_tilde + sign * nu * (Xb_old - Xb_tilde);
  beta_b = (1.0 - nu) * beta_b + nu * beta_b_tilde;
}

//! Modified-ordering correction of (xi, eta, beta): additions and subtractions only.
inline void gb_correct_modified(Vector& slack_pos, Vector& slack_neg, Vector& beta,
                                const Vector& slack_pos_tilde, const Vector& slack_neg_tilde,
                                const Vector& beta_tilde, double nu, bool flip_cross = false) {
  if (!(nu > 0.0 && nu < 1.0)) throw ParamError("nu must lie in (0, 1)");
  const double sign = flip_cross ? 1.0 : -1.0;
  slack_pos = (1.0 - nu) * slack_pos + nu * slack_pos_tilde +
              sign * nu * (slack_neg - slack_neg_tilde);
  slack_neg = (1.0 - nu) * slack_neg + nu * slack_neg_tilde;
  beta = (1.0 - nu) * beta + nu * beta_tilde;
}

//! Total negative mass of a corrected slack vector, clipping it at zero on request.
inline double negative_dip_mass(Vector& v, bool clip) {
  double mass = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (v[i] < 0.0) {
      mass -= v[i];
      if (clip) v[i] = 0.0;
    }
  }
  return mass;
}

// ---------------------------------------------------------------------------
// solver
// ---------------------------------------------------------------------------

//! Consensus ADMM over M contiguous data blocks. The object caches the per-block
//! ridge factorizations, so sweeping a regularization path or re-solving with new
//! weights (LLA) reuses them; refit() additionally warm-starts from the last state.
class AdmmSolver {
 public:
  AdmmSolver(const Dataset& data, const SolverConfig& cfg)
      : cfg_(cfg), part_(partition(data.n(), cfg.blocks)) {
    data.validate();
    cfg_.validate(data.task);
    task_ = data.task;
    p_ = data.p();
    blk_.reserve(static_cast<size_t>(part_.blocks));
    for (int m = 0; m < part_.blocks; ++m) {
      Block b{RidgeFactor(data.features.middleRows(part_.offsets[m], part_.sizes[m])),
              data.response.segment(part_.offsets[m], part_.sizes[m])};
      blk_.push_back(std::move(b));
    }
  }

  const Partition& parts() const { return part_; }
  const SolverConfig& config() const { return cfg_; }

  //! Solve with the given weighted-l1 penalty from the init_value-filled state.
  FitResult fit(const Vector& l1_weights) {
    reset_state();
    return run(l1_weights);
  }

  //! Solve warm-starting from the state left by the previous fit/refit.
  FitResult refit(const Vector& l1_weights) {
    if (!has_state_) reset_state();
    return run(l1_weights);
  }

 private:
  struct Block {
    RidgeFactor factor;  // also owns the block matrix copy
    Vector y;
    const Matrix& X() const { return factor.x(); }
  };

  SolverConfig cfg_;
  Partition part_;
  std::vector<Block> blk_;
  Task task_ = Task::Regression;
  Index p_ = 0;

  CentralState central_;
  std::vector<BlockState> state_;
  bool has_state_ = false;
  bool duals_pending_ = false;   // modified ordering: dual update deferred to next pass
  bool last_prox_zero_ = false;  // central prox output was exactly the zero vector

  void reset_state() {
    central_.beta = Vector::Constant(p_, cfg_.init_value);
    central_.beta_tilde = central_.beta;
    state_.assign(static_cast<size_t>(part_.blocks), BlockState{});
    for (int m = 0; m < part_.blocks; ++m) {
      BlockState& s = state_[static_cast<size_t>(m)];
      const Index nm = part_.sizes[static_cast<size_t>(m)];
      s.beta_b = Vector::Constant(p_, cfg_.init_value);
      s.slack_pos = Vector::Constant(nm, cfg_.init_value);
      s.slack_neg = Vector::Constant(nm, cfg_.init_value);
      s.resid = Vector::Constant(nm, cfg_.init_value);
      s.dual_consensus = Vector::Constant(p_, cfg_.init_value);
      s.dual_resid = Vector::Constant(nm, cfg_.init_value);
      s.slack_pos_tilde = s.slack_pos;
      s.slack_neg_tilde = s.slack_neg;
    }
    has_state_ = true;
    duals_pending_ = false;
  }

  template <typename F>
  void for_each_block(F&& body) {
    const int M = part_.blocks;
    if (!cfg_.parallel_blocks || M == 1) {
      for (int m = 0; m < M; ++m) body(m);
      return;
    }
    const int workers = std::min<int>(M, static_cast<int>(std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int m = w; m < M; m += workers) body(m);
      });
    }
    for (auto& t : pool) t.join();  // barrier before the central phase
  }

  void guard(int iteration) const {
    auto bad = [](const Vector& v) { return !v.allFinite() || v.norm() > kDivergenceGuard; };
    if (bad(central_.beta)) throw DivergedError("central iterate diverged", iteration);
    for (const BlockState& s : state_) {
      if (bad(s.beta_b) || bad(s.dual_consensus) || bad(s.dual_resid))
        throw DivergedError("block iterate diverged", iteration);
    }
  }

  double objective_at(const Vector& beta, const Vector& weights) const {
    double loss = 0.0;
    for (const Block& b : blk_) loss += check_loss_sum(b.y - b.X() * beta, cfg_.tau);
    double pen = 0.0;
    for (Index j = 0; j < p_; ++j) pen += weights[j] * std::abs(beta[j]);
    return loss + pen;
  }

  void snapshot(FitResult& res, bool apply_pending) const {
    IterateSnapshot snap;
    snap.beta = central_.beta;
    for (int m = 0; m < part_.blocks; ++m) {
      const BlockState& s = state_[static_cast<size_t>(m)];
      snap.beta_b.push_back(s.beta_b);
      snap.slack_pos.push_back(s.slack_pos);
      snap.slack_neg.push_back(s.slack_neg);
      Vector d = s.dual_consensus;
      Vector e = s.dual_resid;
      if (apply_pending) {
        const Block& b = blk_[static_cast<size_t>(m)];
        d -= cfg_.mu * (central_.beta_tilde - s.beta_b);
        e -= cfg_.mu * (b.X() * s.beta_b + s.slack_pos_tilde - s.slack_neg_tilde - b.y);
      }
      snap.dual_consensus.push_back(std::move(d));
      snap.dual_resid.push_back(std::move(e));
    }
    res.iterates.push_back(std::move(snap));
  }

  FitResult run(const Vector& weights) {
    if (weights.size() != p_) throw ParamError("penalty weight length mismatch");
    const auto t0 = std::chrono::steady_clock::now();
    FitResult res;
    if (cfg_.record_iterates) snapshot(res, false);

    Vector beta_prev = central_.beta;
    for (int k = 1; k <= cfg_.max_iter; ++k) {
      double clamp = 0.0;
      switch (cfg_.variant) {
        case SolverVariant::QPADM: iterate_baseline(weights); break;
        case SolverVariant::QPADMSlack: iterate_slack(weights, false, clamp); break;
        case SolverVariant::QPADMSlackGB: iterate_slack(weights, true, clamp); break;
        case SolverVariant::MQPADMSlackGB: iterate_modified(weights, clamp); break;
      }
      guard(k);

      TraceRow row;
      row.objective = objective_at(central_.beta, weights);
      row.clamp = clamp;
      for (int m = 0; m < part_.blocks; ++m) {
        const BlockState& s = state_[static_cast<size_t>(m)];
        const Block& b = blk_[static_cast<size_t>(m)];
        row.consensus_resid = std::max(row.consensus_resid, (s.beta_b - central_.beta).norm());
        Vector fit = b.y - b.X() * s.beta_b;
        if (cfg_.variant == SolverVariant::QPADM)
          fit -= s.resid;
        else
          fit -= s.slack_pos - s.slack_neg;
        row.fit_resid = std::max(row.fit_resid, fit.norm());
      }
      row.rel_change = (central_.beta - beta_prev).norm() / std::max(1.0, central_.beta.norm());
      res.trace.push_back(row);
      if (cfg_.record_iterates)
        snapshot(res, cfg_.variant == SolverVariant::MQPADMSlackGB);

      beta_prev = central_.beta;
      res.iterations = k;
      // With sum-form penalties the central prox output sits at exactly zero
      // for many early iterations while the duals ramp toward the lambda scale
      // (and the corrected estimate of the modified ordering then decays
      // geometrically toward it), so the beta-change statistic fires long
      // before any fitting has happened. The rule stays disarmed while the
      // prox output is pinned at zero and the blocks still disagree.
      const bool zero_plateau =
          last_prox_zero_ &&
          row.consensus_resid > cfg_.tol * std::max(1.0, central_.beta.norm());
      if (row.rel_change <= cfg_.tol && !zero_plateau) {
        res.converged = true;
        break;
      }
    }

    res.beta = central_.beta;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

  //! Baseline scheme: central prox, residual prox, ridge solve, dual ascent.
  void iterate_baseline(const Vector& weights) {
    std::vector<Vector> alphas;
    alphas.reserve(state_.size());
    for (const BlockState& s : state_) alphas.push_back(s.beta_b + s.dual_consensus / cfg_.mu);
    const Vector beta_new = update_central_beta(alphas, weights, cfg_.mu);
    last_prox_zero_ = beta_new.isZero(0.0);

    for_each_block([&](int m) {
      BlockState& s = state_[static_cast<size_t>(m)];
      const Block& b = blk_[static_cast<size_t>(m)];
      const Vector arg = b.y - b.X() * s.beta_b + s.dual_resid / cfg_.mu;
      Vector r_new(arg.size());
      for (Index i = 0; i < arg.size(); ++i)
        r_new[i] = prox_check_loss(arg[i], cfg_.tau, cfg_.mu);

      Vector rhs = beta_new - s.dual_consensus / cfg_.mu;
      rhs.noalias() += b.X().transpose() * (b.y - r_new + s.dual_resid / cfg_.mu);
      const Vector beta_b_new = b.factor.apply(rhs);

      s.dual_consensus -= cfg_.mu * (beta_new - beta_b_new);
      s.dual_resid += cfg_.mu * (b.y - b.X() * beta_b_new - r_new);
      s.resid = r_new;
      s.beta_b = beta_b_new;
    });
    central_.beta = beta_new;
  }

  //! Slack scheme, optionally followed by the standard-ordering correction.
  void iterate_slack(const Vector& weights, bool correct, double& clamp) {
    std::vector<Vector> alphas;
    alphas.reserve(state_.size());
    for (const BlockState& s : state_) alphas.push_back(s.beta_b + s.dual_consensus / cfg_.mu);
    const Vector beta_new = update_central_beta(alphas, weights, cfg_.mu);
    last_prox_zero_ = beta_new.isZero(0.0);

    std::vector<double> clamp_m(state_.size(), 0.0);
    for_each_block([&](int m) {
      BlockState& s = state_[static_cast<size_t>(m)];
      const Block& b = blk_[static_cast<size_t>(m)];
      const Vector Xb_old = b.X() * s.beta_b;
      const Vector xi_new = update_slack_pos(b.y, Xb_old, s.slack_neg, s.dual_resid,
                                             cfg_.mu, cfg_.tau);
      const Vector eta_new = update_slack_neg(b.y, Xb_old, xi_new, s.dual_resid,
                                              cfg_.mu, cfg_.tau);
      const Vector beta_b_new = update_block_beta(b.factor, b.X(), b.y, beta_new,
                                                  s.dual_consensus, xi_new, eta_new,
                                                  s.dual_resid, cfg_.mu);
      const Vector Xb_new = b.X() * beta_b_new;
      // dual steps use the pre-correction values
      s.dual_consensus -= cfg_.mu * (beta_new - beta_b_new);
      s.dual_resid -= cfg_.mu * (Xb_new + xi_new - eta_new - b.y);
      if (correct) {
        Vector eta_corr = s.slack_neg;
        Vector beta_b_corr = s.beta_b;
        gb_correct_standard(eta_corr, beta_b_corr, eta_new, beta_b_new, Xb_old, Xb_new,
                            cfg_.nu, cfg_.break_correction);
        clamp_m[static_cast<size_t>(m)] = negative_dip_mass(eta_corr, cfg_.clamp_slacks);
        s.slack_neg = eta_corr;
        s.beta_b = beta_b_corr;
      } else {
        s.slack_neg = eta_new;
        s.beta_b = beta_b_new;
      }
      s.slack_pos = xi_new;  // first block of the ordering, never corrected
    });
    for (double c : clamp_m) clamp += c;
    central_.beta = beta_new;
  }

  //! Modified ordering: ridge solve first, proximal central step last, dual
  //! updates deferred to the start of the next pass via the retained tildes.
  void iterate_modified(const Vector& weights, double& clamp) {
    std::vector<Vector> alphas(state_.size());
    std::vector<double> clamp_m(state_.size(), 0.0);
    for_each_block([&](int m) {
      BlockState& s = state_[static_cast<size_t>(m)];
      const Block& b = blk_[static_cast<size_t>(m)];
      if (duals_pending_) {
        s.dual_consensus -= cfg_.mu * (central_.beta_tilde - s.beta_b);
        s.dual_resid -= cfg_.mu * (b.X() * s.beta_b + s.slack_pos_tilde -
                                   s.slack_neg_tilde - b.y);
      }
      const Vector beta_b_new = update_block_beta(b.factor, b.X(), b.y, central_.beta,
                                                  s.dual_consensus, s.slack_pos, s.slack_neg,
                                                  s.dual_resid, cfg_.mu);
      const Vector Xb_new = b.X() * beta_b_new;
      const Vector xi_tilde = update_slack_pos(b.y, Xb_new, s.slack_neg, s.dual_resid,
                                               cfg_.mu, cfg_.tau);
      const Vector eta_tilde = update_slack_neg(b.y, Xb_new, xi_tilde, s.dual_resid,
                                                cfg_.mu, cfg_.tau);
      // slack corrections happen locally; the central beta correction follows below
      const double cross = cfg_.break_correction ? cfg_.nu : -cfg_.nu;
      Vector xi_corr = (1.0 - cfg_.nu) * s.slack_pos + cfg_.nu * xi_tilde +
                       cross * (s.slack_neg - eta_tilde);
      Vector eta_corr = (1.0 - cfg_.nu) * s.slack_neg + cfg_.nu * eta_tilde;
      clamp_m[static_cast<size_t>(m)] = negative_dip_mass(xi_corr, cfg_.clamp_slacks);

      s.beta_b = beta_b_new;
      s.slack_pos = xi_corr;
      s.slack_neg = eta_corr;
      s.slack_pos_tilde = xi_tilde;
      s.slack_neg_tilde = eta_tilde;
      alphas[static_cast<size_t>(m)] = beta_b_new + s.dual_consensus / cfg_.mu;
    });
    for (double c : clamp_m) clamp += c;

    const Vector beta_tilde = update_central_beta(alphas, weights, cfg_.mu);
    last_prox_zero_ = beta_tilde.isZero(0.0);
    central_.beta = (1.0 - cfg_.nu) * central_.beta + cfg_.nu * beta_tilde;
    central_.beta_tilde = beta_tilde;
    duals_pending_ = true;
  }
};

//! One-shot weighted-l1 solve (the LLA driver handles SCAD/MCP).
inline FitResult solve(const Dataset& data, const PenaltySpec& penalty,
                       const SolverConfig& cfg) {
  if (penalty.kind != PenaltyKind::WeightedL1)
    throw ParamError("solve() takes a weighted-l1 penalty; use lla_solve for SCAD/MCP");
  penalty.validate(data.has_intercept);
  AdmmSolver solver(data, cfg);
  return solver.fit(penalty.lambda);
}

}  // namespace qadmm
