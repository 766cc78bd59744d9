#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace qadmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class ParamError : public std::invalid_argument {
 public:
  explicit ParamError(const std::string& what) : std::invalid_argument(what) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

//! Raised by the divergence guard; carries the iteration at which an iterate blew up.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, int iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration(iteration) {}
  int iteration;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
  long line;
};

enum class Task { Regression, Classification };

//! Observations in canonical form. For classification the rows are stored
//! pre-transformed at ingestion: each feature row is scaled by its +-1 label and
//! the response is identically 1, so both tasks share the same solver path.
struct Dataset {
  Matrix features;  // n x p, dense column-major
  Vector response;  // length n
  Task task = Task::Regression;
  bool has_intercept = false;  // if set, column 1 was all-ones before the transform

  Index n() const { return features.rows(); }
  Index p() const { return features.cols(); }

  void validate() const {
    if (features.rows() < 1 || features.cols() < 1)
      throw DataError("dataset must have at least one row and one column");
    if (response.size() != features.rows())
      throw DataError("response length does not match row count");
    if (!features.allFinite() || !response.allFinite())
      throw DataError("dataset contains non-finite entries");
    if (task == Task::Classification && (response.array() != 1.0).any())
      throw DataError("classification dataset must be stored in transformed form (response == 1)");
  }
};

struct QuantileParam {
  double tau = 0.5;
};

//! tau = 1 yields the hinge loss and is accepted only for classification.
inline void validate_tau(double tau, Task task) {
  if (!(tau > 0.0) || !(tau <= 1.0))
    throw ParamError("tau must lie in (0, 1]");
  if (tau == 1.0 && task == Task::Regression)
    throw ParamError("tau = 1 is reserved for classification (hinge loss)");
}

enum class PenaltyKind { WeightedL1, SCAD, MCP };

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::WeightedL1;
  Vector lambda;  // per-coordinate nonnegative weights, length p
  double a = 3.7; // concavity; unused for WeightedL1

  static PenaltySpec weighted_l1(Vector w) {
    PenaltySpec s;
    s.kind = PenaltyKind::WeightedL1;
    s.lambda = std::move(w);
    return s;
  }
  static PenaltySpec scad(Vector lam, double a = 3.7) {
    PenaltySpec s;
    s.kind = PenaltyKind::SCAD;
    s.lambda = std::move(lam);
    s.a = a;
    return s;
  }
  static PenaltySpec mcp(Vector lam, double a = 3.0) {
    PenaltySpec s;
    s.kind = PenaltyKind::MCP;
    s.lambda = std::move(lam);
    s.a = a;
    return s;
  }
  //! Broadcast a scalar lambda over p coordinates, zeroing the intercept weight.
  static Vector broadcast(double lam, Index p, bool has_intercept) {
    Vector w = Vector::Constant(p, lam);
    if (has_intercept && p > 0) w[0] = 0.0;
    return w;
  }

  void validate(bool has_intercept = false) const {
    if (lambda.size() < 1) throw ParamError("penalty weight vector is empty");
    if ((lambda.array() < 0.0).any()) throw ParamError("penalty weights must be nonnegative");
    if (has_intercept && lambda[0] != 0.0)
      throw ParamError("intercept coordinate must carry zero penalty");
    if (kind == PenaltyKind::SCAD && !(a > 2.0)) throw ParamError("SCAD requires a > 2");
    if (kind == PenaltyKind::MCP && !(a > 1.0)) throw ParamError("MCP requires a > 1");
  }
};

enum class SolverVariant { QPADM, QPADMSlack, QPADMSlackGB, MQPADMSlackGB };

inline bool is_gb_variant(SolverVariant v) {
  return v == SolverVariant::QPADMSlackGB || v == SolverVariant::MQPADMSlackGB;
}

inline std::string to_string(SolverVariant v) {
  switch (v) {
    case SolverVariant::QPADM: return "qpadm";
    case SolverVariant::QPADMSlack: return "slack";
    case SolverVariant::QPADMSlackGB: return "slack-gb";
    case SolverVariant::MQPADMSlackGB: return "m-slack-gb";
  }
  return "?";
}

inline SolverVariant variant_from_string(const std::string& s) {
  if (s == "qpadm") return SolverVariant::QPADM;
  if (s == "slack") return SolverVariant::QPADMSlack;
  if (s == "slack-gb") return SolverVariant::QPADMSlackGB;
  if (s == "m-slack-gb") return SolverVariant::MQPADMSlackGB;
  throw ParamError("unknown variant '" + s + "'");
}

struct SolverConfig {
  double tau = 0.5;
  double mu = 1.0;   // augmented parameter
  double nu = 0.75;  // correction step, ignored by non-GB variants
  int blocks = 1;    // M
  int max_iter = 500;
  double tol = 1e-4;
  SolverVariant variant = SolverVariant::MQPADMSlackGB;
  double init_value = 0.01;
  std::uint64_t seed = 0;

  bool record_iterates = false;  // keep full per-iteration state (desk scale only)
  bool parallel_blocks = false;  // run the M block updates on worker threads
  bool break_correction = false; // test hook: mis-signed correction cross term
  // The correction is a plain linear map and can push slack components slightly
  // negative in transients; the dip mass is always recorded in the trace. Turning
  // this on additionally clips the corrected slacks at zero, which costs the
  // contraction properties of the corrected scheme.
  bool clamp_slacks = false;

  void validate(Task task = Task::Regression) const {
    validate_tau(tau, task);
    if (!(mu > 0.0)) throw ParamError("mu must be positive");
    if (is_gb_variant(variant) && (!(nu > 0.0) || !(nu < 1.0)))
      throw ParamError("nu must lie in (0, 1) for back-substitution variants");
    if (blocks < 1) throw ParamError("block count M must be >= 1");
    if (max_iter < 1) throw ParamError("max_iter must be >= 1");
    if (!(tol > 0.0)) throw ParamError("tol must be positive");
  }
};

// ---------------------------------------------------------------------------
// losses and proximal building blocks
// ---------------------------------------------------------------------------

//! Check loss rho_tau(u) = u * (tau - 1{u < 0}).
inline double check_loss(double u, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ParamError("tau must lie in (0, 1]");
  return u >= 0.0 ? tau * u : (tau - 1.0) * u;
}

inline double check_loss_sum(const Vector& r, double tau) {
  double s = 0.0;
  for (Index i = 0; i < r.size(); ++i) s += check_loss(r[i], tau);
  return s;
}

//! Split a residual into nonnegative parts: xi = (r)_+, eta = (-r)_+.
//! Then xi - eta = r and tau*1'xi + (1-tau)*1'eta recovers the check loss.
inline std::pair<Vector, Vector> slack_decompose(const Vector& r, double /*tau*/) {
  Vector xi = r.cwiseMax(0.0);
  Vector eta = (-r).cwiseMax(0.0);
  return {std::move(xi), std::move(eta)};
}

//! argmin_r { rho_tau(r) + mu/2 (r - u)^2 }. Ties at the dead-zone boundary give 0.
inline double prox_check_loss(double u, double tau, double mu) {
  if (!(mu > 0.0)) throw ParamError("mu must be positive");
  const double hi = tau / mu;
  const double lo = -(1.0 - tau) / mu;
  if (u > hi) return u - hi;
  if (u < lo) return u - lo;
  return 0.0;
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

//! Componentwise soft threshold: argmin_b { sum_j w_j|b_j| + c/2 ||b - v||^2 }.
inline Vector prox_weighted_l1(const Vector& v, const Vector& w, double c) {
  if (!(c > 0.0)) throw ParamError("prox scaling must be positive");
  if (v.size() != w.size()) throw ParamError("prox_weighted_l1: length mismatch");
  Vector out(v.size());
  for (Index j = 0; j < v.size(); ++j) out[j] = soft_threshold(v[j], w[j] / c);
  return out;
}

// ---------------------------------------------------------------------------
// penalty values (for objective reporting)
// ---------------------------------------------------------------------------

inline double scad_value(double b, double lam, double a) {
  const double x = std::abs(b);
  if (x <= lam) return lam * x;
  if (x < a * lam) return (2.0 * a * lam * x - x * x - lam * lam) / (2.0 * (a - 1.0));
  return lam * lam * (a + 1.0) / 2.0;
}

inline double mcp_value(double b, double lam, double a) {
  const double x = std::abs(b);
  if (x <= a * lam) return lam * x - x * x / (2.0 * a);
  return a * lam * lam / 2.0;
}

inline double penalty_value(const PenaltySpec& pen, const Vector& beta) {
  if (beta.size() != pen.lambda.size()) throw ParamError("penalty_value: length mismatch");
  double s = 0.0;
  for (Index j = 0; j < beta.size(); ++j) {
    switch (pen.kind) {
      case PenaltyKind::WeightedL1: s += pen.lambda[j] * std::abs(beta[j]); break;
      case PenaltyKind::SCAD: s += scad_value(beta[j], pen.lambda[j], pen.a); break;
      case PenaltyKind::MCP: s += mcp_value(beta[j], pen.lambda[j], pen.a); break;
    }
  }
  return s;
}

//! Penalized objective: sum_i rho_tau(y_i - x_i'beta) + P(|beta|).
inline double objective(const Dataset& data, const Vector& beta, double tau,
                        const PenaltySpec& pen) {
  Vector r = data.response - data.features * beta;
  return check_loss_sum(r, tau) + penalty_value(pen, beta);
}

}  // namespace qadmm
