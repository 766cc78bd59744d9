#pragma once

#include "qadmm/core.hpp"
#include "qadmm/data.hpp"

namespace qadmm {

constexpr double kZeroThreshold = 1e-6;  // numeric zero for support counting

struct SupportMetrics {
  int p1 = 0;        // heteroscedastic variable (x1) selected
  int p2 = 0;        // all four true support variables selected
  int nonzero = 0;   // coefficients above threshold
  double sparsity = 0.0;  // percent of zero coefficients
};

//! l1 distance between the estimate and the truth.
inline double absolute_error(const Vector& beta_hat, const Vector& beta_true) {
  if (beta_hat.size() != beta_true.size()) throw ParamError("absolute_error: length mismatch");
  return (beta_hat - beta_true).lpNorm<1>();
}

inline double l2_error(const Vector& beta_hat, const Vector& beta_true) {
  if (beta_hat.size() != beta_true.size()) throw ParamError("l2_error: length mismatch");
  return (beta_hat - beta_true).norm();
}

//! Percent of rows where sign(x'beta) matches the label; sign(0) counts as +1.
inline double classification_accuracy(const Vector& beta_hat, const Matrix& raw_X,
                                      const Vector& raw_y) {
  if (raw_X.rows() != raw_y.size()) throw ParamError("classification_accuracy: row mismatch");
  if (raw_X.cols() != beta_hat.size()) throw ParamError("classification_accuracy: column mismatch");
  Index hits = 0;
  for (Index i = 0; i < raw_X.rows(); ++i) {
    const double y = raw_y[i];
    if (y != 1.0 && y != -1.0) throw DataError("labels must be -1 or +1");
    const double score = raw_X.row(i).dot(beta_hat);
    const double pred = score >= 0.0 ? 1.0 : -1.0;
    if (pred == y) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(raw_X.rows());
}

inline SupportMetrics support_metrics(const Vector& beta_hat, Index p,
                                      double zero_threshold = kZeroThreshold) {
  if (!(zero_threshold > 0.0)) throw ParamError("zero threshold must be positive");
  SupportMetrics m;
  for (Index j = 0; j < p; ++j)
    if (std::abs(beta_hat[j]) > zero_threshold) ++m.nonzero;
  m.sparsity = 100.0 * static_cast<double>(p - m.nonzero) / static_cast<double>(p);
  m.p1 = std::abs(beta_hat[kSynthHeteroIndex]) > zero_threshold ? 1 : 0;
  m.p2 = 1;
  for (Index j : synth_support())
    if (!(std::abs(beta_hat[j]) > zero_threshold)) m.p2 = 0;
  return m;
}

//! One row of the benchmark tables.
struct EvalReport {
  int p1 = 0;
  int p2 = 0;
  double ae = 0.0;
  int nonzero = 0;
  double sparsity = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  int iterations = 0;
  double wall_time = 0.0;  // seconds
};

}  // namespace qadmm
