#pragma once

#include <Eigen/Cholesky>

#include "qadmm/core.hpp"

namespace qadmm {

//! Cached SPD factorization of (X'X + I_p) for one data block.
//!
//! When the block is short and wide (n_m < p) the p x p system is routed through
//! the Woodbury identity, (X'X + I)^{-1} = I - X'(I + XX')^{-1}X, so only an
//! n_m x n_m factorization is held. Immutable after construction; concurrent
//! apply() calls are safe.
class RidgeFactor {
 public:
  enum class Mode { DirectP, WoodburyN };

  explicit RidgeFactor(const Matrix& Xm) : X_(Xm) {
    if (Xm.rows() < 1 || Xm.cols() < 1) throw DataError("ridge_factor: empty block");
    if (!Xm.allFinite()) throw DataError("ridge_factor: non-finite entries in block matrix");
    if (Xm.rows() < Xm.cols()) {
      mode_ = Mode::WoodburyN;
      Matrix K = Matrix::Identity(Xm.rows(), Xm.rows());
      K.noalias() += Xm * Xm.transpose();
      llt_.compute(K);
    } else {
      mode_ = Mode::DirectP;
      Matrix K = Matrix::Identity(Xm.cols(), Xm.cols());
      K.noalias() += Xm.transpose() * Xm;
      llt_.compute(K);
    }
    if (llt_.info() != Eigen::Success)
      throw DataError("ridge_factor: factorization failed");
  }

  Mode mode() const { return mode_; }
  Index rows() const { return X_.rows(); }
  Index cols() const { return X_.cols(); }
  const Matrix& x() const { return X_; }

  //! Solve (X'X + I_p) u = v.
  Vector apply(const Vector& v) const {
    if (v.size() != X_.cols()) throw ParamError("ridge_apply: dimension mismatch");
    if (mode_ == Mode::DirectP) return llt_.solve(v);
    Vector t = llt_.solve(X_ * v);
    return v - X_.transpose() * t;
  }

 private:
  Matrix X_;
  Mode mode_;
  Eigen::LLT<Matrix> llt_;
};

inline RidgeFactor ridge_factor(const Matrix& Xm) { return RidgeFactor(Xm); }

inline Vector ridge_apply(const RidgeFactor& f, const Vector& v) { return f.apply(v); }

}  // namespace qadmm
