#pragma once

#include <Eigen/Eigenvalues>

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "qadmm/core.hpp"
#include "qadmm/data.hpp"
#include "qadmm/solvers.hpp"

namespace qadmm {

//! Two groupings of the primal variables into the three ADMM blocks.
//! Standard: a = (beta, xi_1..M), b = (eta_1..M), c = (beta_b_1..M).
//! Modified: a = (beta_b_1..M), b = (xi_1..M), c = (eta_1..M, beta).
enum class Ordering { Standard, Modified };

enum class GroupKind { Prox, SlackPos, SlackNeg, Smooth };

struct VarGroup {
  char vec;        // 'a', 'b' or 'c'
  Index offset;    // column offset within that stacked vector
  Index size;
  GroupKind kind;
};

//! Dense materialization of the stacked constraint A a + B b + C c = e, desk
//! scale only. Production solves never assemble these matrices.
struct ConstraintSystem {
  Ordering ordering;
  int blocks = 0;
  Index p = 0;
  std::vector<Index> nm;
  Index n_total = 0;

  Matrix A, B, C;  // (M p + n) rows
  Vector e;
  Index dim_a = 0, dim_b = 0, dim_c = 0, dim_rows = 0;
  std::vector<VarGroup> groups;
};

inline ConstraintSystem build_constraints(const Dataset& data, const Partition& part,
                                          Ordering ordering) {
  ConstraintSystem cs;
  cs.ordering = ordering;
  cs.blocks = part.blocks;
  cs.p = data.p();
  cs.nm = part.sizes;
  for (Index s : part.sizes) cs.n_total += s;
  const Index p = cs.p;
  const Index n = cs.n_total;
  const int M = cs.blocks;
  cs.dim_rows = static_cast<Index>(M) * p + n;
  if (cs.dim_rows + n + static_cast<Index>(M) * p > 4000)
    throw ParamError("constraint system is restricted to desk-scale dimensions");

  // row layout: M consensus blocks of p rows, then M residual blocks of n_m rows
  auto consensus_row = [&](int m) { return static_cast<Index>(m) * p; };
  std::vector<Index> resid_row(static_cast<size_t>(M));
  {
    Index off = static_cast<Index>(M) * p;
    for (int m = 0; m < M; ++m) {
      resid_row[static_cast<size_t>(m)] = off;
      off += cs.nm[static_cast<size_t>(m)];
    }
  }
  cs.e = Vector::Zero(cs.dim_rows);
  for (int m = 0; m < M; ++m)
    cs.e.segment(resid_row[static_cast<size_t>(m)], cs.nm[static_cast<size_t>(m)]) =
        data.response.segment(part.offsets[static_cast<size_t>(m)],
                              part.sizes[static_cast<size_t>(m)]);

  if (ordering == Ordering::Standard) {
    cs.dim_a = p + n;
    cs.dim_b = n;
    cs.dim_c = static_cast<Index>(M) * p;
    cs.A = Matrix::Zero(cs.dim_rows, cs.dim_a);
    cs.B = Matrix::Zero(cs.dim_rows, cs.dim_b);
    cs.C = Matrix::Zero(cs.dim_rows, cs.dim_c);
    // a: central beta then the xi blocks
    for (int m = 0; m < M; ++m)
      cs.A.block(consensus_row(m), 0, p, p) = -Matrix::Identity(p, p);
    cs.groups.push_back({'a', 0, p, GroupKind::Prox});
    Index col = p;
    for (int m = 0; m < M; ++m) {
      const Index nmm = cs.nm[static_cast<size_t>(m)];
      cs.A.block(resid_row[static_cast<size_t>(m)], col, nmm, nmm) =
          Matrix::Identity(nmm, nmm);
      cs.groups.push_back({'a', col, nmm, GroupKind::SlackPos});
      col += nmm;
    }
    // b: eta blocks
    col = 0;
    for (int m = 0; m < M; ++m) {
      const Index nmm = cs.nm[static_cast<size_t>(m)];
      cs.B.block(resid_row[static_cast<size_t>(m)], col, nmm, nmm) =
          -Matrix::Identity(nmm, nmm);
      cs.groups.push_back({'b', col, nmm, GroupKind::SlackNeg});
      col += nmm;
    }
    // c: per-block beta copies
    col = 0;
    for (int m = 0; m < M; ++m) {
      const Index nmm = cs.nm[static_cast<size_t>(m)];
      cs.C.block(consensus_row(m), col, p, p) = Matrix::Identity(p, p);
      cs.C.block(resid_row[static_cast<size_t>(m)], col, nmm, p) =
          data.features.middleRows(part.offsets[static_cast<size_t>(m)], nmm);
      cs.groups.push_back({'c', col, p, GroupKind::Smooth});
      col += p;
    }
  } else {
    cs.dim_a = static_cast<Index>(M) * p;
    cs.dim_b = n;
    cs.dim_c = n + p;
    cs.A = Matrix::Zero(cs.dim_rows, cs.dim_a);
    cs.B = Matrix::Zero(cs.dim_rows, cs.dim_b);
    cs.C = Matrix::Zero(cs.dim_rows, cs.dim_c);
    // a: per-block beta copies
    Index col = 0;
    for (int m = 0; m < M; ++m) {
      const Index nmm = cs.nm[static_cast<size_t>(m)];
      cs.A.block(consensus_row(m), col, p, p) = Matrix::Identity(p, p);
      cs.A.block(resid_row[static_cast<size_t>(m)], col, nmm, p) =
          data.features.middleRows(part.offsets[static_cast<size_t>(m)], nmm);
      cs.groups.push_back({'a', col, p, GroupKind::Smooth});
      col += p;
    }
    // b: xi blocks. The displayed residual blocks carry the opposite sign; the
    // signs of (B, C_eta) are flipped together here so the rows reproduce the
    // actual constraint y - X beta_b = xi - eta. B'C is unchanged.
    col = 0;
    for (int m = 0; m < M; ++m) {
      const Index nmm = cs.nm[static_cast<size_t>(m)];
      cs.B.block(resid_row[static_cast<size_t>(m)], col, nmm, nmm) =
          Matrix::Identity(nmm, nmm);
      cs.groups.push_back({'b', col, nmm, GroupKind::SlackPos});
      col += nmm;
    }
    // c: eta blocks then the central beta
    col = 0;
    for (int m = 0; m < M; ++m) {
      const Index nmm = cs.nm[static_cast<size_t>(m)];
      cs.C.block(resid_row[static_cast<size_t>(m)], col, nmm, nmm) =
          -Matrix::Identity(nmm, nmm);
      cs.groups.push_back({'c', col, nmm, GroupKind::SlackNeg});
      col += nmm;
    }
    for (int m = 0; m < M; ++m)
      cs.C.block(consensus_row(m), col, p, p) = -Matrix::Identity(p, p);
    cs.groups.push_back({'c', col, p, GroupKind::Prox});
  }
  return cs;
}

inline Vector constraint_residual(const ConstraintSystem& cs, const Vector& a,
                                  const Vector& b, const Vector& c) {
  return cs.A * a + cs.B * b + cs.C * c - cs.e;
}

// ---------------------------------------------------------------------------
// packing solver states into the analysis coordinates
// ---------------------------------------------------------------------------
// The schemes write the Lagrangian with +d'(beta_b - beta); the analysis writes
// -d'(Aa + Bb + Cc - e). Matching terms maps the consensus dual with a sign
// flip and keeps the residual dual, for both orderings.

struct PackedIterate {
  Vector a, b, c, d;
  Vector g() const {
    Vector out(b.size() + c.size() + d.size());
    out << b, c, d;
    return out;
  }
};

inline PackedIterate pack_iterate(const ConstraintSystem& cs, const IterateSnapshot& snap) {
  PackedIterate it;
  it.a.resize(cs.dim_a);
  it.b.resize(cs.dim_b);
  it.c.resize(cs.dim_c);
  it.d.resize(cs.dim_rows);
  const int M = cs.blocks;
  Index off = 0;
  for (int m = 0; m < M; ++m) {
    it.d.segment(static_cast<Index>(m) * cs.p, cs.p) = -snap.dual_consensus[static_cast<size_t>(m)];
  }
  off = static_cast<Index>(M) * cs.p;
  for (int m = 0; m < M; ++m) {
    it.d.segment(off, cs.nm[static_cast<size_t>(m)]) = snap.dual_resid[static_cast<size_t>(m)];
    off += cs.nm[static_cast<size_t>(m)];
  }
  if (cs.ordering == Ordering::Standard) {
    it.a.head(cs.p) = snap.beta;
    Index ao = cs.p, bo = 0, co = 0;
    for (int m = 0; m < M; ++m) {
      const Index nmm = cs.nm[static_cast<size_t>(m)];
      it.a.segment(ao, nmm) = snap.slack_pos[static_cast<size_t>(m)];
      it.b.segment(bo, nmm) = snap.slack_neg[static_cast<size_t>(m)];
      it.c.segment(co, cs.p) = snap.beta_b[static_cast<size_t>(m)];
      ao += nmm;
      bo += nmm;
      co += cs.p;
    }
  } else {
    Index ao = 0, bo = 0, co = 0;
    for (int m = 0; m < M; ++m) {
      const Index nmm = cs.nm[static_cast<size_t>(m)];
      it.a.segment(ao, cs.p) = snap.beta_b[static_cast<size_t>(m)];
      it.b.segment(bo, nmm) = snap.slack_pos[static_cast<size_t>(m)];
      it.c.segment(co, nmm) = snap.slack_neg[static_cast<size_t>(m)];
      ao += cs.p;
      bo += nmm;
      co += nmm;
    }
    it.c.segment(co, cs.p) = snap.beta;
  }
  return it;
}

// ---------------------------------------------------------------------------
// the four matrices of the convergence analysis
// ---------------------------------------------------------------------------

struct GBMatrices {
  Matrix Q, M, H, G;
  Index dim_b = 0, dim_c = 0, dim_d = 0;
  Index dim() const { return dim_b + dim_c + dim_d; }
};

inline GBMatrices build_gb_matrices(const ConstraintSystem& cs, double mu, double nu) {
  if (!(nu > 0.0 && nu < 1.0))
    throw ParamError("nu must lie in (0, 1) for positive-definite H and G");
  if (!(mu > 0.0)) throw ParamError("mu must be positive");
  GBMatrices gb;
  gb.dim_b = cs.dim_b;
  gb.dim_c = cs.dim_c;
  gb.dim_d = cs.dim_rows;
  const Index nb = gb.dim_b, nc = gb.dim_c, nd = gb.dim_d;
  const Index N = nb + nc + nd;

  const Matrix BtB = cs.B.transpose() * cs.B;
  const Matrix BtC = cs.B.transpose() * cs.C;
  const Matrix CtB = BtC.transpose();
  const Matrix CtC = cs.C.transpose() * cs.C;
  const Matrix BtB_inv_BtC = BtB.ldlt().solve(BtC);

  gb.Q = Matrix::Zero(N, N);
  gb.Q.block(0, 0, nb, nb) = mu * BtB;
  gb.Q.block(nb, 0, nc, nb) = mu * CtB;
  gb.Q.block(nb, nb, nc, nc) = mu * CtC;
  gb.Q.block(nb + nc, 0, nd, nb) = -cs.B;
  gb.Q.block(nb + nc, nb, nd, nc) = -cs.C;
  gb.Q.block(nb + nc, nb + nc, nd, nd) = Matrix::Identity(nd, nd) / mu;

  gb.M = Matrix::Zero(N, N);
  gb.M.block(0, 0, nb, nb) = nu * Matrix::Identity(nb, nb);
  gb.M.block(0, nb, nb, nc) = -nu * BtB_inv_BtC;
  gb.M.block(nb, nb, nc, nc) = nu * Matrix::Identity(nc, nc);
  gb.M.block(nb + nc, 0, nd, nb) = -mu * cs.B;
  gb.M.block(nb + nc, nb, nd, nc) = -mu * cs.C;
  gb.M.block(nb + nc, nb + nc, nd, nd) = Matrix::Identity(nd, nd);

  gb.H = Matrix::Zero(N, N);
  gb.H.block(0, 0, nb, nb) = (mu / nu) * BtB;
  gb.H.block(0, nb, nb, nc) = (mu / nu) * BtC;
  gb.H.block(nb, 0, nc, nb) = (mu / nu) * CtB;
  gb.H.block(nb, nb, nc, nc) = (mu / nu) * (CtC + CtB * BtB_inv_BtC);
  gb.H.block(nb + nc, nb + nc, nd, nd) = Matrix::Identity(nd, nd) / mu;

  gb.G = Matrix::Zero(N, N);
  gb.G.block(0, 0, nb, nb) = (1.0 - nu) * mu * BtB;
  gb.G.block(nb, nb, nc, nc) = (1.0 - nu) * mu * CtC;
  gb.G.block(nb + nc, nb + nc, nd, nd) = Matrix::Identity(nd, nd) / mu;
  return gb;
}

inline double h_norm(const Matrix& H, const Vector& u) {
  const double q = u.dot(H * u);
  return std::sqrt(std::max(q, 0.0));
}

struct HNormTrace {
  std::vector<double> step;      // ||g^k - g^{k+1}||_H
  std::vector<double> to_limit;  // ||g^k - g_limit||_H
};

inline HNormTrace h_norm_trace(const std::vector<Vector>& g_seq, const GBMatrices& gb,
                               const Vector& g_limit) {
  HNormTrace out;
  if (g_seq.empty()) return out;
  if (g_seq.front().size() != gb.dim() || g_limit.size() != gb.dim())
    throw ParamError("h_norm_trace: iterate dimension does not match the matrices");
  for (size_t k = 0; k + 1 < g_seq.size(); ++k)
    out.step.push_back(h_norm(gb.H, g_seq[k] - g_seq[k + 1]));
  for (const Vector& g : g_seq) out.to_limit.push_back(h_norm(gb.H, g - g_limit));
  return out;
}

// ---------------------------------------------------------------------------
// reference iterator: the two-step prediction/correction form, executed
// literally on the assembled matrices (independent of the solver path)
// ---------------------------------------------------------------------------

struct PCState {
  Vector a, b, c, d;  // analysis convention
};

inline PCState pc_initial_state(const ConstraintSystem& cs, double init_value) {
  PCState s;
  s.a = Vector::Constant(cs.dim_a, init_value);
  s.b = Vector::Constant(cs.dim_b, init_value);
  s.c = Vector::Constant(cs.dim_c, init_value);
  // scheme duals start at init_value; consensus rows flip sign under the mapping
  s.d = Vector::Constant(cs.dim_rows, init_value);
  s.d.head(static_cast<Index>(cs.blocks) * cs.p).setConstant(-init_value);
  return s;
}

namespace detail {

//! Minimize theta(x) - x'K'd + mu/2 ||K x + s||^2 for one variable group, where
//! K is the group's column block, s collects the fixed rows and theta is the
//! group's own term. Nonsmooth groups rely on K'K being a scaled identity,
//! which is checked rather than assumed.
inline Vector pc_group_argmin(const Matrix& K, const Vector& s, const Vector& d, double mu,
                              GroupKind kind, const Vector& prox_weights, double tau) {
  const Matrix KtK = K.transpose() * K;
  const Vector lin = K.transpose() * d / mu - K.transpose() * s;  // = KtK * v
  if (kind == GroupKind::Smooth)
    return KtK.ldlt().solve(lin);
  const double scale = KtK.diagonal().mean();
  if ((KtK - scale * Matrix::Identity(KtK.rows(), KtK.cols())).cwiseAbs().maxCoeff() > 1e-10)
    throw DataError("variable group quadratic is not a scaled identity");
  Vector v = lin / scale;
  Vector out(v.size());
  switch (kind) {
    case GroupKind::Prox:
      for (Index j = 0; j < v.size(); ++j)
        out[j] = soft_threshold(v[j], prox_weights[j] / (mu * scale));
      break;
    case GroupKind::SlackPos:
      out = (v.array() - tau / (mu * scale)).max(0.0).matrix();
      break;
    case GroupKind::SlackNeg:
      out = (v.array() - (1.0 - tau) / (mu * scale)).max(0.0).matrix();
      break;
    case GroupKind::Smooth:
      break;  // handled above
  }
  return out;
}

inline Vector pc_sweep(const ConstraintSystem& cs, char which, const Vector& fixed_rows,
                       const Vector& d, double mu, const Vector& weights, double tau) {
  const Matrix& K_all = which == 'a' ? cs.A : (which == 'b' ? cs.B : cs.C);
  Vector out(which == 'a' ? cs.dim_a : (which == 'b' ? cs.dim_b : cs.dim_c));
  for (const VarGroup& grp : cs.groups) {
    if (grp.vec != which) continue;
    const Matrix K = K_all.middleCols(grp.offset, grp.size);
    Vector w;
    if (grp.kind == GroupKind::Prox) w = weights;
    out.segment(grp.offset, grp.size) =
        pc_group_argmin(K, fixed_rows, d, mu, grp.kind, w, tau);
  }
  return out;
}

}  // namespace detail

//! One prediction step (Gauss-Seidel sweep over a, b, c plus the auxiliary dual)
//! followed by the matrix-M correction of (b, c, d). The predicted tilde values
//! are exposed through `tilde_out` for algebraic cross-checks.
inline PCState prediction_correction_step(const PCState& s, const ConstraintSystem& cs,
                                          const GBMatrices& gb, const Vector& l1_weights,
                                          double tau, double mu,
                                          PCState* tilde_out = nullptr) {
  PCState next;
  const Vector a_rows_fixed = cs.B * s.b + cs.C * s.c - cs.e;
  next.a = detail::pc_sweep(cs, 'a', a_rows_fixed, s.d, mu, l1_weights, tau);
  const Vector b_rows_fixed = cs.A * next.a + cs.C * s.c - cs.e;
  const Vector b_tilde = detail::pc_sweep(cs, 'b', b_rows_fixed, s.d, mu, l1_weights, tau);
  const Vector c_rows_fixed = cs.A * next.a + cs.B * b_tilde - cs.e;
  const Vector c_tilde = detail::pc_sweep(cs, 'c', c_rows_fixed, s.d, mu, l1_weights, tau);
  // the auxiliary dual uses the old b and c
  const Vector d_tilde = s.d - mu * (cs.A * next.a + cs.B * s.b + cs.C * s.c - cs.e);
  if (tilde_out != nullptr) {
    tilde_out->a = next.a;
    tilde_out->b = b_tilde;
    tilde_out->c = c_tilde;
    tilde_out->d = d_tilde;
  }

  Vector g(gb.dim());
  g << s.b, s.c, s.d;
  Vector g_tilde(gb.dim());
  g_tilde << b_tilde, c_tilde, d_tilde;
  const Vector g_next = g - gb.M * (g - g_tilde);
  next.b = g_next.head(gb.dim_b);
  next.c = g_next.segment(gb.dim_b, gb.dim_c);
  next.d = g_next.tail(gb.dim_d);
  return next;
}

// ---------------------------------------------------------------------------
// trace dump/load (columnar text, one row per iteration)
// ---------------------------------------------------------------------------

inline void write_trace(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "iter,objective,consensus_resid,fit_resid,rel_change,clamp,h_norm\n";
  char buf[256];
  for (size_t k = 0; k < trace.size(); ++k) {
    const TraceRow& r = trace[k];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", k + 1,
                  r.objective, r.consensus_resid, r.fit_resid, r.rel_change, r.clamp,
                  r.h_norm);
    out << buf;
  }
}

inline std::vector<TraceRow> read_trace(std::istream& in) {
  std::vector<TraceRow> trace;
  std::string line;
  if (!std::getline(in, line)) throw DataError("trace input is empty");
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    TraceRow r;
    size_t iter = 0;
    if (std::sscanf(line.c_str(), "%zu,%lg,%lg,%lg,%lg,%lg,%lg", &iter, &r.objective,
                    &r.consensus_resid, &r.fit_resid, &r.rel_change, &r.clamp,
                    &r.h_norm) != 7)
      throw ParseError("malformed trace row", lineno);
    trace.push_back(r);
  }
  return trace;
}

}  // namespace qadmm
