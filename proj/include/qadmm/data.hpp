#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qadmm/core.hpp"

namespace qadmm {

// ---------------------------------------------------------------------------
// normal CDF / quantile
// ---------------------------------------------------------------------------

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

inline double norm_pdf(double x) { return 0.3989422804014326779 * std::exp(-0.5 * x * x); }

//! Inverse standard normal CDF: rational initial guess polished by two Newton steps.
inline double norm_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw ParamError("norm_quantile: prob must lie in (0,1)");
  static const double A[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double B[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double C[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double D[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (prob < plow) {
    double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) /
        ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
  } else if (prob > 1.0 - plow) {
    double q = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) /
        ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
  } else {
    double q = prob - 0.5, r = q * q;
    x = (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q /
        (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0);
  }
  for (int it = 0; it < 2; ++it) x -= (norm_cdf(x) - prob) / norm_pdf(x);
  return x;
}

// ---------------------------------------------------------------------------
// synthetic benchmark data
// ---------------------------------------------------------------------------

//! 0-based columns of the true regression support (x6, x12, x15, x20).
inline const std::vector<Index>& synth_support() {
  static const std::vector<Index> s = {5, 11, 14, 19};
  return s;
}
inline constexpr Index kSynthHeteroIndex = 0;  // x1 drives the noise scale

struct SynthSpec {
  Index n = 0;
  Index p = 0;
  std::uint64_t seed = 0;
  double rho = 0.5;  // AR(1) correlation of the latent design
};

//! Heteroscedastic benchmark: y = x6 + x12 + x15 + x20 + 0.7 * x1 * eps with
//! latent AR(1) Gaussian design (Sigma_ij = rho^|i-j|) and x1 = Phi(latent x1).
inline Dataset synth_generate(const SynthSpec& spec) {
  if (spec.p < 20) throw ParamError("synthetic model needs p >= 20 (support reaches x20)");
  if (spec.n < 1) throw ParamError("synthetic model needs n >= 1");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double carry = spec.rho;
  const double fresh = std::sqrt(1.0 - spec.rho * spec.rho);

  Dataset out;
  out.features.resize(spec.n, spec.p);
  out.response.resize(spec.n);
  out.task = Task::Regression;
  for (Index i = 0; i < spec.n; ++i) {
    double prev = gauss(rng);
    out.features(i, 0) = norm_cdf(prev);
    for (Index j = 1; j < spec.p; ++j) {
      prev = carry * prev + fresh * gauss(rng);
      out.features(i, j) = prev;
    }
    const double eps = gauss(rng);
    double y = 0.7 * out.features(i, 0) * eps;
    for (Index j : synth_support()) y += out.features(i, j);
    out.response[i] = y;
  }
  return out;
}

//! Coefficients of the conditional tau-quantile of the synthetic model.
inline Vector synth_true_beta(Index p, double tau) {
  Vector beta = Vector::Zero(p);
  for (Index j : synth_support()) beta[j] = 1.0;
  beta[kSynthHeteroIndex] = 0.7 * norm_quantile(tau);
  return beta;
}

//! Apply the classification transform: rows scaled by their +-1 label, response 1.
inline Dataset classification_ingest(Matrix features, const Vector& labels,
                                     bool has_intercept = false) {
  if (labels.size() != features.rows()) throw DataError("label length mismatch");
  for (Index i = 0; i < features.rows(); ++i) {
    const double y = labels[i];
    if (y != 1.0 && y != -1.0) throw DataError("labels must be -1 or +1");
    features.row(i) *= y;
  }
  Dataset out;
  out.features = std::move(features);
  out.response = Vector::Ones(out.features.rows());
  out.task = Task::Classification;
  out.has_intercept = has_intercept;
  return out;
}

//! Recover the raw (untransformed) feature rows of a classification dataset.
inline Matrix untransform_features(const Dataset& data, const Vector& labels) {
  Matrix raw = data.features;
  for (Index i = 0; i < raw.rows(); ++i) raw.row(i) *= labels[i];
  return raw;
}

struct ClassificationToy {
  Dataset data;        // transformed
  Matrix raw_features; // original rows
  Vector labels;       // +-1
};

//! Linearly separable toy set: sparse hyperplane over the AR(1) design, rows
//! redrawn until their margin lands inside [min_margin, max_margin]. A finite
//! max_margin yields a narrow margin band, which keeps a regularized hinge fit
//! below the unit margin everywhere.
inline ClassificationToy synth_classification(const SynthSpec& spec, double min_margin = 0.2,
                                              double max_margin =
                                                  std::numeric_limits<double>::infinity()) {
  if (spec.p < 20) throw ParamError("synthetic model needs p >= 20");
  if (!(min_margin > 0.0) || !(max_margin > min_margin))
    throw ParamError("margin band must satisfy 0 < min < max");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double carry = spec.rho;
  const double fresh = std::sqrt(1.0 - spec.rho * spec.rho);

  Vector w = Vector::Zero(spec.p);
  for (Index j : synth_support()) w[j] = 1.0;

  ClassificationToy toy;
  toy.raw_features.resize(spec.n, spec.p);
  toy.labels.resize(spec.n);
  Vector row(spec.p);
  for (Index i = 0; i < spec.n; ++i) {
    double margin = 0.0;
    do {
      double prev = gauss(rng);
      row[0] = norm_cdf(prev);
      for (Index j = 1; j < spec.p; ++j) {
        prev = carry * prev + fresh * gauss(rng);
        row[j] = prev;
      }
      margin = row.dot(w);
    } while (std::abs(margin) < min_margin || std::abs(margin) > max_margin);
    toy.raw_features.row(i) = row;
    toy.labels[i] = margin > 0.0 ? 1.0 : -1.0;
  }
  toy.data = classification_ingest(toy.raw_features, toy.labels);
  return toy;
}

// ---------------------------------------------------------------------------
// block partitioning
// ---------------------------------------------------------------------------

//! Contiguous near-equal row split; the leading blocks absorb the remainder.
struct Partition {
  int blocks = 1;
  std::vector<Index> sizes;
  std::vector<Index> offsets;
};

inline Partition partition(Index n, int M) {
  if (M < 1) throw ParamError("block count M must be >= 1");
  if (static_cast<Index>(M) > n) throw ParamError("block count M exceeds row count");
  Partition part;
  part.blocks = M;
  const Index base = n / M;
  const Index rem = n % M;
  Index off = 0;
  for (int m = 0; m < M; ++m) {
    const Index sz = base + (m < rem ? 1 : 0);
    part.sizes.push_back(sz);
    part.offsets.push_back(off);
    off += sz;
  }
  return part;
}

inline Dataset shuffle_rows(const Dataset& data, std::uint64_t seed) {
  std::vector<Index> order(data.n());
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset out = data;
  for (Index i = 0; i < data.n(); ++i) {
    out.features.row(i) = data.features.row(order[i]);
    out.response[i] = data.response[order[i]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// file formats
// ---------------------------------------------------------------------------

inline std::uint64_t fingerprint(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const double* ptr, Index count) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(ptr);
    for (Index i = 0; i < count * static_cast<Index>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  mix(data.features.data(), data.features.size());
  mix(data.response.data(), data.response.size());
  return h;
}

struct LibsvmResult {
  Dataset data;   // transformed rows
  Vector labels;  // original +-1 labels
};

//! Parse `<label> <index>:<value> ...` lines with 1-based strictly increasing
//! indices. Labels in {-1,+1} ({0,1} is mapped). Rows are stored transformed.
inline LibsvmResult parse_libsvm(std::istream& in, Index p_override = 0) {
  std::vector<std::vector<std::pair<Index, double>>> rows;
  std::vector<double> labels;
  Index max_index = 0;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    double label;
    if (tok == "+1" || tok == "1") label = 1.0;
    else if (tok == "-1") label = -1.0;
    else if (tok == "0") label = -1.0;
    else throw ParseError("unknown label '" + tok + "'", lineno);
    std::vector<std::pair<Index, double>> feats;
    Index last_idx = 0;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError("malformed token '" + tok + "'", lineno);
      Index idx;
      double val;
      try {
        size_t used = 0;
        idx = static_cast<Index>(std::stoll(tok.substr(0, colon), &used));
        if (used != colon) throw std::invalid_argument("trailing");
        val = std::stod(tok.substr(colon + 1), &used);
        if (used != tok.size() - colon - 1) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError("malformed token '" + tok + "'", lineno);
      }
      if (idx < 1) throw ParseError("feature index must be >= 1", lineno);
      if (idx <= last_idx) throw ParseError("feature indices must be strictly increasing", lineno);
      last_idx = idx;
      max_index = std::max(max_index, idx);
      feats.emplace_back(idx, val);
    }
    rows.push_back(std::move(feats));
    labels.push_back(label);
  }
  if (rows.empty()) throw DataError("libsvm input has no rows");
  Index p = p_override > 0 ? p_override : max_index;
  if (p < max_index)
    throw DataError("dimension override smaller than max feature index seen");

  Matrix X = Matrix::Zero(static_cast<Index>(rows.size()), p);
  Vector y(static_cast<Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [idx, val] : rows[i]) X(static_cast<Index>(i), idx - 1) = val;
    y[static_cast<Index>(i)] = labels[i];
  }
  LibsvmResult out;
  out.data = classification_ingest(std::move(X), y);
  out.labels = std::move(y);
  return out;
}

inline std::string read_text_file(const std::string& path) {
  const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  if (gz) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open " + path);
    std::string content;
    char buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof buf)) > 0) content.append(buf, static_cast<size_t>(got));
    gzclose(f);
    if (got < 0) throw DataError("gzip read error in " + path);
    return content;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline LibsvmResult parse_libsvm_file(const std::string& path, Index p_override = 0) {
  std::istringstream in(read_text_file(path));
  return parse_libsvm(in, p_override);
}

//! Dense CSV with the response in the last column; header row optional.
inline Dataset parse_csv(std::istream& in, bool header = true) {
  std::string line;
  long lineno = 0;
  if (header) {
    if (!std::getline(in, line)) throw DataError("csv input is empty");
    ++lineno;
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("malformed number '" + cell + "'", lineno);
      }
    }
    if (vals.size() < 2) throw ParseError("need at least one feature and a response", lineno);
    if (!rows.empty() && vals.size() != rows.front().size())
      throw ParseError("inconsistent column count", lineno);
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError("csv input has no data rows");
  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(rows.front().size()) - 1;
  Dataset out;
  out.features.resize(n, p);
  out.response.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) out.features(i, j) = rows[i][static_cast<size_t>(j)];
    out.response[i] = rows[i].back();
  }
  return out;
}

inline Dataset parse_csv_file(const std::string& path, bool header = true) {
  std::istringstream in(read_text_file(path));
  return parse_csv(in, header);
}

inline void write_csv(std::ostream& out, const Dataset& data, bool header = true) {
  char buf[64];
  if (header) {
    for (Index j = 0; j < data.p(); ++j) out << 'x' << (j + 1) << ',';
    out << "y\n";
  }
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.p(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, j));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", data.response[i]);
    out << buf << '\n';
  }
}

inline void write_libsvm(std::ostream& out, const Matrix& raw_features, const Vector& labels) {
  char buf[64];
  for (Index i = 0; i < raw_features.rows(); ++i) {
    out << (labels[i] > 0 ? "+1" : "-1");
    for (Index j = 0; j < raw_features.cols(); ++j) {
      const double v = raw_features(i, j);
      if (v == 0.0) continue;
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ' ' << (j + 1) << ':' << buf;
    }
    out << '\n';
  }
}

}  // namespace qadmm
