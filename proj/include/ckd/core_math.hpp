#pragma once

// Numerically stable primitives shared by every module.
//
// Conventions: vectors are Eigen column vectors. The statistics routines
// (pearson, correlation_matrix, singular_values) take observations in rows,
// the way a data matrix is usually written. Everything that touches a
// network (losses, MLP) stores one sample per column instead.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ckd/errors.hpp"
#include "ckd/rng.hpp"

namespace ckd {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using LogitVector = Vector<double>;
using ProbVector = Vector<double>;
using FeatureVector = Vector<double>;

inline constexpr double kLogClamp = 1e-12;

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& x, const char* where) {
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (!std::isfinite(static_cast<double>(x(i, j))))
        throw InvalidInput(std::string(where) + ": non-finite input");
}

template <typename A, typename B>
void require_same_size(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                       const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidInput(std::string(where) + ": dimension mismatch");
}

}  // namespace detail

/// softmax(z - max(z)). Throws InvalidInput on empty or non-finite input.
template <typename Derived>
Vector<typename Derived::Scalar> stable_softmax(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  if (z.size() == 0) throw InvalidInput("stable_softmax: empty input");
  detail::require_finite(z, "stable_softmax");
  Vector<Scalar> out = z;
  const Scalar peak = out.maxCoeff();
  Scalar total(0);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = std::exp(out[i] - peak);
    total += out[i];
  }
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] /= total;
  return out;
}

/// log(softmax(z)) computed without forming the probabilities.
template <typename Derived>
Vector<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  if (z.size() == 0) throw InvalidInput("log_softmax: empty input");
  detail::require_finite(z, "log_softmax");
  Vector<Scalar> out = z;
  Eigen::Index arg = 0;
  const Scalar peak = out.maxCoeff(&arg);
  // log(1 + rest) keeps full relative precision when one logit dominates.
  Scalar rest(0);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] -= peak;
    if (i != arg) rest += std::exp(out[i]);
  }
  const Scalar log_total = std::log1p(rest);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] -= log_total;
  return out;
}

template <typename Derived>
void require_prob_vector(const Eigen::MatrixBase<Derived>& p, const char* where) {
  detail::require_finite(p, where);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] < 0) throw InvalidInput(std::string(where) + ": negative probability");
    total += static_cast<double>(p[i]);
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw InvalidInput(std::string(where) + ": probabilities do not sum to 1");
}

/// KL(p || q) in nats. q is clamped below by 1e-12 before the log and
/// terms with p_c = 0 contribute nothing.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p,
                                        const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  detail::require_same_size(p, q, "kl_divergence");
  require_prob_vector(p, "kl_divergence");
  require_prob_vector(q, "kl_divergence");
  Scalar total(0);
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    if (p[c] == Scalar(0)) continue;
    const Scalar qc = std::max<Scalar>(q[c], Scalar(kLogClamp));
    total += p[c] * (std::log(p[c]) - std::log(qc));
  }
  return std::max(total, Scalar(0));
}

enum class ComparisonMode { difference, addition, interpolation };

/// phi(a, b) = lambda1 * a + lambda2 * b.
///
/// For interpolation the stored lambdas are (alpha, 1 - alpha); compare()
/// with an RngStream draws a fresh alpha ~ Beta(1, 1) per use.
struct ComparisonSpec {
  ComparisonMode mode = ComparisonMode::difference;
  double lambda1 = 1.0;
  double lambda2 = -1.0;

  static ComparisonSpec difference() { return {ComparisonMode::difference, 1.0, -1.0}; }
  static ComparisonSpec addition() { return {ComparisonMode::addition, 1.0, 1.0}; }
  static ComparisonSpec interpolation(double alpha) {
    return {ComparisonMode::interpolation, alpha, 1.0 - alpha};
  }
  static ComparisonSpec of(ComparisonMode mode) {
    switch (mode) {
      case ComparisonMode::addition: return addition();
      case ComparisonMode::interpolation: return interpolation(0.5);
      default: return difference();
    }
  }

  /// Fixed weights for one use; draws alpha when interpolating.
  ComparisonSpec draw(RngStream& rng) const {
    return mode == ComparisonMode::interpolation ? interpolation(rng.beta11()) : *this;
  }
};

std::string to_string(ComparisonMode mode);
ComparisonMode parse_comparison_mode(const std::string& text);

template <typename DA, typename DB>
Vector<typename DA::Scalar> compare(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                                    const ComparisonSpec& spec) {
  using Scalar = typename DA::Scalar;
  detail::require_same_size(a, b, "compare");
  const Scalar l1(spec.lambda1), l2(spec.lambda2);
  Vector<Scalar> out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out[i] = l1 * a[i] + l2 * b[i];
  return out;
}

template <typename Scalar>
struct Comparison {
  Vector<Scalar> values;
  ComparisonSpec used;  // the weights actually applied (records the drawn alpha)
};

template <typename DA, typename DB>
Comparison<typename DA::Scalar> compare(const Eigen::MatrixBase<DA>& a,
                                        const Eigen::MatrixBase<DB>& b,
                                        const ComparisonSpec& spec, RngStream& rng) {
  const ComparisonSpec used = spec.draw(rng);
  return {compare(a, b, used), used};
}

/// Coordinate-wise mean of the columns of `group`.
///
/// Each coordinate is summed in sorted order so the result does not depend
/// on the order of the members.
template <typename Derived>
Vector<typename Derived::Scalar> centroid(const Eigen::MatrixBase<Derived>& group) {
  using Scalar = typename Derived::Scalar;
  if (group.cols() == 0) throw InvalidInput("centroid: empty group");
  const Eigen::Index members = group.cols();
  Vector<Scalar> out(group.rows());
  if (members <= 2) {  // a + b == b + a, no ordering needed
    for (Eigen::Index i = 0; i < group.rows(); ++i)
      out[i] = (members == 1 ? group(i, 0) : group(i, 0) + group(i, 1)) / Scalar(members);
    return out;
  }
  std::vector<Scalar> column(static_cast<std::size_t>(members));
  for (Eigen::Index i = 0; i < group.rows(); ++i) {
    for (Eigen::Index j = 0; j < members; ++j) column[j] = group(i, j);
    std::sort(column.begin(), column.end());
    Scalar total(0);
    for (const Scalar v : column) total += v;
    out[i] = total / Scalar(members);
  }
  return out;
}

/// Pearson correlation. Returns 0 when either input has zero variance.
template <typename DU, typename DV>
typename DU::Scalar pearson(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
  using Scalar = typename DU::Scalar;
  if (u.size() != v.size()) throw InvalidInput("pearson: dimension mismatch");
  const Eigen::Index m = u.size();
  if (m < 2) throw InvalidInput("pearson: need at least 2 observations");
  Scalar mu(0), mv(0);
  for (Eigen::Index i = 0; i < m; ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= Scalar(m);
  mv /= Scalar(m);
  Scalar suv(0), suu(0), svv(0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Scalar a = u[i] - mu, b = v[i] - mv;
    suv += a * b;
    suu += a * a;
    svv += b * b;
  }
  if (suu == Scalar(0) || svv == Scalar(0)) return Scalar(0);
  const Scalar r = suv / std::sqrt(suu * svv);
  return std::clamp(r, Scalar(-1), Scalar(1));
}

/// Correlation between the columns of X (rows are observations). Columns
/// with zero variance get a zero row/column and a unit diagonal.
template <typename Derived>
Matrix<typename Derived::Scalar> correlation_matrix(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index m = x.rows(), c = x.cols();
  if (m < 2) throw InvalidInput("correlation_matrix: need at least 2 rows");
  Matrix<Scalar> centered = x;
  for (Eigen::Index j = 0; j < c; ++j) {
    Scalar mean(0);
    for (Eigen::Index i = 0; i < m; ++i) mean += centered(i, j);
    mean /= Scalar(m);
    for (Eigen::Index i = 0; i < m; ++i) centered(i, j) -= mean;
  }
  Matrix<Scalar> out = Matrix<Scalar>::Zero(c, c);
  Vector<Scalar> norm2(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    Scalar s(0);
    for (Eigen::Index i = 0; i < m; ++i) s += centered(i, j) * centered(i, j);
    norm2[j] = s;
  }
  for (Eigen::Index a = 0; a < c; ++a) {
    out(a, a) = Scalar(1);
    for (Eigen::Index b = a + 1; b < c; ++b) {
      Scalar r(0);
      if (norm2[a] != Scalar(0) && norm2[b] != Scalar(0)) {
        Scalar s(0);
        for (Eigen::Index i = 0; i < m; ++i) s += centered(i, a) * centered(i, b);
        r = std::clamp(s / std::sqrt(norm2[a] * norm2[b]), Scalar(-1), Scalar(1));
      }
      out(a, b) = r;
      out(b, a) = r;
    }
  }
  return out;
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, iterated
/// until the off-diagonal Frobenius norm is at most `tolerance` times the
/// full norm. Returned in descending order.
template <typename Scalar>
Vector<Scalar> symmetric_eigenvalues(Matrix<Scalar> a, double tolerance = 1e-10,
                                     int max_sweeps = 100) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw InvalidInput("symmetric_eigenvalues: matrix not square");
  auto frob = [&](bool off_only) {
    Scalar s(0);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (!off_only || i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  const Scalar total = frob(false);
  for (int sweep = 0; sweep < max_sweeps && total > Scalar(0); ++sweep) {
    if (frob(true) <= Scalar(tolerance) * total) break;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar tau = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (tau >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(tau) + std::sqrt(Scalar(1) + tau * tau));
        const Scalar cs = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar sn = t * cs;
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p), akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k), aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
      }
    }
  }
  Vector<Scalar> values = a.diagonal();
  std::sort(values.data(), values.data() + n, std::greater<Scalar>());
  return values;
}

/// Singular values, descending.
template <typename Derived>
Vector<typename Derived::Scalar> singular_values(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  detail::require_finite(x, "singular_values");
  return Eigen::JacobiSVD<Matrix<Scalar>>(x.eval()).singularValues();
}

/// 0.5 x^2 for |x| <= delta, delta (|x| - 0.5 delta) beyond.
template <typename Scalar>
Scalar huber(Scalar x, Scalar delta = Scalar(1)) {
  if (!(delta > Scalar(0))) throw InvalidInput("huber: delta must be positive");
  const Scalar ax = std::abs(x);
  return ax <= delta ? Scalar(0.5) * x * x : delta * (ax - Scalar(0.5) * delta);
}

template <typename Scalar>
Scalar huber_derivative(Scalar x, Scalar delta = Scalar(1)) {
  return std::clamp(x, -delta, delta);
}

}  // namespace ckd
