#pragma once

// Reference computations for the tests. Deliberately naive: long double,
// direct formulas, no shared code with the library beyond Eigen storage.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Real = long double;

inline std::vector<Real> softmax(const VectorXd& z, Real t = 1) {
  Real peak = z[0] / t;
  for (Eigen::Index i = 1; i < z.size(); ++i) peak = std::max<Real>(peak, z[i] / t);
  std::vector<Real> p(z.size());
  Real total = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += p[i] = std::exp(z[i] / t - peak);
  for (auto& v : p) v /= total;
  return p;
}

inline Real kl(const std::vector<Real>& p, const std::vector<Real>& q) {
  Real total = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) total += p[i] * (std::log(p[i]) - std::log(std::max<Real>(q[i], 1e-12L)));
  return std::max<Real>(total, 0);
}

inline Real mean_ce(const MatrixXd& z, const std::vector<int>& y) {
  Real total = 0;
  for (Eigen::Index b = 0; b < z.cols(); ++b) total -= std::log(softmax(z.col(b))[y[b]]);
  return total / z.cols();
}

/// T^2 KL(teacher || student) averaged over columns.
inline Real kd(const MatrixXd& zs, const MatrixXd& zt, Real t) {
  Real total = 0;
  for (Eigen::Index b = 0; b < zs.cols(); ++b) total += kl(softmax(zt.col(b), t), softmax(zs.col(b), t));
  return t * t * total / zs.cols();
}

inline std::vector<Real> mean_of(const MatrixXd& m) {
  std::vector<Real> out(m.rows(), 0);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[i] += m(i, j);
  for (auto& v : out) v /= m.cols();
  return out;
}

/// Comparative loss on group centroids: KL(student || teacher) of the
/// softened weighted comparisons.
inline Real ckd(const MatrixXd& sa, const MatrixXd& sb, const MatrixXd& ta, const MatrixXd& tb,
                Real l1, Real l2, Real t, bool student_first = true) {
  const auto csa = mean_of(sa), csb = mean_of(sb), cta = mean_of(ta), ctb = mean_of(tb);
  VectorXd s(csa.size()), u(csa.size());
  for (std::size_t i = 0; i < csa.size(); ++i) {
    s[i] = double(l1 * csa[i] + l2 * csb[i]);
    u[i] = double(l1 * cta[i] + l2 * ctb[i]);
  }
  const auto ps = softmax(s, t), pt = softmax(u, t);
  return student_first ? kl(ps, pt) : kl(pt, ps);
}

inline Real huber(Real x, Real d) {
  const Real a = std::abs(x);
  return a <= d ? 0.5L * x * x : d * (a - 0.5L * d);
}

inline Real dist2(const MatrixXd& m, Eigen::Index i, Eigen::Index j) {
  Real total = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) total += Real(m(r, i) - m(r, j)) * (m(r, i) - m(r, j));
  return std::sqrt(total);
}

inline Real cosine_at(const MatrixXd& m, Eigen::Index i, Eigen::Index j, Eigen::Index k) {
  const Real a = dist2(m, i, j), b = dist2(m, i, k);
  if (a == 0 || b == 0) return 0;
  Real dot = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) dot += Real(m(r, j) - m(r, i)) * (m(r, k) - m(r, i));
  return dot / (a * b);
}

/// Relational loss: ordered pairs and triplets of distinct samples.
inline Real rkd(const MatrixXd& s, const MatrixXd& t, Real wd, Real wa, Real delta) {
  const Eigen::Index n = s.cols();
  Real mus = 0, mut = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) {
        mus += dist2(s, i, j);
        mut += dist2(t, i, j);
      }
  mus /= n * (n - 1);
  mut /= n * (n - 1);
  Real d = 0;
  if (mus > 0 && mut > 0)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) d += huber(dist2(s, i, j) / mus - dist2(t, i, j) / mut, delta);
  Real a = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k)
        if (i != j && i != k && j != k) a += huber(cosine_at(s, i, j, k) - cosine_at(t, i, j, k), delta);
  return wd * d / (n * (n - 1)) + wa * a / (n * (n - 1) * (n - 2));
}

inline Real pearson(const std::vector<Real>& u, const std::vector<Real>& v) {
  Real mu = 0, mv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= u.size();
  mv /= v.size();
  Real suv = 0, suu = 0, svv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    suv += (u[i] - mu) * (v[i] - mv);
    suu += (u[i] - mu) * (u[i] - mu);
    svv += (v[i] - mv) * (v[i] - mv);
  }
  if (suu == 0 || svv == 0) return 0;
  return suv / std::sqrt(suu * svv);
}

/// Inter (per column) plus intra (per class row) Pearson distance of
/// softened probabilities.
inline Real dist(const MatrixXd& zs, const MatrixXd& zt, Real t, Real w_inter, Real w_intra) {
  const Eigen::Index c = zs.rows(), b = zs.cols();
  std::vector<std::vector<Real>> ps(b), pt(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    ps[j] = softmax(zs.col(j), t);
    pt[j] = softmax(zt.col(j), t);
  }
  Real inter = 0, intra = 0;
  for (Eigen::Index j = 0; j < b; ++j) inter += 1 - pearson(ps[j], pt[j]);
  for (Eigen::Index r = 0; r < c; ++r) {
    std::vector<Real> u(b), v(b);
    for (Eigen::Index j = 0; j < b; ++j) {
      u[j] = ps[j][r];
      v[j] = pt[j][r];
    }
    intra += 1 - pearson(u, v);
  }
  return w_inter * inter / b + w_intra * intra / c;
}

/// Central differences of a scalar function of a matrix.
inline MatrixXd numeric_gradient(const std::function<double(const MatrixXd&)>& f, MatrixXd x,
                                 double h = 1e-5) {
  MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f(x);
    x.data()[i] = keep - h;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), with a floor so two near-zero gradients agree.
inline double relative_error(const MatrixXd& a, const MatrixXd& b, double floor = 1e-8) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

/// Number of eigenvalues of symmetric `a` below `sigma`: the count of
/// negative pivots in an unpivoted LDL^T of a - sigma I (Sylvester inertia).
inline int count_below(const MatrixXd& a, Real sigma) {
  const Eigen::Index n = a.rows();
  std::vector<std::vector<Real>> m(n, std::vector<Real>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m[i][j] = a(i, j) - (i == j ? sigma : 0);
  int negative = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    Real pivot = m[k][k];
    if (pivot == 0) pivot = 1e-300L;
    if (pivot < 0) ++negative;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const Real f = m[i][k] / pivot;
      for (Eigen::Index j = k + 1; j < n; ++j) m[i][j] -= f * m[k][j];
    }
  }
  return negative;
}

/// Eigenvalues of a symmetric matrix by inertia bisection, descending.
inline std::vector<double> eigenvalues(const MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Real bound = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Real row = 0;
    for (Eigen::Index j = 0; j < n; ++j) row += std::abs(Real(a(i, j)));
    bound = std::max(bound, row);
  }
  bound += 1;
  std::vector<double> out;
  for (Eigen::Index k = 0; k < n; ++k) {
    // The (k+1)-th smallest eigenvalue: smallest x with count_below(x) > k.
    Real lo = -bound, hi = bound;
    for (int it = 0; it < 200; ++it) {
      const Real mid = (lo + hi) / 2;
      if (count_below(a, mid) > k) hi = mid;
      else lo = mid;
    }
    out.push_back(double((lo + hi) / 2));
  }
  std::sort(out.rbegin(), out.rend());
  return out;
}

}  // namespace oracle
