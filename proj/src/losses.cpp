#include "ckd/losses.hpp"

#include <cmath>
#include <string>

#include "ckd/kernels.hpp"

namespace ckd {

std::string to_string(ComparisonMode mode) {
  switch (mode) {
    case ComparisonMode::difference: return "difference";
    case ComparisonMode::addition: return "addition";
    case ComparisonMode::interpolation: return "interpolation";
  }
  return "difference";
}

ComparisonMode parse_comparison_mode(const std::string& text) {
  if (text == "difference") return ComparisonMode::difference;
  if (text == "addition") return ComparisonMode::addition;
  if (text == "interpolation") return ComparisonMode::interpolation;
  throw InvalidInput("unknown comparison mode '" + text + "'");
}

namespace {

void require_batch(const MatrixXd& student, const MatrixXd& teacher, const char* where) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols())
    throw InvalidInput(std::string(where) + ": dimension mismatch");
  if (student.cols() == 0) throw InvalidInput(std::string(where) + ": empty batch");
}

VectorXd softmax_backward(const VectorXd& probs, const VectorXd& grad_probs, double scale) {
  const double inner = probs.dot(grad_probs);
  VectorXd out(probs.size());
  for (Eigen::Index c = 0; c < probs.size(); ++c)
    out[c] = scale * probs[c] * (grad_probs[c] - inner);
  return out;
}

struct PearsonGrad {
  double r = 0.0;
  VectorXd grad;  // d r / d u
};

PearsonGrad pearson_with_grad(const VectorXd& u, const VectorXd& v) {
  const Eigen::Index m = u.size();
  PearsonGrad out{0.0, VectorXd::Zero(m)};
  const double mu = u.sum() / double(m), mv = v.sum() / double(m);
  VectorXd a(m), b(m);
  double suv = 0, suu = 0, svv = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    a[i] = u[i] - mu;
    b[i] = v[i] - mv;
    suv += a[i] * b[i];
    suu += a[i] * a[i];
    svv += b[i] * b[i];
  }
  if (suu == 0.0 || svv == 0.0) return out;
  const double denom = std::sqrt(suu * svv);
  out.r = suv / denom;
  for (Eigen::Index i = 0; i < m; ++i) out.grad[i] = b[i] / denom - out.r * a[i] / suu;
  return out;
}

// Shared tail of every comparative loss: soften both comparisons, take KL
// in the configured direction, and return d loss / d student comparison.
struct ComparativeKl {
  double value;
  VectorXd grad;
};

ComparativeKl comparative_kl(const VectorXd& student_cmp, const VectorXd& teacher_cmp,
                             const CkdConfig& cfg) {
  const double inv_t = 1.0 / cfg.temperature;
  const VectorXd sh = student_cmp * inv_t;
  const VectorXd st = teacher_cmp * inv_t;
  const VectorXd p_student = stable_softmax(sh);
  const VectorXd p_teacher = stable_softmax(st);
  ComparativeKl out{0.0, VectorXd(sh.size())};
  if (cfg.kl_direction == KlDirection::student_first) {
    const VectorXd log_student = log_softmax(sh);
    VectorXd g(sh.size());
    double f = 0.0;  // KL(p_student || p_teacher)
    for (Eigen::Index c = 0; c < sh.size(); ++c) {
      g[c] = log_student[c] - std::log(std::max(p_teacher[c], kLogClamp));
      if (p_student[c] > 0.0) f += p_student[c] * g[c];
    }
    out.value = std::max(f, 0.0);
    for (Eigen::Index c = 0; c < sh.size(); ++c)
      out.grad[c] = inv_t * p_student[c] * (g[c] - f);
  } else {
    out.value = kl_divergence(p_teacher, p_student);
    out.grad = inv_t * (p_student - p_teacher);
  }
  return out;
}

LossOutput ckd_groups(const MatrixXd& zh_a, const MatrixXd& zh_b, const MatrixXd& z_a,
                      const MatrixXd& z_b, const CkdConfig& cfg, const char* where) {
  if (zh_a.cols() == 0 || zh_b.cols() == 0) throw InvalidInput(std::string(where) + ": empty group");
  if (zh_a.rows() != zh_b.rows() || z_a.rows() != zh_a.rows() || z_b.rows() != zh_a.rows() ||
      z_a.cols() != zh_a.cols() || z_b.cols() != zh_b.cols())
    throw InvalidInput(std::string(where) + ": dimension mismatch");
  if (cfg.k < 2) throw InvalidInput(std::string(where) + ": k must be at least 2");
  if (zh_a.cols() != (cfg.k + 1) / 2 || zh_b.cols() != cfg.k / 2)
    throw InvalidInput(std::string(where) + ": group sizes do not follow the k split");
  if (!(cfg.temperature > 0)) throw InvalidInput(std::string(where) + ": temperature must be positive");

  const VectorXd student_cmp = compare(centroid(zh_a), centroid(zh_b), cfg.comparison);
  const VectorXd teacher_cmp = compare(centroid(z_a), centroid(z_b), cfg.comparison);
  const ComparativeKl kl = comparative_kl(student_cmp, teacher_cmp, cfg);

  const Eigen::Index na = zh_a.cols(), nb = zh_b.cols();
  const VectorXd ga = kl.grad * (cfg.comparison.lambda1 / double(na));
  const VectorXd gb = kl.grad * (cfg.comparison.lambda2 / double(nb));
  LossOutput out{kl.value, MatrixXd(zh_a.rows(), na + nb)};
  for (Eigen::Index j = 0; j < na; ++j) out.grad.col(j) = ga;
  for (Eigen::Index j = 0; j < nb; ++j) out.grad.col(na + j) = gb;
  return out;
}

}  // namespace

LossOutput ce_loss(const MatrixXd& student_logits, std::span<const int> labels) {
  const Eigen::Index classes = student_logits.rows(), batch = student_logits.cols();
  if (batch == 0 || static_cast<std::size_t>(batch) != labels.size())
    throw InvalidInput("ce_loss: label count does not match batch");
  detail::require_finite(student_logits, "ce_loss");
  LossOutput out{0.0, MatrixXd(classes, batch)};
  const double inv_b = 1.0 / double(batch);
  // Same arithmetic as log_softmax, with the exponentials kept for the gradient.
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= classes) throw InvalidInput("ce_loss: label out of range");
    const double* z = student_logits.col(b).data();
    double* g = out.grad.col(b).data();
    Eigen::Index arg = 0;
    for (Eigen::Index c = 1; c < classes; ++c)
      if (z[c] > z[arg]) arg = c;
    const double peak = z[arg];
    double rest = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) {
      g[c] = c == arg ? 1.0 : std::exp(z[c] - peak);
      if (c != arg) rest += g[c];
    }
    const double log_total = std::log1p(rest), total = 1.0 + rest;
    out.value -= (z[y] - peak) - log_total;
    for (Eigen::Index c = 0; c < classes; ++c) g[c] = (g[c] / total - (c == y ? 1.0 : 0.0)) * inv_b;
  }
  out.value *= inv_b;
  return out;
}

LossOutput soft_ce_loss(const MatrixXd& student_logits, const MatrixXd& targets) {
  require_batch(student_logits, targets, "soft_ce_loss");
  const Eigen::Index classes = student_logits.rows(), batch = student_logits.cols();
  LossOutput out{0.0, MatrixXd(classes, batch)};
  const double inv_b = 1.0 / double(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const VectorXd logp = log_softmax(student_logits.col(b));
    const double mass = targets.col(b).sum();
    for (Eigen::Index c = 0; c < classes; ++c) {
      out.value -= targets(c, b) * logp[c];
      out.grad(c, b) = (mass * std::exp(logp[c]) - targets(c, b)) * inv_b;
    }
  }
  out.value *= inv_b;
  return out;
}

LossOutput kd_loss_to_probs(const MatrixXd& student_logits, const MatrixXd& teacher_probs,
                            const KdConfig& cfg) {
  require_batch(student_logits, teacher_probs, "kd_loss");
  if (!(cfg.temperature > 0)) throw InvalidInput("kd_loss: temperature must be positive");
  const double t = cfg.temperature;
  const double scale = cfg.scale_by_t2 ? t * t : 1.0;
  const Eigen::Index batch = student_logits.cols();
  const double inv_b = 1.0 / double(batch);
  LossOutput out{0.0, MatrixXd(student_logits.rows(), batch)};
  for (Eigen::Index b = 0; b < batch; ++b) {
    const VectorXd ps = stable_softmax(VectorXd(student_logits.col(b) / t));
    const VectorXd pt = teacher_probs.col(b);
    out.value += kl_divergence(pt, ps);
    out.grad.col(b) = (scale / t * inv_b) * (ps - pt);
  }
  out.value *= scale * inv_b;
  return out;
}

LossOutput kd_loss(const MatrixXd& student_logits, const MatrixXd& teacher_logits,
                   const KdConfig& cfg) {
  require_batch(student_logits, teacher_logits, "kd_loss");
  if (!(cfg.temperature > 0)) throw InvalidInput("kd_loss: temperature must be positive");
  MatrixXd probs(teacher_logits.rows(), teacher_logits.cols());
  for (Eigen::Index b = 0; b < teacher_logits.cols(); ++b)
    probs.col(b) = stable_softmax(VectorXd(teacher_logits.col(b) / cfg.temperature));
  return kd_loss_to_probs(student_logits, probs, cfg);
}

LossOutput ckd_pair_loss(const VectorXd& zh_i, const VectorXd& zh_j, const VectorXd& z_i,
                         const VectorXd& z_j, const CkdConfig& cfg) {
  if (cfg.k != 2) throw InvalidInput("ckd_pair_loss: requires k == 2");
  return ckd_groups(zh_i, zh_j, z_i, z_j, cfg, "ckd_pair_loss");
}

LossOutput ckd_group_loss(const MatrixXd& zh_a, const MatrixXd& zh_b, const MatrixXd& z_a,
                          const MatrixXd& z_b, const CkdConfig& cfg) {
  return ckd_groups(zh_a, zh_b, z_a, z_b, cfg, "ckd_group_loss");
}

LossOutput ckd_on_features(const MatrixXd& fh_a, const MatrixXd& fh_b, const MatrixXd& f_a,
                           const MatrixXd& f_b, const CkdConfig& cfg) {
  return ckd_groups(fh_a, fh_b, f_a, f_b, cfg, "ckd_on_features");
}

namespace {

struct PairGeometry {
  Eigen::Index n = 0;
  MatrixXd dist;                 // n x n
  std::vector<VectorXd> unit;    // unit[i * n + j] = (x_j - x_i) / |x_j - x_i|
  double mean_dist = 0.0;

  explicit PairGeometry(const MatrixXd& x) : n(x.cols()), dist(MatrixXd::Zero(n, n)) {
    unit.resize(static_cast<std::size_t>(n * n));
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        VectorXd diff = x.col(j) - x.col(i);
        if (i == j) {
          unit[i * n + j] = VectorXd::Zero(x.rows());
          continue;
        }
        const double d = diff.norm();
        dist(i, j) = d;
        total += d;
        unit[i * n + j] = d > 0 ? VectorXd(diff / d) : VectorXd::Zero(x.rows());
      }
    }
    mean_dist = total / double(n * (n - 1));
  }

  double cosine(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
    return unit[i * n + j].dot(unit[i * n + k]);
  }
};

}  // namespace

LossOutput rkd_loss(const MatrixXd& student, const MatrixXd& teacher, const RkdConfig& cfg) {
  require_batch(student, teacher, "rkd_loss");
  const Eigen::Index n = student.cols();
  if (n < 3) throw InvalidInput("rkd_loss: batch must contain at least 3 samples");
  const PairGeometry s(student), t(teacher);
  LossOutput out{0.0, MatrixXd::Zero(student.rows(), n)};

  // Distance term over ordered pairs, each side normalized by its own mean.
  if (s.mean_dist > 0 && t.mean_dist > 0) {
    const double pairs = double(n * (n - 1));
    MatrixXd g = MatrixXd::Zero(n, n);
    double loss = 0.0, weighted = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double e = s.dist(i, j) / s.mean_dist - t.dist(i, j) / t.mean_dist;
        loss += huber(e, cfg.delta);
        g(i, j) = huber_derivative(e, cfg.delta) / pairs;
        weighted += g(i, j) * s.dist(i, j);
      }
    }
    out.value += cfg.w_dist * loss / pairs;
    const double mu = s.mean_dist;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j || s.dist(i, j) == 0) continue;
        const double coeff = cfg.w_dist * (g(i, j) / mu - weighted / (mu * mu * pairs));
        // d |x_j - x_i| / d x_j = unit(i, j)
        out.grad.col(j) += coeff * s.unit[i * n + j];
        out.grad.col(i) -= coeff * s.unit[i * n + j];
      }
    }
  }

  // Angle term over ordered triplets (vertex i, arms j and k). A zero-length
  // arm has a zero unit vector, so its cosine is 0 and it carries no gradient.
  const double triplets = double(n * (n - 1) * (n - 2));
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const VectorXd& eij = s.unit[i * n + j];
      for (Eigen::Index k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        const double cs = s.cosine(i, j, k);
        const double ct = t.cosine(i, j, k);
        loss += huber(cs - ct, cfg.delta);
        if (s.dist(i, j) == 0 || s.dist(i, k) == 0) continue;
        const double g = cfg.w_angle * huber_derivative(cs - ct, cfg.delta) / triplets;
        if (g == 0.0) continue;
        const VectorXd& eik = s.unit[i * n + k];
        const VectorXd dj = (g / s.dist(i, j)) * (eik - cs * eij);
        const VectorXd dk = (g / s.dist(i, k)) * (eij - cs * eik);
        out.grad.col(j) += dj;
        out.grad.col(k) += dk;
        out.grad.col(i) -= dj + dk;
      }
    }
  }
  out.value += cfg.w_angle * loss / triplets;
  return out;
}

LossOutput dist_loss(const MatrixXd& student_logits, const MatrixXd& teacher_logits,
                     const KdConfig& kd, const DistConfig& cfg) {
  require_batch(student_logits, teacher_logits, "dist_loss");
  const Eigen::Index classes = student_logits.rows(), batch = student_logits.cols();
  if (batch < 2) throw InvalidInput("dist_loss: batch must contain at least 2 samples");
  if (!(kd.temperature > 0)) throw InvalidInput("dist_loss: temperature must be positive");
  const double t = kd.temperature;
  MatrixXd ys(classes, batch), yt(classes, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    ys.col(b) = stable_softmax(VectorXd(student_logits.col(b) / t));
    yt.col(b) = stable_softmax(VectorXd(teacher_logits.col(b) / t));
  }
  MatrixXd grad_y = MatrixXd::Zero(classes, batch);
  double inter = 0.0, intra = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const PearsonGrad pg = pearson_with_grad(ys.col(b), yt.col(b));
    inter += 1.0 - pg.r;
    grad_y.col(b) -= (cfg.w_inter / double(batch)) * pg.grad;
  }
  for (Eigen::Index c = 0; c < classes; ++c) {
    const PearsonGrad pg = pearson_with_grad(ys.row(c).transpose(), yt.row(c).transpose());
    intra += 1.0 - pg.r;
    grad_y.row(c) -= (cfg.w_intra / double(classes)) * pg.grad.transpose();
  }
  LossOutput out{cfg.w_inter * inter / double(batch) + cfg.w_intra * intra / double(classes),
                 MatrixXd(classes, batch)};
  for (Eigen::Index b = 0; b < batch; ++b)
    out.grad.col(b) = softmax_backward(ys.col(b), grad_y.col(b), 1.0 / t);
  return out;
}

namespace {

VectorXd one_hot(int y, int num_classes) {
  if (y < 0 || y >= num_classes) throw InvalidInput("mixup: label out of range");
  VectorXd v = VectorXd::Zero(num_classes);
  v[y] = 1.0;
  return v;
}

void require_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("mixup: lambda outside [0, 1]");
}

}  // namespace

MixupSample mixup_fixed_pair(const VectorXd& x_i, const VectorXd& x_j, const ProbVector& p_i,
                             const ProbVector& p_j, int y_i, int y_j, int num_classes,
                             double lambda) {
  require_lambda(lambda);
  if (x_i.size() != x_j.size() || p_i.size() != p_j.size() || p_i.size() != num_classes)
    throw InvalidInput("mixup_fixed_pair: dimension mismatch");
  require_prob_vector(p_i, "mixup_fixed_pair");
  require_prob_vector(p_j, "mixup_fixed_pair");
  const double mu = 1.0 - lambda;
  return {lambda * x_i + mu * x_j, lambda * p_i + mu * p_j,
          lambda * one_hot(y_i, num_classes) + mu * one_hot(y_j, num_classes)};
}

MixupSample mixup_fixed_pair_logits(const VectorXd& x_i, const VectorXd& x_j,
                                    const VectorXd& z_i, const VectorXd& z_j, int y_i, int y_j,
                                    int num_classes, double lambda, double temperature) {
  require_lambda(lambda);
  if (x_i.size() != x_j.size() || z_i.size() != z_j.size() || z_i.size() != num_classes)
    throw InvalidInput("mixup_fixed_pair_logits: dimension mismatch");
  const double mu = 1.0 - lambda;
  const VectorXd mixed = (lambda * z_i + mu * z_j) / temperature;
  return {lambda * x_i + mu * x_j, stable_softmax(mixed),
          lambda * one_hot(y_i, num_classes) + mu * one_hot(y_j, num_classes)};
}

LossOutput mixup_loss(const MatrixXd& student_logits, const MatrixXd& p_target,
                      const MatrixXd& y_soft, const KdConfig& kd, double ce_weight,
                      double kd_weight) {
  const std::pair<LossOutput, double> parts[] = {
      {soft_ce_loss(student_logits, y_soft), ce_weight},
      {kd_loss_to_probs(student_logits, p_target, kd), kd_weight}};
  return total_loss(parts);
}

AffineMap AffineMap::identity(Eigen::Index dim) {
  return {MatrixXd::Identity(dim, dim), VectorXd::Zero(dim)};
}

MatrixXd AffineMap::apply(const MatrixXd& features) const {
  if (weight.cols() != features.rows() || bias.size() != weight.rows())
    throw InvalidInput("AffineMap: dimension mismatch");
  MatrixXd out;
  matmul(weight, features, out);
  out.colwise() += bias;
  return out;
}

HintLossOutput fitnets_hint_loss(const MatrixXd& student_features, const MatrixXd& hints,
                                 const AffineMap& regressor) {
  const MatrixXd mapped = regressor.apply(student_features);
  if (mapped.rows() != hints.rows() || mapped.cols() != hints.cols() || hints.cols() == 0)
    throw InvalidInput("fitnets_hint_loss: dimension mismatch after regression");
  const double dim = double(hints.rows()), batch = double(hints.cols());
  const MatrixXd residual = mapped - hints;
  HintLossOutput out;
  out.value = residual.squaredNorm() / (dim * batch);
  const MatrixXd d_mapped = residual * (2.0 / (dim * batch));
  const MatrixXd wt = regressor.weight.transpose();
  matmul(wt, d_mapped, out.grad_features);
  out.grad_weight = MatrixXd::Zero(regressor.weight.rows(), regressor.weight.cols());
  matmul_add_bt(d_mapped, student_features, out.grad_weight);
  out.grad_bias = d_mapped.rowwise().sum();
  return out;
}

LossOutput total_loss(std::span<const std::pair<LossOutput, double>> parts) {
  if (parts.empty()) throw InvalidInput("total_loss: no parts");
  LossOutput out{0.0, MatrixXd::Zero(parts[0].first.grad.rows(), parts[0].first.grad.cols())};
  for (const auto& [loss, weight] : parts) {
    if (!(weight >= 0.0)) throw InvalidInput("total_loss: negative weight");
    if (loss.grad.rows() != out.grad.rows() || loss.grad.cols() != out.grad.cols())
      throw InvalidInput("total_loss: gradient shape mismatch");
    out.value += weight * loss.value;
    out.grad += weight * loss.grad;
  }
  return out;
}

}  // namespace ckd
