#pragma once

// Distillation objectives with analytic gradients.
//
// Batches are C x B matrices, one sample per column. Every loss returns its
// value and the gradient with respect to the student inputs only; teacher
// quantities are constants. Batched losses are means over the batch.

#include <span>
#include <utility>
#include <vector>

#include "ckd/core_math.hpp"

namespace ckd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LossOutput {
  double value = 0.0;
  MatrixXd grad;  // same shape as the student input
};

enum class KlDirection { student_first, teacher_first };

struct CkdConfig {
  int k = 3;
  ComparisonSpec comparison = ComparisonSpec::difference();
  double beta = 1.0;
  KlDirection kl_direction = KlDirection::student_first;
  double temperature = 1.0;
};

struct KdConfig {
  double temperature = 4.0;
  bool scale_by_t2 = true;
};

struct RkdConfig {
  double w_dist = 25.0;
  double w_angle = 50.0;
  double delta = 1.0;
};

struct DistConfig {
  double w_inter = 1.0;
  double w_intra = 1.0;
};

/// Cross-entropy against hard labels, averaged over the batch.
LossOutput ce_loss(const MatrixXd& student_logits, std::span<const int> labels);
/// Cross-entropy against soft targets (columns are distributions).
LossOutput soft_ce_loss(const MatrixXd& student_logits, const MatrixXd& targets);

/// T^2 KL(softmax(z/T) || softmax(z_hat/T)), averaged over the batch.
LossOutput kd_loss(const MatrixXd& student_logits, const MatrixXd& teacher_logits,
                   const KdConfig& cfg = {});
/// Same, against fixed teacher probabilities that are already softened.
LossOutput kd_loss_to_probs(const MatrixXd& student_logits, const MatrixXd& teacher_probs,
                            const KdConfig& cfg = {});

/// KL between softmax(phi(zh_i, zh_j)/T) and softmax(phi(z_i, z_j)/T).
/// `cfg.comparison` must already carry fixed weights (see ComparisonSpec::draw).
/// grad columns: d/dzh_i, d/dzh_j. Requires cfg.k == 2.
LossOutput ckd_pair_loss(const VectorXd& zh_i, const VectorXd& zh_j, const VectorXd& z_i,
                         const VectorXd& z_j, const CkdConfig& cfg);

/// Group form: centroids of each side replace the single samples. Members are
/// columns; grad columns are the A members followed by the B members.
LossOutput ckd_group_loss(const MatrixXd& zh_a, const MatrixXd& zh_b, const MatrixXd& z_a,
                          const MatrixXd& z_b, const CkdConfig& cfg);

/// The group pipeline applied to intermediate features.
LossOutput ckd_on_features(const MatrixXd& fh_a, const MatrixXd& fh_b, const MatrixXd& f_a,
                           const MatrixXd& f_b, const CkdConfig& cfg);

/// Distance (weight w_dist) plus angle (weight w_angle) relational loss over
/// ordered pairs and ordered triplets of distinct samples. Needs B >= 3.
LossOutput rkd_loss(const MatrixXd& student, const MatrixXd& teacher, const RkdConfig& cfg = {});

/// Inter-sample (per column) and intra-class (per row) Pearson matching of
/// temperature-softened probabilities. Needs B >= 2.
LossOutput dist_loss(const MatrixXd& student_logits, const MatrixXd& teacher_logits,
                     const KdConfig& kd = {}, const DistConfig& cfg = {});

struct MixupSample {
  VectorXd x_mix;
  ProbVector p_target;
  ProbVector y_soft;
};

/// Fixed-teacher mixup of two cached samples: no new teacher call.
MixupSample mixup_fixed_pair(const VectorXd& x_i, const VectorXd& x_j, const ProbVector& p_i,
                             const ProbVector& p_j, int y_i, int y_j, int num_classes,
                             double lambda);

/// Variant that mixes raw teacher logits and softens the mixture at T.
MixupSample mixup_fixed_pair_logits(const VectorXd& x_i, const VectorXd& x_j,
                                    const VectorXd& z_i, const VectorXd& z_j, int y_i, int y_j,
                                    int num_classes, double lambda, double temperature);

/// CE(y_soft) * ce_weight + KD(p_target) * kd_weight over a batch.
LossOutput mixup_loss(const MatrixXd& student_logits, const MatrixXd& p_target,
                      const MatrixXd& y_soft, const KdConfig& kd, double ce_weight = 1.0,
                      double kd_weight = 1.0);

/// Affine hint regressor from student-feature space to teacher-hint space.
struct AffineMap {
  MatrixXd weight;  // D_teacher x D_student
  VectorXd bias;

  static AffineMap identity(Eigen::Index dim);
  MatrixXd apply(const MatrixXd& features) const;
};

struct HintLossOutput {
  double value = 0.0;
  MatrixXd grad_features;  // d/d f_hat
  MatrixXd grad_weight;
  VectorXd grad_bias;
};

/// (1/D) || W f_hat + b - hint ||^2, averaged over the batch.
HintLossOutput fitnets_hint_loss(const MatrixXd& student_features, const MatrixXd& hints,
                                 const AffineMap& regressor);

/// Weighted sum of losses on the same student input.
LossOutput total_loss(std::span<const std::pair<LossOutput, double>> parts);

}  // namespace ckd
