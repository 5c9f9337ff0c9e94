#include "ckd/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "ckd/kernels.hpp"

namespace ckd {

namespace {

// Child-stream ids under a run seed.
enum StreamId : std::uint64_t {
  kInitStream = 1,
  kSplitStream = 2,
  kBatchStream = 3,
  kMixStream = 4,
  kRegressorStream = 5,
  kComparisonStream = 6,
  kGroupStreamBase = 1000,
};

constexpr std::size_t kLoggedGroups = 100;

std::uint64_t hash_ids(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  ByteWriter w;
  w.u64(a.size());
  for (auto id : a) w.u64(id);
  w.u64(b.size());
  for (auto id : b) w.u64(id);
  return fingerprint64(w.buffer());
}

int argmax(const MatrixXd& m, Eigen::Index col) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.rows(); ++c)
    if (m(c, col) > m(best, col)) best = c;
  return static_cast<int>(best);
}

std::vector<int> with_io(const std::vector<int>& hidden, int input, int classes) {
  std::vector<int> widths{input};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(classes);
  return widths;
}

/// Endless stream of minibatches over positions 0..n-1, reshuffled on
/// every pass.
class BatchCursor {
 public:
  BatchCursor(std::size_t n, RngStream rng) : rng_(rng), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    pos_ = n;
  }
  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out(count);
    for (auto& slot : out) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      slot = order_[pos_++];
    }
    return out;
  }

 private:
  RngStream rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

// Trainable parameters: the network plus, for hint methods, an affine
// regressor stored as one extra layer.
struct State {
  MlpModel model;
  ParameterSet regressor;
  ParameterSet velocity;
  ParameterSet regressor_velocity;
};

struct StepStats {
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
};

struct Protocol {
  int patience = 50;
  PatienceUnit unit = PatienceUnit::epochs;
  int max_decays = 3;
  double decay_factor = 0.1;
  int max_epochs = 0;
  std::size_t steps_per_epoch = 1;
};

struct ProtocolOutcome {
  std::vector<EpochRecord> epochs;
  std::vector<DecayEvent> decays;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  std::size_t total_steps = 0;
  State best;
};

using StepFn = std::function<StepStats(State&, double lr, int epoch)>;
using EvalFn = std::function<Evaluation(const MlpModel&)>;
using RecordFn = std::function<void(const EpochRecord&)>;

// Early stopping with learning-rate decay: after `patience` evaluations
// without a strictly better validation accuracy, restore the best
// checkpoint and decay; once `max_decays` decays are spent, the next
// exhaustion stops training.
ProtocolOutcome run_protocol(const Protocol& p, State state, double lr, const StepFn& step,
                             const EvalFn& eval, const RecordFn& on_record) {
  if (p.patience < 1) throw InvalidInput("patience must be at least 1");
  if (p.steps_per_epoch < 1) throw InvalidInput("steps per epoch must be at least 1");
  ProtocolOutcome out;
  const Evaluation initial = eval(state.model);
  out.best = state;
  out.best_val_acc = initial.accuracy;
  EpochRecord first{0, lr, 0.0, 0.0, initial.loss, initial.accuracy, 0};
  out.epochs.push_back(first);
  if (on_record) on_record(first);

  int stale = 0;
  int epoch = 0;
  auto observe = [&](double acc) {
    if (acc > out.best_val_acc) {
      out.best_val_acc = acc;
      out.best_epoch = epoch;
      out.best = state;
      stale = 0;
      return false;
    }
    if (++stale < p.patience) return false;
    if (static_cast<int>(out.decays.size()) == p.max_decays) return true;
    state = out.best;
    lr *= p.decay_factor;
    stale = 0;
    out.decays.push_back({epoch, lr, out.best_val_acc, eval(state.model).accuracy});
    spdlog::debug("epoch {}: restored best checkpoint, lr -> {}", epoch, lr);
    return false;
  };

  for (bool stop = false; !stop;) {
    ++epoch;
    const double epoch_lr = lr;
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0, steps = 0;
    for (std::size_t s = 0; s < p.steps_per_epoch && !stop; ++s) {
      const StepStats st = step(state, lr, epoch);
      loss_sum += st.loss;
      correct += st.correct;
      seen += st.count;
      ++steps;
      ++out.total_steps;
      if (p.unit == PatienceUnit::steps) stop = observe(eval(state.model).accuracy);
    }
    const Evaluation ev = eval(state.model);
    EpochRecord rec{epoch,
                    epoch_lr,
                    loss_sum / double(steps),
                    seen ? double(correct) / double(seen) : 0.0,
                    ev.loss,
                    ev.accuracy,
                    out.total_steps};
    out.epochs.push_back(rec);
    if (on_record) on_record(rec);
    if (!stop && p.unit == PatienceUnit::epochs) stop = observe(ev.accuracy);
    if (p.max_epochs > 0 && epoch >= p.max_epochs) stop = true;
  }
  return out;
}

void apply_sgd(State& state, const ParameterSet& grads, const ParameterSet& reg_grads, double lr,
               double momentum, double weight_decay) {
  const SgdConfig sgd{lr, momentum, weight_decay};
  sgd_step(state.model.parameters(), grads, state.velocity, sgd);
  if (!state.regressor.empty()) sgd_step(state.regressor, reg_grads, state.regressor_velocity, sgd);
}

MatrixXd gather_cols(const MatrixXd& m, std::span<const std::size_t> cols) {
  MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(j) = m.col(cols[j]);
  return out;
}

// Sums member-slot columns back onto their distinct samples, in slot order.
MatrixXd scatter_cols(const MatrixXd& m, std::span<const std::size_t> slot, std::size_t count) {
  MatrixXd out = MatrixXd::Zero(m.rows(), static_cast<Eigen::Index>(count));
  for (std::size_t j = 0; j < slot.size(); ++j) out.col(slot[j]) += m.col(j);
  return out;
}

std::size_t count_correct(const MatrixXd& logits, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b)
    if (argmax(logits, b) == labels[b]) ++correct;
  return correct;
}

// Everything a student run needs, gathered once after warm-up.
class StudentRun {
 public:
  StudentRun(const TrainConfig& cfg, const Dataset& data, const SampleSplit& split,
             std::uint64_t seed, MatrixXd teacher_logits, MatrixXd teacher_hints)
      : cfg_(cfg),
        seed_(seed),
        x_(data.gather(split.train)),
        y_(data.gather_labels(split.train)),
        ids_(split.train),
        t_logits_(std::move(teacher_logits)),
        t_hints_(std::move(teacher_hints)),
        batches_(split.train.size(), RngStream(seed).split(kBatchStream)),
        mix_rng_(RngStream(seed).split(kMixStream)),
        cmp_rng_(RngStream(seed).split(kComparisonStream)) {
    if (cfg.method == Method::mixup_fixed) {
      t_probs_.resize(t_logits_.rows(), t_logits_.cols());
      for (Eigen::Index j = 0; j < t_logits_.cols(); ++j)
        t_probs_.col(j) = stable_softmax(VectorXd(t_logits_.col(j) / cfg.kd.temperature));
    }
  }

  StepStats step(State& state, double lr, int epoch) {
    switch (cfg_.method) {
      case Method::ckd:
      case Method::fitnets_ckd: return group_step(state, lr, epoch);
      case Method::mixup_fixed: return mixup_step(state, lr);
      default: return plain_step(state, lr);
    }
  }

  std::vector<ComparisonGroup> logged_groups;

 private:
  // Hint loss through the regressor; adds into grad_hint and reg_grads.
  double add_hint_terms(const State& state, const MatrixXd& features, const MatrixXd& hints,
                        MatrixXd& grad_hint, ParameterSet& reg_grads) const {
    const AffineMap reg{state.regressor[0].weight, state.regressor[0].bias};
    const HintLossOutput h = fitnets_hint_loss(features, hints, reg);
    const double w = cfg_.hint_weight;
    grad_hint += w * h.grad_features;
    reg_grads[0].weight += w * h.grad_weight;
    reg_grads[0].bias += w * h.grad_bias;
    return w * h.value;
  }

  StepStats finish(State& state, const MlpModel::Activations& acts, const MatrixXd& grad_logits,
                   const MatrixXd* grad_hint, const ParameterSet& reg_grads, double lr,
                   double loss, std::size_t correct, std::size_t count) {
    const ParameterSet grads = state.model.backward(acts, grad_logits, grad_hint);
    apply_sgd(state, grads, reg_grads, lr, cfg_.momentum, cfg_.weight_decay);
    if (!std::isfinite(loss)) throw NumericalDivergence("training loss became non-finite");
    return {loss, correct, count};
  }

  StepStats plain_step(State& state, double lr) {
    const auto pos = batches_.next(cfg_.batch_size);
    const MatrixXd x = gather_cols(x_, pos);
    std::vector<int> y(pos.size());
    for (std::size_t b = 0; b < pos.size(); ++b) y[b] = y_[pos[b]];
    const auto acts = state.model.forward(x);
    const MatrixXd& z = acts.logits();

    LossOutput ce = ce_loss(z, y);
    double loss = cfg_.ce_weight * ce.value;
    MatrixXd grad = cfg_.ce_weight * ce.grad;
    ParameterSet reg_grads = zeros_like(state.regressor);
    MatrixXd grad_hint;
    switch (cfg_.method) {
      case Method::kd: {
        const LossOutput kd = kd_loss(z, gather_cols(t_logits_, pos), cfg_.kd);
        loss += cfg_.kd_weight * kd.value;
        grad += cfg_.kd_weight * kd.grad;
        break;
      }
      case Method::rkd: {
        const LossOutput r = rkd_loss(z, gather_cols(t_logits_, pos), cfg_.rkd);
        loss += r.value;
        grad += r.grad;
        break;
      }
      case Method::dist: {
        const LossOutput d = dist_loss(z, gather_cols(t_logits_, pos), cfg_.kd, cfg_.dist);
        loss += d.value;
        grad += d.grad;
        break;
      }
      case Method::fitnets:
        grad_hint = MatrixXd::Zero(acts.hint().rows(), acts.hint().cols());
        loss += add_hint_terms(state, acts.hint(), gather_cols(t_hints_, pos), grad_hint, reg_grads);
        break;
      default: break;
    }
    return finish(state, acts, grad, grad_hint.size() ? &grad_hint : nullptr, reg_grads, lr, loss,
                  count_correct(z, y), y.size());
  }

  StepStats mixup_step(State& state, double lr) {
    const auto pos = batches_.next(cfg_.batch_size);
    std::vector<std::size_t> partner = pos;
    mix_rng_.shuffle(partner);
    const double lambda = mix_rng_.beta11();
    const Eigen::Index classes = t_probs_.rows();
    MatrixXd x(x_.rows(), pos.size()), p(classes, pos.size()), ys(classes, pos.size());
    std::vector<int> dominant(pos.size());
    for (std::size_t b = 0; b < pos.size(); ++b) {
      const std::size_t i = pos[b], j = partner[b];
      MixupSample m = mixup_fixed_pair(x_.col(i), x_.col(j), t_probs_.col(i), t_probs_.col(j),
                                       y_[i], y_[j], static_cast<int>(classes), lambda);
      x.col(b) = m.x_mix;
      p.col(b) = m.p_target;
      ys.col(b) = m.y_soft;
      dominant[b] = lambda >= 0.5 ? y_[i] : y_[j];
    }
    const auto acts = state.model.forward(x);
    const LossOutput l = mixup_loss(acts.logits(), p, ys, cfg_.kd, cfg_.ce_weight, cfg_.kd_weight);
    return finish(state, acts, l.grad, nullptr, zeros_like(state.regressor), lr, l.value,
                  count_correct(acts.logits(), dominant), pos.size());
  }

  StepStats group_step(State& state, double lr, int epoch) {
    if (!groups_ || group_epoch_ != epoch) {
      std::vector<std::uint64_t> positions(ids_.size());
      for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
      const std::uint64_t group_seed =
          RngStream(seed_).split(kGroupStreamBase + static_cast<std::uint64_t>(epoch)).next_u64();
      groups_.emplace(std::move(positions), SamplerConfig{cfg_.ckd.k, cfg_.group_cap, group_seed});
      group_epoch_ = epoch;
    }
    const int k = cfg_.ckd.k, na = (k + 1) / 2;
    const std::size_t count = static_cast<std::size_t>(cfg_.batch_size);
    std::vector<std::size_t> pos;
    pos.reserve(count * k);
    for (std::size_t g = 0; g < count; ++g) {
      const ComparisonGroup group = groups_->next();
      for (auto p : group.a) pos.push_back(p);
      for (auto p : group.b) pos.push_back(p);
      if (logged_groups.size() < kLoggedGroups) {
        ComparisonGroup shown;
        for (auto p : group.a) shown.a.push_back(ids_[p]);
        for (auto p : group.b) shown.b.push_back(ids_[p]);
        logged_groups.push_back(std::move(shown));
      }
    }
    // A sample may sit in several groups of one batch: run the network once
    // per distinct sample and expand to member slots afterwards.
    std::vector<std::size_t> unique = pos;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    std::vector<std::size_t> slot(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i)
      slot[i] = std::lower_bound(unique.begin(), unique.end(), pos[i]) - unique.begin();

    std::vector<int> y(pos.size());
    for (std::size_t b = 0; b < pos.size(); ++b) y[b] = y_[pos[b]];
    const auto acts = state.model.forward(gather_cols(x_, unique));
    const MatrixXd z = gather_cols(acts.logits(), slot);

    LossOutput ce = ce_loss(z, y);
    double loss = cfg_.ce_weight * ce.value;
    MatrixXd grad = cfg_.ce_weight * ce.grad;
    ParameterSet reg_grads = zeros_like(state.regressor);

    const bool on_features = cfg_.method == Method::fitnets_ckd;
    MatrixXd grad_hint, student_side, teacher_side, member_hint;
    if (on_features) {
      member_hint = gather_cols(acts.hint(), slot);
      grad_hint = MatrixXd::Zero(member_hint.rows(), member_hint.cols());
      const MatrixXd hints = gather_cols(t_hints_, pos);
      loss += add_hint_terms(state, member_hint, hints, grad_hint, reg_grads);
      student_side = AffineMap{state.regressor[0].weight, state.regressor[0].bias}.apply(member_hint);
      teacher_side = hints;
    } else {
      student_side = z;
      teacher_side = gather_cols(t_logits_, pos);
    }

    const double scale = cfg_.ckd.beta / double(count);
    MatrixXd grad_side = MatrixXd::Zero(student_side.rows(), student_side.cols());
    CkdConfig ckd = cfg_.ckd;
    for (std::size_t g = 0; g < count; ++g) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(g) * k;
      ckd.comparison = cfg_.ckd.comparison.draw(cmp_rng_);
      const LossOutput l =
          on_features
              ? ckd_on_features(student_side.middleCols(c0, na), student_side.middleCols(c0 + na, k - na),
                                teacher_side.middleCols(c0, na), teacher_side.middleCols(c0 + na, k - na), ckd)
              : ckd_group_loss(student_side.middleCols(c0, na), student_side.middleCols(c0 + na, k - na),
                               teacher_side.middleCols(c0, na), teacher_side.middleCols(c0 + na, k - na), ckd);
      loss += scale * l.value;
      grad_side.middleCols(c0, k) += scale * l.grad;
    }

    if (on_features) {
      // Back through the regressor: d/dh = W^T g, d/dW = g h^T, d/db = sum g.
      MatrixXd back;
      const MatrixXd wt = state.regressor[0].weight.transpose();
      matmul(wt, grad_side, back);
      grad_hint += back;
      matmul_add_bt(grad_side, member_hint, reg_grads[0].weight);
      reg_grads[0].bias += grad_side.rowwise().sum();
    } else {
      grad += grad_side;
    }
    const MatrixXd unique_grad = scatter_cols(grad, slot, unique.size());
    const MatrixXd unique_hint_grad = on_features ? scatter_cols(grad_hint, slot, unique.size()) : MatrixXd();
    return finish(state, acts, unique_grad, on_features ? &unique_hint_grad : nullptr, reg_grads, lr,
                  loss, count_correct(z, y), y.size());
  }

  const TrainConfig& cfg_;
  std::uint64_t seed_;
  MatrixXd x_;
  std::vector<int> y_;
  std::vector<std::size_t> ids_;
  MatrixXd t_logits_, t_hints_, t_probs_;
  BatchCursor batches_;
  RngStream mix_rng_;
  RngStream cmp_rng_;
  std::optional<GroupStream> groups_;
  int group_epoch_ = -1;
};

std::vector<std::size_t> shuffled_prefix(std::vector<std::size_t> ids, std::size_t count,
                                         RngStream rng, const char* what) {
  if (count > ids.size())
    throw InvalidInput(std::string("requested ") + std::to_string(count) + " " + what +
                       " samples but only " + std::to_string(ids.size()) + " are available");
  rng.shuffle(ids);
  ids.resize(count);
  return ids;
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::ce_only: return "ce_only";
    case Method::kd: return "kd";
    case Method::ckd: return "ckd";
    case Method::rkd: return "rkd";
    case Method::dist: return "dist";
    case Method::mixup_fixed: return "mixup_fixed";
    case Method::fitnets: return "fitnets";
    case Method::fitnets_ckd: return "fitnets_ckd";
  }
  return "ce_only";
}

Method parse_method(const std::string& text) {
  for (Method m : {Method::ce_only, Method::kd, Method::ckd, Method::rkd, Method::dist,
                   Method::mixup_fixed, Method::fitnets, Method::fitnets_ckd})
    if (text == to_string(m)) return m;
  if (text == "ce" || text == "ce-only") return Method::ce_only;
  if (text == "mixup") return Method::mixup_fixed;
  if (text == "fitnets+ckd") return Method::fitnets_ckd;
  throw InvalidInput("unknown method '" + text + "'");
}

bool uses_teacher(Method method) { return method != Method::ce_only; }
bool uses_hints(Method method) { return method == Method::fitnets || method == Method::fitnets_ckd; }
bool uses_groups(Method method) { return method == Method::ckd || method == Method::fitnets_ckd; }

SampleSplit select_samples(const Dataset& data, std::size_t budget, std::size_t val_size,
                           std::uint64_t seed) {
  if (budget < 1) throw InvalidInput("budget must be at least 1");
  const RngStream base = RngStream(seed).split(kSplitStream);
  SampleSplit split;
  split.train = shuffled_prefix(data.indices(Split::train), budget, base.split(0), "training");
  split.val = shuffled_prefix(data.indices(Split::val), val_size, base.split(1), "validation");
  split.hash = hash_ids(split.train, split.val);
  return split;
}

MlpModel init_student(const std::vector<int>& widths, std::uint64_t seed) {
  RngStream rng = RngStream(seed).split(kInitStream);
  return MlpModel(widths, rng);
}

Evaluation evaluate(const MlpModel& model, const Dataset& data, std::span<const std::size_t> ids) {
  if (ids.empty()) throw InvalidInput("evaluate: no samples");
  constexpr std::size_t kChunk = 1024;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ids.size(); start += kChunk) {
    const auto part = ids.subspan(start, std::min(kChunk, ids.size() - start));
    const MatrixXd z = model.logits(data.gather(part));
    for (std::size_t b = 0; b < part.size(); ++b) {
      const int y = data.labels[part[b]];
      if (argmax(z, b) == y) ++correct;
      loss -= log_softmax(z.col(b))[y];
    }
  }
  return {double(correct) / double(ids.size()), loss / double(ids.size())};
}

RunResult train_one(const TrainConfig& cfg, const Dataset& data, TeacherOracle* oracle,
                    std::uint64_t seed, double lr, const EpochCallback& on_epoch) {
  const auto started = std::chrono::steady_clock::now();
  if (!(lr >= 0.0)) throw InvalidInput("learning rate must be non-negative");
  if (cfg.batch_size < 1) throw InvalidInput("batch size must be at least 1");
  if (uses_teacher(cfg.method) && oracle == nullptr)
    throw InvalidInput(to_string(cfg.method) + " needs a teacher");
  if (oracle != nullptr && oracle->budget() < cfg.budget)
    throw InvalidInput("oracle budget is smaller than the configured budget");
  if (uses_groups(cfg.method) && cfg.budget < static_cast<std::size_t>(cfg.ckd.k))
    throw InvalidInput("budget is smaller than the group size k");

  RunResult result;
  result.method = cfg.method;
  result.budget = cfg.budget;
  result.seed = seed;
  result.lr = lr;
  result.steps_per_epoch = cfg.steps_per_epoch ? cfg.steps_per_epoch : cfg.budget;

  const std::size_t val_size = cfg.val_size ? cfg.val_size : std::max<std::size_t>(1, cfg.budget / 4);
  const SampleSplit split = select_samples(data, cfg.budget, val_size, seed);
  result.split_hash = split.hash;

  // Teacher warm-up: the only teacher traffic of the run.
  MatrixXd t_logits, t_hints;
  if (uses_teacher(cfg.method)) {
    const bool hints = uses_hints(cfg.method);
    for (std::size_t j = 0; j < split.train.size(); ++j) {
      const std::size_t id = split.train[j];
      TeacherOracle::Answer a = oracle->query(id, data.features.col(id), hints);
      if (j == 0) {
        t_logits.resize(a.logits.size(), split.train.size());
        if (hints) t_hints.resize(a.hint->size(), split.train.size());
      }
      t_logits.col(j) = a.logits;
      if (hints) t_hints.col(j) = *a.hint;
    }
    if (t_logits.rows() != data.num_classes)
      throw InvalidInput("teacher class count does not match the dataset");
  }

  State state;
  state.model = init_student(with_io(cfg.student_hidden, data.dim(), data.num_classes), seed);
  result.init_hash = state.model.fingerprint();
  state.velocity = zeros_like(state.model.parameters());
  if (uses_hints(cfg.method)) {
    const int in = state.model.hint_dim(), out = static_cast<int>(t_hints.rows());
    RngStream rng = RngStream(seed).split(kRegressorStream);
    DenseLayer reg{MatrixXd(out, in), VectorXd::Zero(out)};
    const double stddev = std::sqrt(1.0 / in);
    for (Eigen::Index j = 0; j < in; ++j)
      for (Eigen::Index i = 0; i < out; ++i) reg.weight(i, j) = stddev * rng.normal();
    state.regressor.push_back(std::move(reg));
    state.regressor_velocity = zeros_like(state.regressor);
  }

  StudentRun run(cfg, data, split, seed, std::move(t_logits), std::move(t_hints));
  const Protocol protocol{cfg.patience,   cfg.patience_unit, cfg.max_decays,
                          cfg.decay_factor, cfg.max_epochs,  result.steps_per_epoch};
  ProtocolOutcome outcome = run_protocol(
      protocol, std::move(state), lr,
      [&](State& s, double step_lr, int epoch) { return run.step(s, step_lr, epoch); },
      [&](const MlpModel& m) { return evaluate(m, data, split.val); },
      [&](const EpochRecord& rec) {
        if (on_epoch) on_epoch(result, rec);
      });

  result.epochs = std::move(outcome.epochs);
  result.decays = std::move(outcome.decays);
  result.best_epoch = outcome.best_epoch;
  result.best_val_acc = outcome.best_val_acc;
  result.total_steps = outcome.total_steps;
  result.best_model = std::move(outcome.best.model);
  const Evaluation test = evaluate(result.best_model, data, data.indices(Split::test));
  result.test_acc = test.accuracy;
  result.test_loss = test.loss;
  result.teacher_calls = oracle ? oracle->ledger().used() : 0;
  result.group_log = std::move(run.logged_groups);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

std::size_t select_lr(const std::vector<double>& lrs, const std::vector<double>& mean_val_acc) {
  if (lrs.empty() || lrs.size() != mean_val_acc.size())
    throw InvalidInput("select_lr: need one mean accuracy per learning rate");
  std::size_t best = 0;
  for (std::size_t i = 1; i < lrs.size(); ++i) {
    if (mean_val_acc[i] > mean_val_acc[best] ||
        (mean_val_acc[i] == mean_val_acc[best] && lrs[i] > lrs[best]))
      best = i;
  }
  return best;
}

SweepResult train_sweep(const TrainConfig& cfg, const Dataset& data, Teacher* teacher,
                        const EpochCallback& on_epoch,
                        std::vector<std::unique_ptr<TeacherOracle>>* oracles_out) {
  if (cfg.seeds.empty()) throw InvalidInput("train_sweep: no seeds");
  if (cfg.lr_grid.empty()) throw InvalidInput("train_sweep: no learning rates");
  if (uses_teacher(cfg.method) && teacher == nullptr)
    throw InvalidInput(to_string(cfg.method) + " needs a teacher");

  const std::size_t val_size = cfg.val_size ? cfg.val_size : std::max<std::size_t>(1, cfg.budget / 4);
  std::vector<std::unique_ptr<TeacherOracle>> oracles(cfg.seeds.size());
  if (uses_teacher(cfg.method)) {
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      oracles[s] = std::make_unique<TeacherOracle>(*teacher, cfg.budget, uses_hints(cfg.method));
      const SampleSplit split = select_samples(data, cfg.budget, val_size, cfg.seeds[s]);
      for (const std::size_t id : split.train)
        oracles[s]->query(id, data.features.col(id), uses_hints(cfg.method));
    }
  }

  SweepResult sweep;
  sweep.method = cfg.method;
  sweep.budget = cfg.budget;
  sweep.lrs = cfg.lr_grid;
  sweep.runs.assign(cfg.lr_grid.size(), std::vector<RunResult>(cfg.seeds.size()));

  const std::size_t tasks = cfg.lr_grid.size() * cfg.seeds.size();
  std::mutex callback_mutex;
  const EpochCallback guarded = [&](const RunResult& r, const EpochRecord& rec) {
    if (!on_epoch) return;
    std::lock_guard lock(callback_mutex);
    on_epoch(r, rec);
  };
  std::vector<std::exception_ptr> errors(tasks);
  auto run_task = [&](std::size_t t) {
    const std::size_t li = t / cfg.seeds.size(), si = t % cfg.seeds.size();
    try {
      sweep.runs[li][si] =
          train_one(cfg, data, oracles[si].get(), cfg.seeds[si], cfg.lr_grid[li], guarded);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };

  const std::size_t workers = std::min<std::size_t>(std::max(cfg.jobs, 1), tasks);
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks; ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t; (t = next++) < tasks;) run_task(t);
      });
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (const auto& per_lr : sweep.runs) {
    double sum = 0.0;
    for (const auto& r : per_lr) sum += r.best_val_acc;
    sweep.mean_val_acc.push_back(sum / double(per_lr.size()));
  }
  sweep.best_lr_index = select_lr(sweep.lrs, sweep.mean_val_acc);
  if (oracles_out) *oracles_out = std::move(oracles);
  return sweep;
}

TeacherTrainResult train_teacher(const Dataset& data, const TeacherTrainConfig& cfg,
                                 const EpochCallback& on_epoch) {
  std::vector<std::size_t> train = data.indices(Split::train);
  if (cfg.train_size > 0)
    train = shuffled_prefix(std::move(train), cfg.train_size, RngStream(cfg.seed).split(kSplitStream),
                            "training");
  const std::vector<std::size_t> val = data.indices(Split::val);
  if (train.empty() || val.empty()) throw InvalidInput("train_teacher: empty train or validation split");

  const MatrixXd x = data.gather(train);
  const std::vector<int> y = data.gather_labels(train);
  State state;
  state.model = init_student(with_io(cfg.hidden, data.dim(), data.num_classes), cfg.seed);
  state.velocity = zeros_like(state.model.parameters());
  BatchCursor batches(train.size(), RngStream(cfg.seed).split(kBatchStream));
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  RunResult info;
  info.budget = train.size();
  info.seed = cfg.seed;
  info.lr = cfg.lr;
  info.steps_per_epoch = (train.size() + batch - 1) / batch;

  const Protocol protocol{cfg.patience, PatienceUnit::epochs, cfg.max_decays, 0.1, cfg.max_epochs,
                          info.steps_per_epoch};
  ProtocolOutcome outcome = run_protocol(
      protocol, std::move(state), cfg.lr,
      [&](State& s, double lr, int) {
        const auto pos = batches.next(batch);
        std::vector<int> yb(pos.size());
        for (std::size_t b = 0; b < pos.size(); ++b) yb[b] = y[pos[b]];
        const auto acts = s.model.forward(gather_cols(x, pos));
        const LossOutput ce = ce_loss(acts.logits(), yb);
        apply_sgd(s, s.model.backward(acts, ce.grad), {}, lr, 0.9, 5e-4);
        return StepStats{ce.value, count_correct(acts.logits(), yb), yb.size()};
      },
      [&](const MlpModel& m) { return evaluate(m, data, val); },
      [&](const EpochRecord& rec) {
        if (on_epoch) on_epoch(info, rec);
      });

  TeacherTrainResult result;
  result.model = std::move(outcome.best.model);
  result.epochs = std::move(outcome.epochs);
  result.best_val_acc = outcome.best_val_acc;
  result.test_acc = evaluate(result.model, data, data.indices(Split::test)).accuracy;
  return result;
}

}  // namespace ckd
