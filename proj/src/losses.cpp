#include "privdistill/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace privdistill {

std::string to_string(LossKind kind) { return kind == LossKind::RankBce ? "rankbce" : "ranknet"; }

LossKind parse_loss_kind(const std::string& text) {
  if (text == "rankbce") return LossKind::RankBce;
  if (text == "ranknet") return LossKind::RankNet;
  throw LossError("unknown loss '" + text + "' (expected rankbce or ranknet)");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw LossError(std::string("non-finite ") + what);
}

// Cross entropy between sigmoid(s) and target t, written as softplus(s) - t*s.
inline double bce_term(double s, double t) { return softplus(s) - t * s; }

double bce_accumulate(std::span<const double> scores, std::span<const double> targets, std::span<double> grad,
                      double weight) {
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    loss += bce_term(scores[i], targets[i]);
    grad[i] += weight * (sigmoid(scores[i]) - targets[i]);
  }
  return loss;
}

double ranknet_accumulate(std::span<const double> scores, std::span<const double> targets, std::span<double> grad,
                          double weight, bool distinct_only) {
  double loss = 0.0;
  const std::size_t n = scores.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (distinct_only && targets[i] == targets[j]) continue;
      const double target = std::clamp((targets[i] - targets[j] + 1.0) * 0.5, 0.0, 1.0);
      const double d = scores[i] - scores[j];
      loss += bce_term(d, target);
      const double g = weight * (sigmoid(d) - target);
      grad[i] += g;
      grad[j] -= g;
    }
  }
  return loss;
}

void check_offsets(std::span<const std::size_t> offsets, std::size_t n) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != n)
    throw LossError("group offsets must start at 0 and end at the document count");
  for (std::size_t g = 1; g < offsets.size(); ++g)
    if (offsets[g] < offsets[g - 1]) throw LossError("group offsets must be non-decreasing");
}

void check_batch(const LossBatch& b) {
  check_offsets(b.group_offsets, b.scores.size());
  if (b.labels.size() != b.scores.size()) throw LossError("labels do not cover the batch");
  if (b.in_data_scope.size() + 1 != b.group_offsets.size()) throw LossError("data-scope flags do not match groups");
  check_finite(b.scores, "score");
}

// Adds weight * d(loss)/d(scores) into grad and returns the unweighted loss.
double accumulate(const LossBatch& b, std::span<const double> targets, LossKind kind, bool distinct_only,
                  bool data_scope_only, std::span<double> grad, double weight) {
  double loss = 0.0;
  for (std::size_t g = 0; g + 1 < b.group_offsets.size(); ++g) {
    if (data_scope_only && !b.in_data_scope[g]) continue;
    const std::size_t lo = b.group_offsets[g];
    const std::size_t len = b.group_offsets[g + 1] - lo;
    auto s = b.scores.subspan(lo, len);
    auto t = targets.subspan(lo, len);
    auto gr = grad.subspan(lo, len);
    loss += kind == LossKind::RankBce ? bce_accumulate(s, t, gr, weight)
                                      : ranknet_accumulate(s, t, gr, weight, distinct_only);
  }
  return loss;
}

std::vector<double> teacher_targets(std::span<const double> logits, std::size_t n) {
  if (logits.size() != n) throw LossError("teacher predictions missing for some documents");
  check_finite(logits, "teacher prediction");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid(logits[i]);
  return out;
}

}  // namespace

LossGrad rank_bce(std::span<const double> scores, std::span<const double> targets) {
  if (scores.size() != targets.size()) throw LossError("score and target lengths differ");
  check_finite(scores, "score");
  for (double t : targets)
    if (!(t >= 0.0 && t <= 1.0)) throw LossError("RankBCE target outside [0, 1]");
  LossGrad out;
  out.grad.assign(scores.size(), 0.0);
  out.loss = bce_accumulate(scores, targets, out.grad, 1.0);
  return out;
}

LossGrad rank_net(std::span<const double> scores, std::span<const double> targets,
                  std::span<const std::size_t> group_offsets, bool distinct_targets_only) {
  if (scores.size() != targets.size()) throw LossError("score and target lengths differ");
  check_offsets(group_offsets, scores.size());
  check_finite(scores, "score");
  check_finite(targets, "target");
  LossGrad out;
  out.grad.assign(scores.size(), 0.0);
  for (std::size_t g = 0; g + 1 < group_offsets.size(); ++g) {
    const std::size_t lo = group_offsets[g];
    const std::size_t len = group_offsets[g + 1] - lo;
    out.loss += ranknet_accumulate(scores.subspan(lo, len), targets.subspan(lo, len),
                                   std::span<double>(out.grad).subspan(lo, len), 1.0, distinct_targets_only);
  }
  return out;
}

void DistillationConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw LossError("alpha must lie in [0, 1]");
  if (teacher_count < 1) throw LossError("teacher_count must be at least 1");
}

LossGrad data_loss(const LossBatch& batch, LossKind kind, bool distinct_targets_only) {
  check_batch(batch);
  for (double y : batch.labels)
    if (!(y >= 0.0 && y <= 1.0)) throw LossError("labels must lie in [0, 1]");
  LossGrad out;
  out.grad.assign(batch.scores.size(), 0.0);
  out.loss = accumulate(batch, batch.labels, kind, distinct_targets_only, true, out.grad, 1.0);
  return out;
}

LossGrad teacher_loss(const LossBatch& batch, std::span<const double> teacher_logits, LossKind kind,
                      bool distinct_targets_only) {
  check_batch(batch);
  const auto targets = teacher_targets(teacher_logits, batch.scores.size());
  LossGrad out;
  out.grad.assign(batch.scores.size(), 0.0);
  out.loss = accumulate(batch, targets, kind, distinct_targets_only, false, out.grad, 1.0);
  return out;
}

DistillationLoss multi_teacher_loss(const LossBatch& batch, const std::vector<std::span<const double>>& teacher_logits,
                                    const DistillationConfig& cfg) {
  cfg.validate();
  if (teacher_logits.empty()) throw LossError("at least one teacher is required");
  check_batch(batch);
  const std::size_t n = batch.scores.size();

  DistillationLoss out;
  out.grad.assign(n, 0.0);
  std::vector<double> data_grad(n, 0.0);
  out.data_loss = accumulate(batch, batch.labels, cfg.loss_kind, cfg.distinct_targets_only, true, data_grad, 1.0);

  // Per-teacher gradients are summed in teacher order, then scaled once.
  std::vector<double> teacher_grad(n, 0.0);
  double teacher_sum = 0.0;
  for (const auto& logits : teacher_logits) {
    const auto targets = teacher_targets(logits, n);
    teacher_sum += accumulate(batch, targets, cfg.loss_kind, cfg.distinct_targets_only, false, teacher_grad, 1.0);
  }
  const double inv_teachers = 1.0 / static_cast<double>(teacher_logits.size());
  out.teacher_loss = teacher_sum * inv_teachers;

  const double a = cfg.alpha;
  const double b = (1.0 - cfg.alpha) * inv_teachers;
  for (std::size_t i = 0; i < n; ++i) out.grad[i] = a * data_grad[i] + b * teacher_grad[i];
  out.total = a * out.data_loss + (1.0 - a) * out.teacher_loss;
  return out;
}

DistillationLoss distillation_loss(const LossBatch& batch, std::span<const double> teacher_logits,
                                   const DistillationConfig& cfg) {
  return multi_teacher_loss(batch, {teacher_logits}, cfg);
}

LossScaleReport loss_scale_report(double data_loss, double teacher_loss, double alpha) {
  if (!std::isfinite(data_loss) || !std::isfinite(teacher_loss)) throw LossError("loss values must be finite");
  LossScaleReport r;
  r.data_loss = data_loss;
  r.teacher_loss = teacher_loss;
  r.alpha = alpha;
  r.data_share = alpha * data_loss;
  r.teacher_share = (1.0 - alpha) * teacher_loss;
  if (teacher_loss == 0.0) r.ratio = 0.0;
  else if (data_loss == 0.0) r.ratio = std::numeric_limits<double>::infinity();
  else r.ratio = teacher_loss / data_loss;
  return r;
}

}  // namespace privdistill
