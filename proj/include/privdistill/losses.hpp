#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace privdistill {

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LossKind { RankBce, RankNet };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

double sigmoid(double x);
/// log(1 + exp(x)) without overflow.
double softplus(double x);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d score, one per document
};

/// Sum of per-document cross entropies between sigmoid(score) and a target in [0, 1].
LossGrad rank_bce(std::span<const double> scores, std::span<const double> targets);

/// `group_offsets` holds G+1 offsets into `scores`; pairs never cross a group.
/// Sums the cross entropy between sigmoid(s_i - s_j) and clip((t_i - t_j + 1) / 2)
/// over ordered pairs i != j. With `distinct_targets_only`, equal-target pairs
/// are skipped.
LossGrad rank_net(std::span<const double> scores, std::span<const double> targets,
                  std::span<const std::size_t> group_offsets, bool distinct_targets_only = false);

struct DistillationConfig {
  double alpha = 0.5;
  LossKind loss_kind = LossKind::RankBce;
  std::size_t teacher_count = 1;
  bool distinct_targets_only = false;

  void validate() const;
};

/// Student scores over a batch of whole query groups. Groups flagged in
/// `in_data_scope` contribute to the data loss; every group contributes to the
/// teacher loss.
struct LossBatch {
  std::span<const double> scores;
  std::span<const std::size_t> group_offsets;
  std::span<const double> labels;
  std::span<const std::uint8_t> in_data_scope;
};

struct DistillationLoss {
  double total = 0.0;
  double data_loss = 0.0;
  double teacher_loss = 0.0;  // mean over teachers
  std::vector<double> grad;
};

/// Data-loss term alone: the selected loss over groups in data scope.
LossGrad data_loss(const LossBatch& batch, LossKind kind, bool distinct_targets_only = false);

/// Teacher-loss term for one teacher. Teacher outputs are logits; the
/// student is fit to their sigmoid.
LossGrad teacher_loss(const LossBatch& batch, std::span<const double> teacher_logits, LossKind kind,
                      bool distinct_targets_only = false);

/// alpha * data loss + (1 - alpha) * teacher loss.
DistillationLoss distillation_loss(const LossBatch& batch, std::span<const double> teacher_logits,
                                   const DistillationConfig& cfg);

/// As distillation_loss with the teacher term averaged over teachers.
DistillationLoss multi_teacher_loss(const LossBatch& batch,
                                    const std::vector<std::span<const double>>& teacher_logits,
                                    const DistillationConfig& cfg);

struct LossScaleReport {
  double data_loss = 0.0;
  double teacher_loss = 0.0;
  double alpha = 0.0;
  double ratio = 0.0;  // teacher / data; 0 when the teacher loss is 0
  double data_share = 0.0;
  double teacher_share = 0.0;
};

LossScaleReport loss_scale_report(double data_loss, double teacher_loss, double alpha);

inline constexpr const char* kLossScaleCsvHeader =
    "run_id,strategy,epoch,data_loss,teacher_loss,alpha,ratio,data_share,teacher_share";

}  // namespace privdistill
