#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "privdistill/dataset.hpp"
#include "privdistill/losses.hpp"
#include "privdistill/metrics.hpp"
#include "privdistill/model.hpp"

namespace privdistill {

/// Invalid or inconsistent training configuration.
class PipelineError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Strategy { Baseline, SelfDistill, GenD, Pfd, MultiTeacherPfd, PretrainFinetune };
enum class DataLossScope { PositiveGroupsOnly, AllGroups };
enum class CheckpointOn { Validation, Test };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& text);
std::string to_string(DataLossScope s);
DataLossScope parse_data_loss_scope(const std::string& text);
std::string to_string(CheckpointOn c);
CheckpointOn parse_checkpoint_on(const std::string& text);

struct TrainConfig {
  Strategy strategy = Strategy::Pfd;
  LossKind loss_kind = LossKind::RankBce;
  double alpha = 0.5;
  std::size_t epochs = 100;
  std::size_t batch_docs = 0;  // 0 selects 500 for RankBCE, 300 for RankNet
  double base_lr = 0.0;        // 0 selects 1e-3 for RankBCE, 3e-4 for RankNet
  double weight_decay = 0.005;
  WeightDecayMode decay_mode = WeightDecayMode::Decoupled;
  std::size_t lr_decay_period = 20;
  std::size_t hidden_dim = 100;
  std::size_t depth = 5;
  std::uint64_t seed = 0;
  DataLossScope data_loss_scope = DataLossScope::PositiveGroupsOnly;
  CheckpointOn checkpoint_on = CheckpointOn::Validation;
  double validation_fraction = 0.1;
  std::size_t checkpoint_k = 8;
  bool distinct_targets_only = false;  // RankNet: skip equal-target pairs
  std::size_t pretrain_epochs = 0;     // PretrainFinetune; 0 means `epochs`
  std::size_t teacher_count = 3;       // MultiTeacherPfd; teacher k trains with seed + k
  bool record_test_history = true;

  void validate() const;
  std::size_t effective_batch_docs() const;
  double effective_lr() const;
};

/// Training groups (labeled and unlabeled) plus the held-out test groups.
struct ExperimentData {
  RankingDataset train;
  RankingDataset test;
};

/// A trained network together with the dataset columns it consumes, in order.
struct ScoringModel {
  MlpModel model;
  std::vector<std::size_t> input_cols;
};

Matrix select_columns(const Matrix& features, const std::vector<std::size_t>& cols);
std::vector<std::vector<double>> score_dataset(const ScoringModel& model, const RankingDataset& dataset);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double data_loss = 0.0;
  double teacher_loss = 0.0;
  double checkpoint_metric = 0.0;
  std::vector<NdcgSummary> test;  // empty unless recorded
};

struct TrainResult {
  ScoringModel best;
  std::size_t best_epoch = 0;  // 0 only when no epoch ran
  double best_metric = 0.0;
  std::vector<EpochRecord> history;
};

/// Per-document teacher logits over every group of the training set.
struct TeacherPredictions {
  std::vector<std::vector<double>> logits;
  std::string provenance;

  /// Throws PipelineError unless every document of `dataset` is covered.
  void check_covers(const RankingDataset& dataset) const;
};

struct TeacherResult {
  TrainResult training;
  TeacherPredictions predictions;
};

/// Fit/validation split of the training groups: the validation fraction is
/// drawn separately from positive and negative groups.
struct GroupSplit {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> validation;
};
GroupSplit carve_validation(const RankingDataset& train, double fraction, std::uint64_t seed);

TrainResult train_baseline(const ExperimentData& data, const TrainConfig& cfg);

TeacherResult train_teacher_pfd(const ExperimentData& data, const TrainConfig& cfg);
TeacherResult train_teacher_gend(const ExperimentData& data, const TrainConfig& cfg);
TeacherResult train_teacher_self(const ExperimentData& data, const TrainConfig& cfg);

/// Student on regular features: alpha * data loss over the configured scope
/// plus (1 - alpha) * mean teacher loss over all training groups.
TrainResult distill_student(const ExperimentData& data, const std::vector<TeacherPredictions>& teachers,
                            const TrainConfig& cfg);

/// `auxiliary` holds one 0/1 target per training document. Pretrains for
/// cfg.pretrain_epochs on it, then finetunes for cfg.epochs on the labels.
TrainResult pretrain_finetune(const ExperimentData& data, const std::vector<std::vector<int>>& auxiliary,
                              const TrainConfig& cfg);

enum class Imputation { Zero, Mean };
std::string to_string(Imputation m);

/// Scores test groups with privileged inputs replaced by 0 or by the
/// training-set column means.
std::vector<NdcgSummary> imputation_eval(const ScoringModel& teacher, const ExperimentData& data, Imputation mode,
                                         const std::vector<std::size_t>& ks = kDefaultNdcgCutoffs);

std::vector<NdcgSummary> evaluate_model(const ScoringModel& model, const RankingDataset& dataset,
                                        const std::vector<std::size_t>& ks = kDefaultNdcgCutoffs);

/// Runs one strategy end to end (teachers included) and returns the student.
struct StrategyOutcome {
  TrainResult student;
  std::vector<TrainResult> teachers;
  std::vector<NdcgSummary> test;          // student, best checkpoint
  std::vector<NdcgSummary> teacher_test;  // first teacher, when any
};
StrategyOutcome run_strategy(const ExperimentData& data, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Ablation sweeps.

enum class SweepAxis { Alpha, TauTarget, TauPrivileged };
std::string to_string(SweepAxis a);
SweepAxis parse_sweep_axis(const std::string& text);

struct SweepSpec {
  SweepAxis axis = SweepAxis::Alpha;
  std::vector<double> values;
  std::size_t repeats = 1;
  LabelGenConfig labels;          // tau_target is overridden on the TauTarget axis
  std::size_t num_privileged = 0;  // >0: correlation split after labeling
  std::vector<Strategy> strategies;  // empty: axis default
  std::vector<std::size_t> ks = kDefaultNdcgCutoffs;
};

std::vector<Strategy> default_sweep_strategies(SweepAxis axis);

struct SweepResult {
  double value = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double positive_group_fraction = 0.0;  // training set
  std::vector<Strategy> strategies;
  std::vector<std::vector<NdcgSummary>> test;  // per strategy
  std::vector<NdcgSummary> pfd_teacher_test;    // empty if PFD not run
  std::optional<LossScaleReport> pfd_loss_scale;  // final epoch of the PFD student
};

/// Labels are regenerated from relevance (train with labels.seed, test with a
/// derived seed); the TauPrivileged axis appends z = 1(t r + G1 > t tau + G0)
/// built from the label noise and uses every original column as regular.
std::vector<SweepResult> run_ablation_sweep(const ExperimentData& relevance_data, const SweepSpec& spec,
                                            const TrainConfig& cfg);

std::string sweep_csv_header(const SweepSpec& spec, const std::vector<Strategy>& strategies);
std::string sweep_csv_row(const SweepSpec& spec, const SweepResult& row);

/// Labels both splits and appends z = 1(t r + G1 > t tau_privileged + G0),
/// sharing the label noise, as the only privileged column.
ExperimentData prepare_with_indicator(const ExperimentData& relevance_data, const LabelGenConfig& labels,
                                      double tau_privileged);

/// Labels both splits and, for num_privileged > 0, chooses privileged
/// columns by correlation on the training split.
ExperimentData prepare_labeled(const ExperimentData& relevance_data, const LabelGenConfig& labels,
                               std::size_t num_privileged);

}  // namespace privdistill
