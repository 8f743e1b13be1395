#include "privdistill/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "privdistill/format.hpp"
#include "privdistill/parallel.hpp"
#include "privdistill/random.hpp"

namespace privdistill {

namespace {

// stream ids under cfg.seed
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kCarveStream = 3;

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Baseline: return "baseline";
    case Strategy::SelfDistill: return "self-distill";
    case Strategy::GenD: return "gend";
    case Strategy::Pfd: return "pfd";
    case Strategy::MultiTeacherPfd: return "multi-teacher-pfd";
    case Strategy::PretrainFinetune: return "pretrain-finetune";
  }
  return "?";
}

Strategy parse_strategy(const std::string& text) {
  const auto t = lower(text);
  if (t == "baseline") return Strategy::Baseline;
  if (t == "self-distill" || t == "self" || t == "selfdistill") return Strategy::SelfDistill;
  if (t == "gend") return Strategy::GenD;
  if (t == "pfd") return Strategy::Pfd;
  if (t == "multi-teacher-pfd" || t == "multiteacherpfd") return Strategy::MultiTeacherPfd;
  if (t == "pretrain-finetune" || t == "pretrainfinetune") return Strategy::PretrainFinetune;
  throw PipelineError("unknown strategy '" + text + "'");
}

std::string to_string(DataLossScope s) { return s == DataLossScope::PositiveGroupsOnly ? "positive" : "all"; }

DataLossScope parse_data_loss_scope(const std::string& text) {
  const auto t = lower(text);
  if (t == "positive") return DataLossScope::PositiveGroupsOnly;
  if (t == "all") return DataLossScope::AllGroups;
  throw PipelineError("unknown data loss scope '" + text + "'");
}

std::string to_string(CheckpointOn c) { return c == CheckpointOn::Validation ? "valid" : "test"; }

CheckpointOn parse_checkpoint_on(const std::string& text) {
  const auto t = lower(text);
  if (t == "valid" || t == "validation") return CheckpointOn::Validation;
  if (t == "test") return CheckpointOn::Test;
  throw PipelineError("unknown checkpoint split '" + text + "'");
}

std::string to_string(Imputation m) { return m == Imputation::Zero ? "zero" : "mean"; }

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw PipelineError("alpha must lie in [0, 1]");
  if (epochs < 1) throw PipelineError("epochs must be at least 1");
  if (hidden_dim < 1 || depth < 2) throw PipelineError("network needs hidden_dim >= 1 and depth >= 2");
  if (base_lr < 0.0 || !std::isfinite(base_lr)) throw PipelineError("learning rate must be finite and >= 0");
  if (weight_decay < 0.0) throw PipelineError("weight decay must be >= 0");
  if (lr_decay_period < 1) throw PipelineError("lr decay period must be at least 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw PipelineError("validation fraction must lie in [0, 1)");
  if (checkpoint_k < 1) throw PipelineError("checkpoint cutoff must be at least 1");
  if (strategy == Strategy::MultiTeacherPfd && teacher_count < 1) throw PipelineError("teacher_count must be >= 1");
}

std::size_t TrainConfig::effective_batch_docs() const {
  if (batch_docs > 0) return batch_docs;
  return loss_kind == LossKind::RankBce ? 500 : 300;
}

double TrainConfig::effective_lr() const {
  if (base_lr > 0.0) return base_lr;
  return loss_kind == LossKind::RankBce ? 1e-3 : 3e-4;
}

Matrix select_columns(const Matrix& features, const std::vector<std::size_t>& cols) {
  Matrix out(features.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= static_cast<std::size_t>(features.cols())) throw PipelineError("column index out of range");
    out.col(static_cast<Eigen::Index>(j)) = features.col(static_cast<Eigen::Index>(cols[j]));
  }
  return out;
}

std::vector<std::vector<double>> score_dataset(const ScoringModel& model, const RankingDataset& dataset) {
  std::vector<std::vector<double>> out;
  out.reserve(dataset.groups.size());
  for (const auto& g : dataset.groups) {
    const Vector s = predict(model.model, select_columns(g.features, model.input_cols));
    out.emplace_back(s.data(), s.data() + s.size());
  }
  return out;
}

std::vector<NdcgSummary> evaluate_model(const ScoringModel& model, const RankingDataset& dataset,
                                        const std::vector<std::size_t>& ks) {
  return evaluate_dataset(score_dataset(model, dataset), dataset, ks, EvalLabels::Binary);
}

void TeacherPredictions::check_covers(const RankingDataset& dataset) const {
  if (logits.size() != dataset.groups.size())
    throw PipelineError("teacher predictions cover " + std::to_string(logits.size()) + " groups, dataset has " +
                        std::to_string(dataset.groups.size()));
  for (std::size_t g = 0; g < logits.size(); ++g) {
    if (logits[g].size() != dataset.groups[g].num_docs())
      throw PipelineError("teacher predictions miss documents of group " + dataset.groups[g].query_id);
    for (double v : logits[g])
      if (!std::isfinite(v)) throw PipelineError("non-finite teacher prediction in group " + dataset.groups[g].query_id);
  }
}

GroupSplit carve_validation(const RankingDataset& train, double fraction, std::uint64_t seed) {
  GroupSplit split;
  std::vector<std::size_t> pos, neg;
  for (std::size_t g = 0; g < train.groups.size(); ++g) (train.groups[g].has_positive_label() ? pos : neg).push_back(g);
  Rng rng(seed, kCarveStream);
  auto take = [&](std::vector<std::size_t>& idx) {
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    if (fraction > 0.0 && k == 0 && idx.size() >= 2) k = 1;
    k = std::min(k, idx.empty() ? std::size_t{0} : idx.size() - 1);
    split.validation.insert(split.validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    split.fit.insert(split.fit.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  };
  take(pos);
  take(neg);
  std::sort(split.fit.begin(), split.fit.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

namespace {

struct Record {
  Matrix x;
  std::vector<double> targets;
  std::uint8_t in_scope = 0;
  std::vector<const std::vector<double>*> teacher;
};

struct Job {
  std::vector<Record> records;
  std::vector<std::size_t> input_cols;
  std::optional<MlpModel> init;  // warm start
  const RankingDataset* checkpoint_set = nullptr;  // null: keep the final model
  const RankingDataset* test = nullptr;
  std::size_t epochs = 0;
  double alpha = 1.0;
  std::size_t teacher_count = 0;
};

TrainResult run_job(const Job& job, const TrainConfig& cfg) {
  TrainResult result;
  result.best.input_cols = job.input_cols;
  MlpModel model = job.init ? *job.init
                            : init_mlp(job.input_cols.size(), cfg.hidden_dim, cfg.depth, stream_seed(cfg.seed, kInitStream));
  if (job.init) model.version = 0;
  OptimizerState opt = init_optimizer(model, cfg.effective_lr(), cfg.weight_decay, cfg.decay_mode);
  opt.lr_decay_period = cfg.lr_decay_period;
  Rng shuffle_rng(cfg.seed, kShuffleStream);
  const std::size_t batch_docs = cfg.effective_batch_docs();
  const DistillationConfig dcfg{job.alpha, cfg.loss_kind, std::max<std::size_t>(job.teacher_count, 1),
                                cfg.distinct_targets_only};

  ScoringModel current{model, job.input_cols};
  result.best = current;
  bool have_best = false;

  std::vector<std::size_t> order(job.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto ncols = static_cast<Eigen::Index>(job.input_cols.size());

  for (std::size_t epoch = 0; epoch < job.epochs; ++epoch) {
    opt.lr = lr_at_epoch(opt.base_lr, epoch, opt.lr_decay_factor, opt.lr_decay_period);
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    EpochRecord rec;
    rec.epoch = epoch + 1;

    std::size_t start = 0;
    while (start < order.size()) {
      std::size_t end = start, rows = 0;
      while (end < order.size() && (rows < batch_docs || end == start)) rows += job.records[order[end++]].targets.size();

      Matrix x(static_cast<Eigen::Index>(rows), ncols);
      std::vector<std::size_t> offsets{0};
      std::vector<double> labels;
      std::vector<std::uint8_t> scope;
      std::vector<std::vector<double>> tlog(job.teacher_count);
      labels.reserve(rows);
      for (std::size_t i = start; i < end; ++i) {
        const Record& r = job.records[order[i]];
        x.middleRows(static_cast<Eigen::Index>(offsets.back()), r.x.rows()) = r.x;
        offsets.push_back(offsets.back() + r.targets.size());
        labels.insert(labels.end(), r.targets.begin(), r.targets.end());
        scope.push_back(r.in_scope);
        for (std::size_t t = 0; t < job.teacher_count; ++t)
          tlog[t].insert(tlog[t].end(), r.teacher[t]->begin(), r.teacher[t]->end());
      }
      start = end;

      ForwardPass fp = forward(model, x);
      std::vector<double> scores(fp.scores.data(), fp.scores.data() + fp.scores.size());
      LossBatch batch{scores, offsets, labels, scope};
      std::vector<double> grad;
      if (job.teacher_count == 0) {
        LossGrad lg = data_loss(batch, cfg.loss_kind, cfg.distinct_targets_only);
        rec.data_loss += lg.loss;
        grad = std::move(lg.grad);
      } else {
        std::vector<std::span<const double>> spans(tlog.begin(), tlog.end());
        DistillationLoss dl = multi_teacher_loss(batch, spans, dcfg);
        rec.data_loss += dl.data_loss;
        rec.teacher_loss += dl.teacher_loss;
        grad = std::move(dl.grad);
      }
      const Vector g = Eigen::Map<const Vector>(grad.data(), static_cast<Eigen::Index>(grad.size()));
      adam_step(model, backward(model, fp.cache, g), opt);
    }

    current.model = model;
    if (job.checkpoint_set) {
      const auto s = evaluate_model(current, *job.checkpoint_set, {cfg.checkpoint_k});
      rec.checkpoint_metric = s.front().mean;
    }
    if (cfg.record_test_history && job.test) rec.test = evaluate_model(current, *job.test);
    // strict improvement keeps the earliest of tied epochs; no checkpoint set keeps the last
    if (!have_best || !job.checkpoint_set || rec.checkpoint_metric > result.best_metric) {
      result.best.model = model;
      result.best_epoch = rec.epoch;
      result.best_metric = rec.checkpoint_metric;
      have_best = true;
    }
    result.history.push_back(std::move(rec));
  }
  return result;
}

std::vector<double> to_double(const std::vector<int>& v) { return {v.begin(), v.end()}; }

bool any_positive(const std::vector<double>& t) {
  return std::any_of(t.begin(), t.end(), [](double v) { return v > 0.0; });
}

struct Prepared {
  GroupSplit split;
  RankingDataset validation;
};

Prepared prepare(const ExperimentData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (!data.train.has_labels()) throw PipelineError("training set has no binary labels");
  if (cfg.checkpoint_on == CheckpointOn::Test && !data.test.has_labels())
    throw PipelineError("checkpoint selection on test needs test labels");
  Prepared p;
  if (cfg.checkpoint_on == CheckpointOn::Validation) {
    p.split = carve_validation(data.train, cfg.validation_fraction, cfg.seed);
    p.validation = select_groups(data.train, p.split.validation);
  } else {
    p.split.fit.resize(data.train.groups.size());
    std::iota(p.split.fit.begin(), p.split.fit.end(), std::size_t{0});
  }
  return p;
}

// Builds the job for labels `targets` (per training group) over fit groups.
// Groups outside the data scope are only kept when they carry teacher loss.
Job build_job(const ExperimentData& data, const TrainConfig& cfg, const Prepared& p,
              const std::vector<std::vector<double>>& targets, const std::vector<std::size_t>& cols,
              const std::vector<TeacherPredictions>& teachers, double alpha) {
  if (cols.empty()) throw PipelineError("model has no input columns");
  Job job;
  job.input_cols = cols;
  job.teacher_count = teachers.size();
  job.alpha = teachers.empty() ? 1.0 : alpha;
  job.epochs = cfg.epochs;
  job.checkpoint_set = cfg.checkpoint_on == CheckpointOn::Validation ? &p.validation : &data.test;
  job.test = data.test.groups.empty() || !data.test.has_labels() ? nullptr : &data.test;
  const bool data_weight = job.alpha > 0.0;
  const bool teacher_weight = !teachers.empty() && job.alpha < 1.0;
  std::size_t in_scope = 0;
  for (std::size_t g : p.split.fit) {
    const bool scoped = cfg.data_loss_scope == DataLossScope::AllGroups || any_positive(targets[g]);
    in_scope += scoped;
    if (!((scoped && data_weight) || teacher_weight)) continue;
    Record r;
    r.x = select_columns(data.train.groups[g].features, cols);
    r.targets = targets[g];
    r.in_scope = scoped ? 1 : 0;
    for (const auto& t : teachers) r.teacher.push_back(&t.logits[g]);
    job.records.push_back(std::move(r));
  }
  if (in_scope == 0 && data_weight) throw PipelineError("no training group falls in the data-loss scope");
  if (job.records.empty()) throw PipelineError("no training groups");
  return job;
}

std::vector<std::vector<double>> label_targets(const RankingDataset& ds) {
  std::vector<std::vector<double>> out;
  out.reserve(ds.groups.size());
  for (const auto& g : ds.groups) out.push_back(to_double(*g.binary_labels));
  return out;
}

std::vector<std::size_t> concat(std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TeacherResult train_teacher(const ExperimentData& data, const TrainConfig& cfg, const std::vector<std::size_t>& cols,
                            const std::string& tag) {
  const Prepared p = prepare(data, cfg);
  TeacherResult out;
  out.training = run_job(build_job(data, cfg, p, label_targets(data.train), cols, {}, 1.0), cfg);
  out.predictions.logits = score_dataset(out.training.best, data.train);
  out.predictions.provenance = tag + ":seed=" + std::to_string(cfg.seed) + ":epoch=" +
                               std::to_string(out.training.best_epoch);
  out.predictions.check_covers(data.train);
  return out;
}

}  // namespace

TrainResult train_baseline(const ExperimentData& data, const TrainConfig& cfg) {
  if (data.train.regular_cols.empty()) throw PipelineError("baseline needs regular columns");
  const Prepared p = prepare(data, cfg);
  return run_job(build_job(data, cfg, p, label_targets(data.train), data.train.regular_cols, {}, 1.0), cfg);
}

TeacherResult train_teacher_pfd(const ExperimentData& data, const TrainConfig& cfg) {
  if (data.train.privileged_cols.empty()) throw PipelineError("PFD teacher needs privileged columns");
  return train_teacher(data, cfg, concat(data.train.regular_cols, data.train.privileged_cols), "pfd");
}

TeacherResult train_teacher_gend(const ExperimentData& data, const TrainConfig& cfg) {
  if (data.train.privileged_cols.empty()) throw PipelineError("GenD teacher needs privileged columns");
  return train_teacher(data, cfg, data.train.privileged_cols, "gend");
}

TeacherResult train_teacher_self(const ExperimentData& data, const TrainConfig& cfg) {
  if (data.train.regular_cols.empty()) throw PipelineError("self-distillation teacher needs regular columns");
  return train_teacher(data, cfg, data.train.regular_cols, "self-distill");
}

TrainResult distill_student(const ExperimentData& data, const std::vector<TeacherPredictions>& teachers,
                            const TrainConfig& cfg) {
  if (teachers.empty()) throw PipelineError("distillation needs at least one teacher");
  if (data.train.regular_cols.empty()) throw PipelineError("student needs regular columns");
  for (const auto& t : teachers) t.check_covers(data.train);
  const Prepared p = prepare(data, cfg);
  return run_job(build_job(data, cfg, p, label_targets(data.train), data.train.regular_cols, teachers, cfg.alpha),
                 cfg);
}

TrainResult pretrain_finetune(const ExperimentData& data, const std::vector<std::vector<int>>& auxiliary,
                              const TrainConfig& cfg) {
  if (auxiliary.size() != data.train.groups.size()) throw PipelineError("auxiliary target missing or misaligned");
  for (std::size_t g = 0; g < auxiliary.size(); ++g) {
    if (auxiliary[g].size() != data.train.groups[g].num_docs())
      throw PipelineError("auxiliary target misaligned in group " + data.train.groups[g].query_id);
    for (int v : auxiliary[g])
      if (v != 0 && v != 1) throw PipelineError("auxiliary target must be 0/1");
  }
  if (data.train.regular_cols.empty()) throw PipelineError("student needs regular columns");
  if (cfg.epochs == 0 && cfg.pretrain_epochs == 0) throw PipelineError("pretraining needs at least one epoch");
  TrainConfig checked = cfg;
  checked.epochs = std::max<std::size_t>(cfg.epochs, 1);  // a zero-epoch finetune is allowed here
  const Prepared p = prepare(data, checked);
  std::vector<std::vector<double>> aux;
  aux.reserve(auxiliary.size());
  for (const auto& a : auxiliary) aux.push_back(to_double(a));

  Job pre = build_job(data, cfg, p, aux, data.train.regular_cols, {}, 1.0);
  pre.epochs = cfg.pretrain_epochs > 0 ? cfg.pretrain_epochs : cfg.epochs;
  pre.checkpoint_set = nullptr;
  TrainConfig quiet = cfg;
  quiet.record_test_history = false;
  TrainResult pretrained = run_job(pre, quiet);

  Job fine = build_job(data, cfg, p, label_targets(data.train), data.train.regular_cols, {}, 1.0);
  fine.init = pretrained.best.model;
  fine.epochs = cfg.epochs;
  TrainResult out = run_job(fine, cfg);
  if (cfg.epochs == 0) out.best_metric = evaluate_model(out.best, *fine.checkpoint_set, {cfg.checkpoint_k}).front().mean;
  return out;
}

std::vector<NdcgSummary> imputation_eval(const ScoringModel& teacher, const ExperimentData& data, Imputation mode,
                                         const std::vector<std::size_t>& ks) {
  const auto& priv = data.train.privileged_cols;
  std::vector<std::size_t> targets;
  for (std::size_t c : teacher.input_cols)
    if (std::find(priv.begin(), priv.end(), c) != priv.end()) targets.push_back(c);
  if (targets.empty()) throw PipelineError("model does not consume privileged columns");

  std::vector<double> fill(targets.size(), 0.0);
  if (mode == Imputation::Mean) {
    const std::size_t n = data.train.num_docs();
    if (n == 0) throw PipelineError("mean imputation needs training documents");
    for (std::size_t j = 0; j < targets.size(); ++j) {
      double sum = 0.0;
      for (const auto& g : data.train.groups) sum += g.features.col(static_cast<Eigen::Index>(targets[j])).sum();
      fill[j] = sum / static_cast<double>(n);
    }
  }
  RankingDataset imputed = data.test;
  for (auto& g : imputed.groups)
    for (std::size_t j = 0; j < targets.size(); ++j)
      g.features.col(static_cast<Eigen::Index>(targets[j])).setConstant(fill[j]);
  return evaluate_model(teacher, imputed, ks);
}

StrategyOutcome run_strategy(const ExperimentData& data, const TrainConfig& cfg) {
  StrategyOutcome out;
  std::vector<TeacherResult> teachers;
  switch (cfg.strategy) {
    case Strategy::Baseline:
      out.student = train_baseline(data, cfg);
      break;
    case Strategy::SelfDistill:
      teachers.push_back(train_teacher_self(data, cfg));
      break;
    case Strategy::GenD:
      teachers.push_back(train_teacher_gend(data, cfg));
      break;
    case Strategy::Pfd:
      teachers.push_back(train_teacher_pfd(data, cfg));
      break;
    case Strategy::MultiTeacherPfd:
      for (std::size_t k = 0; k < cfg.teacher_count; ++k) {
        TrainConfig tc = cfg;
        tc.seed = cfg.seed + k;
        teachers.push_back(train_teacher_pfd(data, tc));
      }
      break;
    case Strategy::PretrainFinetune:
      throw PipelineError("pretrain-finetune needs an auxiliary target; use pretrain_finetune");
  }
  if (!teachers.empty()) {
    std::vector<TeacherPredictions> preds;
    for (auto& t : teachers) preds.push_back(t.predictions);
    out.student = distill_student(data, preds, cfg);
    if (data.test.has_labels()) out.teacher_test = evaluate_model(teachers.front().training.best, data.test);
    for (auto& t : teachers) out.teachers.push_back(std::move(t.training));
  }
  if (data.test.has_labels()) out.test = evaluate_model(out.student.best, data.test);
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::TauTarget: return "tau_target";
    case SweepAxis::TauPrivileged: return "tau_privileged";
  }
  return "?";
}

SweepAxis parse_sweep_axis(const std::string& text) {
  const auto t = lower(text);
  if (t == "alpha") return SweepAxis::Alpha;
  if (t == "tau-target") return SweepAxis::TauTarget;
  if (t == "tau-privileged") return SweepAxis::TauPrivileged;
  throw PipelineError("unknown sweep axis '" + text + "'");
}

std::vector<Strategy> default_sweep_strategies(SweepAxis axis) {
  if (axis == SweepAxis::TauTarget) return {Strategy::Baseline, Strategy::SelfDistill, Strategy::Pfd};
  return {Strategy::Baseline, Strategy::Pfd};
}

ExperimentData prepare_labeled(const ExperimentData& relevance_data, const LabelGenConfig& labels,
                               std::size_t num_privileged) {
  ExperimentData out;
  out.train = generate_binary_labels(relevance_data.train, labels);
  LabelGenConfig test_cfg = labels;
  test_cfg.seed = stream_seed(labels.seed, 1);
  out.test = generate_binary_labels(relevance_data.test, test_cfg);
  if (num_privileged > 0) {
    out.train = split_features_by_correlation(out.train, num_privileged);
    out.test.regular_cols = out.train.regular_cols;
    out.test.privileged_cols = out.train.privileged_cols;
  }
  return out;
}

ExperimentData prepare_with_indicator(const ExperimentData& relevance_data, const LabelGenConfig& labels,
                                      double tau_privileged) {
  if (!std::isfinite(tau_privileged)) throw PipelineError("tau_privileged must be finite");
  LabelGenConfig test_cfg = labels;
  test_cfg.seed = stream_seed(labels.seed, 1);
  const auto tr = generate_binary_labels_recorded(relevance_data.train, labels);
  const auto te = generate_binary_labels_recorded(relevance_data.test, test_cfg);
  ExperimentData out;
  out.train = with_indicator_privileged(
      tr.dataset, indicator_from_noise(tr.dataset, tr.noise, labels.temperature, tau_privileged));
  out.test = with_indicator_privileged(
      te.dataset, indicator_from_noise(te.dataset, te.noise, labels.temperature, tau_privileged));
  return out;
}

namespace {

ExperimentData sweep_data(const ExperimentData& rel, const SweepSpec& spec, double value) {
  LabelGenConfig lc = spec.labels;
  switch (spec.axis) {
    case SweepAxis::Alpha: return prepare_labeled(rel, lc, spec.num_privileged);
    case SweepAxis::TauTarget:
      lc.tau_target = value;
      return prepare_labeled(rel, lc, spec.num_privileged);
    case SweepAxis::TauPrivileged: return prepare_with_indicator(rel, lc, value);
  }
  throw PipelineError("bad sweep axis");
}

}  // namespace

std::vector<SweepResult> run_ablation_sweep(const ExperimentData& relevance_data, const SweepSpec& spec,
                                            const TrainConfig& cfg) {
  if (spec.values.empty()) throw PipelineError("sweep needs at least one value");
  if (spec.repeats < 1) throw PipelineError("sweep needs at least one repeat");
  spec.labels.validate();
  cfg.validate();
  for (double v : spec.values) {
    if (!std::isfinite(v)) throw PipelineError("sweep values must be finite");
    if (spec.axis == SweepAxis::Alpha && !(v >= 0.0 && v <= 1.0)) throw PipelineError("alpha values must lie in [0, 1]");
  }
  const auto strategies = spec.strategies.empty() ? default_sweep_strategies(spec.axis) : spec.strategies;
  for (auto s : strategies)
    if (s == Strategy::PretrainFinetune) throw PipelineError("pretrain-finetune is not a sweep strategy");

  // label generation does not depend on the repeat, so it is shared
  std::vector<ExperimentData> data;
  data.reserve(spec.values.size());
  if (spec.axis == SweepAxis::Alpha) {
    data.push_back(sweep_data(relevance_data, spec, spec.values.front()));
  } else {
    for (double v : spec.values) data.push_back(sweep_data(relevance_data, spec, v));
  }
  auto data_for = [&](std::size_t vi) -> const ExperimentData& { return data[spec.axis == SweepAxis::Alpha ? 0 : vi]; };

  std::vector<SweepResult> rows(spec.values.size() * spec.repeats);
  parallel_for(spec.repeats, [&](std::size_t rep) {
    TrainConfig rc = cfg;
    rc.seed = cfg.seed + rep;
    rc.record_test_history = false;
    // parts that do not change along the axis are trained once per repeat
    std::optional<TrainResult> baseline;
    std::optional<TeacherPredictions> self_teacher;
    std::map<Strategy, TeacherResult> alpha_teachers;

    for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
      const double value = spec.values[vi];
      const ExperimentData& d = data_for(vi);
      TrainConfig vc = rc;
      if (spec.axis == SweepAxis::Alpha) vc.alpha = value;
      const bool reuse_xy = spec.axis != SweepAxis::TauTarget;

      SweepResult& row = rows[vi * spec.repeats + rep];
      row.value = value;
      row.repeat = rep;
      row.seed = rc.seed;
      row.strategies = strategies;
      row.positive_group_fraction = compute_stats(d.train).positive_group_fraction.value_or(0.0);

      for (Strategy s : strategies) {
        TrainConfig sc = vc;
        sc.strategy = s;
        TrainResult student;
        std::optional<TeacherResult> fresh_teacher;
        const TeacherResult* teacher = nullptr;
        auto teacher_for = [&](Strategy kind, auto train) -> const TeacherResult* {
          if (spec.axis == SweepAxis::Alpha) {
            auto it = alpha_teachers.find(kind);
            if (it == alpha_teachers.end()) it = alpha_teachers.emplace(kind, train(d, rc)).first;
            return &it->second;
          }
          fresh_teacher = train(d, rc);
          return &*fresh_teacher;
        };
        switch (s) {
          case Strategy::Baseline:
            if (!(reuse_xy && baseline)) baseline = train_baseline(d, rc);
            student = *baseline;
            break;
          case Strategy::SelfDistill:
            if (!(reuse_xy && self_teacher)) self_teacher = train_teacher_self(d, rc).predictions;
            student = distill_student(d, {*self_teacher}, sc);
            break;
          case Strategy::GenD:
            teacher = teacher_for(s, train_teacher_gend);
            student = distill_student(d, {teacher->predictions}, sc);
            break;
          case Strategy::Pfd:
            teacher = teacher_for(s, train_teacher_pfd);
            student = distill_student(d, {teacher->predictions}, sc);
            break;
          case Strategy::MultiTeacherPfd: {
            sc.strategy = Strategy::MultiTeacherPfd;
            student = run_strategy(d, sc).student;
            break;
          }
          case Strategy::PretrainFinetune: break;
        }
        row.test.push_back(evaluate_model(student.best, d.test, spec.ks));
        if (s == Strategy::Pfd) {
          row.pfd_teacher_test = evaluate_model(teacher->training.best, d.test, spec.ks);
          const auto& last = student.history.back();
          row.pfd_loss_scale = loss_scale_report(last.data_loss, last.teacher_loss, sc.alpha);
        }
      }
    }
  });
  return rows;
}

std::string sweep_csv_header(const SweepSpec& spec, const std::vector<Strategy>& strategies) {
  std::vector<std::string> cols{"axis", "value", "repeat", "seed", "positive_group_fraction"};
  auto add_ndcg = [&](const std::string& prefix) {
    for (auto k : spec.ks) cols.push_back(prefix + "_ndcg" + std::to_string(k));
  };
  for (auto s : strategies) add_ndcg(to_string(s));
  if (std::find(strategies.begin(), strategies.end(), Strategy::Pfd) != strategies.end()) {
    add_ndcg("pfd-teacher");
    cols.insert(cols.end(), {"pfd_data_loss", "pfd_teacher_loss", "pfd_loss_ratio"});
  }
  return join_csv(cols);
}

std::string sweep_csv_row(const SweepSpec& spec, const SweepResult& row) {
  std::vector<std::string> cols{to_string(spec.axis), format_double(row.value), std::to_string(row.repeat),
                                std::to_string(row.seed), format_double(row.positive_group_fraction)};
  for (const auto& per : row.test)
    for (const auto& s : per) cols.push_back(format_double(s.mean));
  if (row.pfd_loss_scale) {
    for (const auto& s : row.pfd_teacher_test) cols.push_back(format_double(s.mean));
    cols.push_back(format_double(row.pfd_loss_scale->data_loss));
    cols.push_back(format_double(row.pfd_loss_scale->teacher_loss));
    cols.push_back(format_double(row.pfd_loss_scale->ratio));
  }
  return join_csv(cols);
}

}  // namespace privdistill
