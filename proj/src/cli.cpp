#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "privdistill/dataset.hpp"
#include "privdistill/format.hpp"
#include "privdistill/lintheory.hpp"
#include "privdistill/losses.hpp"
#include "privdistill/metrics.hpp"
#include "privdistill/model.hpp"
#include "privdistill/pipelines.hpp"
#include "privdistill/random.hpp"

#ifndef PRIVDISTILL_VERSION
#define PRIVDISTILL_VERSION "0.0.0"
#endif

namespace privdistill::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

// Bad flags or config values; reported with the subcommand's usage text.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

std::vector<double> parse_double_list(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_list(text)) {
    double v = 0.0;
    if (!parse_double(tok, v)) throw UsageError(flag + ": cannot parse '" + tok + "' as a number");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& flag, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& tok : split_list(text)) {
    long long v = 0;
    if (!parse_int(tok, v) || v < 0) throw UsageError(flag + ": cannot parse '" + tok + "' as a count");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// "a..b" is an inclusive range; anything else is a comma list.
std::vector<std::size_t> parse_size_range(const std::string& flag, const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) return parse_size_list(flag, text);
  long long lo = 0, hi = 0;
  if (!parse_int(text.substr(0, dots), lo) || !parse_int(text.substr(dots + 2), hi) || lo < 0 || hi < lo)
    throw UsageError(flag + ": bad range '" + text + "'");
  std::vector<std::size_t> out;
  for (long long v = lo; v <= hi; ++v) out.push_back(static_cast<std::size_t>(v));
  return out;
}

// ---------------------------------------------------------------------------
// Outputs are staged in memory and only land on disk once the whole command
// has succeeded, so a failing run leaves nothing half-written behind.

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  fs::path add(const std::string& name, std::string content) {
    files_.emplace_back(name, std::move(content));
    return dir_ / name;
  }

  ojson listing() const {
    ojson out = ojson::array();
    for (const auto& f : files_) out.push_back((dir_ / f.first).string());
    return out;
  }

  void commit() const {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw DatasetError("cannot create output directory " + dir_.string() + ": " + ec.message());
    for (const auto& [name, content] : files_) {
      const fs::path final_path = dir_ / name;
      const fs::path tmp = final_path.string() + ".tmp";
      {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DatasetError("cannot write " + tmp.string());
        out << content;
        if (!out) throw DatasetError("write failed for " + tmp.string());
      }
      fs::rename(tmp, final_path, ec);
      if (ec) throw DatasetError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

// ---------------------------------------------------------------------------
// Datasets travel as a text file plus an optional `<file>.cols.json` that
// records which columns are privileged.

fs::path columns_sidecar(const fs::path& dataset) { return fs::path(dataset.string() + ".cols.json"); }

std::string columns_json(const RankingDataset& ds) {
  ojson j;
  j["num_features"] = ds.num_features;
  j["regular"] = ds.regular_cols;
  j["privileged"] = ds.privileged_cols;
  return j.dump(2) + "\n";
}

RankingDataset load_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw DatasetError("cannot read " + path.string() + ": no such file");
  RankingDataset ds = parse_ranking_file(path);
  const fs::path side = columns_sidecar(path);
  if (fs::exists(side)) {
    std::ifstream in(side);
    ojson j;
    try {
      j = ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(side.string() + ": " + e.what());
    }
    if (j.value("num_features", ds.num_features) != ds.num_features)
      throw DatasetError(side.string() + " does not match the feature count of " + path.string());
    ds.regular_cols = j.at("regular").get<std::vector<std::size_t>>();
    ds.privileged_cols = j.at("privileged").get<std::vector<std::size_t>>();
    ds.validate();
  }
  return ds;
}

std::string dataset_text(const RankingDataset& ds) {
  std::ostringstream os;
  write_ranking_stream(os, ds);
  return os.str();
}

void add_dataset(Outputs& outputs, const std::string& name, const RankingDataset& ds) {
  outputs.add(name, dataset_text(ds));
  if (!ds.privileged_cols.empty()) outputs.add(name + ".cols.json", columns_json(ds));
}

// ---------------------------------------------------------------------------
// Config files. Keys are long flag names (dashes or underscores); a run
// manifest is accepted as well and its "config" object is used.

std::string json_to_flag_text(const std::string& key, const ojson& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_array()) {
    std::vector<std::string> parts;
    for (const auto& e : v) parts.push_back(json_to_flag_text(key, e));
    return join_csv(parts);
  }
  throw UsageError("config key '" + key + "' has an unsupported value");
}

std::string normalize_key(std::string k) {
  for (auto& c : k)
    if (c == '_') c = '-';
  return k;
}

bool is_meta_option(const CLI::Option* opt) {
  const std::string& n = opt->get_single_name();
  return n == "help" || n == "config" || n == "out";
}

void apply_config(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path + ": " + e.what());
  }
  if (j.is_object() && j.contains("config") && j["config"].is_object()) j = j["config"];
  if (!j.is_object()) throw UsageError("config file " + path + " must hold a JSON object");

  std::map<std::string, CLI::Option*> by_name;
  for (CLI::Option* opt : sub->get_options())
    if (!is_meta_option(opt)) by_name[opt->get_single_name()] = opt;

  for (const auto& [key, value] : j.items()) {
    auto it = by_name.find(normalize_key(key));
    if (it == by_name.end()) throw UsageError("config file " + path + ": unknown key '" + key + "'");
    CLI::Option* opt = it->second;
    if (opt->count() > 0) continue;  // the command line wins
    const std::string text = json_to_flag_text(key, value);
    opt->add_result(text);
    opt->run_callback();
  }
}

ojson typed_value(const std::string& text) {
  long long i = 0;
  if (parse_int(text, i)) return i;
  double d = 0.0;
  if (parse_double(text, d) && std::isfinite(d)) return d;
  return text;
}

// Effective value of every option, defaults included.
ojson config_snapshot(const CLI::App* sub) {
  ojson j = ojson::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (is_meta_option(opt)) continue;
    std::string text = opt->count() > 0 ? join_csv(opt->results()) : opt->get_default_str();
    j[opt->get_single_name()] = typed_value(text);
  }
  return j;
}

struct Manifest {
  explicit Manifest(std::string cmd) : command(std::move(cmd)) {}

  std::string command;
  std::string started_at = utc_now();
  ojson config;
  ojson dataset_hash = ojson::object();
  std::uint64_t seed = 0;
  std::string strategy;
  ojson extra = ojson::object();

  std::string finish(const Outputs& outputs) const {
    ojson j;
    j["artifact"] = "privdistill";
    j["version"] = PRIVDISTILL_VERSION;
    j["command"] = command;
    j["seed"] = seed;
    if (!strategy.empty()) j["strategy"] = strategy;
    j["config"] = config;
    j["config_hash"] = fnv1a_hex(config.dump());
    j["dataset_hash"] = dataset_hash;
    j["started_at"] = started_at;
    j["finished_at"] = utc_now();
    j["outputs"] = outputs.listing();
    for (const auto& [k, v] : extra.items()) j[k] = v;
    return j.dump(2) + "\n";
  }
};

void write_with_manifest(Outputs& outputs, const Manifest& m) {
  const std::string text = m.finish(outputs);
  outputs.add("manifest.json", text);
  outputs.commit();
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError("missing required option " + flag);
}

// ---------------------------------------------------------------------------
// Shared training flags.

struct TrainFlags {
  std::string strategy = "pfd";
  std::string loss = "rankbce";
  std::string scope = "positive";
  std::string checkpoint_on = "valid";
  std::string decay_mode = "decoupled";
  double alpha = 0.5;
  double lr = 0.0;
  double weight_decay = 0.005;
  double validation_fraction = 0.1;
  std::size_t epochs = 100;
  std::size_t batch_docs = 0;
  std::size_t lr_decay_period = 20;
  std::size_t hidden = 100;
  std::size_t depth = 5;
  std::size_t checkpoint_k = 8;
  std::size_t pretrain_epochs = 0;
  std::size_t teacher_count = 3;
  bool distinct_targets = false;
  std::uint64_t seed = 0;

  TrainConfig to_config() const {
    TrainConfig c;
    try {
      c.strategy = parse_strategy(strategy);
      c.loss_kind = parse_loss_kind(loss);
      c.data_loss_scope = parse_data_loss_scope(scope);
      c.checkpoint_on = parse_checkpoint_on(checkpoint_on);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (decay_mode == "decoupled")
      c.decay_mode = WeightDecayMode::Decoupled;
    else if (decay_mode == "l2")
      c.decay_mode = WeightDecayMode::L2;
    else
      throw UsageError("unknown weight decay mode '" + decay_mode + "'");
    c.alpha = alpha;
    c.base_lr = lr;
    c.weight_decay = weight_decay;
    c.validation_fraction = validation_fraction;
    c.epochs = epochs;
    c.batch_docs = batch_docs;
    c.lr_decay_period = lr_decay_period;
    c.hidden_dim = hidden;
    c.depth = depth;
    c.checkpoint_k = checkpoint_k;
    c.pretrain_epochs = pretrain_epochs;
    c.teacher_count = teacher_count;
    c.distinct_targets_only = distinct_targets;
    c.seed = seed;
    try {
      c.validate();
    } catch (const PipelineError& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

const std::vector<std::string> kStrategyNames = {"baseline", "self-distill", "gend",
                                                  "pfd",      "multi-teacher-pfd", "pretrain-finetune"};

void add_train_flags(CLI::App* sub, TrainFlags& f, bool with_strategy) {
  if (with_strategy)
    sub->add_option("--strategy", f.strategy, "Training strategy")->check(CLI::IsMember(kStrategyNames));
  sub->add_option("--loss", f.loss, "Ranking loss")->check(CLI::IsMember({"rankbce", "ranknet"}));
  sub->add_option("--alpha", f.alpha, "Weight of the data loss")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--batch-docs", f.batch_docs, "Documents per batch (0: loss default)");
  sub->add_option("--lr", f.lr, "Base learning rate (0: loss default)");
  sub->add_option("--weight-decay", f.weight_decay, "Weight decay");
  sub->add_option("--decay-mode", f.decay_mode, "Weight decay form")->check(CLI::IsMember({"decoupled", "l2"}));
  sub->add_option("--lr-decay-period", f.lr_decay_period, "Epochs between learning-rate halvings");
  sub->add_option("--hidden", f.hidden, "Hidden width");
  sub->add_option("--depth", f.depth, "Number of weight layers");
  sub->add_option("--seed", f.seed, "Seed");
  sub->add_option("--data-loss-scope", f.scope, "Groups entering the data loss")
      ->check(CLI::IsMember({"positive", "all"}));
  sub->add_option("--checkpoint-on", f.checkpoint_on, "Split used to pick the best epoch")
      ->check(CLI::IsMember({"valid", "test"}));
  sub->add_option("--validation-fraction", f.validation_fraction, "Share of training groups held out");
  sub->add_option("--checkpoint-k", f.checkpoint_k, "NDCG cutoff for checkpoint selection");
  sub->add_option("--pretrain-epochs", f.pretrain_epochs, "pretrain-finetune: epochs on the auxiliary target");
  sub->add_option("--teacher-count", f.teacher_count, "multi-teacher-pfd: number of teachers");
  sub->add_option("--distinct-targets", f.distinct_targets, "RankNet: skip equal-target pairs");
}

// ---------------------------------------------------------------------------

struct FixtureFlags {
  std::string kind = "synthetic";
  std::string name = "fixture.txt";
  std::size_t groups = 10;
  std::size_t docs = 20;
  std::size_t features = 5;
  std::size_t regular = 5;
  std::size_t privileged = 3;
  double regular_weight = 1.0;
  double privileged_weight = 1.0;
  double noise = 0.5;
  std::uint64_t direction_seed = 7;
  std::uint64_t seed = 0;
};

int cmd_fixture(CLI::App* sub, const FixtureFlags& f, const std::string& out) {
  require(out, "--out");
  Manifest m("fixture");
  m.config = config_snapshot(sub);
  m.seed = f.seed;
  RankingDataset ds;
  if (f.kind == "synthetic") {
    FixtureSpec spec{f.groups, f.docs, f.features, f.seed};
    ds = make_synthetic_fixture(spec);
  } else {
    LatentFixtureSpec spec;
    spec.num_groups = f.groups;
    spec.docs_per_group = f.docs;
    spec.num_regular = f.regular;
    spec.num_privileged = f.privileged;
    spec.regular_weight = f.regular_weight;
    spec.privileged_weight = f.privileged_weight;
    spec.noise = f.noise;
    spec.seed = f.seed;
    spec.direction_seed = f.direction_seed;
    ds = make_latent_fixture(spec);
  }
  Outputs outputs(out);
  add_dataset(outputs, f.name, ds);
  m.dataset_hash[f.name] = dataset_content_hash(ds);
  write_with_manifest(outputs, m);
  return kExitOk;
}

struct IngestFlags {
  std::string input;
  std::string name = "dataset.txt";
  std::size_t min_docs = 10;
  bool log1p = true;
};

int cmd_ingest(CLI::App* sub, const IngestFlags& f, const std::string& out) {
  require(f.input, "--input");
  require(out, "--out");
  Manifest m("ingest");
  m.config = config_snapshot(sub);
  RankingDataset raw = parse_ranking_file(f.input);
  m.dataset_hash["input"] = dataset_content_hash(raw);
  RankingDataset ds = filter_query_groups(raw, f.min_docs);
  if (f.log1p) ds = log1p_transform(ds);
  if (ds.groups.empty()) throw DatasetError("no query group survives the filter");
  Outputs outputs(out);
  add_dataset(outputs, f.name, ds);
  outputs.add("stats.json", stats_to_json(compute_stats(ds)) + "\n");
  m.dataset_hash[f.name] = dataset_content_hash(ds);
  m.extra["groups_in"] = raw.groups.size();
  m.extra["groups_kept"] = ds.groups.size();
  write_with_manifest(outputs, m);
  return kExitOk;
}

struct LabelFlags {
  std::string input;
  std::string name = "labeled.txt";
  double temperature = 4.0;
  double tau_target = 4.8;
  double tau_privileged = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

int cmd_gen_labels(CLI::App* sub, const LabelFlags& f, const std::string& out) {
  require(f.input, "--input");
  require(out, "--out");
  Manifest m("gen-labels");
  m.config = config_snapshot(sub);
  m.seed = f.seed;
  LabelGenConfig cfg{f.temperature, f.tau_target, f.seed};
  try {
    cfg.validate();
  } catch (const DatasetError& e) {
    throw UsageError(e.what());
  }
  RankingDataset ds = load_dataset(f.input);
  m.dataset_hash["input"] = dataset_content_hash(ds);
  RankingDataset labeled;
  if (std::isnan(f.tau_privileged)) {
    labeled = generate_binary_labels(ds, cfg);
  } else {
    LabeledDataset rec = generate_binary_labels_recorded(ds, cfg);
    auto z = indicator_from_noise(rec.dataset, rec.noise, cfg.temperature, f.tau_privileged);
    labeled = with_indicator_privileged(rec.dataset, z);
  }
  Outputs outputs(out);
  add_dataset(outputs, f.name, labeled);
  outputs.add("stats.json", stats_to_json(compute_stats(labeled)) + "\n");
  m.dataset_hash[f.name] = dataset_content_hash(labeled);
  write_with_manifest(outputs, m);
  return kExitOk;
}

struct SplitFlags {
  std::string input;
  std::string name = "split.txt";
  std::size_t num_privileged = 1;
};

int cmd_split_features(CLI::App* sub, const SplitFlags& f, const std::string& out) {
  require(f.input, "--input");
  require(out, "--out");
  Manifest m("split-features");
  m.config = config_snapshot(sub);
  RankingDataset ds = load_dataset(f.input);
  m.dataset_hash["input"] = dataset_content_hash(ds);
  const auto corr = label_correlations(ds);
  RankingDataset split = split_features_by_correlation(ds, f.num_privileged);

  std::string csv = "column,correlation,role\n";
  for (std::size_t c = 0; c < corr.size(); ++c) {
    bool priv = std::find(split.privileged_cols.begin(), split.privileged_cols.end(), c) != split.privileged_cols.end();
    csv += join_csv({std::to_string(c), format_double(corr[c]), priv ? "privileged" : "regular"}) + "\n";
  }
  Outputs outputs(out);
  add_dataset(outputs, f.name, split);
  outputs.add("correlations.csv", csv);
  m.dataset_hash[f.name] = dataset_content_hash(split);
  write_with_manifest(outputs, m);
  return kExitOk;
}

// ---------------------------------------------------------------------------

std::string eval_rows(const std::string& run_id, const std::string& strategy, const std::vector<NdcgSummary>& res,
                      std::uint64_t seed) {
  std::string text;
  for (const auto& s : res) text += eval_row_csv(EvalRow{run_id, strategy, s.k, s.mean, s.stddev, seed}) + "\n";
  return text;
}

std::string loss_scale_rows(const std::string& run_id, const std::string& strategy, const TrainResult& r,
                            double alpha) {
  std::string text;
  for (const auto& e : r.history) {
    const auto rep = loss_scale_report(e.data_loss, e.teacher_loss, alpha);
    text += join_csv({run_id, strategy, std::to_string(e.epoch), format_double(rep.data_loss),
                      format_double(rep.teacher_loss), format_double(rep.alpha), format_double(rep.ratio),
                      format_double(rep.data_share), format_double(rep.teacher_share)}) +
            "\n";
  }
  return text;
}

std::string checkpoint_bytes(const MlpModel& model, bool binary) {
  if (!binary) return model_to_json(model);
  const auto bytes = model_to_binary(model);
  return std::string(bytes.begin(), bytes.end());
}

// Binarized auxiliary column for pretrain-finetune: 1 where the value is > 0.
std::vector<std::vector<int>> auxiliary_targets(const RankingDataset& train, long long column) {
  std::size_t col = 0;
  if (column < 0) {
    if (train.privileged_cols.empty())
      throw UsageError("pretrain-finetune needs --aux-column or a privileged column in the training data");
    col = train.privileged_cols.front();
  } else {
    col = static_cast<std::size_t>(column);
  }
  if (col >= train.num_features) throw UsageError("--aux-column is out of range");
  std::vector<std::vector<int>> aux;
  for (const auto& g : train.groups) {
    std::vector<int> v(g.num_docs());
    for (std::size_t d = 0; d < v.size(); ++d)
      v[d] = g.features(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(col)) > 0.0 ? 1 : 0;
    aux.push_back(std::move(v));
  }
  return aux;
}

struct TrainCmdFlags {
  std::string train;
  std::string test;
  std::string run_id;
  std::string checkpoint_format = "json";
  long long aux_column = -1;
};

int cmd_train(CLI::App* sub, const TrainFlags& tf, const TrainCmdFlags& f, const std::string& out) {
  require(f.train, "--train");
  require(f.test, "--test");
  require(out, "--out");
  const TrainConfig cfg = tf.to_config();
  const bool binary = f.checkpoint_format == "bin";
  Manifest m("train");
  m.config = config_snapshot(sub);
  m.seed = cfg.seed;
  m.strategy = to_string(cfg.strategy);

  ExperimentData data{load_dataset(f.train), load_dataset(f.test)};
  if (!data.train.has_labels()) throw DatasetError(f.train + " carries no binary labels; run gen-labels first");
  if (!data.test.has_labels()) throw DatasetError(f.test + " carries no binary labels; run gen-labels first");
  m.dataset_hash["train"] = dataset_content_hash(data.train);
  m.dataset_hash["test"] = dataset_content_hash(data.test);

  const std::string strategy = to_string(cfg.strategy);
  const std::string run_id = f.run_id.empty() ? strategy + "-s" + std::to_string(cfg.seed) : f.run_id;

  StrategyOutcome outcome;
  try {
    if (cfg.strategy == Strategy::PretrainFinetune) {
      outcome.student = pretrain_finetune(data, auxiliary_targets(data.train, f.aux_column), cfg);
      outcome.test = evaluate_model(outcome.student.best, data.test);
    } else {
      outcome = run_strategy(data, cfg);
    }
  } catch (const PipelineError& e) {
    throw UsageError(e.what());
  }

  std::string metrics = std::string(kEvalCsvHeader) + "\n";
  for (const auto& e : outcome.student.history)
    if (!e.test.empty()) metrics += eval_rows(run_id + "/epoch-" + std::to_string(e.epoch), strategy, e.test, cfg.seed);
  metrics += eval_rows(run_id + "/best", strategy, outcome.test, cfg.seed);
  if (!outcome.teacher_test.empty())
    metrics += eval_rows(run_id + "/teacher", strategy + "-teacher", outcome.teacher_test, cfg.seed);

  std::string scale = std::string(kLossScaleCsvHeader) + "\n";
  scale += loss_scale_rows(run_id, strategy, outcome.student, cfg.alpha);

  const std::string ext = binary ? ".bin" : ".json";
  Outputs outputs(out);
  outputs.add("model" + ext, checkpoint_bytes(outcome.student.best.model, binary));
  for (std::size_t k = 0; k < outcome.teachers.size(); ++k)
    outputs.add("teacher-" + std::to_string(k) + ext, checkpoint_bytes(outcome.teachers[k].best.model, binary));
  outputs.add("metrics.csv", metrics);
  outputs.add("loss_scale.csv", scale);

  m.extra["run_id"] = run_id;
  m.extra["best_epoch"] = outcome.student.best_epoch;
  m.extra["best_metric"] = outcome.student.best_metric;
  m.extra["input_cols"] = outcome.student.best.input_cols;
  if (!outcome.teachers.empty()) m.extra["teacher_input_cols"] = outcome.teachers.front().best.input_cols;
  write_with_manifest(outputs, m);
  return kExitOk;
}

struct SweepFlags {
  std::string train;
  std::string test;
  std::string axis = "alpha";
  std::string values;
  std::string strategies;
  std::string ks = "8,16,32";
  std::size_t repeats = 1;
  std::size_t num_privileged = 0;
  double temperature = 4.0;
  double tau_target = 4.8;
  std::uint64_t label_seed = 0;
};

int cmd_sweep(CLI::App* sub, const TrainFlags& tf, const SweepFlags& f, const std::string& out) {
  require(f.train, "--train");
  require(f.test, "--test");
  require(out, "--out");
  const TrainConfig cfg = tf.to_config();
  SweepSpec spec;
  try {
    spec.axis = parse_sweep_axis(f.axis);
    for (const auto& s : split_list(f.strategies)) spec.strategies.push_back(parse_strategy(s));
  } catch (const PipelineError& e) {
    throw UsageError(e.what());
  }
  spec.values = parse_double_list("--values", f.values);
  if (spec.values.empty()) throw UsageError("--values must list at least one value");
  if (f.repeats < 1) throw UsageError("--repeats must be at least 1");
  spec.repeats = f.repeats;
  spec.num_privileged = f.num_privileged;
  spec.labels = LabelGenConfig{f.temperature, f.tau_target, f.label_seed};
  spec.ks = parse_size_list("--ks", f.ks);
  if (spec.ks.empty()) throw UsageError("--ks must list at least one cutoff");

  Manifest m("sweep");
  m.config = config_snapshot(sub);
  m.seed = cfg.seed;
  ExperimentData data{load_dataset(f.train), load_dataset(f.test)};
  m.dataset_hash["train"] = dataset_content_hash(data.train);
  m.dataset_hash["test"] = dataset_content_hash(data.test);

  std::vector<SweepResult> rows;
  try {
    rows = run_ablation_sweep(data, spec, cfg);
  } catch (const PipelineError& e) {
    throw UsageError(e.what());
  }
  const auto strategies = spec.strategies.empty() ? default_sweep_strategies(spec.axis) : spec.strategies;
  std::string csv = sweep_csv_header(spec, strategies) + "\n";
  for (const auto& r : rows) csv += sweep_csv_row(spec, r) + "\n";

  Outputs outputs(out);
  outputs.add("sweep.csv", csv);
  m.extra["rows"] = rows.size();
  write_with_manifest(outputs, m);
  return kExitOk;
}

struct EvalFlags {
  std::string model;
  std::string test;
  std::string inputs = "regular";
  std::string label = "model";
  std::string run_id = "eval";
  std::string ks = "8,16,32";
  std::uint64_t seed = 0;
};

int cmd_eval(CLI::App* sub, const EvalFlags& f, const std::string& out) {
  require(f.model, "--model");
  require(f.test, "--test");
  require(out, "--out");
  Manifest m("eval");
  m.config = config_snapshot(sub);
  m.seed = f.seed;
  const auto ks = parse_size_list("--ks", f.ks);
  if (ks.empty()) throw UsageError("--ks must list at least one cutoff");
  RankingDataset test = load_dataset(f.test);
  if (!test.has_labels()) throw DatasetError(f.test + " carries no binary labels");
  m.dataset_hash["test"] = dataset_content_hash(test);

  ScoringModel sm{load_model(f.model), {}};
  if (f.inputs == "regular") {
    sm.input_cols = test.regular_cols;
  } else if (f.inputs == "privileged") {
    sm.input_cols = test.privileged_cols;
  } else {
    sm.input_cols = test.regular_cols;
    sm.input_cols.insert(sm.input_cols.end(), test.privileged_cols.begin(), test.privileged_cols.end());
  }
  if (sm.input_cols.size() != sm.model.input_dim)
    throw UsageError("model expects " + std::to_string(sm.model.input_dim) + " inputs but --inputs " + f.inputs +
                     " selects " + std::to_string(sm.input_cols.size()) + " columns");
  const auto res = evaluate_model(sm, test, ks);
  Outputs outputs(out);
  outputs.add("eval.csv", std::string(kEvalCsvHeader) + "\n" + eval_rows(f.run_id, f.label, res, f.seed));
  write_with_manifest(outputs, m);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TheoryFlags {
  std::size_t d_x = 10;
  std::size_t d_u = 10;
  std::size_t d_z = 5;
  std::size_t n = 30;
  std::size_t m = 200;
  double sigma = 15.0;
  std::size_t trials = 20000;
  std::uint64_t seed = 2022;
  std::uint64_t w_seed = 2022;
  std::string dz_range = "0..10";
};

// The Example's setup, resized: w* ~ N(0, I) from w_seed, v* = [d_u, ..., 1].
LinearExperiment theory_experiment(const TheoryFlags& f) {
  LinearExperiment e;
  e.d_x = f.d_x;
  e.d_u = f.d_u;
  e.d_z = f.d_z;
  e.n = f.n;
  e.m = f.m;
  e.sigma = f.sigma;
  e.v_star.resize(static_cast<Eigen::Index>(f.d_u));
  for (std::size_t i = 0; i < f.d_u; ++i) e.v_star[static_cast<Eigen::Index>(i)] = static_cast<double>(f.d_u - i);
  Rng rng(f.w_seed);
  e.w_star.resize(static_cast<Eigen::Index>(f.d_x));
  for (std::size_t i = 0; i < f.d_x; ++i) e.w_star[static_cast<Eigen::Index>(i)] = rng.normal();
  e.seed = f.seed;
  return e;
}

LinearExperiment checked_experiment(const TheoryFlags& f) {
  if (f.trials < 2) throw UsageError("--trials must be at least 2");
  LinearExperiment e = theory_experiment(f);
  try {
    e.validate_closed_form();
  } catch (const std::logic_error& err) {
    throw UsageError(err.what());
  }
  return e;
}

int cmd_theory_verify(CLI::App* sub, const TheoryFlags& f, const std::string& out) {
  const LinearExperiment e = checked_experiment(f);
  LinearExperiment ols_exp = e;
  ols_exp.d_z = 0;

  const RiskReport ols = monte_carlo_risk(e, Estimator::Ols, f.trials);
  const double ols_cf = closed_form_risk_ols(e);
  const double ols_tol = 3.0 * ols.stderr_;
  const bool ols_ok = std::abs(ols.mean - ols_cf) <= ols_tol;

  const RiskReport pfd = monte_carlo_risk(e, Estimator::Pfd, f.trials);
  const double pfd_cf = closed_form_risk_pfd(e).total;
  const double pfd_tol = 3.0 * pfd.stderr_ + 0.01 * pfd_cf;
  const bool pfd_ok = std::abs(pfd.mean - pfd_cf) <= pfd_tol;

  std::ostringstream report;
  auto line = [&](const char* name, bool ok, const RiskReport& r, double cf, double tol) {
    report << (ok ? "PASS " : "FAIL ") << name << ": mc=" << format_double(r.mean)
           << " se=" << format_double(r.stderr_) << " closed_form=" << format_double(cf)
           << " |diff|=" << format_double(std::abs(r.mean - cf)) << " tol=" << format_double(tol)
           << " margin=" << format_double(tol - std::abs(r.mean - cf)) << "\n";
  };
  line("ols-risk", ols_ok, ols, ols_cf, ols_tol);
  line(("pfd-risk d_z=" + std::to_string(e.d_z)).c_str(), pfd_ok, pfd, pfd_cf, pfd_tol);
  std::cout << report.str();

  if (!out.empty()) {
    Manifest m("theory verify");
    m.config = config_snapshot(sub);
    m.seed = f.seed;
    m.extra["passed"] = ols_ok && pfd_ok;
    Outputs outputs(out);
    outputs.add("verify.txt", report.str());
    write_with_manifest(outputs, m);
  }
  return ols_ok && pfd_ok ? kExitOk : kExitCheckFailed;
}

int cmd_theory_sweep(CLI::App* sub, const TheoryFlags& f, const std::string& out) {
  const auto dz = parse_size_range("--dz", f.dz_range);
  if (dz.empty()) throw UsageError("--dz selects no values");
  TheoryFlags widest = f;
  for (std::size_t v : dz) {
    widest.d_z = v;
    checked_experiment(widest);
  }
  const LinearExperiment e = theory_experiment(f);
  const auto rows = dz_sweep(e, dz, f.trials);
  std::string csv = std::string(kSweepCsvHeader) + "\n";
  for (const auto& r : rows) csv += sweep_row_csv(r) + "\n";
  if (out.empty()) {
    std::cout << csv;
    return kExitOk;
  }
  Manifest m("theory sweep");
  m.config = config_snapshot(sub);
  m.seed = f.seed;
  Outputs outputs(out);
  outputs.add("theory_sweep.csv", csv);
  write_with_manifest(outputs, m);
  return kExitOk;
}

void add_theory_flags(CLI::App* sub, TheoryFlags& f, bool sweep) {
  sub->add_option("--dx", f.d_x, "Regular dimension");
  sub->add_option("--du", f.d_u, "Latent dimension");
  if (sweep)
    sub->add_option("--dz", f.dz_range, "Privileged dimensions, 'a..b' or a comma list");
  else
    sub->add_option("--dz", f.d_z, "Privileged dimension");
  sub->add_option("--n", f.n, "Labeled rows");
  sub->add_option("--m", f.m, "Unlabeled rows");
  sub->add_option("--sigma", f.sigma, "Noise standard deviation");
  sub->add_option("--trials", f.trials, "Monte Carlo trials");
  sub->add_option("--seed", f.seed, "Monte Carlo seed");
  sub->add_option("--w-seed", f.w_seed, "Seed drawing w*");
}

CLI::App* active_leaf(CLI::App& app) {
  CLI::App* cur = &app;
  for (;;) {
    auto subs = cur->get_subcommands();
    if (subs.empty()) return cur;
    cur = subs.front();
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Privileged features distillation toolkit for learning to rank", "privdistill"};
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", PRIVDISTILL_VERSION);
  app.require_subcommand(1);

  std::string out;
  std::string config;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--config", config, "JSON config file; flags override it");
  };

  FixtureFlags fixture;
  auto* fix = app.add_subcommand("fixture", "Write a synthetic ranking dataset");
  common(fix);
  fix->add_option("--kind", fixture.kind, "synthetic or latent")->check(CLI::IsMember({"synthetic", "latent"}));
  fix->add_option("--name", fixture.name, "Dataset file name");
  fix->add_option("--groups", fixture.groups, "Query groups");
  fix->add_option("--docs", fixture.docs, "Documents per group");
  fix->add_option("--features", fixture.features, "synthetic: feature count");
  fix->add_option("--regular", fixture.regular, "latent: regular columns");
  fix->add_option("--privileged", fixture.privileged, "latent: privileged columns");
  fix->add_option("--regular-weight", fixture.regular_weight, "latent: weight of the regular block");
  fix->add_option("--privileged-weight", fixture.privileged_weight, "latent: weight of the privileged block");
  fix->add_option("--noise", fixture.noise, "latent: noise weight");
  fix->add_option("--direction-seed", fixture.direction_seed, "latent: seed of the latent directions");
  fix->add_option("--seed", fixture.seed, "Seed");

  IngestFlags ingest;
  auto* ing = app.add_subcommand("ingest", "Parse, filter and log-transform a ranking file");
  common(ing);
  ing->add_option("--input", ingest.input, "Input file (.gz accepted)");
  ing->add_option("--name", ingest.name, "Output dataset file name");
  ing->add_option("--min-docs", ingest.min_docs, "Minimum documents per group");
  ing->add_option("--log1p", ingest.log1p, "Apply the signed log1p transform");

  LabelFlags labels;
  auto* gen = app.add_subcommand("gen-labels", "Draw binary labels from relevance");
  common(gen);
  gen->add_option("--input", labels.input, "Dataset file");
  gen->add_option("--name", labels.name, "Output dataset file name");
  gen->add_option("--temperature", labels.temperature, "Label temperature t");
  gen->add_option("--tau-target", labels.tau_target, "Label threshold");
  gen->add_option("--tau-privileged", labels.tau_privileged,
                  "Also append z = 1(t r + G1 > t tau + G0) as the privileged column");
  gen->add_option("--seed", labels.seed, "Seed");

  SplitFlags split;
  auto* spl = app.add_subcommand("split-features", "Mark the most label-correlated columns as privileged");
  common(spl);
  spl->add_option("--input", split.input, "Labeled dataset file");
  spl->add_option("--name", split.name, "Output dataset file name");
  spl->add_option("--num-privileged", split.num_privileged, "Columns to mark privileged");

  TrainFlags train_flags;
  TrainCmdFlags train_cmd;
  auto* trn = app.add_subcommand("train", "Train one strategy and write checkpoints and metrics");
  common(trn);
  trn->add_option("--train", train_cmd.train, "Labeled training dataset");
  trn->add_option("--test", train_cmd.test, "Labeled test dataset");
  add_train_flags(trn, train_flags, true);
  trn->add_option("--run-id", train_cmd.run_id, "Run identifier in the CSV reports");
  trn->add_option("--checkpoint-format", train_cmd.checkpoint_format, "json or bin")
      ->check(CLI::IsMember({"json", "bin"}));
  trn->add_option("--aux-column", train_cmd.aux_column,
                  "pretrain-finetune: column binarized as the auxiliary target (-1: first privileged)");

  TrainFlags sweep_train;
  SweepFlags sweep;
  auto* swp = app.add_subcommand("sweep", "Ablation sweep over alpha, tau_target or tau_privileged");
  common(swp);
  swp->add_option("--train", sweep.train, "Training dataset with relevance");
  swp->add_option("--test", sweep.test, "Test dataset with relevance");
  swp->add_option("--axis", sweep.axis, "alpha, tau_target or tau_privileged")
      ->check(CLI::IsMember({"alpha", "tau_target", "tau_privileged"}));
  swp->add_option("--values", sweep.values, "Comma-separated axis values");
  swp->add_option("--strategies", sweep.strategies, "Comma-separated strategies (empty: axis default)");
  swp->add_option("--ks", sweep.ks, "NDCG cutoffs");
  swp->add_option("--repeats", sweep.repeats, "Repeats per value");
  swp->add_option("--num-privileged", sweep.num_privileged, "Correlation split after labeling (0: keep columns)");
  swp->add_option("--temperature", sweep.temperature, "Label temperature t");
  swp->add_option("--tau-target", sweep.tau_target, "Label threshold off the tau_target axis");
  swp->add_option("--label-seed", sweep.label_seed, "Label seed");
  add_train_flags(swp, sweep_train, false);

  EvalFlags eval;
  auto* evl = app.add_subcommand("eval", "Score a test set with a checkpoint");
  common(evl);
  evl->add_option("--model", eval.model, "Checkpoint file");
  evl->add_option("--test", eval.test, "Labeled test dataset");
  evl->add_option("--inputs", eval.inputs, "Columns fed to the model")
      ->check(CLI::IsMember({"regular", "privileged", "all"}));
  evl->add_option("--label", eval.label, "Strategy column of the report");
  evl->add_option("--run-id", eval.run_id, "Run identifier");
  evl->add_option("--ks", eval.ks, "NDCG cutoffs");
  evl->add_option("--seed", eval.seed, "Seed recorded in the report");

  auto* theory = app.add_subcommand("theory", "Linear-model risk checks");
  theory->require_subcommand(1);
  TheoryFlags verify_flags;
  auto* ver = theory->add_subcommand("verify", "Monte Carlo against the closed-form risks");
  common(ver);
  add_theory_flags(ver, verify_flags, false);
  TheoryFlags sweep_flags;
  auto* tsw = theory->add_subcommand("sweep", "Risk over a range of privileged dimensions");
  common(tsw);
  add_theory_flags(tsw, sweep_flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << active_leaf(app)->help();
    return kExitUsage;
  }

  CLI::App* leaf = active_leaf(app);
  try {
    if (!config.empty()) apply_config(leaf, config);
    if (leaf == fix) return cmd_fixture(fix, fixture, out);
    if (leaf == ing) return cmd_ingest(ing, ingest, out);
    if (leaf == gen) return cmd_gen_labels(gen, labels, out);
    if (leaf == spl) return cmd_split_features(spl, split, out);
    if (leaf == trn) return cmd_train(trn, train_flags, train_cmd, out);
    if (leaf == swp) return cmd_sweep(swp, sweep_train, sweep, out);
    if (leaf == evl) return cmd_eval(evl, eval, out);
    if (leaf == ver) return cmd_theory_verify(ver, verify_flags, out);
    if (leaf == tsw) return cmd_theory_sweep(tsw, sweep_flags, out);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << leaf->help();
    return kExitUsage;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n\n" << leaf->help();
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace privdistill::cli
