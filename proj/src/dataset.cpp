#include "privdistill/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include <zlib.h>

#include "json.hpp"

#include "privdistill/format.hpp"
#include "privdistill/random.hpp"

namespace privdistill {

ParseError::ParseError(std::size_t line, const std::string& what)
    : DatasetError("line " + std::to_string(line) + ": " + what), line_(line) {}

bool QueryGroup::has_positive_label() const {
  if (!binary_labels) return false;
  return std::any_of(binary_labels->begin(), binary_labels->end(), [](int y) { return y == 1; });
}

void QueryGroup::validate(std::size_t num_features) const {
  if (relevance.empty()) throw DatasetError("query group '" + query_id + "' has no documents");
  if (static_cast<std::size_t>(features.rows()) != relevance.size())
    throw DatasetError("query group '" + query_id + "': feature rows do not match relevance length");
  if (static_cast<std::size_t>(features.cols()) != num_features)
    throw DatasetError("query group '" + query_id + "': wrong feature count");
  for (int r : relevance)
    if (r < 0 || r > 4) throw DatasetError("query group '" + query_id + "': relevance outside 0..4");
  if (binary_labels) {
    if (binary_labels->size() != relevance.size())
      throw DatasetError("query group '" + query_id + "': binary label length mismatch");
    for (int y : *binary_labels)
      if (y != 0 && y != 1) throw DatasetError("query group '" + query_id + "': binary label not 0/1");
  }
  if (!features.allFinite()) throw DatasetError("query group '" + query_id + "': non-finite feature");
}

std::size_t RankingDataset::num_docs() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.num_docs();
  return n;
}

bool RankingDataset::has_labels() const {
  return !groups.empty() &&
         std::all_of(groups.begin(), groups.end(), [](const QueryGroup& g) { return g.binary_labels.has_value(); });
}

void RankingDataset::validate() const {
  for (const auto& g : groups) g.validate(num_features);
  for (std::size_t c : regular_cols)
    if (c >= num_features) throw DatasetError("regular column out of range");
  for (std::size_t c : privileged_cols) {
    if (c >= num_features) throw DatasetError("privileged column out of range");
    if (std::find(regular_cols.begin(), regular_cols.end(), c) != regular_cols.end())
      throw DatasetError("column " + std::to_string(c) + " is both regular and privileged");
  }
}

void LabelGenConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw DatasetError("label temperature must be positive");
  if (!std::isfinite(tau_target)) throw DatasetError("tau_target must be finite");
}

// ---------------------------------------------------------------------------

namespace {

struct ParsedLine {
  int relevance = 0;
  std::string qid;
  std::vector<std::pair<std::size_t, double>> values;
  std::optional<int> label;
};

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<int> parse_label_comment(std::string_view comment, std::size_t line_no) {
  for (auto tok : split_ws(comment)) {
    if (tok.substr(0, 2) != "y=") continue;
    long long y = 0;
    if (!parse_int(tok.substr(2), y) || (y != 0 && y != 1))
      throw ParseError(line_no, "binary label comment must be y=0 or y=1");
    return static_cast<int>(y);
  }
  return std::nullopt;
}

ParsedLine parse_line(std::string_view line, std::size_t line_no) {
  ParsedLine out;
  std::string_view body = line;
  if (auto hash = line.find('#'); hash != std::string_view::npos) {
    out.label = parse_label_comment(line.substr(hash + 1), line_no);
    body = line.substr(0, hash);
  }
  auto tokens = split_ws(body);
  if (tokens.size() < 2) throw ParseError(line_no, "expected '<label> qid:<id> ...'");

  long long rel = 0;
  if (!parse_int(tokens[0], rel)) throw ParseError(line_no, "non-integer relevance label '" + std::string(tokens[0]) + "'");
  if (rel < 0 || rel > 4) throw ParseError(line_no, "relevance label outside 0..4");
  out.relevance = static_cast<int>(rel);

  if (tokens[1].substr(0, 4) != "qid:" || tokens[1].size() == 4)
    throw ParseError(line_no, "second token must be qid:<id>");
  out.qid = std::string(tokens[1].substr(4));

  std::size_t prev = 0;
  for (std::size_t t = 2; t < tokens.size(); ++t) {
    auto tok = tokens[t];
    auto colon = tok.find(':');
    if (colon == std::string_view::npos) throw ParseError(line_no, "malformed feature token '" + std::string(tok) + "'");
    long long idx = 0;
    double val = 0.0;
    if (!parse_int(tok.substr(0, colon), idx) || idx < 1)
      throw ParseError(line_no, "feature index must be a positive integer in '" + std::string(tok) + "'");
    if (!parse_double(tok.substr(colon + 1), val))
      throw ParseError(line_no, "malformed feature value in '" + std::string(tok) + "'");
    if (!std::isfinite(val)) throw ParseError(line_no, "non-finite feature value");
    if (static_cast<std::size_t>(idx) <= prev) throw ParseError(line_no, "feature indices must increase");
    prev = static_cast<std::size_t>(idx);
    out.values.emplace_back(prev - 1, val);
  }
  return out;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

RankingDataset assemble(std::vector<ParsedLine>& lines) {
  if (lines.empty()) throw DatasetError("empty dataset: no documents found");
  std::size_t num_features = 0;
  for (const auto& l : lines)
    if (!l.values.empty()) num_features = std::max(num_features, l.values.back().first + 1);

  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<const ParsedLine*>> members;
  std::vector<std::string> order;
  for (const auto& l : lines) {
    auto [it, fresh] = index.try_emplace(l.qid, members.size());
    if (fresh) {
      members.emplace_back();
      order.push_back(l.qid);
    }
    members[it->second].push_back(&l);
  }

  const bool labeled = lines.front().label.has_value();
  RankingDataset ds;
  ds.num_features = num_features;
  ds.groups.reserve(members.size());
  for (std::size_t g = 0; g < members.size(); ++g) {
    QueryGroup group;
    group.query_id = order[g];
    const auto& docs = members[g];
    group.features = Matrix::Zero(static_cast<Eigen::Index>(docs.size()), static_cast<Eigen::Index>(num_features));
    group.relevance.resize(docs.size());
    if (labeled) group.binary_labels.emplace(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
      group.relevance[d] = docs[d]->relevance;
      for (auto [c, v] : docs[d]->values) group.features(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c)) = v;
      if (labeled) (*group.binary_labels)[d] = *docs[d]->label;
    }
    ds.groups.push_back(std::move(group));
  }
  ds.regular_cols.resize(num_features);
  std::iota(ds.regular_cols.begin(), ds.regular_cols.end(), std::size_t{0});
  return ds;
}

template <class NextLine>
RankingDataset parse_lines(NextLine&& next_line) {
  std::vector<ParsedLine> parsed;
  std::string line;
  std::size_t line_no = 0;
  std::optional<bool> labeled;
  while (next_line(line)) {
    ++line_no;
    if (is_blank(line)) continue;
    parsed.push_back(parse_line(line, line_no));
    bool has = parsed.back().label.has_value();
    if (!labeled) labeled = has;
    else if (*labeled != has) throw ParseError(line_no, "binary label comments must be on every line or none");
  }
  return assemble(parsed);
}

}  // namespace

RankingDataset parse_ranking_stream(std::istream& in) {
  return parse_lines([&](std::string& line) { return static_cast<bool>(std::getline(in, line)); });
}

RankingDataset parse_ranking_file(const std::filesystem::path& path) {
  if (path.extension() == ".gz") {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw DatasetError("cannot open " + path.string());
    struct Closer {
      gzFile f;
      ~Closer() { gzclose(f); }
    } closer{f};
    std::vector<char> buf(1 << 16);
    return parse_lines([&](std::string& line) {
      line.clear();
      bool any = false;
      while (true) {
        char* got = gzgets(f, buf.data(), static_cast<int>(buf.size()));
        if (!got) {
          int err = 0;
          gzerror(f, &err);
          if (err != Z_OK && err != Z_STREAM_END) throw DatasetError("gzip read error in " + path.string());
          return any;
        }
        any = true;
        line += got;
        if (!line.empty() && line.back() == '\n') {
          line.pop_back();
          return true;
        }
      }
    });
  }
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  return parse_ranking_stream(in);
}

void write_ranking_stream(std::ostream& out, const RankingDataset& dataset) {
  for (const auto& g : dataset.groups) {
    for (std::size_t d = 0; d < g.num_docs(); ++d) {
      std::string line = std::to_string(g.relevance[d]) + " qid:" + g.query_id;
      for (std::size_t c = 0; c < dataset.num_features; ++c) {
        line += ' ';
        line += std::to_string(c + 1);
        line += ':';
        line += format_double(g.features(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c)));
      }
      if (g.binary_labels) line += " # y=" + std::to_string((*g.binary_labels)[d]);
      out << line << '\n';
    }
  }
}

void write_ranking_file(const std::filesystem::path& path, const RankingDataset& dataset) {
  std::ostringstream buf;
  write_ranking_stream(buf, dataset);
  const std::string text = buf.str();
  if (path.extension() == ".gz") {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (!f) throw DatasetError("cannot write " + path.string());
    int wrote = text.empty() ? 0 : gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    gzclose(f);
    if (wrote != static_cast<int>(text.size())) throw DatasetError("gzip write failed for " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << text;
  if (!out) throw DatasetError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

double log1p_signed(double v) {
  if (!std::isfinite(v)) throw DatasetError("log1p transform requires finite input");
  if (v == 0.0) return 0.0;
  return std::copysign(std::log1p(std::fabs(v)), v);
}

RankingDataset log1p_transform(const RankingDataset& dataset) {
  RankingDataset out = dataset;
  for (auto& g : out.groups) g.features = g.features.unaryExpr([](double v) { return log1p_signed(v); });
  return out;
}

RankingDataset filter_query_groups(const RankingDataset& dataset, std::size_t min_docs) {
  if (min_docs < 1) throw DatasetError("min_docs must be at least 1");
  RankingDataset out;
  out.num_features = dataset.num_features;
  out.regular_cols = dataset.regular_cols;
  out.privileged_cols = dataset.privileged_cols;
  for (const auto& g : dataset.groups) {
    bool relevant = std::any_of(g.relevance.begin(), g.relevance.end(), [](int r) { return r > 0; });
    if (g.num_docs() >= min_docs && relevant) out.groups.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------------------

double standard_gumbel(double uniform01) { return -std::log(-std::log(uniform01)); }

double label_probability(double temperature, double relevance, double tau) {
  double x = temperature * (relevance - tau);
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

LabeledDataset generate_binary_labels_recorded(const RankingDataset& dataset, const LabelGenConfig& cfg) {
  cfg.validate();
  LabeledDataset out{dataset, {}};
  Rng rng(cfg.seed);
  out.noise.reserve(dataset.groups.size());
  for (auto& g : out.dataset.groups) {
    std::vector<GumbelPair> draws(g.num_docs());
    std::vector<int> labels(g.num_docs());
    for (std::size_t d = 0; d < g.num_docs(); ++d) {
      draws[d].g0 = standard_gumbel(rng.open_uniform());
      draws[d].g1 = standard_gumbel(rng.open_uniform());
      labels[d] = cfg.temperature * g.relevance[d] + draws[d].g1 > cfg.temperature * cfg.tau_target + draws[d].g0;
    }
    g.binary_labels = std::move(labels);
    out.noise.push_back(std::move(draws));
  }
  return out;
}

RankingDataset generate_binary_labels(const RankingDataset& dataset, const LabelGenConfig& cfg) {
  return generate_binary_labels_recorded(dataset, cfg).dataset;
}

std::vector<std::vector<int>> indicator_from_noise(const RankingDataset& dataset, const GumbelNoise& noise,
                                                   double temperature, double tau) {
  if (noise.size() != dataset.groups.size()) throw DatasetError("recorded noise does not match dataset groups");
  std::vector<std::vector<int>> out(dataset.groups.size());
  for (std::size_t g = 0; g < dataset.groups.size(); ++g) {
    const auto& group = dataset.groups[g];
    if (noise[g].size() != group.num_docs()) throw DatasetError("recorded noise does not match group size");
    out[g].resize(group.num_docs());
    for (std::size_t d = 0; d < group.num_docs(); ++d)
      out[g][d] = temperature * group.relevance[d] + noise[g][d].g1 > temperature * tau + noise[g][d].g0;
  }
  return out;
}

RankingDataset with_indicator_privileged(const RankingDataset& dataset,
                                         const std::vector<std::vector<int>>& indicator) {
  if (indicator.size() != dataset.groups.size()) throw DatasetError("indicator does not match dataset groups");
  RankingDataset out;
  out.num_features = dataset.num_features + 1;
  out.regular_cols.resize(dataset.num_features);
  std::iota(out.regular_cols.begin(), out.regular_cols.end(), std::size_t{0});
  out.privileged_cols = {dataset.num_features};
  out.groups.reserve(dataset.groups.size());
  for (std::size_t g = 0; g < dataset.groups.size(); ++g) {
    const auto& src = dataset.groups[g];
    if (indicator[g].size() != src.num_docs()) throw DatasetError("indicator does not match group size");
    QueryGroup group = src;
    group.features.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(out.num_features));
    for (std::size_t d = 0; d < src.num_docs(); ++d)
      group.features(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(dataset.num_features)) = indicator[g][d];
    out.groups.push_back(std::move(group));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> label_correlations(const RankingDataset& dataset) {
  if (!dataset.has_labels()) throw DatasetError("feature split requires binary labels");
  const std::size_t f = dataset.num_features;
  const double n = static_cast<double>(dataset.num_docs());
  Vector mean_x = Vector::Zero(static_cast<Eigen::Index>(f));
  double mean_y = 0.0;
  for (const auto& g : dataset.groups) {
    mean_x += g.features.colwise().sum().transpose();
    for (int y : *g.binary_labels) mean_y += y;
  }
  mean_x /= n;
  mean_y /= n;

  Vector cov = Vector::Zero(static_cast<Eigen::Index>(f));
  Vector var_x = Vector::Zero(static_cast<Eigen::Index>(f));
  double var_y = 0.0;
  for (const auto& g : dataset.groups) {
    for (std::size_t d = 0; d < g.num_docs(); ++d) {
      double dy = (*g.binary_labels)[d] - mean_y;
      Vector dx = g.features.row(static_cast<Eigen::Index>(d)).transpose() - mean_x;
      cov += dx * dy;
      var_x += dx.cwiseProduct(dx);
      var_y += dy * dy;
    }
  }
  std::vector<double> corr(f, 0.0);
  for (std::size_t c = 0; c < f; ++c) {
    double denom = std::sqrt(var_x[static_cast<Eigen::Index>(c)] * var_y);
    if (denom > 0.0) corr[c] = cov[static_cast<Eigen::Index>(c)] / denom;
  }
  return corr;
}

RankingDataset split_features_by_correlation(const RankingDataset& dataset, std::size_t num_privileged) {
  if (num_privileged > dataset.num_features)
    throw DatasetError("num_privileged exceeds the number of features");
  const auto corr = label_correlations(dataset);
  std::vector<std::size_t> order(dataset.num_features);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::fabs(corr[a]) > std::fabs(corr[b]); });
  RankingDataset out = dataset;
  out.privileged_cols.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(num_privileged));
  out.regular_cols.assign(order.begin() + static_cast<std::ptrdiff_t>(num_privileged), order.end());
  std::sort(out.privileged_cols.begin(), out.privileged_cols.end());
  std::sort(out.regular_cols.begin(), out.regular_cols.end());
  return out;
}

std::pair<RankingDataset, RankingDataset> partition_by_positivity(const RankingDataset& dataset) {
  RankingDataset pos, neg;
  for (auto* part : {&pos, &neg}) {
    part->num_features = dataset.num_features;
    part->regular_cols = dataset.regular_cols;
    part->privileged_cols = dataset.privileged_cols;
  }
  for (const auto& g : dataset.groups) {
    if (!g.binary_labels) throw DatasetError("partition requires binary labels");
    (g.has_positive_label() ? pos : neg).groups.push_back(g);
  }
  return {std::move(pos), std::move(neg)};
}

RankingDataset select_groups(const RankingDataset& dataset, const std::vector<std::size_t>& indices) {
  RankingDataset out;
  out.num_features = dataset.num_features;
  out.regular_cols = dataset.regular_cols;
  out.privileged_cols = dataset.privileged_cols;
  out.groups.reserve(indices.size());
  for (std::size_t i : indices) out.groups.push_back(dataset.groups.at(i));
  return out;
}

// ---------------------------------------------------------------------------

RankingDataset make_synthetic_fixture(const FixtureSpec& spec) {
  if (spec.num_groups < 1 || spec.docs_per_group < 1 || spec.num_features < 1)
    throw DatasetError("fixture counts must be at least 1");
  Rng rng(spec.seed);
  RankingDataset ds;
  ds.num_features = spec.num_features;
  ds.regular_cols.resize(spec.num_features);
  std::iota(ds.regular_cols.begin(), ds.regular_cols.end(), std::size_t{0});
  const auto docs = static_cast<Eigen::Index>(spec.docs_per_group);
  const auto cols = static_cast<Eigen::Index>(spec.num_features);
  for (std::size_t g = 0; g < spec.num_groups; ++g) {
    QueryGroup group;
    group.query_id = std::to_string(g + 1);
    group.features.resize(docs, cols);
    for (Eigen::Index d = 0; d < docs; ++d)
      for (Eigen::Index c = 0; c < cols; ++c) group.features(d, c) = rng.normal();
    group.relevance.resize(spec.docs_per_group);
    for (auto& r : group.relevance) r = rng.categorical(kFixtureRelevanceMass);
    ds.groups.push_back(std::move(group));
  }
  return ds;
}

RankingDataset make_latent_fixture(const LatentFixtureSpec& spec) {
  if (spec.num_groups < 1 || spec.docs_per_group < 1 || spec.num_regular < 1)
    throw DatasetError("fixture counts must be at least 1");
  const double pw = spec.num_privileged > 0 ? spec.privileged_weight : 0.0;
  const double scale = std::sqrt(spec.regular_weight * spec.regular_weight + pw * pw + spec.noise * spec.noise);
  if (!(scale > 0.0)) throw DatasetError("latent fixture needs a nonzero weight");
  // standard normal quantiles at the cumulative relevance mass .45 .70 .85 .95
  constexpr double cuts[4] = {-0.12566134685507402, 0.5244005127080407, 1.0364333894937898, 1.6448536269514722};

  auto unit_direction = [](Rng& r, std::size_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = r.normal();
    if (n > 0) v /= v.norm();
    return v;
  };
  Rng dir_rng(spec.direction_seed);
  const Vector w = unit_direction(dir_rng, spec.num_regular);
  const Vector v = unit_direction(dir_rng, spec.num_privileged);

  const std::size_t nf = spec.num_regular + spec.num_privileged;
  RankingDataset ds;
  ds.num_features = nf;
  ds.regular_cols.resize(spec.num_regular);
  std::iota(ds.regular_cols.begin(), ds.regular_cols.end(), std::size_t{0});
  ds.privileged_cols.resize(spec.num_privileged);
  std::iota(ds.privileged_cols.begin(), ds.privileged_cols.end(), spec.num_regular);

  Rng rng(spec.seed);
  const auto docs = static_cast<Eigen::Index>(spec.docs_per_group);
  const auto nr = static_cast<Eigen::Index>(spec.num_regular);
  const auto np = static_cast<Eigen::Index>(spec.num_privileged);
  for (std::size_t g = 0; g < spec.num_groups; ++g) {
    QueryGroup group;
    group.query_id = std::to_string(g + 1);
    group.features.resize(docs, static_cast<Eigen::Index>(nf));
    group.relevance.resize(spec.docs_per_group);
    for (Eigen::Index d = 0; d < docs; ++d) {
      for (Eigen::Index c = 0; c < nr + np; ++c) group.features(d, c) = rng.normal();
      double latent = spec.noise * rng.normal();
      latent += spec.regular_weight * group.features.row(d).head(nr).dot(w.transpose());
      if (np > 0) latent += pw * group.features.row(d).tail(np).dot(v.transpose());
      latent /= scale;
      int r = 0;
      while (r < 4 && latent > cuts[r]) ++r;
      group.relevance[static_cast<std::size_t>(d)] = r;
    }
    ds.groups.push_back(std::move(group));
  }
  return ds;
}

// ---------------------------------------------------------------------------

DatasetStats compute_stats(const RankingDataset& dataset) {
  DatasetStats s;
  s.num_groups = dataset.groups.size();
  s.num_docs = dataset.num_docs();
  s.num_features = dataset.num_features;
  s.num_regular = dataset.regular_cols.size();
  s.num_privileged = dataset.privileged_cols.size();
  if (s.num_groups == 0) return s;
  s.docs_per_group_mean = static_cast<double>(s.num_docs) / static_cast<double>(s.num_groups);
  std::size_t relevant = 0;
  for (const auto& g : dataset.groups)
    relevant += std::any_of(g.relevance.begin(), g.relevance.end(), [](int r) { return r > 0; });
  s.relevant_group_fraction = static_cast<double>(relevant) / static_cast<double>(s.num_groups);
  if (dataset.has_labels()) {
    std::size_t pos = 0;
    for (const auto& g : dataset.groups) pos += g.has_positive_label();
    s.positive_group_fraction = static_cast<double>(pos) / static_cast<double>(s.num_groups);
  }
  return s;
}

std::string stats_to_json(const DatasetStats& s) {
  nlohmann::json j;
  j["num_groups"] = s.num_groups;
  j["num_docs"] = s.num_docs;
  j["num_features"] = s.num_features;
  j["num_regular"] = s.num_regular;
  j["num_privileged"] = s.num_privileged;
  j["docs_per_group_mean"] = s.docs_per_group_mean;
  j["relevant_group_fraction"] = s.relevant_group_fraction;
  j["positive_group_fraction"] =
      s.positive_group_fraction ? nlohmann::json(*s.positive_group_fraction) : nlohmann::json(nullptr);
  return j.dump();
}

std::string dataset_content_hash(const RankingDataset& dataset) {
  std::ostringstream buf;
  write_ranking_stream(buf, dataset);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : buf.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace privdistill
