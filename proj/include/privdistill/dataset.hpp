#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace privdistill {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised for malformed inputs to any dataset operation.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse failure carrying the 1-based line number of the offending line.
class ParseError : public DatasetError {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct QueryGroup {
  std::string query_id;
  Matrix features;  // num_docs x num_features
  std::vector<int> relevance;
  std::optional<std::vector<int>> binary_labels;

  std::size_t num_docs() const { return relevance.size(); }
  bool has_positive_label() const;

  /// Throws DatasetError when the shape or label invariants do not hold.
  void validate(std::size_t num_features) const;
};

struct RankingDataset {
  std::vector<QueryGroup> groups;
  std::size_t num_features = 0;
  std::vector<std::size_t> regular_cols;
  std::vector<std::size_t> privileged_cols;

  std::size_t num_docs() const;
  bool has_labels() const;
  void validate() const;
};

struct LabelGenConfig {
  double temperature = 4.0;
  double tau_target = 4.8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The two Gumbel draws behind one binary label.
struct GumbelPair {
  double g0 = 0.0;
  double g1 = 0.0;
};

/// Per-group, per-document Gumbel draws recorded during label generation so a
/// second indicator with a different threshold can share the same noise.
using GumbelNoise = std::vector<std::vector<GumbelPair>>;

struct LabeledDataset {
  RankingDataset dataset;
  GumbelNoise noise;
};

// ---------------------------------------------------------------------------
// Ingestion and serialization of `<rel> qid:<id> <idx>:<val> ...` files.
// A trailing `# y=<0|1>` comment carries a generated binary label.

RankingDataset parse_ranking_stream(std::istream& in);

/// Files ending in `.gz` are decompressed transparently.
RankingDataset parse_ranking_file(const std::filesystem::path& path);

void write_ranking_stream(std::ostream& out, const RankingDataset& dataset);
void write_ranking_file(const std::filesystem::path& path, const RankingDataset& dataset);

// ---------------------------------------------------------------------------
// Preprocessing.

/// Sign-preserving log(1 + |v|) applied elementwise.
double log1p_signed(double v);
RankingDataset log1p_transform(const RankingDataset& dataset);

/// Keeps groups with at least `min_docs` documents and one positive relevance.
RankingDataset filter_query_groups(const RankingDataset& dataset, std::size_t min_docs = 10);

// ---------------------------------------------------------------------------
// Binary labels, y = 1(t*r + G1 > t*tau + G0).

double standard_gumbel(double uniform01);
double label_probability(double temperature, double relevance, double tau);

RankingDataset generate_binary_labels(const RankingDataset& dataset, const LabelGenConfig& cfg);

/// Same draws as generate_binary_labels, with the noise kept for reuse.
LabeledDataset generate_binary_labels_recorded(const RankingDataset& dataset,
                                               const LabelGenConfig& cfg);

/// Thresholds recorded noise at `tau`; with tau equal to the label threshold
/// this reproduces the labels exactly.
std::vector<std::vector<int>> indicator_from_noise(const RankingDataset& dataset,
                                                   const GumbelNoise& noise,
                                                   double temperature, double tau);

/// Appends `indicator` as one extra column and makes it the only privileged
/// column; every original column becomes regular.
RankingDataset with_indicator_privileged(const RankingDataset& dataset,
                                         const std::vector<std::vector<int>>& indicator);

// ---------------------------------------------------------------------------
// Feature split and group partition.

/// Pearson correlation of every column with the binary label, pooled over all
/// documents. Zero-variance columns get 0.
std::vector<double> label_correlations(const RankingDataset& dataset);

RankingDataset split_features_by_correlation(const RankingDataset& dataset,
                                             std::size_t num_privileged);

std::pair<RankingDataset, RankingDataset> partition_by_positivity(const RankingDataset& dataset);

/// Group-level copy of a subset of the dataset, keeping column metadata.
RankingDataset select_groups(const RankingDataset& dataset, const std::vector<std::size_t>& indices);

// ---------------------------------------------------------------------------
// Fixtures.

struct FixtureSpec {
  std::size_t num_groups = 10;
  std::size_t docs_per_group = 20;
  std::size_t num_features = 5;
  std::uint64_t seed = 0;
};

/// Relevance probabilities over {0,1,2,3,4} used by make_synthetic_fixture.
inline constexpr double kFixtureRelevanceMass[5] = {0.45, 0.25, 0.15, 0.10, 0.05};

/// Standard-normal features, relevance drawn independently from
/// kFixtureRelevanceMass.
RankingDataset make_synthetic_fixture(const FixtureSpec& spec);

/// Fixture whose relevance depends on the features. A latent score
/// a * <x, w> + b * <u, v> + noise * e (each part unit variance before
/// weighting) is cut at the quantiles of kFixtureRelevanceMass. The x block
/// becomes the regular columns and the u block the privileged columns.
struct LatentFixtureSpec {
  std::size_t num_groups = 100;
  std::size_t docs_per_group = 20;
  std::size_t num_regular = 5;
  std::size_t num_privileged = 3;
  double regular_weight = 1.0;
  double privileged_weight = 1.0;
  double noise = 0.5;
  std::uint64_t seed = 0;
  std::uint64_t direction_seed = 7;  // draws w and v; shared by train and test
};

RankingDataset make_latent_fixture(const LatentFixtureSpec& spec);

// ---------------------------------------------------------------------------

struct DatasetStats {
  std::size_t num_groups = 0;
  std::size_t num_docs = 0;
  std::size_t num_features = 0;
  std::size_t num_regular = 0;
  std::size_t num_privileged = 0;
  double docs_per_group_mean = 0.0;
  std::optional<double> positive_group_fraction;  // only with binary labels
  double relevant_group_fraction = 0.0;            // groups with relevance > 0
};

DatasetStats compute_stats(const RankingDataset& dataset);
std::string stats_to_json(const DatasetStats& stats);

/// FNV-1a over the canonical text serialization.
std::string dataset_content_hash(const RankingDataset& dataset);

}  // namespace privdistill
