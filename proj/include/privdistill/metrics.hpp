#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "privdistill/dataset.hpp"

namespace privdistill {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// ranks[i] is the 1-based position of document i.
struct RankingPermutation {
  std::vector<std::size_t> ranks;
};

inline const std::vector<std::size_t> kDefaultNdcgCutoffs = {8, 16, 32};

/// Descending by score; equal scores keep document order.
RankingPermutation rank_by_scores(std::span<const double> scores);

/// Sum over positions <= k of (2^y - 1) / log2(1 + position).
double dcg_at_k(const RankingPermutation& perm, std::span<const double> labels, std::size_t k);

/// 0 when the ideal DCG is 0.
double ndcg_at_k(std::span<const double> scores, std::span<const double> labels, std::size_t k);

struct NdcgSummary {
  std::size_t k = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population std over groups
};

enum class EvalLabels { Binary, Relevance };

/// Labels used for evaluation of one group: binary labels when requested and
/// present, graded relevance otherwise.
std::vector<double> evaluation_labels(const QueryGroup& group, EvalLabels which = EvalLabels::Binary);

/// Mean NDCG over groups for each cutoff; `scores[g]` scores group g.
std::vector<NdcgSummary> evaluate_dataset(const std::vector<std::vector<double>>& scores,
                                          const RankingDataset& dataset,
                                          const std::vector<std::size_t>& ks = kDefaultNdcgCutoffs,
                                          EvalLabels which = EvalLabels::Binary);

/// One row of the `run_id,strategy,k,mean_ndcg,std_ndcg,seed` report.
struct EvalRow {
  std::string run_id;
  std::string strategy;
  std::size_t k = 0;
  double mean_ndcg = 0.0;
  double std_ndcg = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kEvalCsvHeader = "run_id,strategy,k,mean_ndcg,std_ndcg,seed";
std::string eval_row_csv(const EvalRow& row);

}  // namespace privdistill
