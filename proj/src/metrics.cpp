#include "privdistill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "privdistill/format.hpp"

namespace privdistill {

RankingPermutation rank_by_scores(std::span<const double> scores) {
  for (double s : scores)
    if (std::isnan(s)) throw MetricError("NaN score cannot be ranked");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankingPermutation perm;
  perm.ranks.resize(scores.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) perm.ranks[order[pos]] = pos + 1;
  return perm;
}

double dcg_at_k(const RankingPermutation& perm, std::span<const double> labels, std::size_t k) {
  if (perm.ranks.size() != labels.size()) throw MetricError("ranking and label lengths differ");
  if (k < 1) throw MetricError("cutoff k must be at least 1");
  double dcg = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t pos = perm.ranks[i];
    if (pos <= k) dcg += (std::exp2(labels[i]) - 1.0) / std::log2(1.0 + static_cast<double>(pos));
  }
  return dcg;
}

double ndcg_at_k(std::span<const double> scores, std::span<const double> labels, std::size_t k) {
  if (scores.size() != labels.size()) throw MetricError("score and label lengths differ");
  const double dcg = dcg_at_k(rank_by_scores(scores), labels, k);
  const double ideal = dcg_at_k(rank_by_scores(labels), labels, k);
  if (ideal <= 0.0) return 0.0;
  return dcg / ideal;
}

std::vector<double> evaluation_labels(const QueryGroup& group, EvalLabels which) {
  if (which == EvalLabels::Binary && group.binary_labels)
    return {group.binary_labels->begin(), group.binary_labels->end()};
  return {group.relevance.begin(), group.relevance.end()};
}

std::vector<NdcgSummary> evaluate_dataset(const std::vector<std::vector<double>>& scores,
                                          const RankingDataset& dataset, const std::vector<std::size_t>& ks,
                                          EvalLabels which) {
  if (scores.size() != dataset.groups.size()) throw MetricError("scores missing for some query groups");
  std::vector<NdcgSummary> out;
  out.reserve(ks.size());
  std::vector<std::vector<double>> labels;
  labels.reserve(scores.size());
  for (const auto& g : dataset.groups) labels.push_back(evaluation_labels(g, which));
  for (std::size_t k : ks) {
    NdcgSummary s;
    s.k = k;
    if (dataset.groups.empty()) {
      out.push_back(s);
      continue;
    }
    std::vector<double> per_group(scores.size());
    for (std::size_t g = 0; g < scores.size(); ++g) {
      if (scores[g].size() != labels[g].size())
        throw MetricError("scores for group '" + dataset.groups[g].query_id + "' have the wrong length");
      per_group[g] = ndcg_at_k(scores[g], labels[g], k);
    }
    const double n = static_cast<double>(per_group.size());
    s.mean = std::accumulate(per_group.begin(), per_group.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : per_group) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / n);
    out.push_back(s);
  }
  return out;
}

std::string eval_row_csv(const EvalRow& row) {
  return join_csv({row.run_id, row.strategy, std::to_string(row.k), format_double(row.mean_ndcg),
                   format_double(row.std_ndcg), std::to_string(row.seed)});
}

}  // namespace privdistill
