#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "privdistill/metrics.hpp"
#include "privdistill/random.hpp"

using namespace privdistill;

namespace {

RankingPermutation perm_of(std::vector<std::size_t> ranks) { return RankingPermutation{std::move(ranks)}; }

// Best DCG over every ordering of the documents.
double brute_force_ideal(const std::vector<double>& labels, std::size_t k) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  double best = 0.0;
  do {
    RankingPermutation p;
    p.ranks.resize(labels.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) p.ranks[order[pos]] = pos + 1;
    best = std::max(best, dcg_at_k(p, labels, k));
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

}  // namespace

TEST_CASE("rank_by_scores examples") {
  const std::vector<double> a{0.9, 0.1, 0.5};
  CHECK(rank_by_scores(a).ranks == std::vector<std::size_t>{1, 3, 2});
  const std::vector<double> b{0.5, 0.5};
  CHECK(rank_by_scores(b).ranks == std::vector<std::size_t>{1, 2});
  CHECK(rank_by_scores(std::vector<double>{}).ranks.empty());
  const std::vector<double> bad{0.1, std::nan("")};
  CHECK_THROWS_AS(rank_by_scores(bad), MetricError);
}

TEST_CASE("dcg examples") {
  const std::vector<double> y{1, 0};
  CHECK(dcg_at_k(perm_of({1, 2}), y, 2) == doctest::Approx(1.0));
  CHECK(dcg_at_k(perm_of({2, 1}), y, 2) == doctest::Approx(1.0 / std::log2(3.0)));
  const std::vector<double> zeros{0, 0, 0};
  CHECK(dcg_at_k(perm_of({1, 2, 3}), zeros, 2) == 0.0);
  CHECK_THROWS_AS(dcg_at_k(perm_of({1, 2}), zeros, 2), MetricError);
  CHECK_THROWS_AS(dcg_at_k(perm_of({1, 2}), y, 0), MetricError);
}

TEST_CASE("ndcg examples") {
  const std::vector<double> y{0, 1, 0};
  const std::vector<double> s{0.1, 0.9, 0.3};
  CHECK(ndcg_at_k(s, y, 3) == 1.0);
  const std::vector<double> y2{1, 0};
  const std::vector<double> s2{0.1, 0.9};
  CHECK(ndcg_at_k(s2, y2, 2) == doctest::Approx(0.6309).epsilon(1e-4));
  const std::vector<double> z{0, 0};
  CHECK(ndcg_at_k(s2, z, 2) == 0.0);
}

TEST_CASE("ndcg matches the brute-force ideal for up to six documents") {
  Rng rng(5);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<double> labels(n), scores(n);
      for (auto& y : labels) y = static_cast<double>(rng.index(5));
      for (auto& s : scores) s = std::round(rng.normal() * 2) / 2;  // ties on purpose
      for (std::size_t k = 1; k <= n + 1; ++k) {
        const double ideal = brute_force_ideal(labels, k);
        const double dcg = dcg_at_k(rank_by_scores(scores), labels, k);
        const double expected = ideal == 0.0 ? 0.0 : dcg / ideal;
        CHECK(std::abs(ndcg_at_k(scores, labels, k) - expected) <= 1e-12);
      }
    }
  }
}

TEST_CASE("ndcg lies in [0, 1] and ranking by labels is optimal") {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.index(30);
    std::vector<double> labels(n), scores(n);
    for (auto& y : labels) y = static_cast<double>(rng.index(2));
    labels[rng.index(n)] = 1.0;
    for (auto& s : scores) s = rng.normal();
    for (std::size_t k : {1, 3, 8, 16, 32}) {
      const double v = ndcg_at_k(scores, labels, k);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-15);
      CHECK(ndcg_at_k(labels, labels, k) == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
}

TEST_CASE("dcg is monotone in k") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(12);
    std::vector<double> labels(n), scores(n);
    for (auto& y : labels) y = static_cast<double>(rng.index(5));
    for (auto& s : scores) s = rng.normal();
    auto p = rank_by_scores(scores);
    for (std::size_t k = 1; k <= n + 1; ++k) CHECK(dcg_at_k(p, labels, k) <= dcg_at_k(p, labels, k + 1));
  }
}

TEST_CASE("exchange: moving a better document up never lowers DCG") {
  Rng rng(17);
  for (std::size_t n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> labels(n);
      for (auto& y : labels) y = static_cast<double>(rng.index(5));
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      do {
        RankingPermutation p;
        p.ranks.resize(n);
        for (std::size_t pos = 0; pos < n; ++pos) p.ranks[order[pos]] = pos + 1;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            // document i sits below j but carries the higher label
            if (!(labels[i] > labels[j] && p.ranks[i] > p.ranks[j])) continue;
            RankingPermutation q = p;
            std::swap(q.ranks[i], q.ranks[j]);
            for (std::size_t k = 1; k <= n; ++k) CHECK(dcg_at_k(q, labels, k) >= dcg_at_k(p, labels, k) - 1e-15);
          }
        }
      } while (std::next_permutation(order.begin(), order.end()));
    }
  }
}

TEST_CASE("evaluate_dataset averages over groups") {
  RankingDataset ds;
  ds.num_features = 1;
  for (int g = 0; g < 2; ++g) {
    QueryGroup q;
    q.query_id = std::to_string(g);
    q.features = Matrix::Zero(2, 1);
    q.relevance = {0, 0};
    q.binary_labels = std::vector<int>{1, 0};
    ds.groups.push_back(q);
  }
  // group 0 ranks its positive first, group 1 last with an empty top-1
  std::vector<std::vector<double>> scores{{1.0, 0.0}, {0.0, 1.0}};
  auto res = evaluate_dataset(scores, ds, {1});
  REQUIRE(res.size() == 1);
  CHECK(res[0].k == 1);
  CHECK(res[0].mean == 0.5);
  CHECK(res[0].stddev == 0.5);

  auto three = evaluate_dataset(scores, ds);
  CHECK(three.size() == 3);
  CHECK(three[0].k == 8);
  CHECK(three[2].k == 32);

  std::vector<std::vector<double>> one{{1.0, 0.0}};
  CHECK_THROWS_AS(evaluate_dataset(one, ds), MetricError);
}

TEST_CASE("evaluation labels prefer binary labels") {
  QueryGroup q;
  q.features = Matrix::Zero(2, 1);
  q.relevance = {3, 0};
  CHECK(evaluation_labels(q) == std::vector<double>{3, 0});
  q.binary_labels = std::vector<int>{0, 1};
  CHECK(evaluation_labels(q) == std::vector<double>{0, 1});
  CHECK(evaluation_labels(q, EvalLabels::Relevance) == std::vector<double>{3, 0});
}

TEST_CASE("eval CSV rows use shortest round-trip numbers") {
  EvalRow row{"r1", "pfd", 8, 0.1, 0.25, 3};
  CHECK(eval_row_csv(row) == "r1,pfd,8,0.1,0.25,3");
  CHECK(std::string(kEvalCsvHeader) == "run_id,strategy,k,mean_ndcg,std_ndcg,seed");
}
