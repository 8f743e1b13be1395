#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "privdistill/dataset.hpp"
#include "privdistill/random.hpp"

using namespace privdistill;

namespace {

RankingDataset parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_ranking_stream(in);
}

QueryGroup make_group(const std::string& id, std::size_t docs, std::vector<int> rel, std::size_t features = 2) {
  QueryGroup g;
  g.query_id = id;
  g.features = Matrix::Zero(static_cast<Eigen::Index>(docs), static_cast<Eigen::Index>(features));
  g.relevance = std::move(rel);
  return g;
}

RankingDataset with_groups(std::vector<QueryGroup> groups, std::size_t features = 2) {
  RankingDataset ds;
  ds.groups = std::move(groups);
  ds.num_features = features;
  for (std::size_t c = 0; c < features; ++c) ds.regular_cols.push_back(c);
  return ds;
}

}  // namespace

TEST_CASE("parse: two lines of one query") {
  auto ds = parse_text("2 qid:1 1:0.5\n0 qid:1 2:1.0\n");
  REQUIRE(ds.groups.size() == 1);
  const auto& g = ds.groups[0];
  CHECK(g.num_docs() == 2);
  CHECK(ds.num_features == 2);
  CHECK(g.features(0, 0) == 0.5);
  CHECK(g.features(0, 1) == 0.0);
  CHECK(g.features(1, 0) == 0.0);
  CHECK(g.features(1, 1) == 1.0);
  CHECK(g.relevance == std::vector<int>{2, 0});
}

TEST_CASE("parse: groups follow first appearance of qid") {
  auto ds = parse_text("1 qid:7 1:1\n0 qid:7 1:2\n3 qid:2 1:3\n");
  REQUIRE(ds.groups.size() == 2);
  CHECK(ds.groups[0].query_id == "7");
  CHECK(ds.groups[0].num_docs() == 2);
  CHECK(ds.groups[1].query_id == "2");
  CHECK(ds.groups[1].num_docs() == 1);
}

TEST_CASE("parse: malformed token reports its line") {
  try {
    parse_text("1 qid:1 1:0.5\n5 qid:1 1:x\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_text("x qid:1 1:1\n"), ParseError);
  CHECK_THROWS_AS(parse_text("1 1:1\n"), ParseError);
  CHECK_THROWS_AS(parse_text("1 qid:1 2:1 1:1\n"), ParseError);
  CHECK_THROWS_AS(parse_text(""), DatasetError);
}

TEST_CASE("parse: binary label comments") {
  auto ds = parse_text("1 qid:1 1:1 # y=1\n0 qid:1 1:2 # y=0\n");
  REQUIRE(ds.has_labels());
  CHECK(*ds.groups[0].binary_labels == std::vector<int>{1, 0});
  CHECK_THROWS_AS(parse_text("1 qid:1 1:1 # y=1\n0 qid:1 1:2\n"), ParseError);
}

TEST_CASE("serialize then parse is the identity") {
  FixtureSpec spec{6, 9, 4, 3};
  auto ds = generate_binary_labels(make_synthetic_fixture(spec), LabelGenConfig{4.0, 2.0, 1});
  std::ostringstream out;
  write_ranking_stream(out, ds);
  auto back = parse_text(out.str());
  REQUIRE(back.groups.size() == ds.groups.size());
  CHECK(back.num_features == ds.num_features);
  for (std::size_t g = 0; g < ds.groups.size(); ++g) {
    CHECK(back.groups[g].query_id == ds.groups[g].query_id);
    CHECK(back.groups[g].relevance == ds.groups[g].relevance);
    CHECK(back.groups[g].features == ds.groups[g].features);
    CHECK(*back.groups[g].binary_labels == *ds.groups[g].binary_labels);
  }
  CHECK(dataset_content_hash(back) == dataset_content_hash(ds));
}

TEST_CASE("gzip files round trip") {
  auto dir = std::filesystem::temp_directory_path() / "privdistill_test_dataset";
  std::filesystem::create_directories(dir);
  auto ds = make_synthetic_fixture(FixtureSpec{3, 5, 2, 9});
  write_ranking_file(dir / "d.txt.gz", ds);
  write_ranking_file(dir / "d.txt", ds);
  auto a = parse_ranking_file(dir / "d.txt.gz");
  auto b = parse_ranking_file(dir / "d.txt");
  CHECK(dataset_content_hash(a) == dataset_content_hash(ds));
  CHECK(dataset_content_hash(b) == dataset_content_hash(ds));
  CHECK_THROWS_AS(parse_ranking_file(dir / "missing.txt"), DatasetError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("log1p examples") {
  CHECK(log1p_signed(0.0) == 0.0);
  CHECK(log1p_signed(std::exp(1.0) - 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(log1p_signed(-(std::exp(1.0) - 1.0)) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK_THROWS_AS(log1p_signed(std::nan("")), DatasetError);
}

TEST_CASE("log1p is odd, sign preserving and contracting") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-3, 6));
    const double f = log1p_signed(v);
    CHECK(log1p_signed(-v) == -f);
    CHECK(std::signbit(f) == std::signbit(v));
    CHECK(std::abs(f) <= std::abs(v));
  }
}

TEST_CASE("log1p_transform keeps the shape") {
  auto ds = make_synthetic_fixture(FixtureSpec{2, 4, 3, 1});
  auto t = log1p_transform(ds);
  REQUIRE(t.groups.size() == 2);
  for (std::size_t g = 0; g < 2; ++g) {
    CHECK(t.groups[g].features.rows() == 4);
    CHECK(t.groups[g].features.cols() == 3);
    CHECK(t.groups[g].features(1, 2) == log1p_signed(ds.groups[g].features(1, 2)));
  }
}

TEST_CASE("filter keeps groups with enough documents and a positive relevance") {
  std::vector<int> zeros12(12, 0);
  std::vector<int> nine(9, 0);
  nine[3] = 3;
  std::vector<int> ten(10, 0);
  ten[9] = 4;
  auto ds = with_groups({make_group("a", 12, zeros12), make_group("b", 9, nine), make_group("c", 10, ten)});
  auto kept = filter_query_groups(ds);
  REQUIRE(kept.groups.size() == 1);
  CHECK(kept.groups[0].query_id == "c");
  CHECK(filter_query_groups(ds, 9).groups.size() == 2);
  CHECK_THROWS_AS(filter_query_groups(ds, 0), DatasetError);
}

TEST_CASE("label probability examples") {
  CHECK(label_probability(4.0, 4.0, 4.8) == doctest::Approx(1.0 / (1.0 + std::exp(3.2))));
  CHECK(label_probability(4.0, 2.0, 2.0) == 0.5);
  CHECK(label_probability(1e4, 3.0, 2.0) == doctest::Approx(1.0));
}

TEST_CASE("Gumbel labels follow the logistic law") {
  // N = 1e5 documents per relevance; 4 standard errors.
  const std::size_t n = 100000;
  for (int r = 0; r <= 4; ++r) {
    QueryGroup g = make_group("q", n, std::vector<int>(n, r), 1);
    auto ds = with_groups({g}, 1);
    auto labeled = generate_binary_labels(ds, LabelGenConfig{4.0, 4.8, 123 + static_cast<std::uint64_t>(r)});
    double ones = 0;
    for (int y : *labeled.groups[0].binary_labels) ones += y;
    const double p = label_probability(4.0, r, 4.8);
    const double se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(ones / n - p) <= 4 * se + 1e-12);
  }
}

TEST_CASE("r = 4 at the default threshold: mean label near sigmoid(-3.2)") {
  const std::size_t n = 100000;
  auto ds = with_groups({make_group("q", n, std::vector<int>(n, 4), 1)}, 1);
  auto labeled = generate_binary_labels(ds, LabelGenConfig{4.0, 4.8, 99});
  double ones = 0;
  for (int y : *labeled.groups[0].binary_labels) ones += y;
  const double p = 1.0 / (1.0 + std::exp(3.2));
  CHECK(p == doctest::Approx(0.0392).epsilon(0.01));
  CHECK(std::abs(ones / n - p) <= 3 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("labels are deterministic and validate their config") {
  auto ds = make_synthetic_fixture(FixtureSpec{5, 10, 2, 4});
  auto a = generate_binary_labels(ds, LabelGenConfig{4.0, 2.0, 8});
  auto b = generate_binary_labels(ds, LabelGenConfig{4.0, 2.0, 8});
  CHECK(dataset_content_hash(a) == dataset_content_hash(b));
  CHECK_THROWS_AS(generate_binary_labels(ds, LabelGenConfig{0.0, 2.0, 8}), DatasetError);
}

TEST_CASE("recorded noise reproduces the labels at the label threshold") {
  auto ds = make_synthetic_fixture(FixtureSpec{8, 12, 2, 5});
  LabelGenConfig cfg{4.0, 2.4, 17};
  auto rec = generate_binary_labels_recorded(ds, cfg);
  auto plain = generate_binary_labels(ds, cfg);
  auto z = indicator_from_noise(rec.dataset, rec.noise, cfg.temperature, cfg.tau_target);
  for (std::size_t g = 0; g < ds.groups.size(); ++g) {
    CHECK(z[g] == *rec.dataset.groups[g].binary_labels);
    CHECK(*plain.groups[g].binary_labels == *rec.dataset.groups[g].binary_labels);
  }
  // a lower threshold can only switch labels on
  auto z_low = indicator_from_noise(rec.dataset, rec.noise, cfg.temperature, 1.0);
  for (std::size_t g = 0; g < ds.groups.size(); ++g)
    for (std::size_t d = 0; d < z[g].size(); ++d) CHECK(z_low[g][d] >= z[g][d]);

  auto with_z = with_indicator_privileged(rec.dataset, z);
  CHECK(with_z.num_features == 3);
  CHECK(with_z.privileged_cols == std::vector<std::size_t>{2});
  CHECK(with_z.regular_cols == std::vector<std::size_t>{0, 1});
  CHECK(with_z.groups[0].features(0, 2) == z[0][0]);
}

TEST_CASE("feature split by correlation") {
  auto base = generate_binary_labels(make_synthetic_fixture(FixtureSpec{20, 10, 3, 2}), LabelGenConfig{4.0, 1.0, 3});
  // column 3 is y itself, column 4 is constant
  RankingDataset ds = base;
  ds.num_features = 5;
  ds.regular_cols = {0, 1, 2, 3, 4};
  for (auto& g : ds.groups) {
    Matrix f(g.features.rows(), 5);
    f.leftCols(3) = g.features;
    for (Eigen::Index d = 0; d < f.rows(); ++d) f(d, 3) = (*g.binary_labels)[static_cast<std::size_t>(d)];
    f.col(4).setConstant(2.5);
    g.features = f;
  }
  auto corr = label_correlations(ds);
  CHECK(corr[3] == doctest::Approx(1.0));
  CHECK(corr[4] == 0.0);

  auto s1 = split_features_by_correlation(ds, 1);
  CHECK(s1.privileged_cols == std::vector<std::size_t>{3});
  auto s4 = split_features_by_correlation(ds, 4);
  CHECK(std::find(s4.privileged_cols.begin(), s4.privileged_cols.end(), 4) == s4.privileged_cols.end());
  auto s0 = split_features_by_correlation(ds, 0);
  CHECK(s0.privileged_cols.empty());
  CHECK(s0.regular_cols.size() == 5);

  CHECK_THROWS_AS(split_features_by_correlation(ds, 6), DatasetError);
  CHECK_THROWS_AS(split_features_by_correlation(make_synthetic_fixture(FixtureSpec{2, 3, 2, 0}), 1), DatasetError);
}

TEST_CASE("feature split sets are nested in k") {
  auto ds = generate_binary_labels(make_synthetic_fixture(FixtureSpec{30, 10, 8, 12}), LabelGenConfig{4.0, 1.0, 5});
  std::vector<std::size_t> prev;
  for (std::size_t k = 0; k <= 8; ++k) {
    auto s = split_features_by_correlation(ds, k);
    CHECK(s.privileged_cols.size() == k);
    CHECK(s.regular_cols.size() + k == 8);
    for (std::size_t c : prev)
      CHECK(std::find(s.privileged_cols.begin(), s.privileged_cols.end(), c) != s.privileged_cols.end());
    prev = s.privileged_cols;
  }
}

TEST_CASE("ties in correlation go to the lower column") {
  auto base = generate_binary_labels(make_synthetic_fixture(FixtureSpec{10, 10, 1, 2}), LabelGenConfig{4.0, 1.0, 3});
  RankingDataset ds = base;
  ds.num_features = 3;
  ds.regular_cols = {0, 1, 2};
  for (auto& g : ds.groups) {
    Matrix f(g.features.rows(), 3);
    f.col(0) = g.features.col(0);
    f.col(1) = g.features.col(0);
    f.col(2) = g.features.col(0);
    g.features = f;
  }
  CHECK(split_features_by_correlation(ds, 1).privileged_cols == std::vector<std::size_t>{0});
  CHECK(split_features_by_correlation(ds, 2).privileged_cols == std::vector<std::size_t>{0, 1});
}

TEST_CASE("partition by positivity") {
  auto a = make_group("a", 3, {0, 0, 0});
  a.binary_labels = std::vector<int>{0, 0, 1};
  auto b = make_group("b", 3, {0, 0, 0});
  b.binary_labels = std::vector<int>{0, 0, 0};
  auto c = make_group("c", 2, {1, 0});
  c.binary_labels = std::vector<int>{1, 1};
  auto [pos, neg] = partition_by_positivity(with_groups({a, b, c}));
  REQUIRE(pos.groups.size() == 2);
  REQUIRE(neg.groups.size() == 1);
  CHECK(pos.groups[0].query_id == "a");
  CHECK(pos.groups[1].query_id == "c");
  CHECK(neg.groups[0].query_id == "b");

  auto [p0, n0] = partition_by_positivity(RankingDataset{});
  CHECK(p0.groups.empty());
  CHECK(n0.groups.empty());
}

TEST_CASE("partition sizes add up and positives hold a 1") {
  auto ds = generate_binary_labels(make_synthetic_fixture(FixtureSpec{50, 8, 2, 21}), LabelGenConfig{4.0, 3.0, 2});
  auto [pos, neg] = partition_by_positivity(ds);
  CHECK(pos.groups.size() + neg.groups.size() == ds.groups.size());
  for (const auto& g : pos.groups) CHECK(g.has_positive_label());
  for (const auto& g : neg.groups) CHECK_FALSE(g.has_positive_label());
}

TEST_CASE("synthetic fixture contract") {
  auto a = make_synthetic_fixture(FixtureSpec{10, 20, 5, 7});
  REQUIRE(a.groups.size() == 10);
  for (const auto& g : a.groups) {
    CHECK(g.features.rows() == 20);
    CHECK(g.features.cols() == 5);
    for (int r : g.relevance) CHECK((r >= 0 && r <= 4));
  }
  auto b = make_synthetic_fixture(FixtureSpec{10, 20, 5, 7});
  auto c = make_synthetic_fixture(FixtureSpec{10, 20, 5, 8});
  CHECK(dataset_content_hash(a) == dataset_content_hash(b));
  CHECK(a.groups[0].features != c.groups[0].features);
  CHECK_THROWS_AS(make_synthetic_fixture(FixtureSpec{0, 20, 5, 7}), DatasetError);
}

TEST_CASE("latent fixture splits its columns") {
  LatentFixtureSpec spec;
  spec.num_groups = 4;
  auto ds = make_latent_fixture(spec);
  CHECK(ds.num_features == 8);
  CHECK(ds.regular_cols == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(ds.privileged_cols == std::vector<std::size_t>{5, 6, 7});
  spec.num_privileged = 0;
  auto plain = make_latent_fixture(spec);
  CHECK(plain.privileged_cols.empty());
  bool any_top = false;
  spec.num_groups = 50;
  for (const auto& g : make_latent_fixture(spec).groups)
    for (int r : g.relevance) any_top = any_top || r == 4;
  CHECK(any_top);
}

TEST_CASE("validation rejects broken groups and overlapping columns") {
  auto ds = with_groups({make_group("a", 2, {0, 1})});
  CHECK_NOTHROW(ds.validate());
  auto bad = ds;
  bad.groups[0].relevance = {0, 5};
  CHECK_THROWS_AS(bad.validate(), DatasetError);
  bad = ds;
  bad.groups[0].binary_labels = std::vector<int>{0, 2};
  CHECK_THROWS_AS(bad.validate(), DatasetError);
  bad = ds;
  bad.privileged_cols = {1};
  CHECK_THROWS_AS(bad.validate(), DatasetError);
}

TEST_CASE("stats JSON fields") {
  auto ds = generate_binary_labels(make_synthetic_fixture(FixtureSpec{10, 20, 5, 7}), LabelGenConfig{4.0, 1.0, 3});
  auto s = compute_stats(ds);
  CHECK(s.num_groups == 10);
  CHECK(s.num_docs == 200);
  CHECK(s.docs_per_group_mean == 20.0);
  REQUIRE(s.positive_group_fraction.has_value());
  const auto json = stats_to_json(s);
  CHECK(json.find("\"num_groups\":10") != std::string::npos);
  CHECK(json.find("positive_group_fraction") != std::string::npos);
  CHECK(json.find("docs_per_group_mean") != std::string::npos);
}
