#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "privdistill/losses.hpp"
#include "privdistill/model.hpp"
#include "privdistill/random.hpp"

using namespace privdistill;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

std::vector<double> to_vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

double loss_of(const MlpModel& m, const Matrix& x, const std::vector<double>& t, LossKind kind,
               const std::vector<std::size_t>& offsets) {
  const auto s = to_vec(predict(m, x));
  return kind == LossKind::RankBce ? rank_bce(s, t).loss : rank_net(s, t, offsets).loss;
}

// Worst relative error over every parameter of the network.
double parameter_grad_error(MlpModel m, const Matrix& x, const std::vector<double>& t, LossKind kind,
                            const std::vector<std::size_t>& offsets) {
  auto fp = forward(m, x);
  const auto s = to_vec(fp.scores);
  LossGrad lg = kind == LossKind::RankBce ? rank_bce(s, t) : rank_net(s, t, offsets);
  auto grads = backward(m, fp.cache, Eigen::Map<const Vector>(lg.grad.data(), static_cast<Eigen::Index>(lg.grad.size())));
  // RankNet sums many pairs; a smaller step drowns in roundoff
  const double h = 1e-4;
  double worst = 0.0;
  auto probe = [&](double& p, double analytic) {
    const double keep = p;
    p = keep + h;
    const double up = loss_of(m, x, t, kind, offsets);
    p = keep - h;
    const double down = loss_of(m, x, t, kind, offsets);
    p = keep;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  };
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    auto& w = m.layers[k].weight;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) probe(w(i, j), grads.layers[k].weight(i, j));
    auto& b = m.layers[k].bias;
    for (Eigen::Index j = 0; j < b.size(); ++j) probe(b(j), grads.layers[k].bias(j));
  }
  return worst;
}

}  // namespace

TEST_CASE("init shapes, zero biases, determinism") {
  auto m = init_mlp(4, 100, 5, 0);
  REQUIRE(m.layers.size() == 5);
  CHECK(m.layers[0].weight.rows() == 4);
  CHECK(m.layers[0].weight.cols() == 100);
  for (int k = 1; k < 4; ++k) {
    CHECK(m.layers[k].weight.rows() == 100);
    CHECK(m.layers[k].weight.cols() == 100);
  }
  CHECK(m.layers[4].weight.rows() == 100);
  CHECK(m.layers[4].weight.cols() == 1);
  for (const auto& l : m.layers) CHECK(l.bias.isZero());
  CHECK(same_parameters(m, init_mlp(4, 100, 5, 0)));
  CHECK_FALSE(same_parameters(m, init_mlp(4, 100, 5, 1)));
  // Glorot bound
  const double bound = std::sqrt(6.0 / (4 + 100));
  CHECK(m.layers[0].weight.cwiseAbs().maxCoeff() <= bound);
  CHECK_THROWS_AS(init_mlp(0, 10, 3), ModelError);
  CHECK_THROWS_AS(init_mlp(3, 10, 1), ModelError);
}

TEST_CASE("forward examples") {
  auto m = init_mlp(3, 4, 3, 2);
  for (auto& l : m.layers) l.weight.setZero();
  Rng rng(1);
  Matrix x = random_matrix(rng, 7, 3);
  auto fp = forward(m, x);
  CHECK(fp.scores.size() == 7);
  CHECK(fp.scores.isZero());

  // one-wide chain: positive input passes through scaled by the weights
  auto chain = init_mlp(1, 1, 3, 0);
  chain.layers[0].weight(0, 0) = 2.0;
  chain.layers[1].weight(0, 0) = 3.0;
  chain.layers[2].weight(0, 0) = 0.5;
  Matrix in(2, 1);
  in << 1.5, -1.0;
  auto out = predict(chain, in);
  CHECK(out(0) == doctest::Approx(1.5 * 2.0 * 3.0 * 0.5));
  CHECK(out(1) == 0.0);  // ReLU cuts the negative path

  CHECK_THROWS_AS(forward(m, random_matrix(rng, 2, 4)), ModelError);
}

TEST_CASE("backward: zero and doubled score gradients") {
  Rng rng(6);
  auto m = init_mlp(3, 5, 3, 4);
  Matrix x = random_matrix(rng, 6, 3);
  auto fp = forward(m, x);
  auto g0 = backward(m, fp.cache, Vector::Zero(6));
  for (const auto& l : g0.layers) {
    CHECK(l.weight.isZero());
    CHECK(l.bias.isZero());
  }
  Vector g(6);
  for (int i = 0; i < 6; ++i) g(i) = rng.normal();
  auto g1 = backward(m, fp.cache, g);
  auto g2 = backward(m, fp.cache, 2 * g);
  for (std::size_t k = 0; k < g1.layers.size(); ++k) {
    CHECK((g2.layers[k].weight - 2 * g1.layers[k].weight).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((g2.layers[k].bias - 2 * g1.layers[k].bias).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("backward rejects a stale cache") {
  Rng rng(2);
  auto m = init_mlp(2, 3, 2, 0);
  Matrix x = random_matrix(rng, 4, 2);
  auto fp = forward(m, x);
  auto grads = backward(m, fp.cache, Vector::Ones(4));
  auto opt = init_optimizer(m, 1e-3);
  adam_step(m, grads, opt);
  CHECK_THROWS_AS(backward(m, fp.cache, Vector::Ones(4)), ModelError);
}

TEST_CASE("parameter gradients match central differences") {
  Rng rng(77);
  SUBCASE("3-2-1 network") {
    auto m = init_mlp(3, 2, 2, 5);
    Matrix x = random_matrix(rng, 10, 3);
    std::vector<double> t(10);
    for (auto& v : t) v = static_cast<double>(rng.index(2));
    CHECK(parameter_grad_error(m, x, t, LossKind::RankBce, {0, 10}) < 1e-4);
  }
  SUBCASE("10-10-1 networks, both losses") {
    for (int trial = 0; trial < 6; ++trial) {
      auto m = init_mlp(10, 10, 2 + rng.index(3), 100 + static_cast<std::uint64_t>(trial));
      for (auto& l : m.layers)
        for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = 0.1 * rng.normal();
      Matrix x = random_matrix(rng, 20, 10);
      std::vector<double> t(20);
      for (auto& v : t) v = rng.uniform(0, 1);
      const std::vector<std::size_t> groups{0, 7, 15, 20};
      CHECK(parameter_grad_error(m, x, t, LossKind::RankBce, groups) < 1e-4);
      CHECK(parameter_grad_error(m, x, t, LossKind::RankNet, groups) < 1e-4);
    }
  }
}

TEST_CASE("adam examples") {
  auto m = init_mlp(2, 3, 2, 1);
  MlpGradients zero;
  for (const auto& l : m.layers) zero.layers.push_back(DenseLayer{Matrix::Zero(l.weight.rows(), l.weight.cols()),
                                                                   Eigen::RowVectorXd::Zero(l.bias.size())});
  SUBCASE("zero gradient, zero decay") {
    auto before = m;
    auto opt = init_optimizer(m, 1e-2, 0.0);
    adam_step(m, zero, opt);
    CHECK(same_parameters(before, m));
    CHECK(opt.step == 1);
  }
  SUBCASE("first step moves each parameter by lr against the gradient sign") {
    auto before = m;
    MlpGradients g = zero;
    Rng rng(3);
    for (auto& l : g.layers) l.weight = random_matrix(rng, l.weight.rows(), l.weight.cols());
    auto opt = init_optimizer(m, 1e-2, 0.0);
    adam_step(m, g, opt);
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      Matrix delta = m.layers[k].weight - before.layers[k].weight;
      for (Eigen::Index i = 0; i < delta.rows(); ++i)
        for (Eigen::Index j = 0; j < delta.cols(); ++j) {
          const double gij = g.layers[k].weight(i, j);
          CHECK(delta(i, j) == doctest::Approx(-1e-2 * gij / (std::abs(gij) + 1e-8)).epsilon(1e-9));
        }
    }
  }
  SUBCASE("decay alone shrinks by (1 - lr * lambda)") {
    auto before = m;
    auto opt = init_optimizer(m, 1e-2, 0.005);
    adam_step(m, zero, opt);
    for (std::size_t k = 0; k < m.layers.size(); ++k)
      CHECK((m.layers[k].weight - (1 - 1e-2 * 0.005) * before.layers[k].weight).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("step schedule halves every 20 epochs") {
  CHECK(lr_at_epoch(1e-3, 0) == 1e-3);
  CHECK(lr_at_epoch(1e-3, 19) == 1e-3);
  CHECK(lr_at_epoch(1e-3, 20) == 5e-4);
  CHECK(lr_at_epoch(1e-3, 99) == 1e-3 / 16);
}

TEST_CASE("training is bitwise deterministic") {
  auto run = [] {
    Rng rng(10);
    auto m = init_mlp(4, 8, 3, 9);
    Matrix x = random_matrix(rng, 30, 4);
    std::vector<double> t(30);
    for (auto& v : t) v = static_cast<double>(rng.index(2));
    auto opt = init_optimizer(m, 1e-2);
    for (int step = 0; step < 25; ++step) {
      auto fp = forward(m, x);
      auto lg = rank_bce(to_vec(fp.scores), t);
      adam_step(m, backward(m, fp.cache, Eigen::Map<const Vector>(lg.grad.data(), 30)), opt);
    }
    return m;
  };
  CHECK(same_parameters(run(), run()));
}

TEST_CASE("loss drops by 90% on a separable toy set") {
  Rng rng(21);
  const Eigen::Index n = 40;
  Matrix x = random_matrix(rng, n, 2);
  std::vector<double> t(n);
  for (Eigen::Index i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = x(i, 0) + 0.5 * x(i, 1) > 0 ? 1.0 : 0.0;
  auto m = init_mlp(2, 100, 5, 0);
  auto opt = init_optimizer(m, 1e-2, 0.0);
  const double initial = rank_bce(to_vec(predict(m, x)), t).loss;
  for (int step = 0; step < 200; ++step) {
    auto fp = forward(m, x);
    auto lg = rank_bce(to_vec(fp.scores), t);
    adam_step(m, backward(m, fp.cache, Eigen::Map<const Vector>(lg.grad.data(), n)), opt);
  }
  const double final_loss = rank_bce(to_vec(predict(m, x)), t).loss;
  CHECK(final_loss <= 0.1 * initial);
}

TEST_CASE("checkpoints round trip exactly") {
  Rng rng(4);
  auto m = init_mlp(5, 7, 4, 13);
  for (auto& l : m.layers)
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = rng.normal() * 1e-3;
  CHECK(same_parameters(m, model_from_json(model_to_json(m))));
  CHECK(same_parameters(m, model_from_binary(model_to_binary(m))));

  auto dir = std::filesystem::temp_directory_path() / "privdistill_test_model";
  std::filesystem::create_directories(dir);
  save_model(dir / "m.json", m);
  save_model(dir / "m.bin", m);
  CHECK(same_parameters(m, load_model(dir / "m.json")));
  CHECK(same_parameters(m, load_model(dir / "m.bin")));
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(model_from_json("{}"), ModelError);
  auto bytes = model_to_binary(m);
  bytes.pop_back();
  CHECK_THROWS_AS(model_from_binary(bytes), ModelError);
}
