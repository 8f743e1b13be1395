#include "privdistill/lintheory.hpp"

#include <cmath>

#include "privdistill/format.hpp"
#include "privdistill/parallel.hpp"
#include "privdistill/random.hpp"

namespace privdistill {

void LinearExperiment::validate() const {
  if (d_x < 1) throw ConfigError("d_x must be at least 1");
  if (d_z > d_u) throw ConfigError("d_z must not exceed d_u");
  if (n < 1) throw ConfigError("n must be at least 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be finite and non-negative");
  if (static_cast<std::size_t>(w_star.size()) != d_x) throw ConfigError("w* must have length d_x");
  if (static_cast<std::size_t>(v_star.size()) != d_u) throw ConfigError("v* must have length d_u");
}

void LinearExperiment::validate_closed_form() const {
  validate();
  if (!(n > d_x + d_z + 1))
    throw DomainError("closed form needs n > d_x + d_z + 1 (n=" + std::to_string(n) + ", d_x=" + std::to_string(d_x) +
                      ", d_z=" + std::to_string(d_z) + ")");
  if (!(n + m > d_x + 1)) throw DomainError("closed form needs n + m > d_x + 1");
}

double LinearExperiment::vz_norm2() const { return v_star.head(static_cast<Eigen::Index>(d_z)).squaredNorm(); }

LinearExperiment example_experiment(std::size_t d_z, std::uint64_t w_seed) {
  LinearExperiment e;
  e.d_x = 10;
  e.d_u = 10;
  e.d_z = d_z;
  e.n = 30;
  e.m = 200;
  e.sigma = 15.0;
  e.v_star.resize(10);
  for (Eigen::Index i = 0; i < 10; ++i) e.v_star[i] = static_cast<double>(10 - i);
  Rng rng(w_seed);
  e.w_star.resize(10);
  for (Eigen::Index i = 0; i < 10; ++i) e.w_star[i] = rng.normal();
  e.seed = w_seed;
  return e;
}

LinearExperiment gend_remark_experiment(std::uint64_t w_seed) {
  LinearExperiment e = example_experiment(10, w_seed);
  e.sigma = 1.0;
  e.v_star.setZero();
  return e;
}

Matrix LinearData::X_all() const {
  Matrix out(X.rows() + Xu.rows(), X.cols());
  out << X, Xu;
  return out;
}

Matrix LinearData::Z_all(std::size_t d_z) const {
  const auto k = static_cast<Eigen::Index>(d_z);
  Matrix out(U.rows() + Uu.rows(), k);
  out << U.leftCols(k), Uu.leftCols(k);
  return out;
}

namespace {

void fill_normal(Matrix& M, Rng& rng) {
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
}

LinearData draw(const LinearExperiment& exp, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(exp.n);
  const auto m = static_cast<Eigen::Index>(exp.m);
  const auto dx = static_cast<Eigen::Index>(exp.d_x);
  const auto du = static_cast<Eigen::Index>(exp.d_u);
  LinearData d;
  d.X.resize(n, dx);
  d.U.resize(n, du);
  fill_normal(d.X, rng);
  fill_normal(d.U, rng);
  d.y = d.X * exp.w_star + d.U * exp.v_star;
  for (Eigen::Index i = 0; i < n; ++i) d.y[i] += exp.sigma * rng.normal();
  d.Xu.resize(m, dx);
  d.Uu.resize(m, du);
  fill_normal(d.Xu, rng);
  fill_normal(d.Uu, rng);
  return d;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

LinearData gen_linear_data(const LinearExperiment& exp, std::uint64_t trial) {
  exp.validate();
  Rng rng(exp.seed, trial);
  return draw(exp, rng);
}

LeastSquaresFit ols_fit(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw ConfigError("design rows do not match response length");
  LeastSquaresFit fit;
  if (X.cols() == 0) {
    fit.coef = Vector::Zero(0);
    return fit;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(kRankCutoff);
  cod.compute(X);
  fit.rank = static_cast<std::size_t>(cod.rank());
  fit.degenerate = fit.rank < static_cast<std::size_t>(X.cols());
  fit.coef = cod.solve(y);
  return fit;
}

TwoStageFit pfd_two_stage_fit(const Matrix& X, const Matrix& Z, const Vector& y, const Matrix& X_all,
                              const Matrix& Z_all) {
  if (X.rows() != Z.rows() || X_all.rows() != Z_all.rows() || X.cols() != X_all.cols() || Z.cols() != Z_all.cols())
    throw ConfigError("inconsistent shapes for two-stage fit");
  TwoStageFit out;
  auto teacher = ols_fit(hcat(X, Z), y);
  out.theta = teacher.coef;
  const Vector relabel = hcat(X_all, Z_all) * out.theta;
  auto student = ols_fit(X_all, relabel);
  out.w = student.coef;
  out.degenerate = teacher.degenerate || student.degenerate;
  return out;
}

TwoStageFit gend_linear_fit(const Matrix& Z, const Vector& y, const Matrix& X_all, const Matrix& Z_all) {
  if (Z.rows() != y.size() || X_all.rows() != Z_all.rows() || Z.cols() != Z_all.cols())
    throw ConfigError("inconsistent shapes for GenD fit");
  TwoStageFit out;
  if (Z.cols() == 0) {
    out.w = Vector::Zero(X_all.cols());
    out.theta = Vector::Zero(0);
    out.degenerate = true;
    return out;
  }
  auto teacher = ols_fit(Z, y);
  out.theta = teacher.coef;
  auto student = ols_fit(X_all, Z_all * out.theta);
  out.w = student.coef;
  out.degenerate = teacher.degenerate || student.degenerate;
  return out;
}

double closed_form_risk_ols(const LinearExperiment& exp) {
  exp.validate();
  const double denom = static_cast<double>(exp.n) - static_cast<double>(exp.d_x) - 1.0;
  if (denom <= 0) throw DomainError("OLS closed form needs n > d_x + 1");
  return static_cast<double>(exp.d_x) * (exp.sigma * exp.sigma + exp.v_norm2()) / denom;
}

PfdClosedForm closed_form_risk_pfd(const LinearExperiment& exp) {
  exp.validate_closed_form();
  const double dx = static_cast<double>(exp.d_x);
  const double vz2 = exp.vz_norm2();
  PfdClosedForm out;
  out.term_noise = dx * (exp.sigma * exp.sigma + exp.v_norm2() - vz2) /
                   (static_cast<double>(exp.n) - dx - static_cast<double>(exp.d_z) - 1.0);
  out.term_privileged = dx * vz2 / (static_cast<double>(exp.n + exp.m) - dx - 1.0);
  out.total = out.term_noise + out.term_privileged;
  return out;
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::Ols: return "ols";
    case Estimator::Pfd: return "pfd";
    case Estimator::GenD: return "gend";
  }
  return "?";
}

Estimator parse_estimator(const std::string& tag) {
  if (tag == "ols") return Estimator::Ols;
  if (tag == "pfd") return Estimator::Pfd;
  if (tag == "gend") return Estimator::GenD;
  throw ConfigError("unknown estimator '" + tag + "' (expected ols, pfd or gend)");
}

std::pair<double, double> mean_and_stderr(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(values.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

RiskReport monte_carlo_risk(const LinearExperiment& exp, Estimator estimator, std::size_t trials) {
  exp.validate();
  if (trials < 2) throw ConfigError("Monte Carlo needs at least 2 trials");
  if (estimator == Estimator::Pfd && exp.n < exp.d_x + exp.d_z) throw ConfigError("PFD needs n >= d_x + d_z");
  if (exp.n < exp.d_x) throw ConfigError("regression needs n >= d_x");

  RiskReport r;
  r.estimator = estimator;
  r.trials = trials;
  r.per_trial.assign(trials, 0.0);
  std::vector<std::size_t> resampled(trials, 0);

  parallel_for(trials, [&](std::size_t t) {
    Rng rng(exp.seed, t);
    // Near-singular designs are redrawn from the same stream; expected to be
    // vanishingly rare once n - d >= 5.
    for (std::size_t attempt = 0; attempt < 100; ++attempt) {
      LinearData d = draw(exp, rng);
      Vector w;
      bool degenerate = false;
      switch (estimator) {
        case Estimator::Ols: {
          auto fit = ols_fit(d.X, d.y);
          w = fit.coef;
          degenerate = fit.degenerate;
          break;
        }
        case Estimator::Pfd: {
          auto fit = pfd_two_stage_fit(d.X, d.Z(exp.d_z), d.y, d.X_all(), d.Z_all(exp.d_z));
          w = fit.w;
          degenerate = fit.degenerate;
          break;
        }
        case Estimator::GenD: {
          auto fit = gend_linear_fit(d.Z(exp.d_z), d.y, d.X_all(), d.Z_all(exp.d_z));
          w = fit.w;
          degenerate = fit.degenerate && exp.d_z > 0;
          break;
        }
      }
      if (degenerate) {
        ++resampled[t];
        continue;
      }
      r.per_trial[t] = (exp.w_star - w).squaredNorm();
      return;
    }
    throw ConfigError("design stayed rank deficient after 100 redraws");
  });

  for (std::size_t c : resampled) r.resampled += c;
  std::tie(r.mean, r.stderr_) = mean_and_stderr(r.per_trial);

  if (estimator == Estimator::Ols && exp.n > exp.d_x + 1) {
    r.closed_form = closed_form_risk_ols(exp);
    r.term_noise = *r.closed_form;
  } else if (estimator == Estimator::Pfd && exp.n > exp.d_x + exp.d_z + 1 && exp.n + exp.m > exp.d_x + 1) {
    auto cf = closed_form_risk_pfd(exp);
    r.closed_form = cf.total;
    r.term_noise = cf.term_noise;
    r.term_privileged = cf.term_privileged;
    r.remainder_omitted = true;
  }
  return r;
}

std::vector<SweepRow> dz_sweep(const LinearExperiment& base, const std::vector<std::size_t>& d_z_values,
                               std::size_t trials) {
  std::vector<SweepRow> rows;
  for (std::size_t dz : d_z_values) {
    if (dz > base.d_u) throw ConfigError("d_z value " + std::to_string(dz) + " exceeds d_u");
    LinearExperiment e = base;
    e.d_z = dz;
    e.validate_closed_form();
    auto r = monte_carlo_risk(e, Estimator::Pfd, trials);
    rows.push_back({dz, r.mean, r.stderr_, r.closed_form.value_or(NAN), r.term_noise, r.term_privileged, trials,
                    e.seed});
  }
  return rows;
}

std::string sweep_row_csv(const SweepRow& row) {
  return join_csv({std::to_string(row.d_z), format_double(row.mc_risk), format_double(row.mc_stderr),
                   format_double(row.closed_form), format_double(row.term_noise), format_double(row.term_privileged),
                   std::to_string(row.trials), std::to_string(row.seed)});
}

TraceCheck monte_carlo_inverse_wishart_trace(std::size_t n, std::size_t d, std::size_t trials, std::uint64_t seed) {
  if (!(n > d + 1)) throw DomainError("inverse-Wishart mean needs n > d + 1");
  if (trials < 2) throw ConfigError("Monte Carlo needs at least 2 trials");
  std::vector<double> traces(trials);
  parallel_for(trials, [&](std::size_t t) {
    Rng rng(seed, t);
    Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    fill_normal(X, rng);
    const Eigen::MatrixXd gram = X.transpose() * X;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    traces[t] = llt.solve(Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).trace();
  });
  TraceCheck out;
  out.trials = trials;
  out.expected = static_cast<double>(d) / (static_cast<double>(n) - static_cast<double>(d) - 1.0);
  std::tie(out.mean, out.stderr_) = mean_and_stderr(traces);
  return out;
}

}  // namespace privdistill
