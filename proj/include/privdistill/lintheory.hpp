#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "privdistill/dataset.hpp"

namespace privdistill {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a closed-form expression has a non-positive denominator.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Linear model y = x'w* + u'v* + eps with x, u spherical Gaussian and the
/// privileged block z taken as the first d_z coordinates of u.
struct LinearExperiment {
  std::size_t d_x = 10;
  std::size_t d_u = 10;
  std::size_t d_z = 10;
  std::size_t n = 30;   // labeled rows
  std::size_t m = 200;  // unlabeled rows
  double sigma = 15.0;
  Vector w_star;
  Vector v_star;
  std::uint64_t seed = 0;

  /// Shapes, d_z <= d_u, sigma >= 0.
  void validate() const;
  /// Additionally n > d_x + d_z + 1 and n + m > d_x + 1.
  void validate_closed_form() const;

  double v_norm2() const { return v_star.squaredNorm(); }
  double vz_norm2() const;  // leading d_z coordinates
};

/// d_x = d_u = 10, n = 30, m = 200, sigma = 15, v* = [10, 9, ..., 1],
/// w* drawn from N(0, I) with `w_seed`.
LinearExperiment example_experiment(std::size_t d_z = 10, std::uint64_t w_seed = 2022);

/// Regime where the regular features carry most of the signal: sigma = 1,
/// v* = 0, other sizes as in example_experiment.
LinearExperiment gend_remark_experiment(std::uint64_t w_seed = 2022);

struct LinearData {
  Matrix X;   // n x d_x
  Matrix U;   // n x d_u
  Vector y;   // n
  Matrix Xu;  // m x d_x
  Matrix Uu;  // m x d_u

  Matrix Z(std::size_t d_z) const { return U.leftCols(static_cast<Eigen::Index>(d_z)); }
  Matrix Zu(std::size_t d_z) const { return Uu.leftCols(static_cast<Eigen::Index>(d_z)); }
  Matrix X_all() const;
  Matrix Z_all(std::size_t d_z) const;
};

/// Draws one data set. `trial` selects an independent stream of exp.seed.
LinearData gen_linear_data(const LinearExperiment& exp, std::uint64_t trial = 0);

struct LeastSquaresFit {
  Vector coef;
  std::size_t rank = 0;
  bool degenerate = false;  // rank below column count at the 1e-10 cutoff
};

inline constexpr double kRankCutoff = 1e-10;

/// Minimum-norm least squares via complete orthogonal decomposition.
LeastSquaresFit ols_fit(const Matrix& X, const Vector& y);

struct TwoStageFit {
  Vector w;
  Vector theta;  // stage-one coefficients
  bool degenerate = false;
};

/// Regress y on [X Z], relabel [X_all Z_all], regress the relabels on X_all.
TwoStageFit pfd_two_stage_fit(const Matrix& X, const Matrix& Z, const Vector& y, const Matrix& X_all,
                              const Matrix& Z_all);

/// Regress y on Z alone, then regress Z_all * theta on X_all. An empty Z
/// yields the zero vector with `degenerate` set.
TwoStageFit gend_linear_fit(const Matrix& Z, const Vector& y, const Matrix& X_all, const Matrix& Z_all);

double closed_form_risk_ols(const LinearExperiment& exp);

struct PfdClosedForm {
  double total = 0.0;
  double term_noise = 0.0;       // d_x (sigma^2 + |v|^2 - |v_z|^2) / (n - d_x - d_z - 1)
  double term_privileged = 0.0;  // d_x |v_z|^2 / (n + m - d_x - 1)
};

/// Exact two-term expression; the O(1/(n m)) cross term is not included.
PfdClosedForm closed_form_risk_pfd(const LinearExperiment& exp);

enum class Estimator { Ols, Pfd, GenD };
std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& tag);

struct RiskReport {
  Estimator estimator = Estimator::Ols;
  double mean = 0.0;    // mean of |w* - w_hat|^2
  double stderr_ = 0.0;
  std::size_t trials = 0;
  std::size_t resampled = 0;  // degenerate draws replaced
  std::optional<double> closed_form;
  double term_noise = 0.0;
  double term_privileged = 0.0;
  bool remainder_omitted = false;  // closed form excludes the O(1/(n m)) term
  std::vector<double> per_trial;   // in trial order
};

/// Fresh X, U, eps every trial; w*, v* fixed. Trial t always uses the stream
/// (exp.seed, t), so estimators evaluated with the same seed see the same data.
RiskReport monte_carlo_risk(const LinearExperiment& exp, Estimator estimator, std::size_t trials);

struct SweepRow {
  std::size_t d_z = 0;
  double mc_risk = 0.0;
  double mc_stderr = 0.0;
  double closed_form = 0.0;
  double term_noise = 0.0;
  double term_privileged = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
};

std::vector<SweepRow> dz_sweep(const LinearExperiment& base, const std::vector<std::size_t>& d_z_values,
                               std::size_t trials);

inline constexpr const char* kSweepCsvHeader =
    "d_z,mc_risk,mc_stderr,closed_form,term_noise,term_privileged,trials,seed";
std::string sweep_row_csv(const SweepRow& row);

struct TraceCheck {
  double mean = 0.0;
  double stderr_ = 0.0;
  double expected = 0.0;  // d / (n - d - 1)
  std::size_t trials = 0;
};

/// Monte Carlo estimate of E[tr((X'X)^-1)] for an n x d standard Gaussian X.
TraceCheck monte_carlo_inverse_wishart_trace(std::size_t n, std::size_t d, std::size_t trials, std::uint64_t seed);

/// Mean and standard error of a sample.
std::pair<double, double> mean_and_stderr(const std::vector<double>& values);

}  // namespace privdistill
