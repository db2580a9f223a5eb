#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "embfuse/classifier.hpp"
#include "embfuse/embedding.hpp"

namespace embfuse {

/// Linear-noise model: v1 = P1 v* + e1, v2 = P2 v* + e2, y = [<w*, v*> >= 0].
///
/// v* has independent standard normal coordinates. Noise e_i is isotropic
/// Gaussian with total variance E|e_i|^2 = sigma_i^2, so each coordinate of
/// e_i has variance sigma_i^2 / d_i.
struct SyntheticWorld {
  Vector w_star;
  Matrix P1;  // d1 x dim_star
  Matrix P2;  // d2 x dim_star
  double sigma1 = 0.0;
  double sigma2 = 0.0;

  [[nodiscard]] std::size_t dim_star() const { return static_cast<std::size_t>(w_star.size()); }
  [[nodiscard]] Matrix stacked() const;
  [[nodiscard]] double sigma() const;
  void validate() const;
};

struct WorldSample {
  Matrix v1;
  Matrix v2;
  Matrix vstar;
  std::vector<int> labels;
};

WorldSample sample_world(const SyntheticWorld& world, std::size_t n, std::uint64_t seed);

/// v* of dimension d + 2, w* = [1, 1, 0, ...], P1 = diag(1, 0, 1, ..., 1),
/// P2 = diag(0, 1, 1, ..., 1), no noise.
SyntheticWorld theorem2_world(std::size_t d);

/// Four-dimensional v*, w* = [1, 1, 0, 0], P1 = diag(c, 0, 1, 0),
/// P2 = diag(0, c, 0, 1); `sigma` is split equally between the views.
SyntheticWorld diagonal_world(double c, double sigma);

/// Random world with dim_star in [2, 6], Gaussian P of full column rank,
/// Gaussian w*, and total noise sigma in [0, 2] split at a random angle.
/// Every world with `noiseless` set has sigma = 0.
SyntheticWorld random_world(std::uint64_t seed, bool noiseless = false);

enum class MarginLoss { logistic, hinge };
std::string to_string(MarginLoss loss);
MarginLoss parse_margin_loss(const std::string& name);
/// Loss of real score f on label y in {0, 1}; both are 1-Lipschitz in f.
double margin_loss(MarginLoss loss, double f, int y);

/// Monte Carlo check of L(f_bar) <= L(f*) + lambda sigma |(P^+)^T w*|_2 where
/// f_bar has weights (P^+)^T w* on [v1, v2].
///
/// Noise is drawn in antithetic pairs (e, -e); standard errors are over the
/// n / 2 independent pair means.
struct Theorem1Report {
  std::string loss;
  double lambda = 1.0;
  std::size_t samples = 0;
  double sigma = 0.0;
  double weight_norm = 0.0;  // |(P^+)^T w*|_2
  double loss_fstar = 0.0;
  double se_fstar = 0.0;
  double loss_fbar = 0.0;
  double se_fbar = 0.0;
  double excess = 0.0;  // paired mean of l(f_bar) - l(f*)
  double se_excess = 0.0;
  double bound_term = 0.0;  // lambda sigma |(P^+)^T w*|_2
  double bound_rhs = 0.0;   // loss_fstar + bound_term
  // proof chain: excess <= lambda E|f_bar - f*| <= lambda sqrt(E<w_bar, e>^2) <= bound_term
  double mean_abs_diff = 0.0;
  double se_abs_diff = 0.0;
  double rms_diff = 0.0;
  double se_rms_diff = 0.0;
  double reconstruction_error = 0.0;  // max |P^+ P - I|
  bool noiseless = false;
  bool bound_holds = false;      // excess <= bound_term + 3 se_excess
  bool lipschitz_holds = false;  // excess <= lambda E|diff| + 3 se
  bool jensen_holds = false;     // E|diff| <= rms + 3 se
  bool cauchy_schwarz_holds = false;  // rms <= sigma |w_bar| + 3 se
  bool exact_equality = false;   // noiseless: |L(f_bar) - L(f*)| < 1e-10

  [[nodiscard]] bool passed() const;
};

Theorem1Report verify_theorem1(const SyntheticWorld& world, std::size_t n, MarginLoss loss,
                               std::uint64_t seed);

struct Theorem1Suite {
  std::vector<Theorem1Report> reports;
  std::size_t violations = 0;        // reports with bound_holds == false
  std::size_t chain_failures = 0;    // any proof-chain step failing
  std::size_t noiseless_worlds = 0;
  std::size_t noiseless_mismatches = 0;
  double max_noiseless_gap = 0.0;
  [[nodiscard]] bool passed() const {
    return violations == 0 && chain_failures == 0 && noiseless_mismatches == 0;
  }
};

/// `worlds` random worlds; every tenth one is noiseless. `sigma`, when set,
/// replaces every world's total noise level (keeping its split between views).
Theorem1Suite run_theorem1_suite(std::size_t worlds, std::size_t n, MarginLoss loss,
                                 std::uint64_t seed, std::optional<double> sigma = std::nullopt);

struct DiagonalSweepPoint {
  double c = 0.0;
  double weight_norm = 0.0;
  double expected_norm = 0.0;  // sqrt(2) / c
  Theorem1Report report;
};

struct DiagonalSweep {
  double sigma = 0.0;
  std::vector<DiagonalSweepPoint> points;
  double max_norm_error = 0.0;
  bool excess_nonincreasing = false;
  [[nodiscard]] bool passed() const { return max_norm_error <= 1e-12 && excess_nonincreasing; }
};

/// Uses the same seed at every c, so the excess-loss curve is compared on
/// common random numbers.
DiagonalSweep run_diagonal_sweep(const std::vector<double>& cs, double sigma, std::size_t n,
                                 MarginLoss loss, std::uint64_t seed);

struct Theorem2Options {
  double alpha = 1.0;
  double cca_reg = 1e-6;
  double l2 = 1e-4;
  /// Rows used to fit KCCA; 0 skips the kernel comparison.
  std::size_t kcca_rows = 0;
  double kcca_sigma = 0.0;  // 0 picks the median pairwise distance heuristic
  double kcca_reg = 1e-3;
  OptimizerConfig solver;
};

struct Theorem2Report {
  std::size_t d = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
  double acc_cat = 0.0;
  double acc_cca = 0.0;
  double acc_residue = 0.0;
  double acc_kcca = -1.0;  // negative when skipped
  Vector correlations;
  /// Share of the squared column norms of phi1 and phi2 on v* coordinates 1-2.
  double label_coordinate_share = 0.0;
  /// max |corr(combined coordinate, v*_1 + v*_2)| on the test sample.
  double max_label_correlation = 0.0;
  double hand_classifier_agreement = 0.0;  // f_bar = [1,0..,0 | 0,1,0..] vs f*
};

Theorem2Report verify_theorem2(std::size_t d, std::size_t n_train, std::size_t n_test,
                               std::uint64_t seed, const Theorem2Options& options = {});

nlohmann::ordered_json to_json(const Theorem1Report& r);
nlohmann::ordered_json to_json(const Theorem1Suite& s);
nlohmann::ordered_json to_json(const DiagonalSweep& s);
nlohmann::ordered_json to_json(const Theorem2Report& r);

}  // namespace embfuse
