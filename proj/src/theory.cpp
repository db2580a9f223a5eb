#include "embfuse/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "embfuse/combiner.hpp"
#include "embfuse/linalg.hpp"
#include "embfuse/rng.hpp"

namespace embfuse {

Matrix SyntheticWorld::stacked() const {
  Matrix p(P1.rows() + P2.rows(), P1.cols());
  p << P1, P2;
  return p;
}

double SyntheticWorld::sigma() const { return std::sqrt(sigma1 * sigma1 + sigma2 * sigma2); }

void SyntheticWorld::validate() const {
  if (w_star.size() == 0) throw std::invalid_argument("world needs a nonempty w*");
  if (P1.cols() != w_star.size() || P2.cols() != w_star.size()) {
    throw std::invalid_argument("P1 and P2 must have dim_star columns");
  }
  if (P1.rows() == 0 || P2.rows() == 0) throw std::invalid_argument("views must have positive dimension");
  if (!(sigma1 >= 0.0) || !(sigma2 >= 0.0)) throw std::invalid_argument("noise scales must be nonnegative");
}

namespace {

void fill_noise(Rng& rng, double sigma, Eigen::Ref<Vector> out) {
  const double scale = sigma / std::sqrt(static_cast<double>(out.size()));
  for (Eigen::Index j = 0; j < out.size(); ++j) out(j) = scale * rng.normal();
}

}  // namespace

WorldSample sample_world(const SyntheticWorld& world, std::size_t n, std::uint64_t seed) {
  world.validate();
  if (n == 0) throw std::invalid_argument("sample size must be positive");
  const auto rows = static_cast<Eigen::Index>(n);
  const auto k = static_cast<Eigen::Index>(world.dim_star());
  Rng rng(seed);
  WorldSample s;
  s.vstar.resize(rows, k);
  s.v1.resize(rows, world.P1.rows());
  s.v2.resize(rows, world.P2.rows());
  s.labels.resize(n);
  Vector vs(k), e1(world.P1.rows()), e2(world.P2.rows());
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) vs(j) = rng.normal();
    fill_noise(rng, world.sigma1, e1);
    fill_noise(rng, world.sigma2, e2);
    s.vstar.row(i) = vs.transpose();
    s.v1.row(i) = (world.P1 * vs + e1).transpose();
    s.v2.row(i) = (world.P2 * vs + e2).transpose();
    s.labels[static_cast<std::size_t>(i)] = world.w_star.dot(vs) >= 0.0 ? 1 : 0;
  }
  return s;
}

SyntheticWorld theorem2_world(std::size_t d) {
  if (d < 1) throw std::invalid_argument("two-view world needs d >= 1");
  const auto k = static_cast<Eigen::Index>(d + 2);
  SyntheticWorld w;
  w.w_star = Vector::Zero(k);
  w.w_star(0) = 1.0;
  w.w_star(1) = 1.0;
  Vector diag1 = Vector::Ones(k);
  Vector diag2 = Vector::Ones(k);
  diag1(1) = 0.0;
  diag2(0) = 0.0;
  w.P1 = diag1.asDiagonal();
  w.P2 = diag2.asDiagonal();
  return w;
}

SyntheticWorld diagonal_world(double c, double sigma) {
  if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  SyntheticWorld w;
  w.w_star = Vector::Zero(4);
  w.w_star << 1.0, 1.0, 0.0, 0.0;
  w.P1 = Vector((Vector(4) << c, 0.0, 1.0, 0.0).finished()).asDiagonal();
  w.P2 = Vector((Vector(4) << 0.0, c, 0.0, 1.0).finished()).asDiagonal();
  w.sigma1 = sigma / std::numbers::sqrt2;
  w.sigma2 = sigma / std::numbers::sqrt2;
  return w;
}

SyntheticWorld random_world(std::uint64_t seed, bool noiseless) {
  Rng rng(seed);
  const auto k = static_cast<Eigen::Index>(2 + rng.below(5));
  const auto d1 = static_cast<Eigen::Index>(1 + rng.below(static_cast<std::uint64_t>(k + 2)));
  const Eigen::Index d2_min = std::max<Eigen::Index>(1, k - d1);
  const auto d2 = d2_min + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(k + 3 - d2_min)));
  SyntheticWorld w;
  for (;;) {
    w.P1.resize(d1, k);
    w.P2.resize(d2, k);
    for (Eigen::Index i = 0; i < d1; ++i)
      for (Eigen::Index j = 0; j < k; ++j) w.P1(i, j) = rng.normal();
    for (Eigen::Index i = 0; i < d2; ++i)
      for (Eigen::Index j = 0; j < k; ++j) w.P2(i, j) = rng.normal();
    const auto sv = linalg::svd(w.stacked()).singular_values;
    if (sv(sv.size() - 1) > 1e-3 * sv(0)) break;
  }
  w.w_star.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) w.w_star(j) = rng.normal();
  const double sigma = noiseless ? 0.0 : rng.uniform(0.0, 2.0);
  const double angle = rng.uniform(0.0, std::numbers::pi / 2.0);
  w.sigma1 = sigma * std::cos(angle);
  w.sigma2 = sigma * std::sin(angle);
  return w;
}

std::string to_string(MarginLoss loss) { return loss == MarginLoss::logistic ? "logistic" : "hinge"; }

MarginLoss parse_margin_loss(const std::string& name) {
  if (name == "logistic") return MarginLoss::logistic;
  if (name == "hinge") return MarginLoss::hinge;
  throw std::invalid_argument("unknown loss '" + name + "'");
}

double margin_loss(MarginLoss loss, double f, int y) {
  const double m = (y == 1 ? 1.0 : -1.0) * f;
  if (loss == MarginLoss::hinge) return std::max(0.0, 1.0 - m);
  // log(1 + exp(-m)) without overflow
  return m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

namespace {

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  [[nodiscard]] double se() const {
    if (n < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  }
};

// Absolute slack for floating-point rounding in the exact inequalities.
constexpr double kRoundingSlack = 1e-12;

}  // namespace

bool Theorem1Report::passed() const {
  return bound_holds && lipschitz_holds && jensen_holds && cauchy_schwarz_holds &&
         (!noiseless || exact_equality);
}

Theorem1Report verify_theorem1(const SyntheticWorld& world, std::size_t n, MarginLoss loss,
                               std::uint64_t seed) {
  world.validate();
  if (n < 4) throw std::invalid_argument("Monte Carlo sample size must be at least 4");
  const Matrix p = world.stacked();
  const auto sv = linalg::svd(p).singular_values;
  if (sv(sv.size() - 1) <= linalg::kDefaultRankTol * sv(0) || sv.size() < p.cols()) {
    throw std::invalid_argument("stacked P is rank deficient");
  }
  const Matrix p_pinv = linalg::pseudo_inverse(p);
  const Vector w_bar = p_pinv.transpose() * world.w_star;

  Theorem1Report r;
  r.loss = to_string(loss);
  r.lambda = 1.0;
  r.sigma = world.sigma();
  r.weight_norm = w_bar.norm();
  r.bound_term = r.lambda * r.sigma * r.weight_norm;
  r.reconstruction_error =
      linalg::max_abs(p_pinv * p - Matrix::Identity(p.cols(), p.cols()));
  r.noiseless = r.sigma == 0.0;

  const auto k = static_cast<Eigen::Index>(world.dim_star());
  const std::size_t pairs = n / 2;
  r.samples = 2 * pairs;
  Rng rng(seed);
  Vector vs(k), e(p.rows());
  Moments star, bar, excess, abs_diff, sq_diff;
  for (std::size_t i = 0; i < pairs; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) vs(j) = rng.normal();
    fill_noise(rng, world.sigma1, e.head(world.P1.rows()));
    fill_noise(rng, world.sigma2, e.tail(world.P2.rows()));
    const double f_star = world.w_star.dot(vs);
    const int y = f_star >= 0.0 ? 1 : 0;
    const double signal = w_bar.dot(p * vs);
    const double noise = w_bar.dot(e);
    const double f_plus = signal + noise;
    const double f_minus = signal - noise;
    const double l_star = margin_loss(loss, f_star, y);
    const double l_bar = 0.5 * (margin_loss(loss, f_plus, y) + margin_loss(loss, f_minus, y));
    star.add(l_star);
    bar.add(l_bar);
    excess.add(l_bar - l_star);
    abs_diff.add(0.5 * (std::abs(f_plus - f_star) + std::abs(f_minus - f_star)));
    sq_diff.add(0.5 * ((f_plus - f_star) * (f_plus - f_star) + (f_minus - f_star) * (f_minus - f_star)));
  }
  r.loss_fstar = star.mean;
  r.se_fstar = star.se();
  r.loss_fbar = bar.mean;
  r.se_fbar = bar.se();
  r.excess = excess.mean;
  r.se_excess = excess.se();
  r.bound_rhs = r.loss_fstar + r.bound_term;
  r.mean_abs_diff = abs_diff.mean;
  r.se_abs_diff = abs_diff.se();
  r.rms_diff = std::sqrt(std::max(0.0, sq_diff.mean));
  r.se_rms_diff = r.rms_diff > 0.0 ? sq_diff.se() / (2.0 * r.rms_diff) : 0.0;

  r.bound_holds = r.excess <= r.bound_term + 3.0 * r.se_excess + kRoundingSlack;
  r.lipschitz_holds = r.excess <= r.lambda * r.mean_abs_diff + 3.0 * r.se_excess + kRoundingSlack;
  r.jensen_holds = r.mean_abs_diff <= r.rms_diff + kRoundingSlack;
  r.cauchy_schwarz_holds =
      r.rms_diff <= r.sigma * r.weight_norm + 3.0 * r.se_rms_diff + kRoundingSlack;
  r.exact_equality = std::abs(r.loss_fbar - r.loss_fstar) < 1e-10;
  return r;
}

Theorem1Suite run_theorem1_suite(std::size_t worlds, std::size_t n, MarginLoss loss,
                                 std::uint64_t seed, std::optional<double> sigma) {
  Theorem1Suite suite;
  const Rng root(seed);
  for (std::size_t i = 0; i < worlds; ++i) {
    const bool noiseless = i % 10 == 0;
    auto world = random_world(root.split(2 * i).next_u64(), noiseless);
    if (sigma) {
      const double angle = world.sigma() > 0.0 ? std::atan2(world.sigma2, world.sigma1) : std::numbers::pi / 4.0;
      world.sigma1 = *sigma * std::cos(angle);
      world.sigma2 = *sigma * std::sin(angle);
    }
    auto report = verify_theorem1(world, n, loss, root.split(2 * i + 1).next_u64());
    if (!report.bound_holds) ++suite.violations;
    if (!(report.lipschitz_holds && report.jensen_holds && report.cauchy_schwarz_holds)) {
      ++suite.chain_failures;
    }
    if (report.noiseless) {
      ++suite.noiseless_worlds;
      const double gap = std::abs(report.loss_fbar - report.loss_fstar);
      suite.max_noiseless_gap = std::max(suite.max_noiseless_gap, gap);
      if (!report.exact_equality) ++suite.noiseless_mismatches;
    }
    suite.reports.push_back(std::move(report));
  }
  return suite;
}

DiagonalSweep run_diagonal_sweep(const std::vector<double>& cs, double sigma, std::size_t n,
                                 MarginLoss loss, std::uint64_t seed) {
  if (cs.empty()) throw std::invalid_argument("sweep needs at least one c");
  std::vector<double> sorted = cs;
  std::sort(sorted.begin(), sorted.end());
  DiagonalSweep sweep;
  sweep.sigma = sigma;
  for (double c : sorted) {
    const auto world = diagonal_world(c, sigma);
    DiagonalSweepPoint point;
    point.c = c;
    point.report = verify_theorem1(world, n, loss, seed);
    point.weight_norm = point.report.weight_norm;
    point.expected_norm = std::numbers::sqrt2 / c;
    sweep.max_norm_error = std::max(sweep.max_norm_error, std::abs(point.weight_norm - point.expected_norm));
    sweep.points.push_back(std::move(point));
  }
  sweep.excess_nonincreasing = true;
  for (std::size_t i = 1; i < sweep.points.size(); ++i) {
    if (sweep.points[i].report.excess > sweep.points[i - 1].report.excess) {
      sweep.excess_nonincreasing = false;
    }
  }
  return sweep;
}

namespace {

double sample_correlation(const Vector& a, const Vector& b) {
  const Vector ac = a.array() - a.mean();
  const Vector bc = b.array() - b.mean();
  const double denom = ac.norm() * bc.norm();
  return denom > 0.0 ? ac.dot(bc) / denom : 0.0;
}

double fit_and_score(const Matrix& x_train, const std::vector<int>& y_train, const Matrix& x_test,
                     const std::vector<int>& y_test, double l2, const OptimizerConfig& solver) {
  auto clf = train_logreg(x_train, y_train, l2, solver, 2);
  return evaluate(clf, x_test, y_test);
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

double median_pairwise_distance(const Matrix& x) {
  const Eigen::Index m = std::min<Eigen::Index>(x.rows(), 500);
  std::vector<double> dists;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) dists.push_back((x.row(i) - x.row(j)).norm());
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2), dists.end());
  return std::max(dists[dists.size() / 2], 1e-6);
}

}  // namespace

Theorem2Report verify_theorem2(std::size_t d, std::size_t n_train, std::size_t n_test,
                               std::uint64_t seed, const Theorem2Options& options) {
  if (d < 1) throw std::invalid_argument("d must be at least 1");
  if (n_train < 100 * (d + 2)) {
    throw std::invalid_argument("n_train must be at least 100 (d + 2) = " + std::to_string(100 * (d + 2)));
  }
  if (n_test < 1) throw std::invalid_argument("n_test must be positive");
  const auto world = theorem2_world(d);
  const Rng root(seed);
  const auto train = sample_world(world, n_train, root.split(1).next_u64());
  const auto test = sample_world(world, n_test, root.split(2).next_u64());

  Theorem2Report r;
  r.d = d;
  r.n_train = n_train;
  r.n_test = n_test;
  r.seed = seed;

  r.acc_cat = fit_and_score(hconcat(train.v1, options.alpha * train.v2), train.labels,
                            hconcat(test.v1, options.alpha * test.v2), test.labels, options.l2,
                            options.solver);

  const EmbeddingSet v1_tr(train.v1), v2_tr(train.v2), v1_te(test.v1), v2_te(test.v2);
  const auto cca = fit_cca(v1_tr, v2_tr, options.cca_reg, d);
  r.correlations = cca.correlations;
  const Matrix cca_train = cca_combine(cca, v1_tr, v2_tr).vectors();
  const Matrix cca_test = cca_combine(cca, v1_te, v2_te).vectors();
  r.acc_cca = fit_and_score(cca_train, train.labels, cca_test, test.labels, options.l2, options.solver);

  const Matrix res_train = hconcat(cca_residue(cca, v1_tr, 1).vectors(), cca_residue(cca, v2_tr, 2).vectors());
  const Matrix res_test = hconcat(cca_residue(cca, v1_te, 1).vectors(), cca_residue(cca, v2_te, 2).vectors());
  r.acc_residue = fit_and_score(res_train, train.labels, res_test, test.labels, options.l2, options.solver);

  const double label_part = cca.phi1.leftCols(2).squaredNorm() + cca.phi2.leftCols(2).squaredNorm();
  r.label_coordinate_share = label_part / (cca.phi1.squaredNorm() + cca.phi2.squaredNorm());
  const Vector label_score = test.vstar.col(0) + test.vstar.col(1);
  for (Eigen::Index j = 0; j < cca_test.cols(); ++j) {
    r.max_label_correlation =
        std::max(r.max_label_correlation, std::abs(sample_correlation(cca_test.col(j), label_score)));
  }

  std::size_t agree = 0;
  for (Eigen::Index i = 0; i < test.v1.rows(); ++i) {
    const double score = test.v1(i, 0) + test.v2(i, 1);
    agree += (score >= 0.0 ? 1 : 0) == test.labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  r.hand_classifier_agreement = static_cast<double>(agree) / static_cast<double>(n_test);

  if (options.kcca_rows > 0) {
    const std::size_t m = std::min(options.kcca_rows, n_train);
    std::vector<std::size_t> rows(m);
    for (std::size_t i = 0; i < m; ++i) rows[i] = i;
    const auto k1 = v1_tr.select_rows(rows);
    const auto k2 = v2_tr.select_rows(rows);
    const double sigma =
        options.kcca_sigma > 0.0 ? options.kcca_sigma : median_pairwise_distance(k1.vectors());
    KccaOptions kopts;
    kopts.components = d;
    const auto kcca = fit_kcca(k1, k2, sigma, options.kcca_reg, kopts);
    const Matrix kx_train = kcca_combine(kcca, k1, k2).vectors();
    const Matrix kx_test = kcca_combine(kcca, v1_te, v2_te).vectors();
    std::vector<int> y(train.labels.begin(), train.labels.begin() + static_cast<std::ptrdiff_t>(m));
    r.acc_kcca = fit_and_score(kx_train, y, kx_test, test.labels, options.l2, options.solver);
  }
  return r;
}

namespace {

nlohmann::ordered_json vector_json(const Vector& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

nlohmann::ordered_json to_json(const Theorem1Report& r) {
  nlohmann::ordered_json j;
  j["loss"] = r.loss;
  j["lambda"] = r.lambda;
  j["samples"] = r.samples;
  j["sigma"] = r.sigma;
  j["weight_norm"] = r.weight_norm;
  j["loss_fstar"] = r.loss_fstar;
  j["se_fstar"] = r.se_fstar;
  j["loss_fbar"] = r.loss_fbar;
  j["se_fbar"] = r.se_fbar;
  j["excess"] = r.excess;
  j["se_excess"] = r.se_excess;
  j["bound_term"] = r.bound_term;
  j["bound_rhs"] = r.bound_rhs;
  j["mean_abs_diff"] = r.mean_abs_diff;
  j["rms_diff"] = r.rms_diff;
  j["reconstruction_error"] = r.reconstruction_error;
  j["noiseless"] = r.noiseless;
  j["exact_equality"] = r.exact_equality;
  j["bound_holds"] = r.bound_holds;
  j["lipschitz_holds"] = r.lipschitz_holds;
  j["jensen_holds"] = r.jensen_holds;
  j["cauchy_schwarz_holds"] = r.cauchy_schwarz_holds;
  j["passed"] = r.passed();
  return j;
}

nlohmann::ordered_json to_json(const Theorem1Suite& s) {
  nlohmann::ordered_json j;
  j["worlds"] = s.reports.size();
  j["violations"] = s.violations;
  j["chain_failures"] = s.chain_failures;
  j["noiseless_worlds"] = s.noiseless_worlds;
  j["noiseless_mismatches"] = s.noiseless_mismatches;
  j["max_noiseless_gap"] = s.max_noiseless_gap;
  j["passed"] = s.passed();
  auto reports = nlohmann::ordered_json::array();
  for (const auto& r : s.reports) reports.push_back(to_json(r));
  j["reports"] = std::move(reports);
  return j;
}

nlohmann::ordered_json to_json(const DiagonalSweep& s) {
  nlohmann::ordered_json j;
  j["sigma"] = s.sigma;
  j["max_norm_error"] = s.max_norm_error;
  j["excess_nonincreasing"] = s.excess_nonincreasing;
  j["passed"] = s.passed();
  auto points = nlohmann::ordered_json::array();
  for (const auto& p : s.points) {
    nlohmann::ordered_json pj;
    pj["c"] = p.c;
    pj["weight_norm"] = p.weight_norm;
    pj["expected_norm"] = p.expected_norm;
    pj["excess"] = p.report.excess;
    pj["se_excess"] = p.report.se_excess;
    pj["bound_term"] = p.report.bound_term;
    pj["bound_holds"] = p.report.bound_holds;
    points.push_back(std::move(pj));
  }
  j["points"] = std::move(points);
  return j;
}

nlohmann::ordered_json to_json(const Theorem2Report& r) {
  nlohmann::ordered_json j;
  j["d"] = r.d;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["seed"] = r.seed;
  j["acc_cat"] = r.acc_cat;
  j["acc_cca"] = r.acc_cca;
  j["acc_residue"] = r.acc_residue;
  j["acc_kcca"] = r.acc_kcca < 0.0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.acc_kcca);
  j["correlations"] = vector_json(r.correlations);
  j["label_coordinate_share"] = r.label_coordinate_share;
  j["max_label_correlation"] = r.max_label_correlation;
  j["hand_classifier_agreement"] = r.hand_classifier_agreement;
  return j;
}

}  // namespace embfuse
