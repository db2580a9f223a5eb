#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "embfuse/dataset.hpp"
#include "embfuse/embedding.hpp"

namespace embfuse {

/// Full-batch solver settings for the logistic-regression head.
struct OptimizerConfig {
  int max_iterations = 2000;
  double grad_tol = 1e-6;  // stop when the gradient's max-norm falls below this
  int memory = 10;         // L-BFGS correction pairs
};

/// Multinomial logistic regression: logits = W x + b.
struct LinearClassifier {
  Matrix weights;  // c x d
  Vector bias;     // c
  double l2_penalty = 0.0;
  std::vector<double> train_loss_history;
  double final_grad_norm = 0.0;
  int iterations = 0;

  [[nodiscard]] int num_classes() const { return static_cast<int>(weights.rows()); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }
  [[nodiscard]] Matrix logits(const Matrix& x) const;
};

struct LogregObjective {
  double value = 0.0;
  Matrix grad_weights;
  Vector grad_bias;
};

/// Mean softmax cross-entropy plus (l2 / 2) |W|_F^2; the bias is unpenalized.
LogregObjective logreg_objective(const Matrix& weights, const Vector& bias, const Matrix& x,
                                 std::span<const int> y, double l2);

/// Minimizes logreg_objective from zero weights with L-BFGS and a
/// backtracking line search, so the recorded loss never increases.
/// `num_classes` <= 0 infers it from the labels.
LinearClassifier train_logreg(const Matrix& x, std::span<const int> y, double l2,
                              const OptimizerConfig& opt = {}, int num_classes = 0);
LinearClassifier train_logreg(const EmbeddingSet& x, std::span<const int> y, double l2,
                              const OptimizerConfig& opt = {}, int num_classes = 0);

/// Argmax of the logits; ties go to the lowest class index.
std::vector<int> predict(const LinearClassifier& clf, const Matrix& x);
std::vector<int> predict(const LinearClassifier& clf, const EmbeddingSet& x);

double accuracy(std::span<const int> predicted, std::span<const int> truth);
double evaluate(const LinearClassifier& clf, const Matrix& x, std::span<const int> y);
double evaluate(const LinearClassifier& clf, const EmbeddingSet& x, std::span<const int> y);

// ---- grid search ----

enum class CombineMethod { view1, view2, cat, cca, kcca };

std::string to_string(CombineMethod method);
CombineMethod parse_combine_method(const std::string& name);

/// One hyperparameter assignment; parameters unused by a method are NaN.
struct GridPoint {
  static constexpr double kUnused = std::numeric_limits<double>::quiet_NaN();
  double alpha = kUnused;
  double l2 = kUnused;
  double cca_reg = kUnused;
  double kcca_sigma = kUnused;
  double kcca_reg = kUnused;
};

struct GridEntry {
  GridPoint params;
  double dev_acc = 0.0;
  double test_acc = 0.0;
};

struct GridSearchReport {
  CombineMethod method = CombineMethod::cat;
  std::vector<GridEntry> entries;
  std::size_t best = 0;
};

/// For every grid point: fit the combiner on train rows, train the
/// classifier on train rows, and score dev and test. `best` maximizes dev
/// accuracy (ties: smallest alpha, then smallest penalty); test accuracy is
/// recorded but never consulted for selection.
///
/// `v2` may be empty for CombineMethod::view1.
GridSearchReport grid_search(CombineMethod method, const RunConfig& grids, const LabeledDataset& ds,
                             const EmbeddingSet& v1, const EmbeddingSet* v2,
                             const OptimizerConfig& opt = {});

/// Applies the combiner of `params` fitted on `train_rows` to all rows.
Matrix combine_views(CombineMethod method, const GridPoint& params, const EmbeddingSet& v1,
                     const EmbeddingSet* v2, const std::vector<std::size_t>& train_rows);

void write_grid_csv(const GridSearchReport& report, std::ostream& out, std::uint64_t config_hash,
                    std::uint64_t seed);
void write_grid_jsonl(const GridSearchReport& report, std::ostream& out, std::uint64_t config_hash,
                      std::uint64_t seed);

}  // namespace embfuse
