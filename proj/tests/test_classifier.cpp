#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "embfuse/classifier.hpp"
#include "test_support.hpp"

using namespace embfuse;
using embfuse::testing::gaussian;

namespace {

// Two Gaussian blobs at +-shift along the first axis.
std::pair<Matrix, std::vector<int>> blobs(std::size_t n, double shift, Rng& rng, Eigen::Index d = 2) {
  Matrix x = 0.3 * gaussian(static_cast<Eigen::Index>(n), d, rng);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    x(static_cast<Eigen::Index>(i), 0) += y[i] ? shift : -shift;
  }
  return {x, y};
}

LabeledDataset dataset_for(const std::vector<int>& y) {
  return LabeledDataset(std::vector<std::string>(y.size(), "s"), y);
}

}  // namespace

TEST(Logreg, ObjectiveMatchesFiniteDifferences) {
  Rng rng(1);
  const Matrix x = gaussian(20, 3, rng);
  std::vector<int> y(20);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3);
  const Matrix w = gaussian(3, 3, rng);
  const Vector b = gaussian(3, 1, rng);
  const auto obj = logreg_objective(w, b, x, y, 0.3);
  constexpr double h = 1e-6;
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      Matrix wp = w, wm = w;
      wp(i, j) += h;
      wm(i, j) -= h;
      const double fd = (logreg_objective(wp, b, x, y, 0.3).value - logreg_objective(wm, b, x, y, 0.3).value) / (2 * h);
      EXPECT_NEAR(obj.grad_weights(i, j), fd, 1e-7);
    }
    Vector bp = b, bm = b;
    bp(i) += h;
    bm(i) -= h;
    const double fd = (logreg_objective(w, bp, x, y, 0.3).value - logreg_objective(w, bm, x, y, 0.3).value) / (2 * h);
    EXPECT_NEAR(obj.grad_bias(i), fd, 1e-7);
  }
}

TEST(Logreg, ZeroModelLossIsLogClasses) {
  Rng rng(2);
  const Matrix x = gaussian(9, 2, rng);
  const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2};
  EXPECT_NEAR(logreg_objective(Matrix::Zero(3, 2), Vector::Zero(3), x, y, 1.0).value, std::log(3.0), 1e-15);
}

TEST(Logreg, SeparableBlobsReachPerfectTrainAccuracy) {
  Rng rng(3);
  auto [x, y] = blobs(200, 2.0, rng);
  const auto clf = train_logreg(x, y, 1e-4);
  EXPECT_EQ(evaluate(clf, x, y), 1.0);
  EXPECT_TRUE(clf.weights.allFinite());
  const auto& h = clf.train_loss_history;
  ASSERT_GE(h.size(), 2u);
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1] + 1e-12);
}

TEST(Logreg, IndependentLabelsGiveChanceAccuracy) {
  Rng rng(4);
  const Matrix x = gaussian(4000, 5, rng);
  std::vector<int> y(4000);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
  rng.shuffle(y);
  const std::vector<int> y_train(y.begin(), y.begin() + 2000), y_dev(y.begin() + 2000, y.end());
  const auto clf = train_logreg(Matrix(x.topRows(2000)), y_train, 1e-2);
  const double acc = evaluate(clf, Matrix(x.bottomRows(2000)), y_dev);
  EXPECT_GE(acc, 0.4);
  EXPECT_LE(acc, 0.6);
}

TEST(Logreg, HugePenaltyCollapsesToMajority) {
  Rng rng(5);
  auto [x, y] = blobs(101, 1.0, rng);  // 51 zeros, 50 ones
  const auto clf = train_logreg(x, y, 1e6);
  EXPECT_LT(clf.weights.norm(), 1e-3);
  for (int p : predict(clf, x)) EXPECT_EQ(p, 0);
}

TEST(Logreg, RejectsDegenerateInput) {
  const Matrix x = Matrix::Ones(4, 2);
  EXPECT_THROW((void)train_logreg(x, std::vector<int>{0, 0, 0, 0}, 1.0), std::invalid_argument);
  EXPECT_THROW((void)train_logreg(x, std::vector<int>{0, 1, 0, 1}, -1.0), std::invalid_argument);
  EXPECT_THROW((void)train_logreg(x, std::vector<int>{0, 1, 0}, 1.0), std::invalid_argument);
}

TEST(Predict, ZeroModelPicksClassZero) {
  auto clf = embfuse::testing::linear_head(Matrix::Zero(3, 2), Vector::Zero(3));
  for (int p : predict(clf, Matrix::Random(5, 2))) EXPECT_EQ(p, 0);
}

TEST(Predict, OneHotWeightsRecoverAxisLabels) {
  auto clf = embfuse::testing::linear_head(Matrix::Identity(3, 3), Vector::Zero(3));
  const Matrix x = 2.0 * Matrix::Identity(3, 3);
  EXPECT_EQ(predict(clf, x), (std::vector<int>{0, 1, 2}));
}

TEST(Predict, HandComputedLogits) {
  LinearClassifier clf;
  clf.weights = (Matrix(2, 2) << 1, -1, -2, 3).finished();
  clf.bias = Eigen::Vector2d(0.5, -0.5);
  const Matrix x = (Matrix(3, 2) << 1, 1, 3, 1, 0, 2).finished();
  // row 0: (0.5, 0.5) tie -> 0; row 1: (2.5, -3.5) -> 0; row 2: (-1.5, 5.5) -> 1
  EXPECT_EQ(predict(clf, x), (std::vector<int>{0, 0, 1}));
  EXPECT_NEAR(evaluate(clf, x, std::vector<int>{0, 1, 1}), 2.0 / 3.0, 1e-15);
}

TEST(Accuracy, EmptyAndMismatchErrors) {
  EXPECT_THROW((void)accuracy(std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
  EXPECT_THROW((void)accuracy(std::vector<int>{1}, std::vector<int>{1, 0}), std::invalid_argument);
}

class GridSearchTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(6);
    v1 = gaussian(n, 3, rng);  // noise
    std::tie(v2, labels) = blobs(n, 1.5, rng, 2);
    ds = make_split(dataset_for(labels), SplitFractions{}, 1);
  }
  static constexpr std::size_t n = 400;
  Matrix v1, v2;
  std::vector<int> labels;
  LabeledDataset ds{{"a", "b"}, {0, 1}};
};

TEST_F(GridSearchTest, SingletonGrid) {
  RunConfig g;
  g.alpha_grid = {1.0};
  g.l2_grid = {0.1};
  const EmbeddingSet e2(v2);
  const auto r = grid_search(CombineMethod::cat, g, ds, EmbeddingSet(v1), &e2);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.best, 0u);
}

TEST_F(GridSearchTest, PicksAlphaThatExposesSignal) {
  RunConfig g;
  g.alpha_grid = {1.0, 1e-4};
  g.l2_grid = {1.0};
  const EmbeddingSet e2(v2);
  const auto r = grid_search(CombineMethod::cat, g, ds, EmbeddingSet(v1), &e2);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[0].params.alpha, 1e-4);  // grids are visited ascending
  EXPECT_GT(r.entries[1].dev_acc, r.entries[0].dev_acc + 0.2);
  EXPECT_EQ(r.best, 1u);
}

TEST_F(GridSearchTest, TiesGoToSmallestAlphaThenPenalty) {
  RunConfig g;
  g.alpha_grid = {1.0, 2.0};
  g.l2_grid = {1e-3, 1e-2};
  const EmbeddingSet e2(v2);
  const auto r = grid_search(CombineMethod::cat, g, ds, EmbeddingSet(v1), &e2);
  double best = -1.0;
  for (const auto& e : r.entries) best = std::max(best, e.dev_acc);
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    if (r.entries[i].dev_acc == best) {
      EXPECT_EQ(r.best, i);
      break;
    }
  }
}

TEST_F(GridSearchTest, BestIgnoresTestLabels) {
  RunConfig g;
  g.alpha_grid = {0.02, 0.2, 2.0};
  g.l2_grid = {1e-3, 1e-1, 10.0};
  const EmbeddingSet e2(v2);
  const auto r1 = grid_search(CombineMethod::cat, g, ds, EmbeddingSet(v1), &e2);
  auto flipped = labels;
  for (auto i : ds.split().test) flipped[i] = 1 - flipped[i];
  const auto ds2 = dataset_for(flipped).with_split(ds.split());
  const auto r2 = grid_search(CombineMethod::cat, g, ds2, EmbeddingSet(v1), &e2);
  EXPECT_EQ(r1.best, r2.best);
  for (std::size_t i = 0; i < r1.entries.size(); ++i) {
    EXPECT_EQ(r1.entries[i].dev_acc, r2.entries[i].dev_acc);
    EXPECT_NEAR(r1.entries[i].test_acc + r2.entries[i].test_acc, 1.0, 1e-12);
  }
}

TEST_F(GridSearchTest, OtherMethodsEnumerateTheirGrids) {
  RunConfig g;
  g.l2_grid = {0.1, 1.0};
  g.cca_reg_grid = {1e-3};
  g.kcca_sigma_grid = {0.5, 5.0};
  g.kcca_reg_grid = {1e-2};
  const EmbeddingSet e1(v1), e2(v2);
  EXPECT_EQ(grid_search(CombineMethod::view1, g, ds, e1, nullptr).entries.size(), 2u);
  EXPECT_EQ(grid_search(CombineMethod::view2, g, ds, e1, &e2).entries.size(), 2u);
  const auto cca = grid_search(CombineMethod::cca, g, ds, e1, &e2);
  EXPECT_EQ(cca.entries.size(), 2u);
  EXPECT_TRUE(std::isnan(cca.entries[0].params.alpha));
  EXPECT_EQ(grid_search(CombineMethod::kcca, g, ds, e1, &e2).entries.size(), 4u);
  EXPECT_THROW((void)grid_search(CombineMethod::cat, g, ds, e1, nullptr), std::invalid_argument);
}

TEST_F(GridSearchTest, CsvHasHeaderAndOneRowPerEntry) {
  RunConfig g;
  g.alpha_grid = {1.0, 2.0};
  g.l2_grid = {0.1};
  const EmbeddingSet e2(v2);
  const auto r = grid_search(CombineMethod::cat, g, ds, EmbeddingSet(v1), &e2);
  std::ostringstream csv, jsonl;
  write_grid_csv(r, csv, 0xabcULL, 3);
  write_grid_jsonl(r, jsonl, 0xabcULL, 3);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "config_hash,seed,method,index,alpha,l2,cca_reg,kcca_sigma,kcca_reg,dev_acc,test_acc,best");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.rfind("0000000000000abc,3,cat,", 0), 0u) << line;
  }
  EXPECT_EQ(rows, 2);
  const std::string lines = jsonl.str();
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 2);
}
