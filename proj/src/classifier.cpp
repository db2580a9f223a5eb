#include "embfuse/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "embfuse/combiner.hpp"
#include "embfuse/text_format.hpp"

namespace embfuse {
namespace {

int infer_classes(std::span<const int> y) {
  int max_label = -1;
  for (int label : y) {
    if (label < 0) throw std::invalid_argument("negative label");
    max_label = std::max(max_label, label);
  }
  return max_label + 1;
}

// Packs W (c x d, column-major) followed by b into one parameter vector.
struct Packing {
  Eigen::Index c;
  Eigen::Index d;
  [[nodiscard]] Eigen::Index size() const { return c * d + c; }
  [[nodiscard]] Vector pack(const Matrix& w, const Vector& b) const {
    Vector theta(size());
    theta.head(c * d) = Eigen::Map<const Vector>(w.data(), c * d);
    theta.tail(c) = b;
    return theta;
  }
  [[nodiscard]] Matrix weights(const Vector& theta) const {
    return Eigen::Map<const Matrix>(theta.data(), c, d);
  }
  [[nodiscard]] Vector bias(const Vector& theta) const { return theta.tail(c); }
};

}  // namespace

Matrix LinearClassifier::logits(const Matrix& x) const {
  if (x.cols() != weights.cols()) {
    throw std::invalid_argument("classifier expects dimension " + std::to_string(weights.cols()) +
                                ", got " + std::to_string(x.cols()));
  }
  Matrix z = x * weights.transpose();
  z.rowwise() += bias.transpose();
  return z;
}

LogregObjective logreg_objective(const Matrix& weights, const Vector& bias, const Matrix& x,
                                 std::span<const int> y, double l2) {
  const Eigen::Index n = x.rows();
  const Eigen::Index c = weights.rows();
  Matrix z = x * weights.transpose();
  z.rowwise() += bias.transpose();

  double loss = 0.0;
  Matrix residual(n, c);  // softmax probabilities minus one-hot targets
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zmax = z.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index k = 0; k < c; ++k) {
      residual(i, k) = std::exp(z(i, k) - zmax);
      sum += residual(i, k);
    }
    const auto yi = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
    loss += std::log(sum) - (z(i, yi) - zmax);
    residual.row(i) /= sum;
    residual(i, yi) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  LogregObjective out;
  out.value = loss * inv_n + 0.5 * l2 * weights.squaredNorm();
  out.grad_weights = inv_n * residual.transpose() * x + l2 * weights;
  out.grad_bias = inv_n * residual.colwise().sum().transpose();
  return out;
}

LinearClassifier train_logreg(const Matrix& x, std::span<const int> y, double l2,
                              const OptimizerConfig& opt, int num_classes) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw std::invalid_argument("train_logreg: feature rows and labels differ in length");
  }
  if (!(l2 >= 0.0)) throw std::invalid_argument("train_logreg: l2 must be nonnegative");
  const int inferred = infer_classes(y);
  const int classes = num_classes > 0 ? num_classes : inferred;
  if (inferred > classes) throw std::invalid_argument("train_logreg: label exceeds num_classes");
  {
    std::vector<bool> seen(static_cast<std::size_t>(classes));
    int distinct = 0;
    for (int label : y) {
      if (!seen[static_cast<std::size_t>(label)]) {
        seen[static_cast<std::size_t>(label)] = true;
        ++distinct;
      }
    }
    if (distinct < 2) throw std::invalid_argument("train_logreg: single-class input");
  }
  if (y.size() < static_cast<std::size_t>(classes)) {
    throw std::invalid_argument("train_logreg: fewer rows than classes");
  }

  const Packing pack{classes, x.cols()};
  auto evaluate_at = [&](const Vector& theta, Vector& grad) {
    auto obj = logreg_objective(pack.weights(theta), pack.bias(theta), x, y, l2);
    if (!std::isfinite(obj.value)) throw std::runtime_error("train_logreg: non-finite loss");
    grad = pack.pack(obj.grad_weights, obj.grad_bias);
    return obj.value;
  };

  LinearClassifier clf;
  clf.l2_penalty = l2;
  Vector theta = Vector::Zero(pack.size());
  Vector grad;
  double f = evaluate_at(theta, grad);
  clf.train_loss_history.push_back(f);

  std::deque<std::pair<Vector, Vector>> memory;  // (s, y) correction pairs
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() < opt.grad_tol) break;

    // two-loop recursion for d = -H g
    Vector q = grad;
    std::vector<double> alphas(memory.size());
    for (std::size_t j = memory.size(); j-- > 0;) {
      const auto& [s, yv] = memory[j];
      alphas[j] = s.dot(q) / yv.dot(s);
      q -= alphas[j] * yv;
    }
    if (!memory.empty()) {
      const auto& [s, yv] = memory.back();
      q *= s.dot(yv) / yv.squaredNorm();
    } else {
      q /= std::max(1.0, grad.norm());
    }
    for (std::size_t j = 0; j < memory.size(); ++j) {
      const auto& [s, yv] = memory[j];
      const double beta = yv.dot(q) / yv.dot(s);
      q += (alphas[j] - beta) * s;
    }
    Vector direction = -q;
    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      memory.clear();
      direction = -grad / std::max(1.0, grad.norm());
      slope = grad.dot(direction);
    }

    // Armijo backtracking
    double step = 1.0;
    Vector next_theta, next_grad;
    double next_f = f;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      next_theta = theta + step * direction;
      next_f = evaluate_at(next_theta, next_grad);
      if (next_f <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || next_f > f) break;  // no further decrease at machine precision

    Vector s = next_theta - theta;
    Vector yv = next_grad - grad;
    if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
      memory.emplace_back(std::move(s), std::move(yv));
      if (static_cast<int>(memory.size()) > opt.memory) memory.pop_front();
    }
    theta = std::move(next_theta);
    grad = std::move(next_grad);
    f = next_f;
    clf.train_loss_history.push_back(f);
  }
  clf.weights = pack.weights(theta);
  clf.bias = pack.bias(theta);
  clf.final_grad_norm = grad.lpNorm<Eigen::Infinity>();
  clf.iterations = iter;
  if (!clf.weights.allFinite()) throw std::runtime_error("train_logreg: non-finite weights");
  return clf;
}

LinearClassifier train_logreg(const EmbeddingSet& x, std::span<const int> y, double l2,
                              const OptimizerConfig& opt, int num_classes) {
  return train_logreg(x.vectors(), y, l2, opt, num_classes);
}

std::vector<int> predict(const LinearClassifier& clf, const Matrix& x) {
  const Matrix z = clf.logits(x);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < z.cols(); ++k) {
      if (z(i, k) > z(i, best)) best = k;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const LinearClassifier& clf, const EmbeddingSet& x) {
  return predict(clf, x.vectors());
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (truth.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double evaluate(const LinearClassifier& clf, const Matrix& x, std::span<const int> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw std::invalid_argument("evaluate: feature rows and labels differ in length");
  }
  if (y.empty()) throw std::invalid_argument("evaluate: empty input");
  auto predicted = predict(clf, x);
  return accuracy(predicted, y);
}

double evaluate(const LinearClassifier& clf, const EmbeddingSet& x, std::span<const int> y) {
  return evaluate(clf, x.vectors(), y);
}

std::string to_string(CombineMethod method) {
  switch (method) {
    case CombineMethod::view1: return "view1";
    case CombineMethod::view2: return "view2";
    case CombineMethod::cat: return "cat";
    case CombineMethod::cca: return "cca";
    case CombineMethod::kcca: return "kcca";
  }
  return "unknown";
}

CombineMethod parse_combine_method(const std::string& name) {
  for (auto m : {CombineMethod::view1, CombineMethod::view2, CombineMethod::cat, CombineMethod::cca,
                 CombineMethod::kcca}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown combination method '" + name + "'");
}

Matrix combine_views(CombineMethod method, const GridPoint& params, const EmbeddingSet& v1,
                     const EmbeddingSet* v2, const std::vector<std::size_t>& train_rows) {
  if (method != CombineMethod::view1 && v2 == nullptr) {
    throw std::invalid_argument("method " + to_string(method) + " needs a second view");
  }
  switch (method) {
    case CombineMethod::view1: return v1.vectors();
    case CombineMethod::view2: return v2->vectors();
    case CombineMethod::cat: return cat_combine(v1, *v2, params.alpha).vectors();
    case CombineMethod::cca: {
      auto c = fit_cca(v1.select_rows(train_rows), v2->select_rows(train_rows), params.cca_reg);
      return cca_combine(c, v1, *v2).vectors();
    }
    case CombineMethod::kcca: {
      auto c = fit_kcca(v1.select_rows(train_rows), v2->select_rows(train_rows), params.kcca_sigma,
                        params.kcca_reg);
      return kcca_combine(c, v1, *v2).vectors();
    }
  }
  throw std::logic_error("unhandled combination method");
}

namespace {

std::vector<double> ascending(std::vector<double> grid) {
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

std::string describe(const GridPoint& p) {
  std::string out;
  auto add = [&](const char* name, double v) {
    if (std::isnan(v)) return;
    if (!out.empty()) out += ", ";
    out += std::string(name) + "=" + format_double(v);
  };
  add("alpha", p.alpha);
  add("l2", p.l2);
  add("cca_reg", p.cca_reg);
  add("kcca_sigma", p.kcca_sigma);
  add("kcca_reg", p.kcca_reg);
  return out;
}

}  // namespace

GridSearchReport grid_search(CombineMethod method, const RunConfig& grids, const LabeledDataset& ds,
                             const EmbeddingSet& v1, const EmbeddingSet* v2,
                             const OptimizerConfig& opt) {
  grids.validate();
  const Split& split = ds.split();
  if (v1.rows() != ds.size() || (v2 && v2->rows() != ds.size())) {
    throw std::invalid_argument("grid_search: embedding rows do not match the dataset");
  }
  if (method != CombineMethod::view1 && v2 == nullptr) {
    throw std::invalid_argument("method " + to_string(method) + " needs a second view");
  }
  const auto y_train = ds.labels_at(split.train);
  const auto y_dev = ds.labels_at(split.dev);
  const auto y_test = ds.labels_at(split.test);

  // combiner settings, outermost loop first
  std::vector<GridPoint> combiner_points;
  switch (method) {
    case CombineMethod::view1:
    case CombineMethod::view2:
      combiner_points.emplace_back();
      break;
    case CombineMethod::cat:
      for (double a : ascending(grids.alpha_grid)) {
        GridPoint p;
        p.alpha = a;
        combiner_points.push_back(p);
      }
      break;
    case CombineMethod::cca:
      for (double r : ascending(grids.cca_reg_grid)) {
        GridPoint p;
        p.cca_reg = r;
        combiner_points.push_back(p);
      }
      break;
    case CombineMethod::kcca:
      for (double s : ascending(grids.kcca_sigma_grid)) {
        for (double r : ascending(grids.kcca_reg_grid)) {
          GridPoint p;
          p.kcca_sigma = s;
          p.kcca_reg = r;
          combiner_points.push_back(p);
        }
      }
      break;
  }

  GridSearchReport report;
  report.method = method;
  const auto l2_values = ascending(grids.l2_grid);
  for (const auto& base : combiner_points) {
    Matrix features;
    try {
      features = combine_views(method, base, v1, v2, split.train);
    } catch (const std::exception& e) {
      throw std::runtime_error("grid point {" + describe(base) + "}: " + e.what());
    }
    const Matrix x_train = select_rows(features, split.train);
    const Matrix x_dev = select_rows(features, split.dev);
    const Matrix x_test = select_rows(features, split.test);
    for (double l2 : l2_values) {
      GridEntry entry;
      entry.params = base;
      entry.params.l2 = l2;
      try {
        auto clf = train_logreg(x_train, y_train, l2, opt, ds.num_classes());
        entry.dev_acc = evaluate(clf, x_dev, y_dev);
        entry.test_acc = evaluate(clf, x_test, y_test);
      } catch (const std::exception& e) {
        throw std::runtime_error("grid point {" + describe(entry.params) + "}: " + e.what());
      }
      report.entries.push_back(entry);
    }
  }
  // entries are in ascending (alpha, penalty) order, so the first maximum wins ties
  for (std::size_t i = 1; i < report.entries.size(); ++i) {
    if (report.entries[i].dev_acc > report.entries[report.best].dev_acc) report.best = i;
  }
  return report;
}

void write_grid_csv(const GridSearchReport& report, std::ostream& out, std::uint64_t config_hash,
                    std::uint64_t seed) {
  out << "config_hash,seed,method,index,alpha,l2,cca_reg,kcca_sigma,kcca_reg,dev_acc,test_acc,best\n";
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    const auto& e = report.entries[i];
    out << format_hash(config_hash) << ',' << seed << ',' << to_string(report.method) << ',' << i
        << ',' << format_double(e.params.alpha) << ',' << format_double(e.params.l2) << ','
        << format_double(e.params.cca_reg) << ',' << format_double(e.params.kcca_sigma) << ','
        << format_double(e.params.kcca_reg) << ',' << format_double(e.dev_acc) << ','
        << format_double(e.test_acc) << ',' << (i == report.best ? 1 : 0) << '\n';
  }
}

void write_grid_jsonl(const GridSearchReport& report, std::ostream& out, std::uint64_t config_hash,
                      std::uint64_t seed) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    const auto& e = report.entries[i];
    nlohmann::ordered_json j;
    j["config_hash"] = format_hash(config_hash);
    j["seed"] = seed;
    j["method"] = to_string(report.method);
    j["index"] = i;
    j["alpha"] = num(e.params.alpha);
    j["l2"] = num(e.params.l2);
    j["cca_reg"] = num(e.params.cca_reg);
    j["kcca_sigma"] = num(e.params.kcca_sigma);
    j["kcca_reg"] = num(e.params.kcca_reg);
    j["dev_acc"] = e.dev_acc;
    j["test_acc"] = e.test_acc;
    j["best"] = i == report.best;
    out << j.dump() << '\n';
  }
}

}  // namespace embfuse
