#include "embfuse/cnn_training.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace embfuse {
namespace {

class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void next_step() { ++t_; }

  void update(std::size_t slot, double* param, const double* grad, std::size_t n) {
    if (slot >= m_.size()) {
      m_.resize(slot + 1);
      v_.resize(slot + 1);
    }
    if (m_[slot].empty()) {
      m_[slot].assign(n, 0.0);
      v_[slot].assign(n, 0.0);
    }
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    auto& m = m_[slot];
    auto& v = v_[slot];
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      param[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
    }
  }

  template <typename M>
  void update(std::size_t slot, M& param, const M& grad) {
    update(slot, param.data(), grad.data(), static_cast<std::size_t>(param.size()));
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  int t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

void apply(Adam& adam, TextCnn& cnn, LinearClassifier& head, CnnGradients& g) {
  adam.next_step();
  std::size_t slot = 0;
  adam.update(slot++, head.weights, g.head_weights);
  adam.update(slot++, head.bias, g.head_bias);
  for (std::size_t j = 0; j < cnn.filters.size(); ++j) {
    adam.update(slot++, cnn.filters[j], g.filters[j]);
    adam.update(slot++, cnn.biases[j], g.biases[j]);
  }
  if (embeddings_trainable(cnn.mode)) adam.update(slot++, cnn.embeddings, g.embeddings);
}

void check_options(const CnnTrainOptions& o) {
  if (o.epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
  if (o.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(o.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (o.patience < 1) throw std::invalid_argument("patience must be at least 1");
  if (!(o.l2 >= 0.0)) throw std::invalid_argument("l2 must be nonnegative");
}

// Dev accuracy of the head over [fixed, alpha * encode(.)] (fixed may be null).
double accuracy_on(const TextCnn& cnn, const LinearClassifier& head,
                   const std::vector<std::vector<int>>& sequences, const std::vector<int>& labels,
                   const std::vector<std::size_t>& rows, const Matrix* fixed, double alpha) {
  const auto out_dim = static_cast<Eigen::Index>(cnn.output_dim());
  const Eigen::Index fixed_dim = fixed ? fixed->cols() : 0;
  Matrix x(static_cast<Eigen::Index>(rows.size()), fixed_dim + out_dim);
  std::vector<std::vector<int>> subset;
  std::vector<int> y;
  subset.reserve(rows.size());
  y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (fixed) x.row(static_cast<Eigen::Index>(i)).head(fixed_dim) = fixed->row(static_cast<Eigen::Index>(rows[i]));
    subset.push_back(sequences[rows[i]]);
    y.push_back(labels[rows[i]]);
  }
  x.rightCols(out_dim) = alpha * encode_dataset(cnn, subset).vectors();
  return evaluate(head, x, y);
}

struct LoopResult {
  TextCnn cnn;
  LinearClassifier head;
  std::vector<double> dev_history;
  int best_epoch = 0;
};

LoopResult training_loop(const LabeledDataset& ds, const std::vector<std::vector<int>>& sequences,
                         TextCnn cnn, LinearClassifier head, const Matrix* fixed, double alpha,
                         const CnnTrainOptions& options, std::uint64_t seed) {
  check_options(options);
  if (sequences.size() != ds.size()) {
    throw std::invalid_argument("index sequences and dataset differ in length");
  }
  const Split& split = ds.split();
  const auto& labels = ds.labels();
  Rng rng(seed);

  LoopResult best{cnn, head, {}, 0};
  double best_dev = accuracy_on(cnn, head, sequences, labels, split.dev, fixed, alpha);
  best.dev_history.push_back(best_dev);

  Adam adam(options.learning_rate);
  std::vector<std::size_t> order = split.train;
  int stale = 0;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      CnnBatch batch;
      batch.alpha = alpha;
      Matrix fixed_rows;
      if (fixed) {
        fixed_rows.resize(static_cast<Eigen::Index>(stop - start), fixed->cols());
        for (std::size_t i = start; i < stop; ++i) {
          fixed_rows.row(static_cast<Eigen::Index>(i - start)) = fixed->row(static_cast<Eigen::Index>(order[i]));
        }
        batch.fixed = &fixed_rows;
      }
      for (std::size_t i = start; i < stop; ++i) {
        batch.tokens.emplace_back(sequences[order[i]]);
        batch.labels.push_back(labels[order[i]]);
      }
      auto step = cnn_forward_backward(cnn, head, batch, options.l2, true, &rng);
      apply(adam, cnn, head, step.grads);
    }
    const double dev = accuracy_on(cnn, head, sequences, labels, split.dev, fixed, alpha);
    best.dev_history.push_back(dev);
    if (dev > best_dev) {
      best_dev = dev;
      best.cnn = cnn;
      best.head = head;
      best.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= options.patience) {
      break;
    }
  }
  return best;
}

}  // namespace

CnnTrainResult train_cnn(const LabeledDataset& ds, const std::vector<std::vector<int>>& sequences,
                         TextCnn init, const CnnTrainOptions& options, std::uint64_t seed) {
  LinearClassifier head;
  head.weights = Matrix::Zero(ds.num_classes(), static_cast<Eigen::Index>(init.output_dim()));
  head.bias = Vector::Zero(ds.num_classes());
  head.l2_penalty = options.l2;
  auto loop = training_loop(ds, sequences, std::move(init), std::move(head), nullptr, 1.0, options, seed);
  return CnnTrainResult{std::move(loop.cnn), std::move(loop.head), std::move(loop.dev_history),
                        loop.best_epoch};
}

CnnTrainResult train_cnn(const LabeledDataset& ds, const Vocabulary& vocab, EmbeddingMode mode,
                         const TextCnnConfig& config, const CnnTrainOptions& options,
                         std::uint64_t seed, const WordVectors* word_vectors) {
  Rng root(seed);
  Rng init_rng = root.split(1);
  TextCnn init = init_text_cnn(vocab, config, mode, init_rng, word_vectors);
  return train_cnn(ds, index_sequences(ds, vocab, config.max_len), std::move(init), options,
                   root.split(2).next_u64());
}

Matrix cat_open_features(const TextCnn& cnn, const std::vector<std::vector<int>>& sequences,
                         const EmbeddingSet& v1, double alpha) {
  if (v1.rows() != sequences.size()) {
    throw std::invalid_argument("pretrained view and dataset differ in row count");
  }
  const auto d1 = static_cast<Eigen::Index>(v1.dim());
  const auto d2 = static_cast<Eigen::Index>(cnn.output_dim());
  Matrix x(static_cast<Eigen::Index>(sequences.size()), d1 + d2);
  x.leftCols(d1) = v1.vectors();
  x.rightCols(d2) = alpha * encode_dataset(cnn, sequences).vectors();
  return x;
}

CatOpenResult train_cat_open(const LabeledDataset& ds,
                             const std::vector<std::vector<int>>& sequences,
                             const EmbeddingSet& v1, TextCnn init_cnn, LinearClassifier init_head,
                             double alpha, const CnnTrainOptions& options, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (v1.rows() != ds.size()) {
    throw std::invalid_argument("pretrained view has " + std::to_string(v1.rows()) +
                                " rows, dataset has " + std::to_string(ds.size()));
  }
  auto loop = training_loop(ds, sequences, std::move(init_cnn), std::move(init_head), &v1.vectors(),
                            alpha, options, seed);
  return CatOpenResult{std::move(loop.cnn), std::move(loop.head), alpha,
                       std::move(loop.dev_history), loop.best_epoch};
}

CatOpenResult train_cat_open(const LabeledDataset& ds, const EmbeddingSet& v1,
                             const Vocabulary& vocab, EmbeddingMode mode,
                             const TextCnnConfig& config, const CatOpenSettings& settings,
                             std::uint64_t seed, const WordVectors* word_vectors) {
  auto pre = train_cnn(ds, vocab, mode, config, settings.encoder, seed, word_vectors);
  const auto sequences = index_sequences(ds, vocab, config.max_len);
  const Matrix features = cat_open_features(pre.cnn, sequences, v1, settings.alpha);
  const Split& split = ds.split();
  auto head = train_logreg(select_rows(features, split.train), ds.labels_at(split.train),
                           settings.l2, settings.head_solver, ds.num_classes());
  CnnTrainOptions joint = settings.joint;
  joint.l2 = settings.l2;
  return train_cat_open(ds, sequences, v1, std::move(pre.cnn), std::move(head), settings.alpha,
                        joint, Rng(seed).split(3).next_u64());
}

}  // namespace embfuse
