#pragma once

#include <cstdint>
#include <vector>

#include "embfuse/classifier.hpp"
#include "embfuse/dataset.hpp"
#include "embfuse/text_cnn.hpp"

namespace embfuse {

/// Mini-batch Adam with early stopping on dev accuracy.
struct CnnTrainOptions {
  int epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  int patience = 5;    // epochs without strict dev improvement before stopping
  double l2 = 1e-4;    // penalty on classifier-head weights only
};

struct CnnTrainResult {
  TextCnn cnn;
  LinearClassifier head;
  std::vector<double> dev_history;  // entry 0 is the untrained model
  int best_epoch = 0;
};

/// Trains `init` plus a zero-initialized softmax head on the train split and
/// returns the snapshot with the best dev accuracy (earliest on ties).
CnnTrainResult train_cnn(const LabeledDataset& ds, const std::vector<std::vector<int>>& sequences,
                         TextCnn init, const CnnTrainOptions& options, std::uint64_t seed);

/// Initializes from `seed` and trains.
CnnTrainResult train_cnn(const LabeledDataset& ds, const Vocabulary& vocab, EmbeddingMode mode,
                         const TextCnnConfig& config, const CnnTrainOptions& options,
                         std::uint64_t seed, const WordVectors* word_vectors = nullptr);

/// Rows [v1_i, alpha * encode(sequence_i)] in eval mode.
Matrix cat_open_features(const TextCnn& cnn, const std::vector<std::vector<int>>& sequences,
                         const EmbeddingSet& v1, double alpha);

struct CatOpenResult {
  TextCnn cnn;
  LinearClassifier head;
  double alpha = 1.0;
  std::vector<double> dev_history;  // entry 0 is the starting point
  int best_epoch = 0;
};

/// Joint training of `head` over [v1, alpha * f2(s)] and the encoder f2.
/// v1 is constant input. The returned snapshot changes from the starting
/// point only on a strict dev improvement.
CatOpenResult train_cat_open(const LabeledDataset& ds,
                             const std::vector<std::vector<int>>& sequences,
                             const EmbeddingSet& v1, TextCnn init_cnn, LinearClassifier init_head,
                             double alpha, const CnnTrainOptions& options, std::uint64_t seed);

struct CatOpenSettings {
  double alpha = 1.0;
  double l2 = 1e-4;
  CnnTrainOptions encoder;  // pre-training of f2 on the labeled data
  CnnTrainOptions joint{50, 32, 1e-4, 5, 1e-4};
  OptimizerConfig head_solver;
};

/// Full regime: train f2 with `seed`, fit the head on [v1, alpha * f2] by
/// logistic regression with penalty `settings.l2`, then train jointly.
CatOpenResult train_cat_open(const LabeledDataset& ds, const EmbeddingSet& v1,
                             const Vocabulary& vocab, EmbeddingMode mode,
                             const TextCnnConfig& config, const CatOpenSettings& settings,
                             std::uint64_t seed, const WordVectors* word_vectors = nullptr);

}  // namespace embfuse
