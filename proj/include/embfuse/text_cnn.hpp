#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "embfuse/classifier.hpp"
#include "embfuse/embedding.hpp"
#include "embfuse/rng.hpp"
#include "embfuse/vocabulary.hpp"

namespace embfuse {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TextCnnConfig {
  std::size_t embed_dim = 300;
  std::size_t num_filters = 128;  // per width
  std::vector<std::size_t> widths{3, 4, 5};
  double dropout = 0.5;
  std::size_t max_len = 128;

  [[nodiscard]] std::size_t output_dim() const { return num_filters * widths.size(); }
  /// Shorter sequences are padded up to this length (at least 5).
  [[nodiscard]] std::size_t min_len() const;
  void validate() const;
};

enum class EmbeddingMode { random_trainable, pretrained_static, pretrained_trainable };

std::string to_string(EmbeddingMode mode);
/// Accepts the full names and the short forms cnn_r, cnn_s, cnn_ns.
EmbeddingMode parse_embedding_mode(const std::string& name);
inline bool embeddings_trainable(EmbeddingMode mode) {
  return mode != EmbeddingMode::pretrained_static;
}

/// Convolutional sentence encoder: embed, valid 1-D convolution per filter,
/// bias, ReLU, max over time, concatenate across widths.
struct TextCnn {
  TextCnnConfig config;
  EmbeddingMode mode = EmbeddingMode::random_trainable;
  RowMatrix embeddings;          // |V| x embed_dim; row 0 is padding
  std::vector<RowMatrix> filters;  // per width w: num_filters x (w * embed_dim)
  std::vector<Vector> biases;    // per width: num_filters

  [[nodiscard]] std::size_t output_dim() const { return config.output_dim(); }
  [[nodiscard]] std::size_t vocab_size() const { return static_cast<std::size_t>(embeddings.rows()); }
};

/// Random embeddings ~ N(0, 0.01) in random_trainable mode. Pretrained modes
/// copy `word_vectors` rows for known tokens and draw the rest from
/// N(0, 0.01). The padding row is zero. Filters ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases zero.
TextCnn init_text_cnn(const Vocabulary& vocab, const TextCnnConfig& config, EmbeddingMode mode,
                      Rng& rng, const WordVectors* word_vectors = nullptr);

/// Sentence embedding of one index sequence. Dropout (inverted scaling) is
/// applied only when `train_mode`, which then requires `rng`.
Vector encode(const TextCnn& cnn, std::span<const int> tokens, bool train_mode = false,
              Rng* rng = nullptr);

/// Eval-mode embeddings of every row, tagged "domain".
EmbeddingSet encode_dataset(const TextCnn& cnn, const std::vector<std::vector<int>>& sequences);

std::vector<std::vector<int>> index_sequences(const LabeledDataset& ds, const Vocabulary& vocab,
                                              std::size_t max_len);

/// A mini-batch. When `fixed` is set, the classifier input for row i is
/// [fixed_i, alpha * encode(tokens_i)]; otherwise it is alpha * encode(tokens_i).
struct CnnBatch {
  std::vector<std::span<const int>> tokens;
  std::vector<int> labels;
  const Matrix* fixed = nullptr;
  double alpha = 1.0;
};

struct CnnGradients {
  RowMatrix embeddings;  // empty in pretrained_static mode
  std::vector<RowMatrix> filters;
  std::vector<Vector> biases;
  Matrix head_weights;
  Vector head_bias;
};

struct CnnLoss {
  double loss = 0.0;
  CnnGradients grads;
};

/// Mean cross-entropy plus (l2 / 2) |head weights|_F^2.
double cnn_loss(const TextCnn& cnn, const LinearClassifier& head, const CnnBatch& batch, double l2,
                bool train_mode = false, Rng* rng = nullptr);

/// Loss and its gradient for every trainable tensor. Max-pool gradients go
/// to the earliest maximizing position.
CnnLoss cnn_forward_backward(const TextCnn& cnn, const LinearClassifier& head,
                             const CnnBatch& batch, double l2, bool train_mode = false,
                             Rng* rng = nullptr);

/// Versioned binary blob, magic "TCNN"; stores the vocabulary alongside.
void save_text_cnn(const TextCnn& cnn, const Vocabulary& vocab, const std::filesystem::path& path);

struct LoadedEncoder {
  TextCnn cnn;
  Vocabulary vocab;
};
LoadedEncoder load_text_cnn(const std::filesystem::path& path);

}  // namespace embfuse
