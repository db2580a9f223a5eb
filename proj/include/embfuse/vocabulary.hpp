#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "embfuse/dataset.hpp"
#include "embfuse/embedding.hpp"

namespace embfuse {

/// Lowercases ASCII letters, splits on whitespace, and emits each
/// punctuation character as its own token.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  /// Index 0 is "<pad>" and 1 is "<unk>"; `tokens` follow in order.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  /// kUnk for tokens not in the vocabulary.
  [[nodiscard]] int index(const std::string& token) const;
  [[nodiscard]] const std::string& token(int index) const;
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Every token of every row, ordered by frequency (descending) and then
/// lexicographically.
Vocabulary build_vocab(const LabeledDataset& ds);

/// Token indices of `text`, truncated to `max_len`.
std::vector<int> to_indices(const Vocabulary& vocab, std::string_view text, std::size_t max_len);

/// Pretrained word vectors: text lines `token v1 ... vD`.
struct WordVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

/// Throws FormatError on inconsistent lengths, duplicate tokens, non-numeric
/// values, or a dimension other than `expected_dim` (when nonzero).
WordVectors load_word_vectors(const std::filesystem::path& path, std::size_t expected_dim = 0);
void write_word_vectors(const WordVectors& wv, const std::filesystem::path& path);

/// L2-normalized token counts over the vocabulary (padding never counted).
/// A row with no tokens after truncation is all zeros.
EmbeddingSet bow_encode(const LabeledDataset& ds, const Vocabulary& vocab,
                        std::size_t max_len = 128);

}  // namespace embfuse
