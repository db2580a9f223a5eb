#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace embfuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when an input file does not conform to its documented format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-sentence embedding vectors from one view: row i is sentence i.
///
/// Immutable once constructed. The constructor rejects empty matrices and
/// any non-finite entry, naming the first offending row.
class EmbeddingSet {
 public:
  EmbeddingSet(Matrix vectors, std::string source_tag = "");

  [[nodiscard]] const Matrix& vectors() const { return vectors_; }
  [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(vectors_.rows()); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  [[nodiscard]] const std::string& source_tag() const { return source_tag_; }

  [[nodiscard]] EmbeddingSet select_rows(std::span<const std::size_t> indices) const;

 private:
  Matrix vectors_;
  std::string source_tag_;
};

enum class EmbeddingFormat { binary, tsv };

EmbeddingFormat parse_embedding_format(const std::string& name);
/// Picks tsv for ".tsv"/".txt" extensions and binary otherwise.
EmbeddingFormat embedding_format_for(const std::filesystem::path& path);

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path,
                      EmbeddingFormat format);

Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices);

}  // namespace embfuse
