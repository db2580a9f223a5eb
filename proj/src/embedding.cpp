#include "embfuse/embedding.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace embfuse {
namespace {

constexpr std::array<char, 4> kMagic{'E', 'M', 'B', 'F'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "binary embedding I/O assumes a little-endian host");

template <typename T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError(std::string("truncated embedding header: missing ") + what);
  }
  return value;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

double parse_double(std::string_view field, std::size_t row) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw FormatError("row " + std::to_string(row) + ": cannot parse value '" +
                      std::string(field) + "'");
  }
  return value;
}

std::uint64_t parse_count(std::string_view field, const char* what) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || value == 0) {
    throw FormatError(std::string("malformed header: bad ") + what + " '" +
                      std::string(field) + "'");
  }
  return value;
}

EmbeddingSet load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open embedding file " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("malformed header: missing EMBF magic in " + path.string());
  }
  auto version = read_le<std::uint32_t>(in, "version");
  if (version != kVersion) {
    throw FormatError("malformed header: unsupported version " + std::to_string(version));
  }
  auto n = read_le<std::uint64_t>(in, "row count");
  auto d = read_le<std::uint64_t>(in, "dimension");
  if (n == 0 || d == 0) throw FormatError("malformed header: n and d must be positive");

  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<float> row(d);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(d * sizeof(float)))) {
      throw FormatError("row " + std::to_string(i) + ": truncated data (expected " +
                        std::to_string(d) + " floats)");
    }
    for (std::uint64_t j = 0; j < d; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw FormatError("trailing bytes after " + std::to_string(n) + " rows");
  }
  return EmbeddingSet(std::move(m), path.stem().string());
}

EmbeddingSet load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("malformed header: empty file");
  auto header = split_tabs(line);
  if (header.size() != 2) throw FormatError("malformed header: expected 'n<TAB>d'");
  const auto n = parse_count(header[0], "row count");
  const auto d = parse_count(header[1], "dimension");

  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) {
      throw FormatError("row " + std::to_string(i) + ": missing (header declares " +
                        std::to_string(n) + " rows)");
    }
    auto fields = split_tabs(line);
    if (fields.size() != d) {
      throw FormatError("row " + std::to_string(i) + ": expected " + std::to_string(d) +
                        " values, found " + std::to_string(fields.size()));
    }
    for (std::uint64_t j = 0; j < d; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(fields[j], i);
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty()) throw FormatError("extra rows beyond declared n=" + std::to_string(n));
  }
  return EmbeddingSet(std::move(m), path.stem().string());
}

}  // namespace

EmbeddingSet::EmbeddingSet(Matrix vectors, std::string source_tag)
    : vectors_(std::move(vectors)), source_tag_(std::move(source_tag)) {
  if (vectors_.rows() < 1 || vectors_.cols() < 1) {
    throw std::invalid_argument("EmbeddingSet requires n >= 1 and dim >= 1");
  }
  for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
    if (!vectors_.row(i).allFinite()) {
      throw FormatError("row " + std::to_string(i) + ": non-finite value");
    }
  }
}

EmbeddingSet EmbeddingSet::select_rows(std::span<const std::size_t> indices) const {
  return EmbeddingSet(embfuse::select_rows(vectors_, indices), source_tag_);
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= static_cast<std::size_t>(m.rows())) {
      throw std::out_of_range("row index " + std::to_string(indices[i]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

EmbeddingFormat parse_embedding_format(const std::string& name) {
  if (name == "binary" || name == "embf") return EmbeddingFormat::binary;
  if (name == "tsv") return EmbeddingFormat::tsv;
  throw std::invalid_argument("unknown embedding format '" + name + "'");
}

EmbeddingFormat embedding_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".tsv" || ext == ".txt") ? EmbeddingFormat::tsv : EmbeddingFormat::binary;
}

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  return format == EmbeddingFormat::binary ? load_binary(path) : load_tsv(path);
}

void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path,
                      EmbeddingFormat format) {
  const Matrix& m = set.vectors();
  if (format == EmbeddingFormat::binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kMagic.data(), kMagic.size());
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint64_t>(out, set.rows());
    write_le<std::uint64_t>(out, set.dim());
    std::vector<float> row(set.dim());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = static_cast<float>(m(i, j));
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << set.rows() << '\t' << set.dim() << '\n';
  std::array<char, 32> buf{};
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << '\t';
      auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), m(i, j));
      out.write(buf.data(), ptr - buf.data());
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace embfuse
