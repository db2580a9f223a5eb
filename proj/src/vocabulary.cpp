#include "embfuse/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "embfuse/text_format.hpp"

namespace embfuse {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      flush();
    } else if (std::ispunct(u)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_.reserve(tokens.size() + 2);
  tokens_.emplace_back("<pad>");
  tokens_.emplace_back("<unk>");
  for (const auto& t : tokens) tokens_.push_back(t);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

int Vocabulary::index(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= tokens_.size()) {
    throw std::out_of_range("token index " + std::to_string(index) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(index)];
}

Vocabulary build_vocab(const LabeledDataset& ds) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : ds.texts()) {
    for (auto& tok : tokenize(text)) ++counts[tok];
  }
  counts.erase("<pad>");
  counts.erase("<unk>");
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(ordered.size());
  for (auto& [tok, count] : ordered) tokens.push_back(tok);
  return Vocabulary(tokens);
}

std::vector<int> to_indices(const Vocabulary& vocab, std::string_view text, std::size_t max_len) {
  auto tokens = tokenize(text);
  if (tokens.size() > max_len) tokens.resize(max_len);
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.index(t));
  return out;
}

WordVectors load_word_vectors(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open word-vector file " + path.string());
  WordVectors wv;
  wv.dim = expected_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw FormatError("word vectors line " + std::to_string(line_no) + ": bad value '" +
                          field + "'");
      }
      values.push_back(v);
    }
    if (wv.dim == 0) wv.dim = values.size();
    if (values.size() != wv.dim || wv.dim == 0) {
      throw FormatError("word vectors line " + std::to_string(line_no) + ": expected " +
                        std::to_string(wv.dim) + " values, found " + std::to_string(values.size()));
    }
    if (!wv.vectors.emplace(token, std::move(values)).second) {
      throw FormatError("word vectors line " + std::to_string(line_no) + ": duplicate token '" +
                        token + "'");
    }
  }
  if (wv.vectors.empty()) throw FormatError("word-vector file " + path.string() + " is empty");
  return wv;
}

void write_word_vectors(const WordVectors& wv, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::vector<const std::string*> keys;
  for (const auto& [tok, vec] : wv.vectors) keys.push_back(&tok);
  std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return *a < *b; });
  for (const auto* tok : keys) {
    out << *tok;
    for (double v : wv.vectors.at(*tok)) out << ' ' << format_double(v);
    out << '\n';
  }
}

EmbeddingSet bow_encode(const LabeledDataset& ds, const Vocabulary& vocab, std::size_t max_len) {
  Matrix counts = Matrix::Zero(static_cast<Eigen::Index>(ds.size()),
                               static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (int idx : to_indices(vocab, ds.texts()[i], max_len)) counts(row, idx) += 1.0;
    const double norm = counts.row(row).norm();
    if (norm > 0.0) counts.row(row) /= norm;
  }
  return EmbeddingSet(std::move(counts), "bow");
}

}  // namespace embfuse
