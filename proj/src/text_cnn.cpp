#include "embfuse/text_cnn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "blob_io.hpp"

namespace embfuse {

std::size_t TextCnnConfig::min_len() const {
  std::size_t widest = 0;
  for (auto w : widths) widest = std::max(widest, w);
  return std::max<std::size_t>(5, widest);
}

void TextCnnConfig::validate() const {
  if (embed_dim == 0 || num_filters == 0 || widths.empty()) {
    throw std::invalid_argument("text-CNN needs a positive embedding dimension, filters, and widths");
  }
  for (auto w : widths) {
    if (w == 0) throw std::invalid_argument("filter width must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (max_len == 0) throw std::invalid_argument("max_len must be positive");
}

std::string to_string(EmbeddingMode mode) {
  switch (mode) {
    case EmbeddingMode::random_trainable: return "random_trainable";
    case EmbeddingMode::pretrained_static: return "pretrained_static";
    case EmbeddingMode::pretrained_trainable: return "pretrained_trainable";
  }
  return "unknown";
}

EmbeddingMode parse_embedding_mode(const std::string& name) {
  if (name == "random_trainable" || name == "cnn_r") return EmbeddingMode::random_trainable;
  if (name == "pretrained_static" || name == "cnn_s") return EmbeddingMode::pretrained_static;
  if (name == "pretrained_trainable" || name == "cnn_ns") return EmbeddingMode::pretrained_trainable;
  throw std::invalid_argument("unknown embedding mode '" + name + "'");
}

TextCnn init_text_cnn(const Vocabulary& vocab, const TextCnnConfig& config, EmbeddingMode mode,
                      Rng& rng, const WordVectors* word_vectors) {
  config.validate();
  const bool pretrained = mode != EmbeddingMode::random_trainable;
  if (pretrained) {
    if (word_vectors == nullptr) throw std::invalid_argument(to_string(mode) + " needs word vectors");
    if (word_vectors->dim != config.embed_dim) {
      throw std::invalid_argument("word vectors have dimension " + std::to_string(word_vectors->dim) +
                                  ", encoder expects " + std::to_string(config.embed_dim));
    }
  }
  TextCnn cnn;
  cnn.config = config;
  cnn.mode = mode;
  const auto v = static_cast<Eigen::Index>(vocab.size());
  const auto e = static_cast<Eigen::Index>(config.embed_dim);
  cnn.embeddings = RowMatrix::Zero(v, e);
  for (Eigen::Index i = 1; i < v; ++i) {
    const std::vector<double>* known = nullptr;
    if (pretrained) {
      auto it = word_vectors->vectors.find(vocab.token(static_cast<int>(i)));
      if (it != word_vectors->vectors.end()) known = &it->second;
    }
    for (Eigen::Index j = 0; j < e; ++j) {
      cnn.embeddings(i, j) = known ? (*known)[static_cast<std::size_t>(j)] : rng.normal(0.0, 0.1);
    }
  }
  const auto f = static_cast<Eigen::Index>(config.num_filters);
  for (auto w : config.widths) {
    const auto fan_in = static_cast<Eigen::Index>(w) * e;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    RowMatrix k(f, fan_in);
    for (Eigen::Index r = 0; r < f; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) k(r, c) = rng.uniform(-bound, bound);
    }
    cnn.filters.push_back(std::move(k));
    cnn.biases.push_back(Vector::Zero(f));
  }
  return cnn;
}

namespace {

struct WidthTrace {
  std::vector<Eigen::Index> argmax;  // -1 when the ReLU is inactive
};

struct SentenceTrace {
  std::vector<int> tokens;  // padded
  std::vector<WidthTrace> widths;
  Vector mask;              // dropout scale per output coordinate
};

std::vector<int> pad_tokens(const TextCnn& cnn, std::span<const int> tokens) {
  const auto vocab = static_cast<int>(cnn.vocab_size());
  const std::size_t len = std::min(tokens.size(), cnn.config.max_len);
  std::vector<int> out(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(len));
  for (int t : out) {
    if (t < 0 || t >= vocab) {
      throw std::out_of_range("token index " + std::to_string(t) + " outside vocabulary of size " +
                              std::to_string(vocab));
    }
  }
  if (out.size() < cnn.config.min_len()) out.resize(cnn.config.min_len(), Vocabulary::kPad);
  return out;
}

// Every token's response to every filter slice, computed once per batch.
// conv(t, k) for width w is then the sum over r < w of table(token[t + r], slice r of k).
struct TokenProjection {
  std::vector<Eigen::Index> slot;    // vocabulary index -> table row, -1 if absent
  RowMatrix table;                   // unique tokens x sum_j (w_j * F)
  std::vector<Eigen::Index> offset;  // first column of each width
};

TokenProjection project_tokens(const TextCnn& cnn, const std::vector<std::vector<int>>& padded) {
  TokenProjection p;
  p.slot.assign(cnn.vocab_size(), -1);
  std::vector<int> unique;
  for (const auto& seq : padded) {
    for (int tok : seq) {
      auto& s = p.slot[static_cast<std::size_t>(tok)];
      if (s < 0) {
        s = static_cast<Eigen::Index>(unique.size());
        unique.push_back(tok);
      }
    }
  }
  const Eigen::Index e = cnn.embeddings.cols();
  const auto f = static_cast<Eigen::Index>(cnn.config.num_filters);
  Eigen::Index cols = 0;
  for (auto w : cnn.config.widths) {
    p.offset.push_back(cols);
    cols += static_cast<Eigen::Index>(w) * f;
  }
  Matrix stacked(e, cols);
  for (std::size_t j = 0; j < cnn.config.widths.size(); ++j) {
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(cnn.config.widths[j]); ++r) {
      stacked.middleCols(p.offset[j] + r * f, f) = cnn.filters[j].middleCols(r * e, e).transpose();
    }
  }
  RowMatrix emb(static_cast<Eigen::Index>(unique.size()), e);
  for (std::size_t u = 0; u < unique.size(); ++u) emb.row(static_cast<Eigen::Index>(u)) = cnn.embeddings.row(unique[u]);
  p.table.noalias() = emb * stacked;
  return p;
}

Vector forward(const TextCnn& cnn, const TokenProjection& proj, bool train_mode, Rng* rng,
               SentenceTrace& t) {
  const auto len = static_cast<Eigen::Index>(t.tokens.size());
  const auto f = static_cast<Eigen::Index>(cnn.config.num_filters);
  Vector h(static_cast<Eigen::Index>(cnn.output_dim()));
  t.widths.assign(cnn.config.widths.size(), {});
  RowMatrix conv;
  for (std::size_t j = 0; j < cnn.config.widths.size(); ++j) {
    const auto width = static_cast<Eigen::Index>(cnn.config.widths[j]);
    conv.setZero(len - width + 1, f);
    for (Eigen::Index pos = 0; pos < conv.rows(); ++pos) {
      for (Eigen::Index r = 0; r < width; ++r) {
        const Eigen::Index row = proj.slot[static_cast<std::size_t>(t.tokens[static_cast<std::size_t>(pos + r)])];
        conv.row(pos) += proj.table.row(row).segment(proj.offset[j] + r * f, f);
      }
    }
    auto& argmax = t.widths[j].argmax;
    argmax.assign(static_cast<std::size_t>(f), -1);
    for (Eigen::Index k = 0; k < f; ++k) {
      Eigen::Index best = 0;
      for (Eigen::Index r = 1; r < conv.rows(); ++r) {
        if (conv(r, k) > conv(best, k)) best = r;
      }
      const double z = conv(best, k) + cnn.biases[j](k);
      const Eigen::Index out = static_cast<Eigen::Index>(j) * f + k;
      if (z > 0.0) {
        h(out) = z;
        argmax[static_cast<std::size_t>(k)] = best;
      } else {
        h(out) = 0.0;
      }
    }
  }

  t.mask = Vector::Ones(h.size());
  if (train_mode && cnn.config.dropout > 0.0) {
    if (rng == nullptr) throw std::invalid_argument("train-mode encoding needs a random source");
    const double keep = 1.0 - cnn.config.dropout;
    for (Eigen::Index i = 0; i < h.size(); ++i) t.mask(i) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    h.array() *= t.mask.array();
  }
  return h;
}

// Encodes sentences in order; traces keep what the backward pass needs.
Matrix forward_all(const TextCnn& cnn, const std::vector<std::span<const int>>& sentences,
                   bool train_mode, Rng* rng, std::vector<SentenceTrace>& traces) {
  traces.assign(sentences.size(), {});
  std::vector<std::vector<int>> padded;
  padded.reserve(sentences.size());
  for (const auto& s : sentences) padded.push_back(pad_tokens(cnn, s));
  const TokenProjection proj = project_tokens(cnn, padded);
  Matrix out(static_cast<Eigen::Index>(sentences.size()), static_cast<Eigen::Index>(cnn.output_dim()));
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    traces[i].tokens = std::move(padded[i]);
    out.row(static_cast<Eigen::Index>(i)) = forward(cnn, proj, train_mode, rng, traces[i]).transpose();
  }
  return out;
}

void check_batch(const TextCnn& cnn, const LinearClassifier& head, const CnnBatch& batch) {
  const std::size_t n = batch.tokens.size();
  if (n == 0) throw std::invalid_argument("empty batch");
  if (batch.labels.size() != n) throw std::invalid_argument("batch labels and sequences differ in length");
  const std::size_t fixed_dim = batch.fixed ? static_cast<std::size_t>(batch.fixed->cols()) : 0;
  if (batch.fixed && static_cast<std::size_t>(batch.fixed->rows()) != n) {
    throw std::invalid_argument("batch fixed features and sequences differ in length");
  }
  if (head.dim() != fixed_dim + cnn.output_dim()) {
    throw std::invalid_argument("classifier head expects dimension " + std::to_string(head.dim()) +
                                ", batch provides " + std::to_string(fixed_dim + cnn.output_dim()));
  }
  for (int y : batch.labels) {
    if (y < 0 || y >= head.num_classes()) throw std::invalid_argument("batch label out of range");
  }
}

struct HeadPass {
  double loss = 0.0;
  Matrix features;  // n x (fixed_dim + output_dim)
  Matrix residual;  // (softmax - onehot) / n
};

HeadPass head_pass(const TextCnn& cnn, const LinearClassifier& head, const CnnBatch& batch,
                   double l2, bool train_mode, Rng* rng, std::vector<SentenceTrace>* traces) {
  check_batch(cnn, head, batch);
  const auto n = static_cast<Eigen::Index>(batch.tokens.size());
  const Eigen::Index fixed_dim = batch.fixed ? batch.fixed->cols() : 0;
  HeadPass pass;
  pass.features.resize(n, fixed_dim + static_cast<Eigen::Index>(cnn.output_dim()));
  if (batch.fixed) pass.features.leftCols(fixed_dim) = *batch.fixed;
  std::vector<SentenceTrace> local;
  pass.features.rightCols(static_cast<Eigen::Index>(cnn.output_dim())) =
      batch.alpha * forward_all(cnn, batch.tokens, train_mode, rng, traces ? *traces : local);
  Matrix z = head.logits(pass.features);
  pass.residual.resize(n, z.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zmax = z.row(i).maxCoeff();
    const Eigen::Index y = batch.labels[static_cast<std::size_t>(i)];
    double sum = 0.0;
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      pass.residual(i, k) = std::exp(z(i, k) - zmax);
      sum += pass.residual(i, k);
    }
    total += std::log(sum) - (z(i, y) - zmax);
    pass.residual.row(i) /= sum;
    pass.residual(i, y) -= 1.0;
  }
  pass.residual /= static_cast<double>(n);
  pass.loss = total / static_cast<double>(n) + 0.5 * l2 * head.weights.squaredNorm();
  if (!std::isfinite(pass.loss)) throw std::runtime_error("text-CNN loss is not finite");
  return pass;
}

}  // namespace

Vector encode(const TextCnn& cnn, std::span<const int> tokens, bool train_mode, Rng* rng) {
  std::vector<SentenceTrace> traces;
  return forward_all(cnn, {tokens}, train_mode, rng, traces).row(0).transpose();
}

EmbeddingSet encode_dataset(const TextCnn& cnn, const std::vector<std::vector<int>>& sequences) {
  constexpr std::size_t kChunk = 256;
  Matrix out(static_cast<Eigen::Index>(sequences.size()), static_cast<Eigen::Index>(cnn.output_dim()));
  std::vector<SentenceTrace> traces;
  for (std::size_t begin = 0; begin < sequences.size(); begin += kChunk) {
    const std::size_t end = std::min(sequences.size(), begin + kChunk);
    const std::vector<std::span<const int>> chunk(sequences.begin() + static_cast<std::ptrdiff_t>(begin),
                                                  sequences.begin() + static_cast<std::ptrdiff_t>(end));
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        forward_all(cnn, chunk, false, nullptr, traces);
  }
  return EmbeddingSet(std::move(out), "domain");
}

std::vector<std::vector<int>> index_sequences(const LabeledDataset& ds, const Vocabulary& vocab,
                                              std::size_t max_len) {
  std::vector<std::vector<int>> out;
  out.reserve(ds.size());
  for (const auto& text : ds.texts()) out.push_back(to_indices(vocab, text, max_len));
  return out;
}

double cnn_loss(const TextCnn& cnn, const LinearClassifier& head, const CnnBatch& batch, double l2,
                bool train_mode, Rng* rng) {
  return head_pass(cnn, head, batch, l2, train_mode, rng, nullptr).loss;
}

CnnLoss cnn_forward_backward(const TextCnn& cnn, const LinearClassifier& head,
                             const CnnBatch& batch, double l2, bool train_mode, Rng* rng) {
  std::vector<SentenceTrace> traces;
  HeadPass pass = head_pass(cnn, head, batch, l2, train_mode, rng, &traces);

  CnnLoss out;
  out.loss = pass.loss;
  CnnGradients& g = out.grads;
  g.head_weights = pass.residual.transpose() * pass.features + l2 * head.weights;
  g.head_bias = pass.residual.colwise().sum().transpose();

  const auto out_dim = static_cast<Eigen::Index>(cnn.output_dim());
  // gradient with respect to each sentence embedding (after dropout)
  const Matrix grad_h = batch.alpha * pass.residual * head.weights.rightCols(out_dim);

  const bool train_embeddings = embeddings_trainable(cnn.mode);
  if (train_embeddings) g.embeddings = RowMatrix::Zero(cnn.embeddings.rows(), cnn.embeddings.cols());
  const auto f = static_cast<Eigen::Index>(cnn.config.num_filters);
  const Eigen::Index e = cnn.embeddings.cols();
  for (std::size_t j = 0; j < cnn.config.widths.size(); ++j) {
    g.filters.push_back(RowMatrix::Zero(cnn.filters[j].rows(), cnn.filters[j].cols()));
    g.biases.push_back(Vector::Zero(f));
  }

  for (std::size_t i = 0; i < traces.size(); ++i) {
    const SentenceTrace& t = traces[i];
    for (std::size_t j = 0; j < cnn.config.widths.size(); ++j) {
      const auto width = static_cast<Eigen::Index>(cnn.config.widths[j]);
      for (Eigen::Index k = 0; k < f; ++k) {
        const Eigen::Index pos = t.widths[j].argmax[static_cast<std::size_t>(k)];
        if (pos < 0) continue;
        const Eigen::Index col = static_cast<Eigen::Index>(j) * f + k;
        const double gk = grad_h(static_cast<Eigen::Index>(i), col) * t.mask(col);
        if (gk == 0.0) continue;
        g.biases[j](k) += gk;
        for (Eigen::Index r = 0; r < width; ++r) {
          const int tok = t.tokens[static_cast<std::size_t>(pos + r)];
          g.filters[j].row(k).segment(r * e, e) += gk * cnn.embeddings.row(tok);
          if (train_embeddings) g.embeddings.row(tok) += gk * cnn.filters[j].row(k).segment(r * e, e);
        }
      }
    }
  }
  return out;
}

namespace {

constexpr std::array<char, 4> kEncoderMagic{'T', 'C', 'N', 'N'};
constexpr std::uint32_t kEncoderVersion = 1;

}  // namespace

void save_text_cnn(const TextCnn& cnn, const Vocabulary& vocab, const std::filesystem::path& path) {
  if (vocab.size() != cnn.vocab_size()) {
    throw std::invalid_argument("vocabulary size does not match the encoder");
  }
  detail::BlobWriter w(path, "encoder");
  w.bytes(kEncoderMagic.data(), kEncoderMagic.size());
  w.scalar<std::uint32_t>(kEncoderVersion);
  w.scalar<std::uint8_t>(static_cast<std::uint8_t>(cnn.mode));
  w.scalar<std::uint64_t>(cnn.config.embed_dim);
  w.scalar<std::uint64_t>(cnn.config.num_filters);
  w.scalar<std::uint64_t>(cnn.config.widths.size());
  for (auto width : cnn.config.widths) w.scalar<std::uint64_t>(width);
  w.scalar<double>(cnn.config.dropout);
  w.scalar<std::uint64_t>(cnn.config.max_len);
  w.scalar<std::uint64_t>(vocab.size());
  for (const auto& tok : vocab.tokens()) w.string(tok);
  w.matrix(cnn.embeddings);
  for (std::size_t j = 0; j < cnn.filters.size(); ++j) {
    w.matrix(cnn.filters[j]);
    w.vector(cnn.biases[j]);
  }
  w.finish();
}

LoadedEncoder load_text_cnn(const std::filesystem::path& path) {
  detail::BlobReader r(path, "encoder");
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kEncoderMagic) throw FormatError("not a TCNN encoder blob: " + path.string());
  const auto version = r.scalar<std::uint32_t>();
  if (version != kEncoderVersion) throw FormatError("unsupported encoder version " + std::to_string(version));
  TextCnn cnn;
  const auto mode = r.scalar<std::uint8_t>();
  if (mode > 2) throw FormatError("bad embedding mode in encoder blob");
  cnn.mode = static_cast<EmbeddingMode>(mode);
  cnn.config.embed_dim = r.scalar<std::uint64_t>();
  cnn.config.num_filters = r.scalar<std::uint64_t>();
  const auto n_widths = r.scalar<std::uint64_t>();
  if (n_widths > 64) throw FormatError("implausible width count in encoder blob");
  cnn.config.widths.clear();
  for (std::uint64_t j = 0; j < n_widths; ++j) cnn.config.widths.push_back(r.scalar<std::uint64_t>());
  cnn.config.dropout = r.scalar<double>();
  cnn.config.max_len = r.scalar<std::uint64_t>();
  try {
    cnn.config.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad encoder configuration: ") + e.what());
  }
  const auto n_tokens = r.scalar<std::uint64_t>();
  if (n_tokens < 2 || n_tokens > (1u << 24)) throw FormatError("implausible vocabulary size in encoder blob");
  std::vector<std::string> tokens;
  for (std::uint64_t i = 0; i < n_tokens; ++i) {
    auto tok = r.string();
    if (i >= 2) tokens.push_back(std::move(tok));
  }
  cnn.embeddings = r.matrix<RowMatrix>();
  if (static_cast<std::uint64_t>(cnn.embeddings.rows()) != n_tokens ||
      static_cast<std::size_t>(cnn.embeddings.cols()) != cnn.config.embed_dim) {
    throw FormatError("embedding table shape does not match the encoder configuration");
  }
  for (auto width : cnn.config.widths) {
    RowMatrix k = r.matrix<RowMatrix>();
    Vector b = r.vector();
    if (static_cast<std::size_t>(k.rows()) != cnn.config.num_filters ||
        static_cast<std::size_t>(k.cols()) != width * cnn.config.embed_dim ||
        static_cast<std::size_t>(b.size()) != cnn.config.num_filters) {
      throw FormatError("filter shape does not match the encoder configuration");
    }
    cnn.filters.push_back(std::move(k));
    cnn.biases.push_back(std::move(b));
  }
  r.expect_end();
  return LoadedEncoder{std::move(cnn), Vocabulary(tokens)};
}

}  // namespace embfuse
