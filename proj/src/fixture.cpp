#include "embfuse/fixture.hpp"

#include <cmath>
#include <stdexcept>
#include <string_view>

#include "embfuse/rng.hpp"

namespace embfuse {
namespace {

using WordList = std::vector<std::string_view>;

const WordList kGeneralPositive{"great", "excellent", "wonderful", "fantastic", "superb",
                                "lovely", "delightful", "amazing", "perfect", "brilliant"};
const WordList kGeneralNegative{"terrible", "awful", "horrible", "dreadful", "lousy",
                                "disappointing", "miserable", "pathetic", "useless", "bad"};
const WordList kJargonPositive{"sturdy", "leakproof", "ergonomic", "rustproof", "nonstick",
                               "airtight", "durable", "balanced", "seamless", "heavyweight"};
const WordList kJargonNegative{"flimsy", "wobbly", "leaky", "rusty", "warped",
                               "brittle", "chipped", "dented", "cracked", "lopsided"};

const WordList kNouns{"blender", "kettle",  "pan",     "skillet", "lid",    "handle", "toaster",
                      "mixer",   "knife",   "grater",  "pot",     "spatula", "whisk", "juicer",
                      "scale",   "tray",    "bowl",    "colander", "ladle", "peeler"};
const WordList kTimes{"week", "month", "year", "weekend", "summer", "spring", "holiday"};
const WordList kVerbs{"bought", "ordered", "received", "used", "tried", "washed", "unpacked",
                      "tested", "gifted", "picked"};
const WordList kPeople{"my", "our", "a friend's", "my sister's", "the"};
const WordList kFillers{"honestly", "overall", "so far", "to be fair", "in short", "anyway",
                        "for now", "as expected", "at first"};
const WordList kUses{"soup", "pasta", "eggs", "coffee", "tea", "pancakes", "rice", "sauce",
                     "bread", "salad"};

std::string_view pick(Rng& rng, const WordList& words) {
  return words[static_cast<std::size_t>(rng.below(words.size()))];
}

std::string neutral_clause(Rng& rng) {
  std::string s;
  switch (rng.below(5)) {
    case 0:
      s = "i " + std::string(pick(rng, kVerbs)) + " this " + std::string(pick(rng, kNouns)) +
          " last " + std::string(pick(rng, kTimes));
      break;
    case 1:
      s = "we use the " + std::string(pick(rng, kNouns)) + " for " + std::string(pick(rng, kUses));
      break;
    case 2:
      s = "it came with " + std::string(pick(rng, kPeople)) + " " + std::string(pick(rng, kNouns));
      break;
    case 3:
      s = std::string(pick(rng, kFillers)) + " the " + std::string(pick(rng, kNouns)) +
          " does the job for " + std::string(pick(rng, kUses));
      break;
    default:
      s = "the box had a " + std::string(pick(rng, kNouns)) + " and a " +
          std::string(pick(rng, kNouns));
      break;
  }
  return s;
}

std::string cue_clause(Rng& rng, std::string_view cue) {
  switch (rng.below(3)) {
    case 0: return "the " + std::string(pick(rng, kNouns)) + " is " + std::string(cue);
    case 1: return "what a " + std::string(cue) + " " + std::string(pick(rng, kNouns));
    default: return "it feels " + std::string(cue) + " when making " + std::string(pick(rng, kUses));
  }
}

enum class CueCase { general, jargon, both, none };

CueCase draw_case(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.35) return CueCase::general;
  if (u < 0.70) return CueCase::jargon;
  if (u < 0.85) return CueCase::both;
  return CueCase::none;
}

std::string make_review(Rng& rng, int label) {
  std::vector<std::string> clauses;
  const std::size_t neutral = 1 + static_cast<std::size_t>(rng.below(3));
  for (std::size_t i = 0; i < neutral; ++i) clauses.push_back(neutral_clause(rng));
  const CueCase c = draw_case(rng);
  if (c == CueCase::general || c == CueCase::both) {
    clauses.push_back(cue_clause(rng, pick(rng, label == 1 ? kGeneralPositive : kGeneralNegative)));
  }
  if (c == CueCase::jargon || c == CueCase::both) {
    clauses.push_back(cue_clause(rng, pick(rng, label == 1 ? kJargonPositive : kJargonNegative)));
  }
  rng.shuffle(clauses);
  std::string text;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i > 0) text += rng.bernoulli(0.5) ? " . " : " , ";
    text += clauses[i];
  }
  return text + " .";
}

Vector random_vector(Rng& rng, std::size_t dim, double stddev) {
  Vector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal(0.0, stddev);
  return v;
}

Vector unit_direction(Rng& rng, std::size_t dim) {
  Vector u = random_vector(rng, dim, 1.0);
  return u / u.norm();
}

int polarity(const std::string& token) {
  for (auto w : kGeneralPositive) if (token == w) return 1;
  for (auto w : kGeneralNegative) if (token == w) return -1;
  return 0;
}

bool is_jargon(const std::string& token) {
  for (auto w : kJargonPositive) if (token == w) return true;
  for (auto w : kJargonNegative) if (token == w) return true;
  return false;
}

}  // namespace

FixtureCorpus generate_fixture_corpus(std::size_t n, std::uint64_t seed) {
  if (n < 100) throw std::invalid_argument("fixture corpus needs n >= 100");
  const Rng root(seed);
  Rng label_rng = root.split(1);
  Rng text_rng = root.split(2);
  Rng vec_rng = root.split(3);
  Rng noise_rng = root.split(4);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < (n + 1) / 2 ? 1 : 0;
  label_rng.shuffle(labels);
  std::vector<std::string> texts;
  texts.reserve(n);
  for (int y : labels) texts.push_back(make_review(text_rng, y));
  LabeledDataset ds(texts, labels);

  // Token vectors of the pretrained view carry general sentiment along one
  // direction; jargon is out of its vocabulary.
  const Vocabulary vocab = build_vocab(ds);
  const Vector sentiment64 = unit_direction(vec_rng, kFixturePretrainedDim);
  const Vector sentiment300 = unit_direction(vec_rng, kFixtureWordDim);
  std::unordered_map<std::string, Vector> pretrained_tokens;
  WordVectors wv;
  wv.dim = kFixtureWordDim;
  for (std::size_t t = 2; t < vocab.size(); ++t) {
    const std::string& tok = vocab.token(static_cast<int>(t));
    const int pol = polarity(tok);
    Vector v = random_vector(vec_rng, kFixturePretrainedDim, 1.0 / std::sqrt(double(kFixturePretrainedDim)));
    v += 2.0 * pol * sentiment64;
    Vector w = random_vector(vec_rng, kFixtureWordDim, 0.3);
    w += 0.5 * pol * sentiment300;
    if (!is_jargon(tok)) pretrained_tokens.emplace(tok, std::move(v));
    wv.vectors.emplace(tok, std::vector<double>(w.data(), w.data() + w.size()));
  }

  Matrix v1(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kFixturePretrainedDim));
  for (std::size_t i = 0; i < n; ++i) {
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(kFixturePretrainedDim));
    std::size_t known = 0;
    for (const auto& tok : tokenize(texts[i])) {
      auto it = pretrained_tokens.find(tok);
      if (it == pretrained_tokens.end()) continue;
      sum += it->second;
      ++known;
    }
    if (known > 0) sum /= static_cast<double>(known);
    sum += random_vector(noise_rng, kFixturePretrainedDim, 0.05);
    v1.row(static_cast<Eigen::Index>(i)) = sum.transpose();
  }

  // Round to float precision so the binary file reproduces the set exactly.
  v1 = v1.cast<float>().cast<double>();

  std::string digest;
  for (std::size_t i = 0; i < n; ++i) {
    digest += std::to_string(labels[i]) + '\t' + texts[i] + '\n';
  }
  digest.append(reinterpret_cast<const char*>(v1.data()), static_cast<std::size_t>(v1.size()) * sizeof(double));
  const std::uint64_t hash = fnv1a64(digest);
  return FixtureCorpus{std::move(ds), EmbeddingSet(std::move(v1), "pretrained"), std::move(wv), hash};
}

void write_fixture(const FixtureCorpus& corpus, const std::filesystem::path& dir,
                   const std::string& stem) {
  std::filesystem::create_directories(dir);
  write_dataset(corpus.dataset, dir / (stem + ".tsv"));
  write_embeddings(corpus.pretrained, dir / (stem + ".pretrained.embf"), EmbeddingFormat::binary);
  write_word_vectors(corpus.word_vectors, dir / (stem + ".words.txt"));
}

}  // namespace embfuse
