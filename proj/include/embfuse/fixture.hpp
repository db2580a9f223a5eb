#pragma once

#include <cstdint>
#include <filesystem>

#include "embfuse/dataset.hpp"
#include "embfuse/embedding.hpp"
#include "embfuse/vocabulary.hpp"

namespace embfuse {

/// Template-generated product reviews with two disjoint cue sets.
///
/// General sentiment words are visible to the synthetic pretrained view;
/// domain jargon is visible only in the text. Per review: general cue only
/// (35%), jargon only (35%), both (15%), neither (15%). Labels are exactly
/// balanced when n is even.
struct FixtureCorpus {
  LabeledDataset dataset;
  EmbeddingSet pretrained;    // n x 64
  WordVectors word_vectors;   // 300-dimensional, one per token
  std::uint64_t hash = 0;     // over texts, labels, and pretrained values
};

inline constexpr std::size_t kFixturePretrainedDim = 64;
inline constexpr std::size_t kFixtureWordDim = 300;

FixtureCorpus generate_fixture_corpus(std::size_t n, std::uint64_t seed);

/// Writes `<stem>.tsv`, `<stem>.pretrained.embf`, and `<stem>.words.txt`.
void write_fixture(const FixtureCorpus& corpus, const std::filesystem::path& dir,
                   const std::string& stem);

}  // namespace embfuse
