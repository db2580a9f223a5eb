#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "embfuse/vocabulary.hpp"
#include "test_support.hpp"

using namespace embfuse;
using embfuse::testing::TempDir;
using embfuse::testing::write_text;

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(tokenize("Great pan, LOVE it!"),
            (std::vector<std::string>{"great", "pan", ",", "love", "it", "!"}));
  EXPECT_TRUE(tokenize("   ").empty());
}

TEST(Vocab, FrequencyThenLexicographicOrder) {
  const LabeledDataset ds({"a b", "b c"}, {0, 1});
  const auto v = build_vocab(ds);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "b", "a", "c"}));
  EXPECT_EQ(v.index("b"), 2);
  EXPECT_EQ(v.index("zebra"), Vocabulary::kUnk);
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_THROW((void)v.token(5), std::out_of_range);
}

TEST(Vocab, DeterministicAcrossBuilds) {
  const LabeledDataset ds({"x y z y", "z z q"}, {0, 1});
  EXPECT_EQ(build_vocab(ds).tokens(), build_vocab(ds).tokens());
}

TEST(Vocab, FixtureSizeMatchesDistinctTokenCount) {
  const auto ds = load_dataset(embfuse::testing::fixture_dir() / "reviews.tsv");
  std::set<std::string> distinct;
  for (const auto& text : ds.texts()) {
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
      for (auto& ch : w) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      distinct.insert(w);
    }
  }
  const double raw = static_cast<double>(distinct.size());
  const double got = static_cast<double>(build_vocab(ds).size() - 2);
  EXPECT_LE(std::abs(got - raw), 0.05 * raw);
}

TEST(Vocab, ToIndicesTruncatesAndMapsUnknown) {
  const Vocabulary v({"a", "b"});
  EXPECT_EQ(to_indices(v, "a b zz a", 3), (std::vector<int>{2, 3, Vocabulary::kUnk}));
}

TEST(WordVectors, LoadAndRejectMalformed) {
  TempDir dir("wv");
  write_text(dir / "ok.txt", "good 1 2\nbad -1 0.5\n");
  const auto wv = load_word_vectors(dir / "ok.txt", 2);
  EXPECT_EQ(wv.dim, 2u);
  EXPECT_EQ(wv.vectors.at("bad")[1], 0.5);
  EXPECT_THROW((void)load_word_vectors(dir / "ok.txt", 3), FormatError);
  write_text(dir / "len.txt", "good 1 2\nbad 1\n");
  EXPECT_THROW((void)load_word_vectors(dir / "len.txt"), FormatError);
  write_text(dir / "dup.txt", "good 1 2\ngood 1 2\n");
  EXPECT_THROW((void)load_word_vectors(dir / "dup.txt"), FormatError);
  write_text(dir / "nan.txt", "good 1 x\n");
  EXPECT_THROW((void)load_word_vectors(dir / "nan.txt"), FormatError);

  write_word_vectors(wv, dir / "rt.txt");
  const auto back = load_word_vectors(dir / "rt.txt");
  EXPECT_EQ(back.vectors, wv.vectors);
}

TEST(Bow, NormalizedCounts) {
  const LabeledDataset ds({"a a b", "zz"}, {0, 1});
  const Vocabulary v({"a", "b"});
  const auto bow = bow_encode(ds, v).vectors();
  ASSERT_EQ(bow.cols(), 4);
  EXPECT_NEAR(bow(0, 2), 2.0 / std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(bow(0, 3), 1.0 / std::sqrt(5.0), 1e-15);
  EXPECT_EQ(bow(0, 0), 0.0);
  EXPECT_EQ(bow(1, Vocabulary::kUnk), 1.0);
}
