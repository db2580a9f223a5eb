#include <gtest/gtest.h>

#include <limits>

#include "embfuse/embedding.hpp"
#include "test_support.hpp"

using namespace embfuse;
using embfuse::testing::TempDir;
using embfuse::testing::write_text;

TEST(Embedding, LoadsTsvWithHeader) {
  TempDir dir("emb_tsv");
  write_text(dir / "e.tsv", "3\t2\n1\t0\n0\t1\n1\t1\n");
  const auto set = load_embeddings(dir / "e.tsv", EmbeddingFormat::tsv);
  EXPECT_EQ(set.rows(), 3u);
  EXPECT_EQ(set.dim(), 2u);
  EXPECT_EQ(set.vectors()(2, 0), 1.0);
  EXPECT_EQ(set.vectors()(0, 1), 0.0);
}

TEST(Embedding, RowLengthErrorNamesRow) {
  TempDir dir("emb_bad");
  write_text(dir / "e.tsv", "3\t2\n1\t0\n0\t1\t5\n1\t1\n");
  try {
    (void)load_embeddings(dir / "e.tsv", EmbeddingFormat::tsv);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(Embedding, RejectsNonFiniteAndEmpty) {
  Matrix m = Matrix::Ones(2, 2);
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(EmbeddingSet{m}, FormatError);
  EXPECT_THROW(EmbeddingSet{Matrix(0, 3)}, std::invalid_argument);
}

TEST(Embedding, RoundTripIsBitwiseInBothFormats) {
  TempDir dir("emb_rt");
  Rng rng(3);
  // binary storage is float32, so start from float-representable values
  Matrix m = embfuse::testing::gaussian(7, 5, rng);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(m.data()[i]);
  const EmbeddingSet set(m, "x");
  for (auto fmt : {EmbeddingFormat::binary, EmbeddingFormat::tsv}) {
    const auto path = dir / (fmt == EmbeddingFormat::binary ? "e.embf" : "e.tsv");
    write_embeddings(set, path, fmt);
    const auto back = load_embeddings(path, fmt);
    ASSERT_EQ(back.rows(), 7u);
    EXPECT_EQ(back.vectors(), m);
  }
}

TEST(Embedding, TruncatedBinaryIsRejected) {
  TempDir dir("emb_trunc");
  const EmbeddingSet set(Matrix::Ones(4, 3));
  write_embeddings(set, dir / "e.embf", EmbeddingFormat::binary);
  auto bytes = embfuse::testing::read_text(dir / "e.embf");
  write_text(dir / "t.embf", bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW((void)load_embeddings(dir / "t.embf", EmbeddingFormat::binary), FormatError);
  write_text(dir / "x.embf", bytes + "zz");
  EXPECT_THROW((void)load_embeddings(dir / "x.embf", EmbeddingFormat::binary), FormatError);
}

TEST(Embedding, FormatFromExtension) {
  EXPECT_EQ(embedding_format_for("a.tsv"), EmbeddingFormat::tsv);
  EXPECT_EQ(embedding_format_for("a.txt"), EmbeddingFormat::tsv);
  EXPECT_EQ(embedding_format_for("a.embf"), EmbeddingFormat::binary);
  EXPECT_THROW(parse_embedding_format("csv"), std::invalid_argument);
}

TEST(Embedding, SelectRows) {
  Matrix m(3, 1);
  m << 1, 2, 3;
  const std::vector<std::size_t> idx{2, 0};
  const auto s = EmbeddingSet(m).select_rows(idx);
  EXPECT_EQ(s.vectors()(0, 0), 3.0);
  EXPECT_EQ(s.vectors()(1, 0), 1.0);
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW((void)EmbeddingSet(m).select_rows(bad), std::out_of_range);
}
