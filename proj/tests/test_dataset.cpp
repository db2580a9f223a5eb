#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "embfuse/dataset.hpp"
#include "embfuse/embedding.hpp"
#include "test_support.hpp"

using namespace embfuse;
using embfuse::testing::TempDir;
using embfuse::testing::write_text;

namespace {

LabeledDataset balanced(std::size_t n) {
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    texts.push_back("s" + std::to_string(i));
    labels.push_back(static_cast<int>(i % 2));
  }
  return {texts, labels};
}

void expect_partition(const LabeledDataset& ds) {
  const auto& s = ds.split();
  std::vector<std::size_t> all;
  for (const auto* list : {&s.train, &s.dev, &s.test, &s.unused}) all.insert(all.end(), list->begin(), list->end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(all.size(), ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}

}  // namespace

TEST(Dataset, LoadsContiguousLabels) {
  TempDir dir("ds_load");
  write_text(dir / "d.tsv", "0\ta b\n1\tc\n1\td e f\n0\tg\n");
  const auto ds = load_dataset(dir / "d.tsv");
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.num_classes(), 2);
  EXPECT_EQ(ds.texts()[2], "d e f");
}

TEST(Dataset, NonContiguousLabelsRejected) {
  TempDir dir("ds_gap");
  write_text(dir / "d.tsv", "0\ta\n2\tb\n");
  try {
    (void)load_dataset(dir / "d.tsv");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("non-contiguous labels"), std::string::npos);
  }
}

TEST(Dataset, MalformedLinesRejected) {
  TempDir dir("ds_bad");
  write_text(dir / "a.tsv", "0 no tab\n");
  EXPECT_THROW((void)load_dataset(dir / "a.tsv"), FormatError);
  write_text(dir / "b.tsv", "x\ttext\n");
  EXPECT_THROW((void)load_dataset(dir / "b.tsv"), FormatError);
  write_text(dir / "c.tsv", "");
  EXPECT_THROW((void)load_dataset(dir / "c.tsv"), FormatError);
}

TEST(Dataset, MappedLabelsAreLexicographic) {
  TempDir dir("ds_map");
  write_text(dir / "d.tsv", "pos\ta\nneg\tb\npos\tc\n");
  const auto ds = load_dataset_mapped(dir / "d.tsv", dir / "map.tsv");
  EXPECT_EQ(ds.labels(), (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(embfuse::testing::read_text(dir / "map.tsv"), "0\tneg\n1\tpos\n");
}

TEST(Dataset, WriteThenLoadRoundTrips) {
  TempDir dir("ds_rt");
  const auto ds = balanced(6);
  write_dataset(ds, dir / "d.tsv");
  const auto back = load_dataset(dir / "d.tsv");
  EXPECT_EQ(back.texts(), ds.texts());
  EXPECT_EQ(back.labels(), ds.labels());
}

TEST(Dataset, StratifiedSplitSizesAndBalance) {
  const auto ds = make_split(balanced(1000), SplitFractions{}, 7);
  const auto& s = ds.split();
  EXPECT_EQ(s.train.size(), 800u);
  EXPECT_EQ(s.dev.size(), 100u);
  EXPECT_EQ(s.test.size(), 100u);
  for (const auto* list : {&s.train, &s.dev, &s.test}) {
    const auto counts = ds.class_counts(*list);
    const double half = static_cast<double>(list->size()) / 2.0;
    for (auto c : counts) EXPECT_LE(std::abs(static_cast<double>(c) - half), 1.0);
  }
  expect_partition(ds);
}

TEST(Dataset, SplitIsDeterministic) {
  const auto a = make_split(balanced(300), SplitFractions{}, 3);
  const auto b = make_split(balanced(300), SplitFractions{}, 3);
  EXPECT_EQ(a.split().train, b.split().train);
  EXPECT_EQ(a.split().dev, b.split().dev);
  EXPECT_EQ(a.split().test, b.split().test);
  const auto c = make_split(balanced(300), SplitFractions{}, 4);
  EXPECT_NE(a.split().train, c.split().train);
}

TEST(Dataset, UniformSplitCoversAllRows) {
  const auto ds = make_split(balanced(101), SplitFractions{}, 5, SplitMode::uniform);
  expect_partition(ds);
  EXPECT_EQ(ds.split().train.size() + ds.split().dev.size() + ds.split().test.size(), 101u);
}

TEST(Dataset, SingletonClassCannotBeStratified) {
  std::vector<std::string> texts(10, "t");
  std::vector<int> labels{0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  EXPECT_THROW((void)make_split(LabeledDataset(texts, labels), SplitFractions{}, 1), std::invalid_argument);
}

TEST(Dataset, BadFractionsRejected) {
  EXPECT_THROW((void)make_split(balanced(100), SplitFractions{0.5, 0.2, 0.2}, 1), std::invalid_argument);
}

TEST(Dataset, SubsampleFullSizeIsPermutation) {
  const auto ds = make_split(balanced(200), SplitFractions{}, 2);
  const auto sub = subsample_train(ds, ds.split().train.size(), 9);
  auto a = ds.split().train, b = sub.split().train;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_TRUE(sub.split().unused.empty());
}

TEST(Dataset, SubsamplePreservesClassRatio) {
  const auto ds = make_split(balanced(1000), SplitFractions{}, 2);
  const auto sub = subsample_train(ds, 500, 4);
  EXPECT_EQ(sub.split().train.size(), 500u);
  for (auto c : sub.class_counts(sub.split().train)) EXPECT_LE(std::abs(static_cast<double>(c) - 250.0), 1.0);
  EXPECT_EQ(sub.split().dev, ds.split().dev);
  EXPECT_EQ(sub.split().test, ds.split().test);
  expect_partition(sub);
}

TEST(Dataset, SubsampleTooSmallOrTooLargeRejected) {
  const auto ds = make_split(balanced(100), SplitFractions{}, 2);
  EXPECT_THROW((void)subsample_train(ds, 1, 0), std::invalid_argument);
  EXPECT_THROW((void)subsample_train(ds, 81, 0), std::invalid_argument);
}

TEST(Dataset, WithSplitValidatesPartition) {
  const auto ds = balanced(4);
  EXPECT_THROW((void)ds.with_split(Split{{0, 1}, {1}, {2, 3}, {}}), std::invalid_argument);
  EXPECT_THROW((void)ds.with_split(Split{{0, 1}, {2}, {}, {}}), std::invalid_argument);
  EXPECT_THROW((void)ds.with_split(Split{{0, 2}, {1}, {3}, {}}), std::invalid_argument);
  EXPECT_NO_THROW((void)ds.with_split(Split{{0, 1}, {2}, {3}, {}}));
  EXPECT_THROW((void)ds.split(), std::logic_error);
}

TEST(Dataset, FixtureFileLoads) {
  const auto ds = load_dataset(embfuse::testing::fixture_dir() / "reviews.tsv");
  EXPECT_EQ(ds.size(), 1000u);
  EXPECT_EQ(ds.num_classes(), 2);
}

TEST(RunConfig, RejectsNonPositiveGrids) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.alpha_grid = {1.0, 0.0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = RunConfig{};
  c.repeats = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
