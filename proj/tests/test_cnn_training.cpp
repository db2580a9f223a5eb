#include <gtest/gtest.h>

#include "embfuse/classifier.hpp"
#include "embfuse/cnn_training.hpp"
#include "embfuse/vocabulary.hpp"
#include "test_support.hpp"

using namespace embfuse;

namespace {

const std::vector<std::string> kFiller{"the", "pan", "was", "a", "lid", "box", "came", "with", "it", "and",
                                       "my", "kettle", "we", "used", "for", "soup", "on", "sunday"};

std::string filler(Rng& rng, int words) {
  std::string s;
  for (int i = 0; i < words; ++i) {
    if (!s.empty()) s += ' ';
    s += kFiller[rng.below(kFiller.size())];
  }
  return s;
}

std::string insert_word(Rng& rng, std::string text, const std::string& word) {
  return rng.bernoulli(0.5) ? word + " " + text : text + " " + word;
}

// "good" and "not bad" are positive, "bad" and "not good" negative; word
// counts alone cannot separate them, bigram filters can.
LabeledDataset negation_corpus(std::size_t n, std::uint64_t seed) {
  const std::vector<std::pair<std::string, int>> phrases{
      {"good", 1}, {"not bad", 1}, {"bad", 0}, {"not good", 0}};
  Rng rng(seed);
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [phrase, y] = phrases[i % phrases.size()];
    texts.push_back(filler(rng, 2 + static_cast<int>(rng.below(4))) + " " + phrase + " " +
                    filler(rng, 2 + static_cast<int>(rng.below(4))));
    labels.push_back(y);
  }
  return make_split(LabeledDataset(texts, labels), SplitFractions{}, seed);
}

// Keyword carries the label; the companion dense view is pure noise.
struct KeywordWorld {
  LabeledDataset ds;
  EmbeddingSet v1;
};

KeywordWorld keyword_world(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    texts.push_back(insert_word(rng, filler(rng, 6), y ? "superb" : "dreadful"));
    labels.push_back(y);
  }
  return {make_split(LabeledDataset(texts, labels), SplitFractions{}, seed),
          EmbeddingSet(embfuse::testing::gaussian(static_cast<Eigen::Index>(n), 8, rng))};
}

TextCnnConfig compact() {
  TextCnnConfig c;
  c.embed_dim = 24;
  c.num_filters = 16;
  return c;
}

}  // namespace

TEST(TrainCnn, LearnsNegatedKeywords) {
  const auto ds = negation_corpus(600, 1);
  const auto vocab = build_vocab(ds);
  CnnTrainOptions opt;
  opt.epochs = 20;
  opt.patience = 20;
  const auto r = train_cnn(ds, vocab, EmbeddingMode::random_trainable, compact(), opt, 3);
  double best = 0.0;
  for (double d : r.dev_history) best = std::max(best, d);
  EXPECT_GE(best, 0.95);
  EXPECT_EQ(r.dev_history[static_cast<std::size_t>(r.best_epoch)], best);
  EXPECT_LE(r.dev_history.size(), 21u);
}

TEST(TrainCnn, ZeroEpochsReturnsInitialization) {
  const auto ds = negation_corpus(80, 2);
  const auto vocab = build_vocab(ds);
  CnnTrainOptions opt;
  opt.epochs = 0;
  const auto r = train_cnn(ds, vocab, EmbeddingMode::random_trainable, compact(), opt, 5);
  Rng root(5);
  Rng init = root.split(1);
  const auto expected = init_text_cnn(vocab, compact(), EmbeddingMode::random_trainable, init);
  EXPECT_EQ(r.cnn.embeddings, expected.embeddings);
  EXPECT_EQ(r.best_epoch, 0);
  EXPECT_EQ(r.dev_history.size(), 1u);
}

TEST(TrainCnn, SameSeedSameTrajectory) {
  const auto ds = negation_corpus(200, 3);
  const auto vocab = build_vocab(ds);
  CnnTrainOptions opt;
  opt.epochs = 4;
  const auto a = train_cnn(ds, vocab, EmbeddingMode::random_trainable, compact(), opt, 9);
  const auto b = train_cnn(ds, vocab, EmbeddingMode::random_trainable, compact(), opt, 9);
  EXPECT_EQ(a.dev_history, b.dev_history);
  EXPECT_EQ(a.cnn.filters[0], b.cnn.filters[0]);
}

TEST(TrainCnn, StaticModeLeavesEmbeddingsUntouched) {
  const auto ds = negation_corpus(200, 4);
  const auto vocab = build_vocab(ds);
  WordVectors wv;
  wv.dim = 24;
  Rng rng(1);
  for (const auto& t : vocab.tokens()) {
    std::vector<double> v(24);
    for (auto& x : v) x = rng.normal();
    wv.vectors[t] = v;
  }
  CnnTrainOptions opt;
  opt.epochs = 3;
  opt.patience = 3;
  Rng init_rng = Rng(7).split(1);
  const auto init = init_text_cnn(vocab, compact(), EmbeddingMode::pretrained_static, init_rng, &wv);
  const auto r = train_cnn(ds, vocab, EmbeddingMode::pretrained_static, compact(), opt, 7, &wv);
  ASSERT_GT(r.best_epoch, 0);
  EXPECT_EQ(r.cnn.embeddings, init.embeddings);
  EXPECT_NE(r.cnn.filters[0], init.filters[0]);
}

TEST(TrainCnn, RejectsBadOptions) {
  const auto ds = negation_corpus(80, 5);
  const auto vocab = build_vocab(ds);
  CnnTrainOptions opt;
  opt.batch_size = 0;
  EXPECT_THROW((void)train_cnn(ds, vocab, EmbeddingMode::random_trainable, compact(), opt, 1), std::invalid_argument);
}

class CatOpenTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { world_ = new KeywordWorld(keyword_world(400, 11)); }
  static void TearDownTestSuite() { delete world_; }
  static double v1_alone_dev(double l2) {
    const auto& s = world_->ds.split();
    const auto clf = train_logreg(world_->v1.select_rows(s.train), world_->ds.labels_at(s.train), l2);
    return evaluate(clf, world_->v1.select_rows(s.dev), world_->ds.labels_at(s.dev));
  }
  static CatOpenSettings settings(double alpha) {
    CatOpenSettings st;
    st.alpha = alpha;
    st.l2 = 1e-2;
    st.encoder.epochs = 8;
    st.joint.epochs = 4;
    return st;
  }
  static KeywordWorld* world_;
};
KeywordWorld* CatOpenTest::world_ = nullptr;

TEST_F(CatOpenTest, SignalOnlyInTextBeatsDenseViewAlone) {
  const auto vocab = build_vocab(world_->ds);
  const auto r = train_cat_open(world_->ds, world_->v1, vocab, EmbeddingMode::random_trainable, compact(),
                                settings(1.0), 21);
  const double open_dev = r.dev_history[static_cast<std::size_t>(r.best_epoch)];
  EXPECT_GE(open_dev, v1_alone_dev(1e-2) + 0.10);
}

TEST_F(CatOpenTest, TinyScaleReducesToDenseViewAlone) {
  const auto vocab = build_vocab(world_->ds);
  const auto r = train_cat_open(world_->ds, world_->v1, vocab, EmbeddingMode::random_trainable, compact(),
                                settings(1e-9), 21);
  const double open_dev = r.dev_history[static_cast<std::size_t>(r.best_epoch)];
  EXPECT_NEAR(open_dev, v1_alone_dev(1e-2), 0.02);
}

TEST_F(CatOpenTest, SameSeedSameResult) {
  const auto vocab = build_vocab(world_->ds);
  const auto a = train_cat_open(world_->ds, world_->v1, vocab, EmbeddingMode::random_trainable, compact(),
                                settings(1.0), 5);
  const auto b = train_cat_open(world_->ds, world_->v1, vocab, EmbeddingMode::random_trainable, compact(),
                                settings(1.0), 5);
  EXPECT_EQ(a.dev_history, b.dev_history);
  EXPECT_EQ(a.head.weights, b.head.weights);
}

TEST_F(CatOpenTest, SnapshotNeverWorseThanStart) {
  const auto vocab = build_vocab(world_->ds);
  const auto r = train_cat_open(world_->ds, world_->v1, vocab, EmbeddingMode::random_trainable, compact(),
                                settings(0.5), 8);
  for (double d : r.dev_history) EXPECT_LE(d, r.dev_history[static_cast<std::size_t>(r.best_epoch)]);
  EXPECT_THROW((void)train_cat_open(world_->ds, world_->v1, vocab, EmbeddingMode::random_trainable, compact(),
                                    settings(0.0), 8),
               std::invalid_argument);
}
