#include <gtest/gtest.h>

#include <sstream>

#include "embfuse/fixture.hpp"
#include "embfuse/pipeline.hpp"
#include "test_support.hpp"

using namespace embfuse;
using embfuse::testing::TempDir;

namespace {

const PipelineData& fixture_data() {
  static const PipelineData data = [] {
    const auto dir = embfuse::testing::fixture_dir();
    PipelineSpec spec;
    spec.dataset = dir / "reviews.tsv";
    spec.pretrained = dir / "reviews.pretrained.embf";
    return load_pipeline_data(spec);
  }();
  return data;
}

PipelineSpec small_spec(PipelineMethod method, EncoderMode encoder) {
  PipelineSpec spec;
  spec.method = method;
  spec.encoder = encoder;
  spec.run.seed = 3;
  spec.run.repeats = 2;
  spec.run.alpha_grid = {0.2, 2.0, 20.0};
  spec.run.l2_grid = {1e-3, 1e-2, 1e-1};
  spec.cnn.embed_dim = 16;
  spec.cnn.num_filters = 8;
  spec.encoder_training.epochs = 2;
  spec.joint_training.epochs = 2;
  return spec;
}

std::string csv_of(const PipelineMetrics& m) {
  std::ostringstream out;
  write_metrics_csv(m, out);
  return out.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n' ? 1 : 0;
  return n;
}

}  // namespace

TEST(Pipeline, ViewOneMatchesDirectGridSearch) {
  const auto& data = fixture_data();
  auto spec = small_spec(PipelineMethod::view1_only, EncoderMode::none);
  const auto r = run_repeat(spec, data, 1);
  const auto ds = make_split(data.dataset, SplitFractions{}, spec.run.seed + 1);
  const auto report = grid_search(CombineMethod::view1, spec.run, ds, data.pretrained, nullptr);
  const auto& best = report.entries[report.best];
  EXPECT_EQ(r.seed, spec.run.seed + 1);
  EXPECT_EQ(r.dev_acc, best.dev_acc);
  EXPECT_EQ(r.test_acc, best.test_acc);
  EXPECT_EQ(r.best.l2, best.params.l2);
}

TEST(Pipeline, TenRepeatsGiveTenEntriesAndRecomputableMean) {
  auto spec = small_spec(PipelineMethod::view1_only, EncoderMode::none);
  spec.run.repeats = 10;
  spec.run.l2_grid = {1e-2};
  const auto m = run_pipeline(spec, fixture_data());
  ASSERT_EQ(m.repeats.size(), 10u);
  std::vector<double> test;
  for (std::size_t i = 0; i < m.repeats.size(); ++i) {
    EXPECT_EQ(m.repeats[i].repeat, static_cast<int>(i));
    test.push_back(m.repeats[i].test_acc);
  }
  const auto [mean, sd] = mean_and_stddev(test);
  EXPECT_DOUBLE_EQ(m.mean_test, mean);
  EXPECT_DOUBLE_EQ(m.std_test, sd);

  const auto csv = csv_of(m);
  EXPECT_EQ(count_lines(csv), 1u + 10u + 2u);
  std::ostringstream jsonl;
  write_runs_jsonl(m, jsonl);
  EXPECT_EQ(count_lines(jsonl.str()), 10u);
  EXPECT_EQ(csv.find("wall"), std::string::npos);
  std::ostringstream timing;
  write_timing_csv(m, timing);
  EXPECT_EQ(count_lines(timing.str()), 1u + 10u + 1u);
}

TEST(Pipeline, MeanAndStddev) {
  const auto [m1, s1] = mean_and_stddev({0.5});
  EXPECT_EQ(m1, 0.5);
  EXPECT_EQ(s1, 0.0);
  const auto [m2, s2] = mean_and_stddev({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(m2, 2.0);
  EXPECT_DOUBLE_EQ(s2, 1.0);
  EXPECT_THROW((void)mean_and_stddev({}), std::invalid_argument);
}

TEST(Pipeline, BagOfWordsSecondViewBeatsPretrainedAlone) {
  const auto& data = fixture_data();
  const auto view1 = run_pipeline(small_spec(PipelineMethod::view1_only, EncoderMode::none), data);
  const auto cat = run_pipeline(small_spec(PipelineMethod::cat_lock, EncoderMode::bow), data);
  EXPECT_GT(cat.mean_test, view1.mean_test + 0.05);
}

TEST(Pipeline, SmallCnnRunsAndIsDeterministic) {
  const auto& data = fixture_data();
  auto spec = small_spec(PipelineMethod::cat_lock, EncoderMode::cnn_r);
  spec.run.repeats = 1;
  const auto a = run_pipeline(spec, data);
  const auto b = run_pipeline(spec, data);
  EXPECT_EQ(csv_of(a), csv_of(b));
  EXPECT_GE(a.mean_test, 0.5);
}

TEST(Pipeline, CatOpenReusesLockedSelection) {
  const auto& data = fixture_data();
  auto lock = small_spec(PipelineMethod::cat_lock, EncoderMode::cnn_r);
  lock.run.repeats = 1;
  auto open = lock;
  open.method = PipelineMethod::cat_open;
  const auto a = run_repeat(lock, data, 0);
  const auto b = run_repeat(open, data, 0);
  EXPECT_EQ(a.best.alpha, b.best.alpha);
  EXPECT_EQ(a.best.l2, b.best.l2);
  EXPECT_GE(b.test_acc, 0.5);
}

TEST(Pipeline, ThreadCountDoesNotChangeMetrics) {
  const auto& data = fixture_data();
  auto spec = small_spec(PipelineMethod::cat_lock, EncoderMode::bow);
  spec.run.repeats = 3;
  const auto one = run_pipeline(spec, data);
  spec.threads = 2;
  const auto two = run_pipeline(spec, data);
  EXPECT_EQ(csv_of(one), csv_of(two));
  EXPECT_EQ(one.config_hash, two.config_hash);
}

TEST(Pipeline, SeedOffsetsRepeats) {
  const auto& data = fixture_data();
  auto spec = small_spec(PipelineMethod::view1_only, EncoderMode::none);
  spec.run.repeats = 3;
  const auto m = run_pipeline(spec, data);
  auto shifted = spec;
  shifted.run.seed = spec.run.seed + 1;
  const auto r = run_repeat(shifted, data, 1);
  EXPECT_EQ(r.seed, m.repeats[2].seed);
  EXPECT_EQ(r.test_acc, m.repeats[2].test_acc);
}

TEST(Pipeline, SizeSweepOneRowPerSize) {
  const auto& data = fixture_data();
  auto spec = small_spec(PipelineMethod::cat_lock, EncoderMode::bow);
  const auto rows = run_size_sweep(spec, data, {100, 200, 400});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].size, 100u);
  EXPECT_EQ(rows[2].metrics.train_size, std::optional<std::size_t>(400));
  std::ostringstream out;
  write_sweep_csv(rows, out);
  EXPECT_EQ(count_lines(out.str()), 1u + 3u);
}

TEST(Pipeline, FullSizeSweepMatchesPlainRun) {
  const auto& data = fixture_data();
  auto spec = small_spec(PipelineMethod::cat_lock, EncoderMode::bow);
  const auto train = make_split(data.dataset, SplitFractions{}, spec.run.seed).split().train.size();
  const auto rows = run_size_sweep(spec, data, {train});
  const auto plain = run_pipeline(spec, data);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].metrics.mean_test, plain.mean_test);
  EXPECT_EQ(rows[0].metrics.mean_dev, plain.mean_dev);
}

TEST(Pipeline, SizeSweepRejectsBadSizes) {
  const auto& data = fixture_data();
  auto spec = small_spec(PipelineMethod::cat_lock, EncoderMode::bow);
  EXPECT_THROW((void)run_size_sweep(spec, data, {}), std::invalid_argument);
  EXPECT_THROW((void)run_size_sweep(spec, data, {200, 100}), std::invalid_argument);
  EXPECT_THROW((void)run_size_sweep(spec, data, {100, 100000}), std::invalid_argument);
}

TEST(Pipeline, ValidationRejectsBadCombinations) {
  auto spec = small_spec(PipelineMethod::cat_open, EncoderMode::bow);
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_spec(PipelineMethod::cat_lock, EncoderMode::none);
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.domain = "domain.embf";
  EXPECT_NO_THROW(spec.validate());
  spec.threads = 0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_spec(PipelineMethod::view1_only, EncoderMode::none);
  spec.run.repeats = 0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_spec(PipelineMethod::view1_only, EncoderMode::none);
  spec.train_size = 0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Pipeline, StaticEncoderNeedsWordVectors) {
  auto spec = small_spec(PipelineMethod::cat_lock, EncoderMode::cnn_s);
  EXPECT_THROW((void)run_pipeline(spec, fixture_data()), std::invalid_argument);
}

TEST(Pipeline, MisalignedViewsAreRejected) {
  const auto& full = fixture_data();
  PipelineData data{full.dataset, full.pretrained.select_rows(std::vector<std::size_t>{0, 1, 2}),
                    std::nullopt, std::nullopt};
  auto spec = small_spec(PipelineMethod::view1_only, EncoderMode::none);
  EXPECT_THROW((void)run_pipeline(spec, data), std::invalid_argument);
}

TEST(PipelineConfig, AppliesKnownKeys) {
  PipelineSpec spec;
  apply_config(spec, nlohmann::json::parse(R"({
    "method": "cca_lock", "encoder": "bow", "seed": 9, "repeats": 4,
    "alpha_grid": [1.0], "split_mode": "uniform", "train_size": 50,
    "cnn": {"num_filters": 4, "widths": [2, 3]},
    "encoder_training": {"epochs": 7}, "solver": {"memory": 5}, "threads": 2})"));
  EXPECT_EQ(spec.method, PipelineMethod::cca_lock);
  EXPECT_EQ(spec.encoder, EncoderMode::bow);
  EXPECT_EQ(spec.run.seed, 9u);
  EXPECT_EQ(spec.run.repeats, 4);
  EXPECT_EQ(spec.run.alpha_grid, std::vector<double>{1.0});
  EXPECT_EQ(spec.split_mode, SplitMode::uniform);
  EXPECT_EQ(spec.train_size, std::optional<std::size_t>(50));
  EXPECT_EQ(spec.cnn.num_filters, 4u);
  EXPECT_EQ(spec.cnn.widths, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(spec.encoder_training.epochs, 7);
  EXPECT_EQ(spec.solver.memory, 5);
  EXPECT_EQ(spec.threads, 2);
}

TEST(PipelineConfig, RejectsUnknownKeysAndBadValues) {
  PipelineSpec spec;
  EXPECT_THROW(apply_config(spec, nlohmann::json::parse(R"({"methd": "cat_lock"})")), std::invalid_argument);
  EXPECT_THROW(apply_config(spec, nlohmann::json::parse(R"({"cnn": {"filters": 3}})")), std::invalid_argument);
  EXPECT_THROW(apply_config(spec, nlohmann::json::parse(R"({"joint_training": {"lr": 1}})")),
               std::invalid_argument);
  EXPECT_THROW(apply_config(spec, nlohmann::json::parse(R"({"repeats": "ten"})")), std::invalid_argument);
  EXPECT_THROW(apply_config(spec, nlohmann::json::parse(R"({"method": "fusion"})")), std::invalid_argument);
  EXPECT_THROW(apply_config(spec, nlohmann::json::parse("[1, 2]")), std::invalid_argument);
}

TEST(PipelineConfig, LoadsFromFile) {
  TempDir dir("pipeline_cfg");
  embfuse::testing::write_text(dir / "ok.json", R"({"method": "view1_only", "encoder": "none"})");
  embfuse::testing::write_text(dir / "bad.json", "{not json");
  EXPECT_EQ(load_pipeline_config(dir / "ok.json").method, PipelineMethod::view1_only);
  EXPECT_THROW((void)load_pipeline_config(dir / "bad.json"), std::invalid_argument);
  EXPECT_THROW((void)load_pipeline_config(dir / "missing.json"), std::invalid_argument);
}

TEST(PipelineConfig, HashTracksResultAffectingFieldsOnly) {
  PipelineSpec a;
  PipelineSpec b = a;
  b.threads = 4;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.run.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  PipelineSpec c = a;
  c.dataset = "other.tsv";
  EXPECT_NE(config_hash(a), config_hash(c));
  PipelineSpec d = a;
  d.joint_training.learning_rate = 1e-3;
  EXPECT_NE(config_hash(a), config_hash(d));
}

TEST(PipelineConfig, NamesRoundTrip) {
  for (auto m : {PipelineMethod::cat_lock, PipelineMethod::cat_open, PipelineMethod::cca_lock,
                 PipelineMethod::kcca_lock, PipelineMethod::view1_only, PipelineMethod::view2_only,
                 PipelineMethod::bow}) {
    EXPECT_EQ(parse_pipeline_method(to_string(m)), m);
  }
  for (auto e : {EncoderMode::cnn_r, EncoderMode::cnn_s, EncoderMode::cnn_ns, EncoderMode::bow, EncoderMode::none}) {
    EXPECT_EQ(parse_encoder_mode(to_string(e)), e);
  }
  for (auto t : {TheoryCheck::thm1, TheoryCheck::thm1_sweep_c, TheoryCheck::thm2, TheoryCheck::residue}) {
    EXPECT_EQ(parse_theory_check(to_string(t)), t);
  }
  EXPECT_THROW((void)parse_encoder_mode("lstm"), std::invalid_argument);
}
