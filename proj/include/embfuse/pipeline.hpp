#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "embfuse/classifier.hpp"
#include "embfuse/cnn_training.hpp"
#include "embfuse/dataset.hpp"
#include "embfuse/embedding.hpp"
#include "embfuse/text_cnn.hpp"
#include "embfuse/theory.hpp"

namespace embfuse {

enum class PipelineMethod { cat_lock, cat_open, cca_lock, kcca_lock, view1_only, view2_only, bow };
enum class EncoderMode { cnn_r, cnn_s, cnn_ns, bow, none };

std::string to_string(PipelineMethod m);
std::string to_string(EncoderMode m);
PipelineMethod parse_pipeline_method(const std::string& name);
EncoderMode parse_encoder_mode(const std::string& name);

struct PipelineSpec {
  PipelineMethod method = PipelineMethod::cat_lock;
  EncoderMode encoder = EncoderMode::cnn_r;
  std::filesystem::path dataset;
  std::filesystem::path pretrained;    // view 1
  std::filesystem::path domain;        // view 2 file; used when encoder is none
  std::filesystem::path word_vectors;  // for cnn_s / cnn_ns
  RunConfig run;
  SplitMode split_mode = SplitMode::stratified;
  std::optional<std::size_t> train_size;
  TextCnnConfig cnn;
  CnnTrainOptions encoder_training;
  CnnTrainOptions joint_training{50, 32, 1e-4, 5, 1e-4};
  OptimizerConfig solver;
  int threads = 1;  // does not affect results

  /// Throws std::invalid_argument for invalid method / encoder combinations.
  void validate() const;
};

/// Canonical JSON of every result-affecting field, input paths included; threads excluded.
nlohmann::ordered_json spec_to_json(const PipelineSpec& spec);
std::uint64_t config_hash(const PipelineSpec& spec);

/// Applies the keys of a JSON object onto `spec`; unknown keys are errors.
void apply_config(PipelineSpec& spec, const nlohmann::json& config);
PipelineSpec load_pipeline_config(const std::filesystem::path& path);

/// In-memory inputs of a pipeline, row-aligned with the dataset.
struct PipelineData {
  LabeledDataset dataset;
  EmbeddingSet pretrained;
  std::optional<EmbeddingSet> domain;
  std::optional<WordVectors> word_vectors;
};

PipelineData load_pipeline_data(const PipelineSpec& spec);

struct RepeatResult {
  int repeat = 0;
  std::uint64_t seed = 0;
  double dev_acc = 0.0;
  double test_acc = 0.0;
  GridPoint best;
  double wall_time_s = 0.0;
};

struct PipelineMetrics {
  PipelineMethod method = PipelineMethod::cat_lock;
  EncoderMode encoder = EncoderMode::cnn_r;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> train_size;
  std::vector<RepeatResult> repeats;  // ordered by repeat index
  double mean_dev = 0.0;
  double std_dev = 0.0;
  double mean_test = 0.0;
  double std_test = 0.0;
  double wall_time_s = 0.0;
};

/// Repeat i uses seed + i for its split, subsample, encoder, and training.
PipelineMetrics run_pipeline(const PipelineSpec& spec, const PipelineData& data);
PipelineMetrics run_pipeline(const PipelineSpec& spec);

/// One repeat, exposed for composition checks.
RepeatResult run_repeat(const PipelineSpec& spec, const PipelineData& data, int repeat);

/// Mean and sample standard deviation (zero for a single value).
std::pair<double, double> mean_and_stddev(const std::vector<double>& values);

void write_metrics_csv(const PipelineMetrics& m, std::ostream& out);
void write_runs_jsonl(const PipelineMetrics& m, std::ostream& out);
/// Wall times live in their own file so metric files stay byte-reproducible.
void write_timing_csv(const PipelineMetrics& m, std::ostream& out);

struct SweepRow {
  std::size_t size = 0;
  PipelineMetrics metrics;
};

/// One run_pipeline per training-set size; sizes must be ascending and at
/// most the train-split size.
std::vector<SweepRow> run_size_sweep(const PipelineSpec& spec, const PipelineData& data,
                                     const std::vector<std::size_t>& sizes);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

enum class TheoryCheck { thm1, thm1_sweep_c, thm2, residue };
std::string to_string(TheoryCheck which);
TheoryCheck parse_theory_check(const std::string& name);

struct TheoryParams {
  std::size_t samples = 100000;  // Monte Carlo size
  std::size_t worlds = 100;
  MarginLoss loss = MarginLoss::logistic;
  std::optional<double> sigma;   // thm1: override every world's noise; sweep: fixed sigma
  std::vector<double> cs{0.25, 0.5, 1.0, 2.0, 4.0};
  std::size_t d = 8;
  std::size_t n_train = 10000;
  std::size_t n_test = 2000;
  std::size_t seeds = 1;         // thm2 / residue: runs averaged over seed, seed+1, ...
  std::size_t kcca_rows = 0;
};

struct TheoryOutcome {
  nlohmann::ordered_json report;
  bool passed = false;
  std::vector<std::string> failures;  // one line per failed inequality
};

TheoryOutcome run_theory(TheoryCheck which, const TheoryParams& params, std::uint64_t seed);

}  // namespace embfuse
