#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace embfuse {

/// Row indices of the train, dev, and test partitions. `unused` holds train
/// rows dropped by subsampling, so the four lists always cover every row.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;
  std::vector<std::size_t> unused;
};

/// Sentences with 0-based contiguous integer labels and an optional split.
///
/// Immutable; split-producing operations return a new dataset. When a split
/// is attached the three lists are pairwise disjoint, cover every row, and
/// the train list contains every class.
class LabeledDataset {
 public:
  LabeledDataset(std::vector<std::string> texts, std::vector<int> labels);

  [[nodiscard]] LabeledDataset with_split(Split split) const;

  [[nodiscard]] std::size_t size() const { return texts_.size(); }
  [[nodiscard]] int num_classes() const { return num_classes_; }
  [[nodiscard]] const std::vector<std::string>& texts() const { return texts_; }
  [[nodiscard]] const std::vector<int>& labels() const { return labels_; }
  [[nodiscard]] bool has_split() const { return split_.has_value(); }
  /// Throws std::logic_error when no split is assigned.
  [[nodiscard]] const Split& split() const;

  [[nodiscard]] std::vector<int> labels_at(const std::vector<std::size_t>& rows) const;
  [[nodiscard]] std::vector<std::size_t> class_counts(const std::vector<std::size_t>& rows) const;

 private:
  std::vector<std::string> texts_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  std::optional<Split> split_;
};

/// Reads `label<TAB>text` lines; labels must be contiguous integers from 0.
LabeledDataset load_dataset(const std::filesystem::path& path);

/// Reads `label<TAB>text` lines with arbitrary string labels. Labels are
/// mapped to indices in lexicographic order and the mapping is written to
/// `mapping_out` as `index<TAB>label` lines.
LabeledDataset load_dataset_mapped(const std::filesystem::path& path,
                                   const std::filesystem::path& mapping_out);

void write_dataset(const LabeledDataset& ds, const std::filesystem::path& path);

struct SplitFractions {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

enum class SplitMode { stratified, uniform };

LabeledDataset make_split(const LabeledDataset& ds, SplitFractions fractions, std::uint64_t seed,
                          SplitMode mode = SplitMode::stratified);

/// Replaces the train split with a stratified random subset of size `m`.
LabeledDataset subsample_train(const LabeledDataset& ds, std::size_t m, std::uint64_t seed);

/// Experiment-wide settings shared by pipelines and grid searches.
struct RunConfig {
  std::uint64_t seed = 0;
  int repeats = 10;
  std::vector<double> alpha_grid{0.002, 0.02, 0.2, 2.0, 20.0, 200.0};
  std::vector<double> l2_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  std::vector<double> cca_reg_grid{1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
  std::vector<double> kcca_sigma_grid{0.05, 0.5, 5.0};
  std::vector<double> kcca_reg_grid{1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};

  /// Throws std::invalid_argument if any grid value is non-positive or repeats < 1.
  void validate() const;
};

}  // namespace embfuse
