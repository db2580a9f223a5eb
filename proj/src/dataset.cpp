#include "embfuse/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "embfuse/embedding.hpp"
#include "embfuse/rng.hpp"

namespace embfuse {
namespace {

struct RawRow {
  std::string label;
  std::string text;
};

std::vector<RawRow> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  std::vector<RawRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 'label<TAB>text'");
    }
    RawRow row{line.substr(0, tab), line.substr(tab + 1)};
    if (row.text.find_first_not_of(" \t") == std::string::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": empty text");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("empty dataset file " + path.string());
  return rows;
}

// Integer allocation matrix with prescribed row sums (class sizes) and column
// sums (split sizes) whose entries are the floor or ceiling of the
// proportional share. The fractional parts form a feasible flow, so an
// integral one exists; it is found with augmenting paths on the small
// class x split bipartite graph.
std::vector<std::vector<std::size_t>> apportion(const std::vector<std::size_t>& class_sizes,
                                                const std::vector<std::size_t>& split_sizes) {
  const std::size_t classes = class_sizes.size();
  const std::size_t splits = split_sizes.size();
  const std::size_t total =
      std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});

  std::vector<std::vector<std::size_t>> alloc(classes, std::vector<std::size_t>(splits));
  std::vector<std::vector<bool>> fractional(classes, std::vector<bool>(splits));
  std::vector<long> row_need(classes), col_need(splits);
  for (std::size_t s = 0; s < splits; ++s) col_need[s] = static_cast<long>(split_sizes[s]);
  for (std::size_t k = 0; k < classes; ++k) {
    row_need[k] = static_cast<long>(class_sizes[k]);
    for (std::size_t s = 0; s < splits; ++s) {
      // integer arithmetic keeps exact shares exact
      const std::size_t num = class_sizes[k] * split_sizes[s];
      alloc[k][s] = num / total;
      fractional[k][s] = (num % total) != 0;
      row_need[k] -= static_cast<long>(alloc[k][s]);
      col_need[s] -= static_cast<long>(alloc[k][s]);
    }
  }

  std::vector<std::vector<bool>> used(classes, std::vector<bool>(splits));
  std::vector<long> split_owner_count(splits, 0);

  // augment one unit from class k; depth-first over alternating paths
  std::vector<bool> visited_split;
  std::function<bool(std::size_t)> augment = [&](std::size_t k) -> bool {
    for (std::size_t s = 0; s < splits; ++s) {
      if (!fractional[k][s] || used[k][s] || visited_split[s]) continue;
      visited_split[s] = true;
      if (split_owner_count[s] < col_need[s]) {
        used[k][s] = true;
        ++split_owner_count[s];
        return true;
      }
      for (std::size_t other = 0; other < classes; ++other) {
        if (other == k || !used[other][s]) continue;
        used[other][s] = false;
        --split_owner_count[s];
        if (augment(other)) {
          used[k][s] = true;
          ++split_owner_count[s];
          return true;
        }
        used[other][s] = true;
        ++split_owner_count[s];
      }
    }
    return false;
  };

  for (std::size_t k = 0; k < classes; ++k) {
    for (long unit = 0; unit < row_need[k]; ++unit) {
      visited_split.assign(splits, false);
      if (!augment(k)) throw std::logic_error("apportionment failed to find a feasible rounding");
    }
  }
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t s = 0; s < splits; ++s) alloc[k][s] += used[k][s] ? 1 : 0;
  }
  return alloc;
}

std::vector<std::vector<std::size_t>> rows_by_class(const LabeledDataset& ds,
                                                    const std::vector<std::size_t>& rows) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes()));
  for (auto r : rows) by_class[static_cast<std::size_t>(ds.labels()[r])].push_back(r);
  return by_class;
}

}  // namespace

LabeledDataset::LabeledDataset(std::vector<std::string> texts, std::vector<int> labels)
    : texts_(std::move(texts)), labels_(std::move(labels)) {
  if (texts_.empty()) throw std::invalid_argument("dataset is empty");
  if (texts_.size() != labels_.size()) {
    throw std::invalid_argument("texts and labels differ in length");
  }
  int max_label = -1;
  for (int y : labels_) {
    if (y < 0) throw std::invalid_argument("negative label");
    max_label = std::max(max_label, y);
  }
  num_classes_ = max_label + 1;
  std::vector<bool> seen(static_cast<std::size_t>(num_classes_));
  for (int y : labels_) seen[static_cast<std::size_t>(y)] = true;
  for (int k = 0; k < num_classes_; ++k) {
    if (!seen[static_cast<std::size_t>(k)]) {
      throw FormatError("non-contiguous labels: class " + std::to_string(k) + " is missing");
    }
  }
  if (num_classes_ < 2) throw std::invalid_argument("dataset needs at least two classes");
}

LabeledDataset LabeledDataset::with_split(Split split) const {
  std::vector<int> owner(size(), 0);
  auto mark = [&](const std::vector<std::size_t>& rows, const char* name) {
    for (auto r : rows) {
      if (r >= size()) throw std::invalid_argument(std::string(name) + " index out of range");
      if (owner[r]++ != 0) {
        throw std::invalid_argument("split lists overlap at row " + std::to_string(r));
      }
    }
  };
  mark(split.train, "train");
  mark(split.dev, "dev");
  mark(split.test, "test");
  mark(split.unused, "unused");
  for (std::size_t r = 0; r < size(); ++r) {
    if (owner[r] == 0) throw std::invalid_argument("split does not cover row " + std::to_string(r));
  }
  LabeledDataset out = *this;
  auto counts = class_counts(split.train);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      throw std::invalid_argument("class " + std::to_string(k) + " absent from train split");
    }
  }
  out.split_ = std::move(split);
  return out;
}

const Split& LabeledDataset::split() const {
  if (!split_) throw std::logic_error("dataset has no split assigned");
  return *split_;
}

std::vector<int> LabeledDataset::labels_at(const std::vector<std::size_t>& rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels_.at(r));
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts(const std::vector<std::size_t>& rows) const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
  for (auto r : rows) ++counts[static_cast<std::size_t>(labels_.at(r))];
  return counts;
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  auto rows = read_rows(path);
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& lab = rows[i].label;
    int y = 0;
    auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), y);
    if (ec != std::errc() || ptr != lab.data() + lab.size()) {
      throw FormatError("row " + std::to_string(i) + ": non-integer label '" + lab + "'");
    }
    labels.push_back(y);
    texts.push_back(std::move(rows[i].text));
  }
  return LabeledDataset(std::move(texts), std::move(labels));
}

LabeledDataset load_dataset_mapped(const std::filesystem::path& path,
                                   const std::filesystem::path& mapping_out) {
  auto rows = read_rows(path);
  std::set<std::string> names;
  for (const auto& r : rows) names.insert(r.label);
  std::map<std::string, int> index;
  {
    std::ofstream out(mapping_out);
    if (!out) throw std::runtime_error("cannot write " + mapping_out.string());
    int next = 0;
    for (const auto& name : names) {
      index[name] = next;
      out << next << '\t' << name << '\n';
      ++next;
    }
  }
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (auto& r : rows) {
    labels.push_back(index.at(r.label));
    texts.push_back(std::move(r.text));
  }
  return LabeledDataset(std::move(texts), std::move(labels));
}

void write_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels()[i] << '\t' << ds.texts()[i] << '\n';
  }
}

LabeledDataset make_split(const LabeledDataset& ds, SplitFractions fractions, std::uint64_t seed,
                          SplitMode mode) {
  if (fractions.train <= 0 || fractions.dev <= 0 || fractions.test <= 0 ||
      std::abs(fractions.train + fractions.dev + fractions.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be positive and sum to 1");
  }
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(n)));
  const auto n_dev = static_cast<std::size_t>(std::llround(fractions.dev * static_cast<double>(n)));
  if (n_train == 0 || n_dev == 0 || n_train + n_dev >= n) {
    throw std::invalid_argument("a split is empty after rounding (n=" + std::to_string(n) + ")");
  }
  const std::vector<std::size_t> sizes{n_train, n_dev, n - n_train - n_dev};

  Rng rng(seed);
  Split split;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);

  if (mode == SplitMode::uniform) {
    rng.shuffle(all);
    split.train.assign(all.begin(), all.begin() + static_cast<long>(sizes[0]));
    split.dev.assign(all.begin() + static_cast<long>(sizes[0]),
                     all.begin() + static_cast<long>(sizes[0] + sizes[1]));
    split.test.assign(all.begin() + static_cast<long>(sizes[0] + sizes[1]), all.end());
  } else {
    auto by_class = rows_by_class(ds, all);
    std::vector<std::size_t> class_sizes;
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      if (by_class[k].size() < 3) {
        throw std::invalid_argument("class " + std::to_string(k) + " has " +
                                    std::to_string(by_class[k].size()) +
                                    " members; cannot stratify into 3 splits");
      }
      class_sizes.push_back(by_class[k].size());
    }
    auto alloc = apportion(class_sizes, sizes);
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      auto& rows = by_class[k];
      rng.shuffle(rows);
      auto it = rows.begin();
      std::vector<std::size_t>* targets[3] = {&split.train, &split.dev, &split.test};
      for (std::size_t s = 0; s < 3; ++s) {
        targets[s]->insert(targets[s]->end(), it, it + static_cast<long>(alloc[k][s]));
        it += static_cast<long>(alloc[k][s]);
      }
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.dev.begin(), split.dev.end());
  std::sort(split.test.begin(), split.test.end());
  return ds.with_split(std::move(split));
}

LabeledDataset subsample_train(const LabeledDataset& ds, std::size_t m, std::uint64_t seed) {
  const Split& current = ds.split();
  if (m < static_cast<std::size_t>(ds.num_classes())) {
    throw std::invalid_argument("subsample size " + std::to_string(m) +
                                " is smaller than the number of classes");
  }
  if (m > current.train.size()) {
    throw std::invalid_argument("subsample size exceeds the train split");
  }
  auto by_class = rows_by_class(ds, current.train);
  std::vector<std::size_t> class_sizes;
  for (const auto& rows : by_class) class_sizes.push_back(rows.size());
  auto alloc = apportion(class_sizes, {m, current.train.size() - m});

  // keep every class represented; borrow from the largest allocation
  for (std::size_t k = 0; k < alloc.size(); ++k) {
    if (alloc[k][0] != 0) continue;
    std::size_t donor = 0;
    for (std::size_t j = 1; j < alloc.size(); ++j) {
      if (alloc[j][0] > alloc[donor][0]) donor = j;
    }
    --alloc[donor][0];
    ++alloc[donor][1];
    ++alloc[k][0];
    --alloc[k][1];
  }

  Rng rng(seed);
  Split split = current;
  split.train.clear();
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto rows = by_class[k];
    rng.shuffle(rows);
    const auto keep = static_cast<long>(alloc[k][0]);
    split.train.insert(split.train.end(), rows.begin(), rows.begin() + keep);
    split.unused.insert(split.unused.end(), rows.begin() + keep, rows.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.unused.begin(), split.unused.end());
  return ds.with_split(std::move(split));
}

void RunConfig::validate() const {
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  auto check = [](const std::vector<double>& grid, const char* name) {
    if (grid.empty()) throw std::invalid_argument(std::string(name) + " is empty");
    for (double v : grid) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string(name) + " values must be positive");
      }
    }
  };
  check(alpha_grid, "alpha_grid");
  check(l2_grid, "l2_grid");
  check(cca_reg_grid, "cca_reg_grid");
  check(kcca_sigma_grid, "kcca_sigma_grid");
  check(kcca_reg_grid, "kcca_reg_grid");
}

}  // namespace embfuse
