#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "embfuse/classifier.hpp"
#include "embfuse/rng.hpp"
#include "embfuse/text_cnn.hpp"

namespace embfuse::testing {

// Central-difference comparison of the analytic text-CNN gradient.
//
// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
// coordinates whose true gradient is near zero from dividing by round-off.
struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradientCheckOptions {
  double step = 1e-4;
  double floor = 1e-6;
  std::size_t max_coords = 0;  // 0 checks every coordinate; otherwise a seeded sample
  std::uint64_t seed = 0;
  double l2 = 1e-3;
};

inline double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline std::vector<TensorCheck> check_cnn_gradients(const TextCnn& cnn, const LinearClassifier& head,
                                                    const CnnBatch& batch,
                                                    const GradientCheckOptions& opt) {
  const CnnLoss analytic = cnn_forward_backward(cnn, head, batch, opt.l2, false, nullptr);
  std::vector<TensorCheck> out;
  Rng rng(opt.seed);

  auto check = [&](const std::string& name, std::size_t size, const double* grad,
                   const std::function<double&(TextCnn&, LinearClassifier&, std::size_t)>& param,
                   std::vector<std::size_t> coords = {}) {
    TensorCheck t{name};
    if (coords.empty()) {
      coords.resize(size);
      for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    }
    if (opt.max_coords > 0 && size > opt.max_coords) {
      rng.shuffle(coords);
      coords.resize(opt.max_coords);
    }
    TextCnn c = cnn;
    LinearClassifier h = head;
    for (std::size_t i : coords) {
      double& p = param(c, h, i);
      const double orig = p;
      p = orig + opt.step;
      const double up = cnn_loss(c, h, batch, opt.l2, false, nullptr);
      p = orig - opt.step;
      const double down = cnn_loss(c, h, batch, opt.l2, false, nullptr);
      p = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double err = relative_error(grad[i], numeric, opt.floor);
      if (err >= t.max_rel_error) {
        t.max_rel_error = err;
        t.worst_analytic = grad[i];
        t.worst_numeric = numeric;
      }
      ++t.checked;
    }
    out.push_back(t);
  };

  const auto& g = analytic.grads;
  check("head_weights", static_cast<std::size_t>(g.head_weights.size()), g.head_weights.data(),
        [](TextCnn&, LinearClassifier& h, std::size_t i) -> double& { return h.weights.data()[i]; });
  check("head_bias", static_cast<std::size_t>(g.head_bias.size()), g.head_bias.data(),
        [](TextCnn&, LinearClassifier& h, std::size_t i) -> double& { return h.bias.data()[i]; });
  for (std::size_t j = 0; j < cnn.filters.size(); ++j) {
    check("filters_w" + std::to_string(cnn.config.widths[j]), static_cast<std::size_t>(g.filters[j].size()),
          g.filters[j].data(),
          [j](TextCnn& c, LinearClassifier&, std::size_t i) -> double& { return c.filters[j].data()[i]; });
    check("biases_w" + std::to_string(cnn.config.widths[j]), static_cast<std::size_t>(g.biases[j].size()),
          g.biases[j].data(),
          [j](TextCnn& c, LinearClassifier&, std::size_t i) -> double& { return c.biases[j].data()[i]; });
  }
  if (embeddings_trainable(cnn.mode)) {
    // when sampling, draw from rows the batch touches (padding included); other rows are exactly zero
    std::vector<std::size_t> coords;
    if (opt.max_coords > 0) {
      std::vector<bool> used(cnn.vocab_size(), false);
      used[static_cast<std::size_t>(Vocabulary::kPad)] = true;
      for (const auto& s : batch.tokens) {
        for (int t : s) used[static_cast<std::size_t>(t)] = true;
      }
      const auto e = static_cast<std::size_t>(cnn.embeddings.cols());
      for (std::size_t r = 0; r < used.size(); ++r) {
        if (!used[r]) continue;
        for (std::size_t c = 0; c < e; ++c) coords.push_back(r * e + c);
      }
    }
    check("embeddings", static_cast<std::size_t>(g.embeddings.size()), g.embeddings.data(),
          [](TextCnn& c, LinearClassifier&, std::size_t i) -> double& { return c.embeddings.data()[i]; },
          coords);
  }
  return out;
}

// Static mode must hand the optimizer no embedding update at all.
inline bool embedding_gradient_is_zero(const CnnGradients& g) {
  return g.embeddings.size() == 0 || (g.embeddings.array() == 0.0).all();
}

}  // namespace embfuse::testing
