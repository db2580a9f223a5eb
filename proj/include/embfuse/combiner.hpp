#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <variant>

#include "embfuse/embedding.hpp"

namespace embfuse {

/// Concatenation [v1, alpha * v2].
struct CatCombiner {
  double alpha = 1.0;
};

/// Row i of the output is [v1_i, alpha * v2_i]; throws on row-count mismatch
/// or non-positive alpha.
EmbeddingSet cat_combine(const EmbeddingSet& v1, const EmbeddingSet& v2, double alpha);

/// Regularized linear CCA fitted on training rows.
///
/// `phi1` (k x d1) and `phi2` (k x d2) map centered views to canonical
/// variates; rows are ordered by descending canonical correlation. k defaults
/// to min(d1, d2).
struct CcaCombiner {
  Matrix phi1;
  Matrix phi2;
  Vector mean1;
  Vector mean2;
  Vector correlations;
  double reg = 0.0;
  /// Training standard deviation of each combined output coordinate; used
  /// only by the optional unit-variance rescaling.
  Vector output_scale;

  [[nodiscard]] std::size_t components() const { return static_cast<std::size_t>(phi1.rows()); }
};

/// Centers both views with their training means, ridge-whitens each
/// covariance, and takes the SVD of the whitened cross-covariance.
/// `components` overrides the default min(d1, d2).
CcaCombiner fit_cca(const EmbeddingSet& v1_train, const EmbeddingSet& v2_train, double reg,
                    std::optional<std::size_t> components = std::nullopt);

/// Row i = 0.5 * phi1 (v1_i - mean1) + 0.5 * phi2 (v2_i - mean2).
EmbeddingSet cca_combine(const CcaCombiner& c, const EmbeddingSet& v1, const EmbeddingSet& v2,
                         bool unit_variance = false);

/// Canonical variates of one view, phi_view (v - mean_view).
Matrix cca_project(const CcaCombiner& c, const EmbeddingSet& v, int view);

/// Residue v_c - phiᵀ phi v_c of the centered view (view is 1 or 2).
EmbeddingSet cca_residue(const CcaCombiner& c, const EmbeddingSet& v, int view);

inline constexpr std::size_t kDefaultKernelCap = 4000;

struct KccaOptions {
  std::optional<std::size_t> components;
  std::size_t max_rows = kDefaultKernelCap;
};

/// Regularized Gaussian-kernel CCA in dual form.
///
/// Kernel k(x, y) = exp(-|x - y|^2 / (2 sigma^2)). Gram matrices are
/// double-centered; both blocks use the same ridge. Training points are kept
/// for out-of-sample projection.
struct KccaCombiner {
  Matrix train1;
  Matrix train2;
  Matrix dual1;  // n x k
  Matrix dual2;
  Matrix variates1;  // training canonical variates, n x k
  Matrix variates2;
  Vector gram_col_mean1;  // column means of the uncentered training Gram matrix
  Vector gram_col_mean2;
  double gram_mean1 = 0.0;
  double gram_mean2 = 0.0;
  double sigma = 1.0;
  double reg = 1e-3;
  Vector correlations;

  [[nodiscard]] std::size_t components() const { return static_cast<std::size_t>(dual1.cols()); }
};

KccaCombiner fit_kcca(const EmbeddingSet& v1_train, const EmbeddingSet& v2_train, double sigma,
                      double reg, const KccaOptions& options = {});

/// Projection of new points of one view through the retained training set.
Matrix kcca_project(const KccaCombiner& c, const EmbeddingSet& v, int view);

/// Row i = 0.5 * proj1(v1_i) + 0.5 * proj2(v2_i).
EmbeddingSet kcca_combine(const KccaCombiner& c, const EmbeddingSet& v1, const EmbeddingSet& v2);

Matrix gaussian_gram(const Matrix& a, const Matrix& b, double sigma);

using Combiner = std::variant<CatCombiner, CcaCombiner, KccaCombiner>;

/// Versioned binary blob, magic "CMB1".
void save_combiner(const Combiner& combiner, const std::filesystem::path& path);
Combiner load_combiner(const std::filesystem::path& path);

}  // namespace embfuse
