#pragma once

#include <stdexcept>

#include "embfuse/embedding.hpp"

namespace embfuse::linalg {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SymEig {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values(i)
};

/// Thin SVD A = U diag(singular_values) Vᵀ with r = min(n, d) columns.
struct SvdResult {
  Matrix U;
  Vector singular_values;  // nonincreasing, nonnegative
  Matrix V;
};

inline constexpr double kDefaultRankTol = 1e-10;

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
/// Throws std::invalid_argument if A deviates from symmetry by more than
/// 1e-10 relative to its largest entry.
SymEig sym_eig(const Matrix& A);

/// Singular vectors are sign-normalized so the largest-magnitude entry of
/// each U column is positive.
SvdResult svd(const Matrix& A);

/// Moore-Penrose pseudo-inverse; singular values at or below
/// rank_tol * sigma_max are treated as zero.
Matrix pseudo_inverse(const Matrix& A, double rank_tol = kDefaultRankTol);

/// Symmetric W = (cov + ridge I)^{-1/2}, so W (cov + ridge I) Wᵀ = I.
/// The ridge is floored at 1e-12; eigenvalues below -1e-8 reject the input.
Matrix whiten(const Matrix& cov, double ridge);

/// Symmetric (S)^{-1/2} from an existing eigendecomposition of S = cov + ridge I.
Matrix inverse_sqrt(const SymEig& eig, double ridge);

double max_abs(const Matrix& A);

}  // namespace embfuse::linalg
