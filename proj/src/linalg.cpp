#include "embfuse/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace embfuse::linalg {
namespace {

constexpr double kMinRidge = 1e-12;
constexpr double kPsdTolerance = 1e-8;

// below this size Jacobi is affordable and the most accurate choice
constexpr Eigen::Index kJacobiMaxDim = 64;

}  // namespace

double max_abs(const Matrix& A) {
  return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff();
}

SymEig sym_eig(const Matrix& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("sym_eig: matrix is not square");
  const double scale = max_abs(A);
  if (max_abs(A - A.transpose()) > 1e-10 * scale) {
    throw std::invalid_argument("sym_eig: matrix is not symmetric");
  }
  const Eigen::Index d = A.rows();
  SymEig out;
  if (d == 0) return out;
  Matrix sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("sym_eig: eigensolver failed to converge");
  }
  // Eigen returns ascending order
  out.values.resize(d);
  out.vectors.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    out.values(i) = solver.eigenvalues()(d - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(d - 1 - i);
  }
  return out;
}

SvdResult svd(const Matrix& A) {
  if (!A.allFinite()) throw std::invalid_argument("svd: non-finite entries");
  SvdResult out;
  const Eigen::Index r = std::min(A.rows(), A.cols());
  if (r == 0) return out;
  if (std::max(A.rows(), A.cols()) <= kJacobiMaxDim) {
    Eigen::JacobiSVD<Matrix> solver(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success) throw NumericalError("svd: failed to converge");
    out.U = solver.matrixU();
    out.singular_values = solver.singularValues();
    out.V = solver.matrixV();
  } else {
    Eigen::BDCSVD<Matrix> solver(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success) throw NumericalError("svd: failed to converge");
    out.U = solver.matrixU();
    out.singular_values = solver.singularValues();
    out.V = solver.matrixV();
  }
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::Index arg = 0;
    out.U.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.U(arg, j) < 0.0) {
      out.U.col(j) *= -1.0;
      out.V.col(j) *= -1.0;
    }
  }
  return out;
}

Matrix pseudo_inverse(const Matrix& A, double rank_tol) {
  if (!(rank_tol > 0.0)) throw std::invalid_argument("pseudo_inverse: rank_tol must be positive");
  Matrix out = Matrix::Zero(A.cols(), A.rows());
  if (A.size() == 0) return out;
  auto s = svd(A);
  const double sigma_max = s.singular_values.size() ? s.singular_values(0) : 0.0;
  if (sigma_max == 0.0) return out;
  const double cutoff = rank_tol * sigma_max;
  for (Eigen::Index i = 0; i < s.singular_values.size(); ++i) {
    const double sigma = s.singular_values(i);
    if (sigma <= cutoff) break;
    out.noalias() += (s.V.col(i) / sigma) * s.U.col(i).transpose();
  }
  return out;
}

Matrix inverse_sqrt(const SymEig& eig, double ridge) {
  const Eigen::Index d = eig.values.size();
  Vector inv_sqrt(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    inv_sqrt(i) = 1.0 / std::sqrt(std::max(eig.values(i), 0.0) + ridge);
  }
  return eig.vectors * inv_sqrt.asDiagonal() * eig.vectors.transpose();
}

Matrix whiten(const Matrix& cov, double ridge) {
  if (ridge < 0.0 || !std::isfinite(ridge)) {
    throw std::invalid_argument("whiten: ridge must be nonnegative");
  }
  ridge = std::max(ridge, kMinRidge);
  auto eig = sym_eig(cov);
  if (eig.values.size() > 0) {
    const double smallest = eig.values(eig.values.size() - 1);
    const double scale = std::max(1.0, std::abs(eig.values(0)));
    if (smallest < -kPsdTolerance * scale) {
      throw std::invalid_argument("whiten: covariance is not PSD (eigenvalue " +
                                  std::to_string(smallest) + ")");
    }
  }
  return inverse_sqrt(eig, ridge);
}

}  // namespace embfuse::linalg
