#include "embfuse/combiner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>

#include "blob_io.hpp"
#include "embfuse/linalg.hpp"

namespace embfuse {
namespace {

void require_rows(const EmbeddingSet& v1, const EmbeddingSet& v2) {
  if (v1.rows() != v2.rows()) {
    throw std::invalid_argument("views differ in row count (" + std::to_string(v1.rows()) +
                                " vs " + std::to_string(v2.rows()) + ")");
  }
}

void require_dim(std::size_t got, Eigen::Index expected, const char* what) {
  if (static_cast<Eigen::Index>(got) != expected) {
    throw std::invalid_argument(std::string(what) + ": dimension " + std::to_string(got) +
                                " does not match fitted dimension " + std::to_string(expected));
  }
}

Matrix centered(const Matrix& x, const Vector& mean) {
  return x.rowwise() - mean.transpose();
}

// Column order for k components: descending singular value, equal values
// ordered by the coordinate index where the left singular vector peaks.
std::vector<Eigen::Index> component_order(const linalg::SvdResult& s, std::size_t k) {
  const Eigen::Index r = s.singular_values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::vector<Eigen::Index> peak(static_cast<std::size_t>(r));
  for (Eigen::Index j = 0; j < r; ++j) s.U.col(j).cwiseAbs().maxCoeff(&peak[static_cast<std::size_t>(j)]);
  const double tie = 1e-12 * std::max(1.0, r ? s.singular_values(0) : 0.0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double sa = s.singular_values(a), sb = s.singular_values(b);
    if (std::abs(sa - sb) > tie) return sa > sb;
    return peak[static_cast<std::size_t>(a)] < peak[static_cast<std::size_t>(b)];
  });
  order.resize(std::min<std::size_t>(k, order.size()));
  return order;
}

Vector column_std(const Matrix& m) {
  Vector out(m.cols());
  const double denom = std::max<Eigen::Index>(m.rows() - 1, 1);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double mean = m.col(j).mean();
    out(j) = std::sqrt((m.col(j).array() - mean).square().sum() / denom);
  }
  return out;
}

}  // namespace

EmbeddingSet cat_combine(const EmbeddingSet& v1, const EmbeddingSet& v2, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  require_rows(v1, v2);
  Matrix out(static_cast<Eigen::Index>(v1.rows()), static_cast<Eigen::Index>(v1.dim() + v2.dim()));
  out.leftCols(static_cast<Eigen::Index>(v1.dim())) = v1.vectors();
  out.rightCols(static_cast<Eigen::Index>(v2.dim())) = alpha * v2.vectors();
  return EmbeddingSet(std::move(out), "cat");
}

CcaCombiner fit_cca(const EmbeddingSet& v1_train, const EmbeddingSet& v2_train, double reg,
                    std::optional<std::size_t> components) {
  require_rows(v1_train, v2_train);
  if (v1_train.rows() < 2) throw std::invalid_argument("fit_cca needs at least 2 rows");
  if (!(reg > 0.0)) throw std::invalid_argument("fit_cca: reg must be positive");
  const std::size_t max_k = std::min(v1_train.dim(), v2_train.dim());
  const std::size_t k = components.value_or(max_k);
  if (k == 0 || k > max_k) throw std::invalid_argument("fit_cca: components must be in [1, min(d1, d2)]");

  CcaCombiner c;
  c.reg = reg;
  c.mean1 = v1_train.vectors().colwise().mean().transpose();
  c.mean2 = v2_train.vectors().colwise().mean().transpose();
  const Matrix x1 = centered(v1_train.vectors(), c.mean1);
  const Matrix x2 = centered(v2_train.vectors(), c.mean2);
  const double denom = static_cast<double>(v1_train.rows() - 1);
  const Matrix c11 = (x1.transpose() * x1) / denom;
  const Matrix c22 = (x2.transpose() * x2) / denom;
  const Matrix c12 = (x1.transpose() * x2) / denom;

  const Matrix w1 = linalg::whiten(c11, reg);
  const Matrix w2 = linalg::whiten(c22, reg);
  const Matrix cross = w1 * c12 * w2;
  if (!cross.allFinite()) throw linalg::NumericalError("fit_cca: degenerate covariance after ridge");
  const auto s = linalg::svd(cross);
  const auto order = component_order(s, k);

  c.phi1.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(v1_train.dim()));
  c.phi2.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(v2_train.dim()));
  c.correlations.resize(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    const auto col = order[i];
    const auto row = static_cast<Eigen::Index>(i);
    c.phi1.row(row) = s.U.col(col).transpose() * w1;
    c.phi2.row(row) = s.V.col(col).transpose() * w2;
    c.correlations(row) = s.singular_values(col);
  }
  const Matrix combined = 0.5 * (x1 * c.phi1.transpose() + x2 * c.phi2.transpose());
  c.output_scale = column_std(combined);
  return c;
}

Matrix cca_project(const CcaCombiner& c, const EmbeddingSet& v, int view) {
  if (view != 1 && view != 2) throw std::invalid_argument("view must be 1 or 2");
  const Matrix& phi = view == 1 ? c.phi1 : c.phi2;
  const Vector& mean = view == 1 ? c.mean1 : c.mean2;
  require_dim(v.dim(), phi.cols(), "cca_project");
  return centered(v.vectors(), mean) * phi.transpose();
}

EmbeddingSet cca_combine(const CcaCombiner& c, const EmbeddingSet& v1, const EmbeddingSet& v2,
                         bool unit_variance) {
  require_rows(v1, v2);
  Matrix out = 0.5 * (cca_project(c, v1, 1) + cca_project(c, v2, 2));
  if (unit_variance) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      if (c.output_scale(j) > 0.0) out.col(j) /= c.output_scale(j);
    }
  }
  return EmbeddingSet(std::move(out), "cca");
}

EmbeddingSet cca_residue(const CcaCombiner& c, const EmbeddingSet& v, int view) {
  if (view != 1 && view != 2) throw std::invalid_argument("view must be 1 or 2");
  const Matrix& phi = view == 1 ? c.phi1 : c.phi2;
  const Vector& mean = view == 1 ? c.mean1 : c.mean2;
  require_dim(v.dim(), phi.cols(), "cca_residue");
  const Matrix x = centered(v.vectors(), mean);
  Matrix r = x - (x * phi.transpose()) * phi;
  return EmbeddingSet(std::move(r), "residue");
}

Matrix gaussian_gram(const Matrix& a, const Matrix& b, double sigma) {
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * a * b.transpose()).colwise() + na;
  d2.rowwise() += nb.transpose();
  const double scale = -1.0 / (2.0 * sigma * sigma);
  return (d2.array().max(0.0) * scale).exp().matrix();
}

namespace {

struct CenteredGram {
  Matrix centered;
  Vector col_mean;
  double mean = 0.0;
};

CenteredGram center_gram(const Matrix& k) {
  CenteredGram g;
  g.col_mean = k.colwise().mean().transpose();
  g.mean = g.col_mean.mean();
  g.centered = k;
  g.centered.rowwise() -= g.col_mean.transpose();
  g.centered.colwise() -= g.col_mean;  // Gram is symmetric: row means equal column means
  g.centered.array() += g.mean;
  g.centered = 0.5 * (g.centered + g.centered.transpose());
  return g;
}

Matrix center_test_gram(const Matrix& k_test, const Vector& train_col_mean, double train_mean) {
  Matrix out = k_test;
  out.rowwise() -= train_col_mean.transpose();
  const Vector row_mean = k_test.rowwise().mean();
  out.colwise() -= row_mean;
  out.array() += train_mean;
  return out;
}

}  // namespace

KccaCombiner fit_kcca(const EmbeddingSet& v1_train, const EmbeddingSet& v2_train, double sigma,
                      double reg, const KccaOptions& options) {
  require_rows(v1_train, v2_train);
  const std::size_t n = v1_train.rows();
  if (n > options.max_rows) {
    throw std::invalid_argument("fit_kcca: " + std::to_string(n) + " rows exceeds kernel cap " +
                                std::to_string(options.max_rows));
  }
  if (n < 2) throw std::invalid_argument("fit_kcca needs at least 2 rows");
  if (!(sigma > 0.0) || !(reg > 0.0)) {
    throw std::invalid_argument("fit_kcca: sigma and reg must be positive");
  }
  const std::size_t max_k = std::min(v1_train.dim(), v2_train.dim());
  const std::size_t k = options.components.value_or(max_k);
  if (k == 0 || k > max_k) throw std::invalid_argument("fit_kcca: components must be in [1, min(d1, d2)]");

  KccaCombiner c;
  c.sigma = sigma;
  c.reg = reg;
  c.train1 = v1_train.vectors();
  c.train2 = v2_train.vectors();

  const Matrix k1 = gaussian_gram(c.train1, c.train1, sigma);
  const Matrix k2 = gaussian_gram(c.train2, c.train2, sigma);
  if (!k1.allFinite() || !k2.allFinite()) {
    throw linalg::NumericalError("fit_kcca: non-finite kernel entries");
  }
  auto g1 = center_gram(k1);
  auto g2 = center_gram(k2);
  c.gram_col_mean1 = g1.col_mean;
  c.gram_col_mean2 = g2.col_mean;
  c.gram_mean1 = g1.mean;
  c.gram_mean2 = g2.mean;

  // With Kc = Q diag(l) Qᵀ: (Kc + reg I)^-1 Kc = Q diag(l / (l + reg)) Qᵀ and
  // (Kc + reg I)^-1 = Q diag(1 / (l + reg)) Qᵀ.
  const auto e1 = linalg::sym_eig(g1.centered);
  const auto e2 = linalg::sym_eig(g2.centered);
  auto shrink = [reg](const linalg::SymEig& e) {
    Vector f = e.values.array().max(0.0);
    return Vector(f.array() / (f.array() + reg));
  };
  auto inverse = [reg](const linalg::SymEig& e) {
    Vector f = e.values.array().max(0.0);
    return Vector(1.0 / (f.array() + reg));
  };
  const Matrix a1 = e1.vectors * shrink(e1).asDiagonal() * e1.vectors.transpose();
  const Matrix a2 = e2.vectors * shrink(e2).asDiagonal() * e2.vectors.transpose();
  const auto s = linalg::svd(a1 * a2);
  const auto order = component_order(s, std::min(k, n));

  const Matrix inv1 = e1.vectors * inverse(e1).asDiagonal() * e1.vectors.transpose();
  const Matrix inv2 = e2.vectors * inverse(e2).asDiagonal() * e2.vectors.transpose();
  const auto kk = static_cast<Eigen::Index>(k);
  const auto nn = static_cast<Eigen::Index>(n);
  Matrix u = Matrix::Zero(nn, kk);
  Matrix v = Matrix::Zero(nn, kk);
  c.correlations = Vector::Zero(kk);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    u.col(col) = s.U.col(order[i]);
    v.col(col) = s.V.col(order[i]);
    c.correlations(col) = s.singular_values(order[i]);
  }
  // components beyond rank n keep zero coefficients and zero correlation
  c.dual1 = inv1 * u;
  c.dual2 = inv2 * v;
  c.variates1 = g1.centered * c.dual1;
  c.variates2 = g2.centered * c.dual2;
  return c;
}

Matrix kcca_project(const KccaCombiner& c, const EmbeddingSet& v, int view) {
  if (view != 1 && view != 2) throw std::invalid_argument("view must be 1 or 2");
  const Matrix& train = view == 1 ? c.train1 : c.train2;
  require_dim(v.dim(), train.cols(), "kcca_project");
  const Matrix k = gaussian_gram(v.vectors(), train, c.sigma);
  const Matrix kc = view == 1 ? center_test_gram(k, c.gram_col_mean1, c.gram_mean1)
                              : center_test_gram(k, c.gram_col_mean2, c.gram_mean2);
  return kc * (view == 1 ? c.dual1 : c.dual2);
}

EmbeddingSet kcca_combine(const KccaCombiner& c, const EmbeddingSet& v1, const EmbeddingSet& v2) {
  require_rows(v1, v2);
  Matrix out = 0.5 * (kcca_project(c, v1, 1) + kcca_project(c, v2, 2));
  return EmbeddingSet(std::move(out), "kcca");
}

// ---- CMB1 serialization ----

namespace {

constexpr std::array<char, 4> kCombinerMagic{'C', 'M', 'B', '1'};
constexpr std::uint32_t kCombinerVersion = 1;

using detail::BlobReader;
using detail::BlobWriter;

}  // namespace

void save_combiner(const Combiner& combiner, const std::filesystem::path& path) {
  BlobWriter w(path, "combiner");
  w.bytes(kCombinerMagic.data(), kCombinerMagic.size());
  w.scalar<std::uint32_t>(kCombinerVersion);
  w.scalar<std::uint8_t>(static_cast<std::uint8_t>(combiner.index()));
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, CatCombiner>) {
          w.scalar<double>(c.alpha);
        } else if constexpr (std::is_same_v<T, CcaCombiner>) {
          w.scalar<double>(c.reg);
          w.matrix(c.phi1);
          w.matrix(c.phi2);
          w.vector(c.mean1);
          w.vector(c.mean2);
          w.vector(c.correlations);
          w.vector(c.output_scale);
        } else {
          w.scalar<double>(c.sigma);
          w.scalar<double>(c.reg);
          w.scalar<double>(c.gram_mean1);
          w.scalar<double>(c.gram_mean2);
          w.matrix(c.train1);
          w.matrix(c.train2);
          w.matrix(c.dual1);
          w.matrix(c.dual2);
          w.matrix(c.variates1);
          w.matrix(c.variates2);
          w.vector(c.gram_col_mean1);
          w.vector(c.gram_col_mean2);
          w.vector(c.correlations);
        }
      },
      combiner);
  w.finish();
}

Combiner load_combiner(const std::filesystem::path& path) {
  BlobReader r(path, "combiner");
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kCombinerMagic) throw FormatError("not a CMB1 combiner blob: " + path.string());
  const auto version = r.scalar<std::uint32_t>();
  if (version != kCombinerVersion) {
    throw FormatError("unsupported combiner version " + std::to_string(version));
  }
  switch (r.scalar<std::uint8_t>()) {
    case 0: {
      CatCombiner c;
      c.alpha = r.scalar<double>();
      return c;
    }
    case 1: {
      CcaCombiner c;
      c.reg = r.scalar<double>();
      c.phi1 = r.matrix();
      c.phi2 = r.matrix();
      c.mean1 = r.vector();
      c.mean2 = r.vector();
      c.correlations = r.vector();
      c.output_scale = r.vector();
      return c;
    }
    case 2: {
      KccaCombiner c;
      c.sigma = r.scalar<double>();
      c.reg = r.scalar<double>();
      c.gram_mean1 = r.scalar<double>();
      c.gram_mean2 = r.scalar<double>();
      c.train1 = r.matrix();
      c.train2 = r.matrix();
      c.dual1 = r.matrix();
      c.dual2 = r.matrix();
      c.variates1 = r.matrix();
      c.variates2 = r.matrix();
      c.gram_col_mean1 = r.vector();
      c.gram_col_mean2 = r.vector();
      c.correlations = r.vector();
      return c;
    }
    default:
      throw FormatError("unknown combiner kind in " + path.string());
  }
}

}  // namespace embfuse
