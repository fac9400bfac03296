#include "wyf/spectral.hpp"

#include "wyf/energy.hpp"

#include <algorithm>
#include <cmath>

namespace wyf {

Field LinearizedOperator::apply(const Field& v) const {
  if (dense()) return matrix * v;
  return (params.n + params.m - 1.0) * bg.weighted_laplacian(v) + curvature * v;
}

LinearizedOperator assemble_linearized(const Smms& base, double tol_cwsc) {
  require(sup_norm(base.u().array() - 1.0) == 0.0, "the linearized operator is assembled at u = 1");
  require(std::abs(weighted_volume(base) - 1.0) < 1e-10, "the linearized operator needs a unit-volume base");
  require(is_cwsc(base, tol_cwsc), "base does not have constant weighted scalar curvature");
  LinearizedOperator op{base.bg(), base.params(), mean_curvature(base), {}};
  if (base.bg().node_count() <= 4096) {
    op.matrix = (base.params().n + base.params().m - 1.0) * base.bg().weighted_laplacian_matrix();
    op.matrix.diagonal().array() += op.curvature;
  }
  return op;
}

Eigen::MatrixXd SpectralData::kernel_basis() const {
  Eigen::MatrixXd k(eigenfields.rows(), kernel_dim());
  for (Index j = 0; j < kernel_dim(); ++j) k.col(j) = eigenfields.col(kernel_indices[j]);
  return k;
}

SpectralData eigendecompose(const LinearizedOperator& op, double tol_kernel_rel) {
  require(op.dense(), "dense eigensolve is limited to N <= 4096");
  const Background& bg = op.bg;
  const Index n = bg.node_count();
  SpectralData sd;
  sd.weights = bg.mass().cwiseProduct(bg.density());
  sd.curvature = op.curvature;
  sd.n = op.params.n;
  sd.m = op.params.m;
  const Eigen::VectorXd s = sd.weights.array().sqrt();
  Eigen::MatrixXd sym = s.asDiagonal() * op.matrix * s.cwiseInverse().asDiagonal();
  sym = 0.5 * (sym + sym.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("eigensolve failed");
  // L-eigenvalues ascending -> delta = -lambda ascending after reversal.
  sd.eigenvalues = -es.eigenvalues().reverse();
  sd.eigenfields = s.cwiseInverse().asDiagonal() * es.eigenvectors().rowwise().reverse();
  const double scale = sd.eigenvalues.cwiseAbs().maxCoeff();
  sd.tol_kernel = tol_kernel_rel * std::max(scale, 1e-300);
  for (Index i = 0; i < n; ++i) {
    const double d = sd.eigenvalues[i];
    if (std::abs(d) < sd.tol_kernel) sd.kernel_indices.push_back(i);
    else if (d < 0.0) sd.up_indices.push_back(i);
    else sd.down_indices.push_back(i);
  }
  // Modified Gram-Schmidt on the kernel block in the weighted inner product.
  for (std::size_t a = 0; a < sd.kernel_indices.size(); ++a) {
    auto col = sd.eigenfields.col(sd.kernel_indices[a]);
    for (std::size_t b = 0; b < a; ++b) {
      auto prev = sd.eigenfields.col(sd.kernel_indices[b]);
      col -= (prev.cwiseProduct(sd.weights).dot(col)) * prev;
    }
    col /= std::sqrt(col.cwiseProduct(sd.weights).dot(col));
  }
  const double nm1 = op.params.n + op.params.m - 1.0;
  for (Index i : sd.kernel_indices) {
    const Field v = sd.eigenfields.col(i);
    const double mu = inner(bg, bg.weighted_laplacian(v), v) / inner(bg, v, v);
    sd.kernel_residual = std::max(sd.kernel_residual, std::abs(nm1 * mu + op.curvature));
  }
  if (sd.kernel_residual > sd.tol_kernel) {
    throw NumericalError("kernel fields fail the Laplacian eigenvalue relation by " +
                         std::to_string(sd.kernel_residual));
  }
  if (sd.kernel_dim() == 1) {
    const Field v = sd.eigenfields.col(sd.kernel_indices[0]);
    sd.kernel_is_scale_only = sup_norm(v.array() - v.mean()) < 1e-8 * sup_norm(v);
  }
  return sd;
}

const std::vector<Index>& indices_of(const SpectralData& sd, Subspace which, std::vector<Index>& scratch) {
  switch (which) {
    case Subspace::kernel: return sd.kernel_indices;
    case Subspace::up: return sd.up_indices;
    case Subspace::down: return sd.down_indices;
    case Subspace::kernel_perp:
      scratch = sd.up_indices;
      scratch.insert(scratch.end(), sd.down_indices.begin(), sd.down_indices.end());
      std::sort(scratch.begin(), scratch.end());
      return scratch;
  }
  return scratch;
}

Eigen::VectorXd coefficients(const SpectralData& sd, const Field& f, const std::vector<Index>& indices) {
  const Field wf = sd.weights.cwiseProduct(f);
  Eigen::VectorXd c(static_cast<Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) c[static_cast<Index>(j)] = sd.eigenfields.col(indices[j]).dot(wf);
  return c;
}

Field project(const SpectralData& sd, const Field& f, Subspace which) {
  require(f.size() == sd.eigenfields.rows(), "field size does not match the spectral data");
  if (which == Subspace::kernel_perp) return f - project(sd, f, Subspace::kernel);
  std::vector<Index> scratch;
  const auto& idx = indices_of(sd, which, scratch);
  const Eigen::VectorXd c = coefficients(sd, f, idx);
  Field out = Field::Zero(f.size());
  for (std::size_t j = 0; j < idx.size(); ++j) out += c[static_cast<Index>(j)] * sd.eigenfields.col(idx[j]);
  return out;
}

}  // namespace wyf
