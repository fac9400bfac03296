#pragma once

#include "wyf/smms.hpp"

#include <vector>

namespace wyf {

// L v = (n+m-1) Lap_{phi} v + R^m v at a CWSC unit-volume base.
struct LinearizedOperator {
  Background bg;
  Params params;
  double curvature = 0.0;
  // Dense matrix when N <= 4096, empty otherwise.
  Eigen::MatrixXd matrix;

  Field apply(const Field& v) const;
  bool dense() const { return matrix.size() > 0; }
};

LinearizedOperator assemble_linearized(const Smms& base, double tol_cwsc = 1e-7);

enum class Subspace { kernel, kernel_perp, up, down };

struct SpectralData {
  // delta_i = eigenvalues of -L, ascending.
  Eigen::VectorXd eigenvalues;
  // Columns orthonormal in L^2(e^{-phi} dV).
  Eigen::MatrixXd eigenfields;
  std::vector<Index> kernel_indices;
  // L-eigenvalue > 0 (delta < 0).
  std::vector<Index> up_indices;
  // L-eigenvalue < 0 (delta > 0).
  std::vector<Index> down_indices;
  double tol_kernel = 0.0;
  bool kernel_is_scale_only = false;
  // max over kernel fields of |(n+m-1) mu + R^m| with mu the Rayleigh quotient of Lap_phi.
  double kernel_residual = 0.0;
  // mass * e^{-phi}.
  Field weights;
  double curvature = 0.0;
  int n = 0;
  double m = 0.0;

  Index kernel_dim() const { return static_cast<Index>(kernel_indices.size()); }
  Eigen::MatrixXd kernel_basis() const;
};

SpectralData eigendecompose(const LinearizedOperator& op, double tol_kernel_rel = 1e-8);

// Weighted L^2 projection onto the span of the listed eigenfields.
Field project(const SpectralData& sd, const Field& f, Subspace which);
Eigen::VectorXd coefficients(const SpectralData& sd, const Field& f, const std::vector<Index>& indices);
const std::vector<Index>& indices_of(const SpectralData& sd, Subspace which, std::vector<Index>& scratch);

}  // namespace wyf
