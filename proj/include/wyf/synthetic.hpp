#pragma once

#include "wyf/smms.hpp"

#include <cstdint>

namespace wyf {

// Matrix background whose linearized operator has a prescribed kernel of dimension kernel_dim.
// Built spectrally: Laplacian = -Q diag(lambda) Q^T M with Q mass-orthonormal and Q e_0 = 1.
struct DegenerateSpec {
  int nodes = 14;
  int kernel_dim = 1;
  Params params{2, 2.0};
  // Constant weighted scalar curvature R^m > 0.
  double curvature = 4.0;
  std::uint64_t seed = 1;
};

struct DegenerateBackground {
  Background bg;
  Params params;
  // N x k, orthonormal in the weighted inner product, mean zero.
  Eigen::MatrixXd kernel;
  // Eigenvalues of -Laplacian matching the columns of basis.
  Eigen::VectorXd lambdas;
  Eigen::MatrixXd basis;
};

DegenerateBackground build_degenerate_background(const DegenerateSpec& spec);

}  // namespace wyf
