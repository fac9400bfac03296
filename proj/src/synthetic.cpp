#include "wyf/synthetic.hpp"

#include <random>

namespace wyf {

DegenerateBackground build_degenerate_background(const DegenerateSpec& spec) {
  const int n = spec.nodes;
  const int k = spec.kernel_dim;
  require(k >= 1 && n >= k + 4, "degenerate background needs nodes >= kernel_dim + 4");
  require(spec.curvature > 0.0, "degenerate background needs positive curvature");
  Params p(spec.params.n, spec.params.m);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.5, 1.5);
  std::normal_distribution<double> gauss;

  Field mass(n);
  for (int i = 0; i < n; ++i) mass[i] = uni(rng);
  mass /= mass.sum();

  Eigen::MatrixXd q(n, n);
  q.col(0).setOnes();
  for (int j = 1; j < n; ++j)
    for (int i = 0; i < n; ++i) q(i, j) = gauss(rng);
  for (int pass = 0; pass < 2; ++pass) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < j; ++i) q.col(j) -= (q.col(i).cwiseProduct(mass).dot(q.col(j))) * q.col(i);
      q.col(j) /= std::sqrt(q.col(j).cwiseProduct(mass).dot(q.col(j)));
    }
  }

  const double target = spec.curvature / (p.n + p.m - 1.0);
  Eigen::VectorXd lambda(n);
  lambda[0] = 0.0;
  for (int j = 1; j <= k; ++j) lambda[j] = target;
  const int rest = n - 1 - k;
  const int below = std::max(1, rest / 3);
  for (int j = 0; j < rest; ++j) {
    const int col = 1 + k + j;
    lambda[col] = j < below ? target * (0.25 + 0.5 * (j + 1.0) / (below + 1.0))
                            : target * (1.5 + 4.0 * (j - below) / std::max(1, rest - below));
  }

  Eigen::MatrixXd m = mass.asDiagonal();
  Eigen::MatrixXd stiffness = m * q * lambda.asDiagonal() * q.transpose() * m;
  stiffness = 0.5 * (stiffness + stiffness.transpose()).eval();
  for (int i = 0; i < n; ++i) stiffness(i, i) -= stiffness.row(i).sum();

  Background bg = build_matrix_background(mass, stiffness, Field::Constant(n, spec.curvature), Field::Zero(n),
                                          p.n);
  return {bg, p, q.middleCols(1, k), lambda, q};
}

}  // namespace wyf
