#pragma once

#include "wyf/spectral.hpp"
#include "wyf/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace wyf {

struct ReductionOptions {
  // Trust radius for the kernel argument (weighted L^2 norm).
  double epsilon = 0.1;
  double newton_tol = 1e-10;
  int newton_max_iter = 200;
  // Step for the order-p mixed differences used to recover F_p.
  double fd_step = 1e-2;
  double ray_min = 1e-3;
  double ray_max = 1e-1;
  int ray_points = 9;
  int restarts = 200;
  std::uint64_t seed = 1;
};

struct GraphMapResult {
  // Newton unknown: orthogonal to the kernel and to the constants.
  Field chi;
  // psi - 1 - v with its kernel component removed.
  Field phi;
  // Unit-volume rescaling of 1 + v + phi.
  Field psi;
  double residual = 0.0;
  double residual_scale = 0.0;
  int iterations = 0;
};

struct FSample {
  Eigen::VectorXd coords;
  double value = 0.0;
};

struct ReducedModel {
  Smms base;
  SpectralData sd;
  Eigen::MatrixXd kernel;
  ReductionOptions options;
  double f0 = 0.0;
  // Eigenfields orthogonal to the kernel and the constants, with their eigenvalues of L.
  Eigen::MatrixXd complement;
  Eigen::VectorXd complement_lambdas;

  bool integrable = false;
  int p = 0;
  SymmetricTensor<double> fp;
  std::vector<double> ray_slopes;
  std::vector<FSample> samples;
  double max_residual = 0.0;
  double residual_sum = 0.0;
  long solves = 0;

  Index k() const { return kernel.cols(); }
  double mean_residual() const { return solves ? residual_sum / static_cast<double>(solves) : 0.0; }
  Field field(const Eigen::VectorXd& coords) const { return kernel * coords; }
};

// Rejects kernels that only contain the scale direction.
ReducedModel make_reduced_model(const Smms& base, const SpectralData& sd, const ReductionOptions& options = {});

// Solves proj DE(1 + v + chi) = 0 for chi orthogonal to the kernel and the constants.
GraphMapResult solve_graph_map(const ReducedModel& model, const Eigen::VectorXd& coords);
Field solve_graph_map(const Smms& base, const SpectralData& sd, const Field& v,
                      const ReductionOptions& options = {});

// F(v) = E(1 + v + Phi(v)) = E(Psi(v)).
double reduced_functional(const ReducedModel& model, const Eigen::VectorXd& coords);
// Kernel coordinates of DE(1 + v + Phi(v)); equals DF(v).
Eigen::VectorXd reduced_gradient(const ReducedModel& model, const Eigen::VectorXd& coords);

struct OrderResult {
  bool integrable = false;
  int p = 0;
  SymmetricTensor<double> tensor;
  std::vector<double> slopes;
};

// Fills model.p / model.fp / model.integrable.
OrderResult detect_order_and_tensor(ReducedModel& model);

struct AsResult {
  bool as_p = false;
  Eigen::VectorXd v_hat;
  double max_value = 0.0;
};

// Maximizes F_p on the unit sphere; v_hat is refined to a critical point of F_p restricted to the sphere.
AsResult check_AS_p(const SymmetricTensor<double>& fp, int restarts = 200, std::uint64_t seed = 1);

// Ratio of the recovered cubic term to -(8(n+m+2)/(n+m-2)^2) R int v^3 along each direction.
struct CubicNormalization {
  std::vector<double> ratios;
  double factor = 0.0;
  bool consistent = false;
};
CubicNormalization cubic_normalization(const ReducedModel& model, const std::vector<Eigen::VectorXd>& directions,
                                       double tol = 1e-3);

struct As3Report {
  int n1 = 0, n2 = 0;
  double m = 0.0;
  int n = 0;
  double lambda1 = 0.0;
  double r_fs = 0.0;
  double required_curvature = 0.0;
  double base_volume = 0.0;
  double v3 = 0.0;
  double f3 = 0.0;
  bool as3 = false;
  std::string explanation;
};

As3Report as3_certificate(int n1, int n2, double m, double base_weighted_volume, double v3_integral);
std::string format_report(const As3Report& report);

}  // namespace wyf
