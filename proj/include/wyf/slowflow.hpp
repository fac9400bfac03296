#pragma once

#include "wyf/reduction.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

namespace wyf {

// t_i = t_scale (exp(sigma_i) - 1) with sigma uniform: points_per_decade per decade once t >> t_scale.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, int points_per_decade = 64, double t_scale = 1.0);

  Index size() const { return t_.size(); }
  const Eigen::VectorXd& t() const { return t_; }
  const Eigen::VectorXd& sigma() const { return sigma_; }
  double step() const { return h_; }
  double t_scale() const { return t_scale_; }
  double horizon() const { return t_[t_.size() - 1]; }

  // d/dt along each row (rows are components, columns are grid points); 7-point stencils in sigma.
  Eigen::MatrixXd derivative(const Eigen::MatrixXd& path) const;
  Eigen::VectorXd derivative(const Eigen::VectorXd& f) const;

 private:
  double h_ = 0.0;
  double t_scale_ = 1.0;
  Eigen::VectorXd sigma_, t_;
};

// Finite-difference weights of the given derivative order at x0 (Fornberg).
Eigen::VectorXd fd_weights(const Eigen::VectorXd& nodes, double x0, int order);

struct SlowModel {
  int k = 0;
  int p = 0;
  SymmetricTensor<double> fp;
  Eigen::VectorXd v_hat;
  // n + m - 2.
  double nm2 = 2.0;
  double gamma = 0.0;
  double T = 0.0;
  TimeGrid grid;
  // (8/(nm2 p (p-2) F_p(v_hat))) D^2 F_p(v_hat), its eigenvalues and orthonormal eigenvectors.
  Eigen::MatrixXd d_matrix;
  Eigen::VectorXd mu;
  Eigen::MatrixXd e;
  // delta_i of the modes orthogonal to the kernel; u_i' + delta_i u_i = E_i.
  Eigen::VectorXd deltas;
  double ansatz_constant = 0.0;

  // Per-mode panel weights of the exponential integrator: weights[mode](panel, j) with stencil starts.
  std::vector<Eigen::MatrixXd> heat_weights;
  std::vector<int> heat_stencil;
  // Panel weights for plain integrals in sigma.
  Eigen::MatrixXd panel_weights;

  double kappa() const { return nm2 / 8.0; }
  Index perp_dim() const { return deltas.size(); }
};

SlowModel make_slow_model(const SymmetricTensor<double>& fp, const Eigen::VectorXd& v_hat, double nm2, double gamma,
                          double T, const Eigen::VectorXd& deltas, double horizon = 1e6,
                          int points_per_decade = 64);

Eigen::VectorXd ansatz_phi(const SlowModel& model, double t);
// (8/(n+m-2)) phi' + DF_p(phi).
Eigen::VectorXd ansatz_residual(const SlowModel& model, double t);
// k x N path of the ansatz on the grid.
Eigen::MatrixXd ansatz_path(const SlowModel& model);

struct KernelSolution {
  Eigen::MatrixXd path;
  // Per eigen-direction: true if solved backward from infinity.
  std::vector<bool> backward;
  // Power-law exponent of |E_i| over the last decade of the grid.
  Eigen::VectorXd envelope;
  // Analytic tail beyond the horizon relative to the full integral at t = 0.
  double tail_fraction = 0.0;
};

// (8/(n+m-2)) v_i' + (mu_i/(T+t)) v_i = E_i in the eigenbasis of D; forcing is k x N in the standard basis.
KernelSolution solve_kernel_ode(const SlowModel& model, const Eigen::MatrixXd& forcing);
// (8/(n+m-2)) u' + D u/(T+t) - E, pointwise.
Eigen::MatrixXd kernel_ode_residual(const SlowModel& model, const Eigen::MatrixXd& path,
                                    const Eigen::MatrixXd& forcing);

// u_i' + delta_i u_i = E_i; decaying modes start from 0, growing modes are integrated back from infinity.
Eigen::MatrixXd solve_orthogonal_heat(const SlowModel& model, const Eigen::MatrixXd& forcing);
Eigen::MatrixXd heat_residual(const SlowModel& model, const Eigen::MatrixXd& path, const Eigen::MatrixXd& forcing);

// sup_i (T+t_i)^q |col_i|.
double weighted_sup(const SlowModel& model, const Eigen::MatrixXd& path, double q);
// Kernel part: C^0_gamma + C^0_{1+gamma} of the derivative.
double kernel_norm(const SlowModel& model, const Eigen::MatrixXd& path);
// Orthogonal part: C^0_{1+gamma} with each mode weighted by 1 + |delta_i| (second-derivative proxy).
double perp_norm(const SlowModel& model, const Eigen::MatrixXd& path);
double star_norm(const SlowModel& model, const Eigen::MatrixXd& w_top, const Eigen::MatrixXd& w_perp);

struct ErrorTerms {
  Eigen::MatrixXd top;
  Eigen::MatrixXd perp;
};
using ErrorFunctional = std::function<ErrorTerms(const Eigen::MatrixXd& w_top, const Eigen::MatrixXd& w_perp)>;

// Explicit nonlinear functionals with the envelopes of the projected-flow error bounds; s = (T+t)^{-1/(p-2)}.
//   E_top  = c [s^p a + s^{p-1} w + s^{p-3} |w_top| w_top + |w_top|^{p-2} w_top + (s + |w|) B w_perp]
//   E_perp = c [(s + |w|)(s^{p-1} b + C w_top') + (s + |w|) w_perp]
struct SyntheticErrors {
  double coupling = 1.0;
  Eigen::VectorXd a;
  Eigen::MatrixXd B;
  Eigen::VectorXd b;
  Eigen::MatrixXd C;
};
SyntheticErrors make_synthetic_errors(int k, Index perp_dim, double coupling, std::uint64_t seed);
ErrorTerms evaluate_synthetic_errors(const SlowModel& model, const SyntheticErrors& errors,
                                     const Eigen::MatrixXd& w_top, const Eigen::MatrixXd& w_perp);

// Geometric mode: kernel coordinates from the reduction, all other eigenfields as orthogonal modes.
struct GeometricSystem {
  const ReducedModel* reduction = nullptr;
  Eigen::MatrixXd perp_fields;
  Eigen::VectorXd deltas;
};
GeometricSystem make_geometric_system(const ReducedModel& reduction);

struct GeometricState {
  // Unit-volume fields u(t_i) as columns.
  Eigen::MatrixXd u;
  // Phi(phi + w_top) as columns (graph-map unknown).
  Eigen::MatrixXd graph;
  // 1 + phi + w_top + Phi + w_perp, i.e. u divided by its weighted mean.
  Eigen::MatrixXd shape;
};
GeometricState assemble_geometric(const SlowModel& model, const GeometricSystem& sys, const Eigen::MatrixXd& w_top,
                                  const Eigen::MatrixXd& w_perp);
// Projected-flow error terms for u proportional to 1 + phi + w_top + Phi(phi + w_top) + w_perp.
// The constant field is not a mode: the scale is fixed by unit volume.
ErrorTerms error_terms(const SlowModel& model, const GeometricSystem& sys, const Eigen::MatrixXd& w_top,
                       const Eigen::MatrixXd& w_perp);
// Splits fields u(t_i), divided by their weighted means, into (w_top, w_perp) relative to the ansatz.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> decompose(const SlowModel& model, const GeometricSystem& sys,
                                                      const Eigen::MatrixXd& u);

struct ContractOptions {
  double tol = 1e-8;
  int max_iter = 200;
};

struct ContractResult {
  Eigen::MatrixXd w_top;
  Eigen::MatrixXd w_perp;
  double rho = 0.0;
  int iterations = 0;
  double final_step = 0.0;
  double w_norm = 0.0;
  std::vector<double> steps;
};

// Fixed point of w -> S(w) from w = 0.
ContractResult contract(const SlowModel& model, const ErrorFunctional& errors, const ContractOptions& options = {});

struct SlowTrajectory {
  std::vector<double> t, dev_sup, phi_norm, wtop_norm, wperp_norm;
  // Energy gap and gradient norm for the Lojasiewicz probe.
  std::vector<double> energy_gap, gradient_norm;
};

// Synthetic realization: kernel and orthogonal coordinates placed on an orthonormal cosine basis over 64 nodes.
SlowTrajectory synthetic_trajectory(const SlowModel& model, const ContractResult& fixed_point);
SlowTrajectory geometric_trajectory(const SlowModel& model, const GeometricSystem& sys,
                                    const ContractResult& fixed_point);
void write_slowflow_csv(std::ostream& out, const SlowTrajectory& traj);

}  // namespace wyf
