#pragma once

#include "wyf/core.hpp"

#include <memory>
#include <string>
#include <vector>

namespace wyf {

enum class BackgroundKind { torus, sphere_symmetric, matrix };

std::string to_string(BackgroundKind kind);

// Discretized base manifold. Immutable after construction; copies share the operator backend.
class Background {
 public:
  class Backend {
   public:
    virtual ~Backend() = default;
    virtual Field laplacian(const Field& f) const = 0;
    virtual Field gradient_inner(const Field& f, const Field& h) const = 0;
    virtual Field weighted_laplacian(const Field& f, const Field& phi0) const {
      return laplacian(f) - gradient_inner(phi0, f);
    }
  };

  Background(BackgroundKind kind, int dimension, std::shared_ptr<const Backend> backend,
             Field mass, Field base_scalar_curvature, Field phi0, Eigen::MatrixXd nodes,
             double spectral_radius);

  BackgroundKind kind() const { return kind_; }
  int dimension() const { return dimension_; }
  Index node_count() const { return mass_.size(); }
  const Field& mass() const { return mass_; }
  const Field& base_scalar_curvature() const { return r0_; }
  const Field& phi0() const { return phi0_; }
  // e^{-phi0} sampled at the nodes.
  const Field& density() const { return density_; }
  // Node coordinates: torus x_j, sphere polar angle, matrix node index.
  const Eigen::MatrixXd& nodes() const { return nodes_; }
  double volume() const { return mass_.sum(); }
  // Upper estimate of the largest eigenvalue of -Laplacian.
  double spectral_radius() const { return spectral_radius_ / (scale_ * scale_); }
  double metric_scale() const { return scale_; }

  Field laplacian(const Field& f) const;
  Field gradient_inner(const Field& f, const Field& h) const;
  Field weighted_laplacian(const Field& f) const;
  // Dense matrix of the Laplacian (columns are images of unit vectors).
  Eigen::MatrixXd laplacian_matrix() const;
  Eigen::MatrixXd weighted_laplacian_matrix() const;

  // The same manifold with metric c^2 g.
  Background scaled(double c) const;

 private:
  void check(const Field& f) const;

  BackgroundKind kind_;
  int dimension_;
  std::shared_ptr<const Backend> backend_;
  Field mass_, r0_, phi0_, density_;
  Eigen::MatrixXd nodes_;
  double spectral_radius_;
  double scale_ = 1.0;
};

struct TorusOptions {
  bool dealias = false;
};

// Flat torus [0, 2pi)^n with spectral derivatives. phi0_spec is "expr:..." or "fourier:[[k, amp], ...]"
// (amp * cos(k.x)); an empty string means phi0 = 0.
Background build_torus_background(int n, const std::vector<int>& grid, const std::string& phi0_spec,
                                  const TorusOptions& options = {});

// Round sphere S^n of the given radius restricted to zonal fields f(theta).
Background build_sphere_background(int n, int node_count, double radius = 1.0);

// Round sphere with radius chosen so that the volume is one.
Background build_unit_volume_sphere(int n, int node_count);

double sphere_volume(int n, double radius = 1.0);

// Graph-type background: Laplacian = -mass^{-1} stiffness, gradient_inner by carre du champ.
Background build_matrix_background(const Field& mass, const Eigen::MatrixXd& stiffness,
                                   const Field& r0, const Field& phi0, int dimension = 2);

Field weighted_laplacian(const Background& bg, const Field& f);
double integrate(const Background& bg, const Field& f, bool weighted);
// Inner product and norm of L^2(e^{-phi0} dV).
double inner(const Background& bg, const Field& f, const Field& h);
double l2_norm(const Background& bg, const Field& f);

// Gauss quadrature for the weight (1-x^2)^alpha on [-1, 1] (Golub-Welsch).
void gauss_jacobi(int count, double alpha, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

}  // namespace wyf
