#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "wyf/geometry.hpp"

#include <cmath>
#include <random>

using namespace wyf;
using testing_support::adaptive_quadrature;
using testing_support::sample;

TEST_CASE("torus: constants are harmonic") {
  Background bg = build_torus_background(1, {16}, "");
  CHECK(sup_norm(bg.laplacian(Field::Constant(16, 3.0))) < 1e-12);
}

TEST_CASE("torus: cos x1 is an eigenfunction") {
  Background bg = build_torus_background(2, {32, 32}, "");
  Field f = sample(bg, [](const double* x) { return std::cos(x[0]); });
  CHECK(sup_norm(bg.laplacian(f) + f) < 1e-12);
  CHECK(std::abs(integrate(bg, Field::Ones(bg.node_count()), false) - 4.0 * M_PI * M_PI) < 1e-12);
}

TEST_CASE("torus: every resolved Fourier mode is exact") {
  Background bg = build_torus_background(2, {16, 16}, "");
  double worst = 0.0;
  for (int k1 = -7; k1 <= 7; ++k1) {
    for (int k2 = -7; k2 <= 7; ++k2) {
      Field c = sample(bg, [&](const double* x) { return std::cos(k1 * x[0] + k2 * x[1]); });
      Field s = sample(bg, [&](const double* x) { return std::sin(k1 * x[0] + k2 * x[1]); });
      const double k2n = double(k1) * k1 + double(k2) * k2;
      worst = std::max(worst, sup_norm(bg.laplacian(c) + k2n * c) / std::max(1.0, k2n));
      worst = std::max(worst, sup_norm(bg.laplacian(s) + k2n * s) / std::max(1.0, k2n));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("torus: weighted measure against adaptive quadrature") {
  Background bg = build_torus_background(2, {32, 32}, "expr:0.3*cos(x1)");
  const double oracle =
      2.0 * M_PI * adaptive_quadrature([](double x) { return std::exp(-0.3 * std::cos(x)); }, 0.0, 2.0 * M_PI);
  CHECK(std::abs(integrate(bg, Field::Ones(bg.node_count()), true) - oracle) < 1e-10);
  Field c = sample(bg, [](const double* x) { return std::cos(x[0]); });
  const double oracle_c = 2.0 * M_PI * adaptive_quadrature(
                                           [](double x) { return std::cos(x) * std::exp(-0.3 * std::cos(x)); },
                                           0.0, 2.0 * M_PI);
  CHECK(std::abs(integrate(bg, c, true) - oracle_c) < 1e-10);
}

TEST_CASE("torus: constant density and the fourier grammar") {
  Background bg = build_torus_background(2, {16, 16}, "expr:0.7");
  CHECK(std::abs(integrate(bg, Field::Ones(bg.node_count()), true) - 4.0 * M_PI * M_PI * std::exp(-0.7)) < 1e-11);
  Background a = build_torus_background(2, {16, 16}, "fourier:[[[1,0],0.3],[[0,2],-0.1]]");
  Background b = build_torus_background(2, {16, 16}, "expr:0.3*cos(x1)-0.1*cos(2*x2)");
  CHECK(sup_norm(a.phi0() - b.phi0()) < 1e-15);
}

TEST_CASE("torus: weighted Laplacian against symbolic derivatives") {
  Background bg = build_torus_background(2, {32, 32}, "expr:0.3*cos(x1)");
  Field f = sample(bg, [](const double* x) { return std::sin(x[0]); });
  Field oracle = sample(bg, [](const double* x) {
    // Lap sin x1 = -sin x1; grad phi0 . grad f = (-0.3 sin x1)(cos x1).
    return -std::sin(x[0]) + 0.3 * std::sin(x[0]) * std::cos(x[0]);
  });
  CHECK(sup_norm(weighted_laplacian(bg, f) - oracle) < 1e-10);
  CHECK(sup_norm(weighted_laplacian(bg, Field::Constant(bg.node_count(), 2.0))) < 1e-12);
  Background flat = build_torus_background(2, {32, 32}, "");
  CHECK(sup_norm(weighted_laplacian(flat, f) - flat.laplacian(f)) == 0.0);
}

TEST_CASE("torus: grid and aliasing validation") {
  CHECK_THROWS_AS(build_torus_background(2, {6, 32}, ""), ValidationError);
  CHECK_THROWS_AS(build_torus_background(1, {17}, ""), ValidationError);
  CHECK_THROWS_AS(build_torus_background(1, {32}, "expr:cos(14*x1)"), ValidationError);
  CHECK_THROWS_AS(build_torus_background(1, {32}, "expr:cos(x3)"), ValidationError);
  CHECK_NOTHROW(build_torus_background(1, {32}, "expr:cos(9*x1)"));
}

TEST_CASE("sphere: zonal harmonics and area") {
  Background s3 = build_sphere_background(3, 40);
  Field c = sample(s3, [](const double* t) { return std::cos(t[0]); });
  CHECK(sup_norm(s3.laplacian(c) + 3.0 * c) < 1e-10);
  Background s2 = build_sphere_background(2, 40);
  CHECK(std::abs(s2.volume() - 4.0 * M_PI) < 1e-10);
  CHECK(std::abs(s3.volume() - 2.0 * M_PI * M_PI) < 1e-10);
  Background s4 = build_sphere_background(4, 40);
  CHECK(std::abs(s4.volume() - 8.0 * M_PI * M_PI / 3.0) < 1e-10);
}

TEST_CASE("sphere: degree-2 harmonic against a finite-difference Laplacian") {
  Background s3 = build_sphere_background(3, 48);
  auto f = [](double t) { return std::cos(t) * std::cos(t) - 1.0 / 3.0; };
  Field fv = sample(s3, [&](const double* t) { return f(t[0]); });
  Field lap = s3.laplacian(fv);
  const double h = 1e-4;
  double worst_fd = 0.0;
  for (Index i = 0; i < s3.node_count(); ++i) {
    const double t = s3.nodes()(i, 0);
    const double d2 = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
    const double d1 = (f(t + h) - f(t - h)) / (2.0 * h);
    const double fd = d2 + 2.0 * std::cos(t) / std::sin(t) * d1;
    worst_fd = std::max(worst_fd, std::abs(lap[i] - fd));
  }
  CHECK(worst_fd < 1e-5);
  // On S^3 the zonal degree-2 harmonic is cos^2 - 1/4; cos^2 - 1/3 differs from it by a constant.
  CHECK(sup_norm(lap + 8.0 * fv + Field::Constant(fv.size(), 2.0 / 3.0)) < 1e-8);
  Field y = fv.array() + (1.0 / 3.0 - 0.25);
  CHECK(sup_norm(s3.laplacian(y) + 8.0 * y) < 1e-8);
}

TEST_CASE("sphere: odd dimension quadrature is exact for polynomials") {
  Background s3 = build_sphere_background(3, 32);
  // int_{S^3} cos^2 theta = 4 pi int_0^pi cos^2 sin^2 = pi^2 / 2.
  Field c2 = sample(s3, [](const double* t) { return std::cos(t[0]) * std::cos(t[0]); });
  CHECK(std::abs(integrate(s3, c2, false) - M_PI * M_PI / 2.0) < 1e-12);
  CHECK_THROWS_AS(build_sphere_background(3, 16), ValidationError);
}

TEST_CASE("matrix: zero stiffness and the path graph") {
  Field mass = Field::Ones(4);
  Background zero = build_matrix_background(mass, Eigen::MatrixXd::Zero(4, 4), Field::Zero(4), Field::Zero(4));
  Field f(4);
  f << 1.0, -2.0, 0.5, 3.0;
  CHECK(sup_norm(zero.laplacian(f)) == 0.0);
  CHECK(sup_norm(zero.gradient_inner(f, f)) == 0.0);
  Eigen::MatrixXd k(4, 4);
  k << 1, -1, 0, 0, -1, 2, -1, 0, 0, -1, 2, -1, 0, 0, -1, 1;
  Background path = build_matrix_background(mass, k, Field::Zero(4), Field::Zero(4));
  Field e0 = Field::Zero(4);
  e0[0] = 1.0;
  Field expect(4);
  expect << -1.0, 1.0, 0.0, 0.0;
  CHECK(sup_norm(path.laplacian(e0) - expect) == 0.0);
}

TEST_CASE("matrix: validation") {
  Field mass = Field::Ones(3);
  Eigen::MatrixXd asym(3, 3);
  asym << 1, -1, 0, -0.5, 0.5, 0, 0, 0, 0;
  CHECK_THROWS_AS(build_matrix_background(mass, asym, Field::Zero(3), Field::Zero(3)), ValidationError);
  Eigen::MatrixXd rows = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(build_matrix_background(mass, rows, Field::Zero(3), Field::Zero(3)), ValidationError);
}

TEST_CASE("matrix: carre du champ of a graph Laplacian is nonnegative") {
  std::mt19937_64 rng(7);
  const int n = 12;
  Eigen::MatrixXd k = testing_support::random_graph_laplacian(n, rng);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
  std::uniform_real_distribution<double> uni(0.5, 2.0);
  Field mass(n);
  for (int i = 0; i < n; ++i) mass[i] = uni(rng);
  Background bg = build_matrix_background(mass, k, Field::Zero(n), Field::Zero(n));
  std::normal_distribution<double> gauss;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Field f(n);
    for (int i = 0; i < n; ++i) f[i] = gauss(rng);
    worst = std::min(worst, bg.gradient_inner(f, f).minCoeff());
  }
  CHECK(worst >= -1e-12);
}

namespace {

struct Checks {
  double self_adjoint = 0.0, weighted_self_adjoint = 0.0, green = 0.0, constants = 0.0, grad_const = 0.0,
         grad_neg = 0.0;
};

Checks run_invariants(const Background& bg, const std::function<Field()>& draw) {
  Checks c;
  const double scale = bg.spectral_radius();
  c.constants = sup_norm(bg.laplacian(Field::Ones(bg.node_count()))) / scale;
  for (int trial = 0; trial < 50; ++trial) {
    Field f = draw(), h = draw();
    const double nf = std::sqrt(integrate(bg, f.cwiseProduct(f), false));
    const double nh = std::sqrt(integrate(bg, h.cwiseProduct(h), false));
    c.self_adjoint = std::max(c.self_adjoint, std::abs(integrate(bg, bg.laplacian(f).cwiseProduct(h), false) -
                                                       integrate(bg, f.cwiseProduct(bg.laplacian(h)), false)) /
                                                  (nf * nh));
    const double a = inner(bg, bg.weighted_laplacian(f), h), b = inner(bg, f, bg.weighted_laplacian(h));
    c.weighted_self_adjoint = std::max(c.weighted_self_adjoint, std::abs(a - b) / (l2_norm(bg, f) * l2_norm(bg, h)));
    const double g = integrate(bg, bg.gradient_inner(f, h), true);
    c.green = std::max(c.green, std::abs(g + b) / std::max(std::abs(b), 1e-300));
    c.grad_const = std::max(c.grad_const, sup_norm(bg.gradient_inner(Field::Constant(bg.node_count(), 2.5), f)));
    c.grad_neg = std::min(c.grad_neg, bg.gradient_inner(f, f).minCoeff());
  }
  return c;
}

}  // namespace

TEST_CASE("invariants: every backend") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss;

  Background torus = build_torus_background(2, {32, 32}, "expr:0.3*cos(x1)");
  Checks t = run_invariants(torus, [&] { return testing_support::random_torus_field(torus, 8, rng); });
  CHECK(t.constants < 1e-10);
  CHECK(t.self_adjoint < 1e-9);
  CHECK(t.weighted_self_adjoint < 1e-8);
  CHECK(t.green < 1e-8);
  CHECK(t.grad_const < 1e-12);
  CHECK(t.grad_neg >= -1e-12);

  Background sphere = build_sphere_background(3, 40);
  auto zonal = [&] {
    Eigen::VectorXd c(12);
    for (int i = 0; i < 12; ++i) c[i] = gauss(rng) / (1.0 + i);
    return sample(sphere, [&](const double* th) {
      double acc = 0.0;
      for (int i = 0; i < 12; ++i) acc += c[i] * std::cos(i * th[0]);
      return acc;
    });
  };
  Checks s = run_invariants(sphere, zonal);
  CHECK(s.constants < 1e-10);
  CHECK(s.self_adjoint < 1e-9);
  CHECK(s.weighted_self_adjoint < 1e-8);
  CHECK(s.green < 1e-8);
  CHECK(s.grad_const < 1e-10);
  CHECK(s.grad_neg >= -1e-12);

  const int n = 10;
  Eigen::MatrixXd k = testing_support::random_graph_laplacian(n, rng);
  Field mass = Field::Constant(n, 0.1);
  Background graph = build_matrix_background(mass, k, Field::Zero(n), Field::Zero(n));
  Checks g = run_invariants(graph, [&] {
    Field f(n);
    for (int i = 0; i < n; ++i) f[i] = gauss(rng);
    return f;
  });
  CHECK(g.constants < 1e-10);
  CHECK(g.self_adjoint < 1e-9);
  CHECK(g.weighted_self_adjoint < 1e-8);
  CHECK(g.green < 1e-8);
  CHECK(g.grad_const < 1e-10);
  CHECK(g.grad_neg >= -1e-12);
}

TEST_CASE("scaling the metric") {
  Background s3 = build_sphere_background(3, 40);
  Background big = s3.scaled(2.0);
  Field c = sample(big, [](const double* t) { return std::cos(t[0]); });
  CHECK(sup_norm(big.laplacian(c) + 0.75 * c) < 1e-10);
  CHECK(std::abs(big.volume() - 16.0 * M_PI * M_PI) < 1e-9);
  CHECK(std::abs(build_unit_volume_sphere(3, 40).volume() - 1.0) < 1e-12);
  CHECK(std::abs(big.base_scalar_curvature()[0] - 1.5) < 1e-14);
}
