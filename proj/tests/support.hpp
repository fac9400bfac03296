#pragma once

#include "wyf/geometry.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace testing_support {

// Adaptive Simpson quadrature, independent of every library quadrature rule.
inline double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                      double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double adaptive_quadrature(const std::function<double(double)>& f, double a, double b,
                                  double tol = 1e-13) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50);
}

// Random trigonometric polynomial with |k_j| <= kmax on a torus background.
inline wyf::Field random_torus_field(const wyf::Background& bg, int kmax, std::mt19937_64& rng,
                                     double amplitude = 1.0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int d = static_cast<int>(bg.nodes().cols());
  wyf::Field f = wyf::Field::Constant(bg.node_count(), amplitude * gauss(rng));
  std::vector<int> k(d, -kmax);
  for (;;) {
    const double a = amplitude * gauss(rng) / (1.0 + k[0] * k[0]), b = amplitude * gauss(rng) / (1.0 + k[0] * k[0]);
    for (wyf::Index i = 0; i < bg.node_count(); ++i) {
      double phase = 0.0;
      for (int j = 0; j < d; ++j) phase += k[j] * bg.nodes()(i, j);
      f[i] += (a * std::cos(phase) + b * std::sin(phase)) / std::pow(2.0 * kmax + 1.0, 0.5 * d);
    }
    int j = 0;
    while (j < d && ++k[j] > kmax) k[j++] = -kmax;
    if (j == d) break;
  }
  return f;
}

inline wyf::Field sample(const wyf::Background& bg, const std::function<double(const double*)>& f) {
  wyf::Field out(bg.node_count());
  std::vector<double> x(bg.nodes().cols());
  for (wyf::Index i = 0; i < bg.node_count(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = bg.nodes()(i, static_cast<wyf::Index>(j));
    out[i] = f(x.data());
  }
  return out;
}

// Weighted graph Laplacian with random positive edge weights on a random connected graph.
inline Eigen::MatrixXd random_graph_laplacian(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.1, 1.0);
  std::bernoulli_distribution edge(0.4);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (j == i + 1 || edge(rng)) {
        const double w = uni(rng);
        k(i, j) -= w;
        k(j, i) -= w;
        k(i, i) += w;
        k(j, j) += w;
      }
    }
  }
  return k;
}

}  // namespace testing_support
