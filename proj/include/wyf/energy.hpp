#pragma once

#include "wyf/smms.hpp"

#include <vector>

namespace wyf {

struct EnergyReport {
  double value = 0.0;
  // DE(u) in L^2(e^{-phi0} dV); equal to c * 2 (R - r) (c u)^{q_curv} with c the normalization factor.
  Field gradient;
  double numerator = 0.0;
  double denominator = 0.0;
  double normalization_factor = 1.0;
  // sup difference between the curvature form and the Laplacian form of the gradient.
  double form_mismatch = 0.0;
};

// E(u) = N / V^{(n+m-2)/(n+m)}, N = int (a |grad u|^2 + R^m u^2) e^{-phi0}, V = int u^{q_vol} e^{-phi0}.
double energy(const Smms& s);
// The same functional with the numerator int (-a Lap_{phi0} u + R^m u) u e^{-phi0}.
double energy_laplacian_form(const Smms& s);

EnergyReport energy_report(const Smms& s);
Field first_variation(const Smms& s);
// Gradient written as 2 V^{-beta}(-a Lap_{phi0} u + R^m u) - 2 (E/V) u^{q_curv}.
Field first_variation_laplacian_form(const Smms& s);

// Exact second and third directional derivatives of E at u.
double second_variation(const Smms& s, const Field& v, const Field& w);
double third_variation(const Smms& s, const Field& v, const Field& w, const Field& z);

// L v = (n+m-1) Lap_{phi0} v + R^m v at u = 1.
Field apply_linearized(const Smms& base, const Field& v);

bool is_cwsc(const Smms& s, double tol_cwsc = 1e-7);

// -(8/(n+m-2)) int w L v e^{-phi}; the second variation along directions tangent to unit volume.
double second_variation_at_base(const Smms& base, const Field& v, const Field& w, double tol_cwsc = 1e-7);
// -(8(n+m+2)/(n+m-2)^2) R^m int v w z e^{-phi}; arguments must lie in the kernel of L.
double third_variation_at_base(const Smms& base, const Field& v, const Field& w, const Field& z,
                               double tol_cwsc = 1e-7);

// Centered mixed difference of E along dirs (repeated to reach the order), Richardson on h and h/2.
double fd_variation(const Smms& s, const std::vector<Field>& dirs, int order, double h);

}  // namespace wyf
