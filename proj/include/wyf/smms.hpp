#pragma once

#include "wyf/geometry.hpp"

namespace wyf {

struct Params {
  int n = 2;
  double m = 0.0;

  Params() = default;
  Params(int n_, double m_);

  double nm2() const { return n + m - 2.0; }
  double a() const { return 4.0 * (n + m - 1.0) / nm2(); }
  double q_curv() const { return (n + m + 2.0) / nm2(); }
  double q_vol() const { return 2.0 * (n + m) / nm2(); }
  double q_lin() const { return 4.0 / nm2(); }
  // Exponent of the volume in the energy denominator.
  double beta() const { return nm2() / (n + m); }
};

// Conformal factor u over a background together with (n, m).
class Smms {
 public:
  Smms(Background bg, Params params, Field u);
  // u = 1.
  Smms(Background bg, Params params);

  const Background& bg() const { return bg_; }
  const Params& params() const { return params_; }
  const Field& u() const { return u_; }

  Smms with_u(Field u) const { return Smms(bg_, params_, std::move(u)); }

 private:
  Background bg_;
  Params params_;
  Field u_;
};

// R^m_{phi0} = R + 2 Lap phi0 - ((m+1)/m)|grad phi0|^2; the last term is dropped when m = 0.
Field base_weighted_scalar_curvature(const Background& bg, const Params& params);

// u^{-q_curv} (-a Lap_{phi0} u + R^m_{phi0} u).
Field conformal_weighted_scalar_curvature(const Smms& s);

double weighted_volume(const Smms& s);
// Weighted mean of the curvature against u^{q_vol} e^{-phi0} dV.
double mean_curvature(const Smms& s);
Smms normalize_volume(const Smms& s);
// Factor c with weighted_volume(c u) = 1.
double normalization_factor(const Smms& s);
Field phi_of(const Smms& s);

}  // namespace wyf
