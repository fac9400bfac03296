#include "wyf/energy.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace wyf {

namespace {

struct Parts {
  double numerator = 0.0;
  double volume = 0.0;
};

Parts energy_parts(const Smms& s) {
  const Background& bg = s.bg();
  const Params& p = s.params();
  const Field& u = s.u();
  const Field rb = base_weighted_scalar_curvature(bg, p);
  const Field integrand = p.a() * bg.gradient_inner(u, u) + rb.cwiseProduct(u.cwiseProduct(u));
  return {integrate(bg, integrand, true), weighted_volume(s)};
}

double weighted_sum(const Background& bg, const Eigen::ArrayXd& f) {
  return (bg.mass().array() * bg.density().array() * f).sum();
}

}  // namespace

double energy(const Smms& s) {
  const Parts parts = energy_parts(s);
  return parts.numerator / std::pow(parts.volume, s.params().beta());
}

double energy_laplacian_form(const Smms& s) {
  const Background& bg = s.bg();
  const Params& p = s.params();
  const Field& u = s.u();
  const Field rb = base_weighted_scalar_curvature(bg, p);
  const Field lu = -p.a() * bg.weighted_laplacian(u) + rb.cwiseProduct(u);
  return integrate(bg, lu.cwiseProduct(u), true) / std::pow(weighted_volume(s), p.beta());
}

Field first_variation_laplacian_form(const Smms& s) {
  const Background& bg = s.bg();
  const Params& p = s.params();
  const Field& u = s.u();
  const Parts parts = energy_parts(s);
  const double e = parts.numerator / std::pow(parts.volume, p.beta());
  const Field rb = base_weighted_scalar_curvature(bg, p);
  const Field lu = -p.a() * bg.weighted_laplacian(u) + rb.cwiseProduct(u);
  return 2.0 * std::pow(parts.volume, -p.beta()) * lu -
         (2.0 * e / parts.volume) * u.array().pow(p.q_curv()).matrix();
}

EnergyReport energy_report(const Smms& s) {
  const Params& p = s.params();
  EnergyReport rep;
  const Parts parts = energy_parts(s);
  rep.numerator = parts.numerator;
  rep.denominator = parts.volume;
  rep.value = parts.numerator / std::pow(parts.volume, p.beta());
  rep.normalization_factor = std::pow(parts.volume, -1.0 / p.q_vol());
  const Smms unit = s.with_u(s.u() * rep.normalization_factor);
  const Field r = conformal_weighted_scalar_curvature(unit);
  const double rm = mean_curvature(unit);
  rep.gradient = rep.normalization_factor * 2.0 *
                 ((r.array() - rm) * unit.u().array().pow(p.q_curv())).matrix();
  const Field alt = first_variation_laplacian_form(s);
  rep.form_mismatch = sup_norm(rep.gradient - alt);
  const double terms = 2.0 * std::pow(parts.volume, -p.beta()) * p.a() * sup_norm(s.bg().weighted_laplacian(s.u()));
  const double scale = std::max({1.0, sup_norm(alt), terms});
  if (!(rep.form_mismatch <= 1e-9 * scale)) {
    throw NumericalError("the two forms of DE disagree by " + std::to_string(rep.form_mismatch));
  }
  return rep;
}

Field first_variation(const Smms& s) { return energy_report(s).gradient; }

namespace {

// Derivatives of f(V) = V^{-beta}.
std::array<double, 4> volume_factor(double v, double beta) {
  return {std::pow(v, -beta), -beta * std::pow(v, -beta - 1.0),
          beta * (beta + 1.0) * std::pow(v, -beta - 2.0),
          -beta * (beta + 1.0) * (beta + 2.0) * std::pow(v, -beta - 3.0)};
}

struct Variations {
  const Smms& s;
  Field rb;
  double q;
  double a;
  Parts parts;

  explicit Variations(const Smms& s_)
      : s(s_), rb(base_weighted_scalar_curvature(s_.bg(), s_.params())), q(s_.params().q_vol()),
        a(s_.params().a()), parts(energy_parts(s_)) {}

  double n1(const Field& v) const {
    const Field& u = s.u();
    return 2.0 * integrate(s.bg(), a * s.bg().gradient_inner(u, v) + rb.cwiseProduct(u.cwiseProduct(v)), true);
  }
  double n2(const Field& v, const Field& w) const {
    return 2.0 * integrate(s.bg(), a * s.bg().gradient_inner(v, w) + rb.cwiseProduct(v.cwiseProduct(w)), true);
  }
  double v1(const Field& v) const {
    return q * weighted_sum(s.bg(), s.u().array().pow(q - 1.0) * v.array());
  }
  double v2(const Field& v, const Field& w) const {
    return q * (q - 1.0) * weighted_sum(s.bg(), s.u().array().pow(q - 2.0) * v.array() * w.array());
  }
  double v3(const Field& v, const Field& w, const Field& z) const {
    return q * (q - 1.0) * (q - 2.0) *
           weighted_sum(s.bg(), s.u().array().pow(q - 3.0) * v.array() * w.array() * z.array());
  }
};

}  // namespace

double second_variation(const Smms& s, const Field& v, const Field& w) {
  const Variations d(s);
  const auto f = volume_factor(d.parts.volume, s.params().beta());
  const double n = d.parts.numerator;
  const double v1v = d.v1(v), v1w = d.v1(w);
  return d.n2(v, w) * f[0] + d.n1(v) * f[1] * v1w + d.n1(w) * f[1] * v1v +
         n * (f[2] * v1v * v1w + f[1] * d.v2(v, w));
}

double third_variation(const Smms& s, const Field& v, const Field& w, const Field& z) {
  const Variations d(s);
  const auto f = volume_factor(d.parts.volume, s.params().beta());
  const double n = d.parts.numerator;
  const double v1v = d.v1(v), v1w = d.v1(w), v1z = d.v1(z);
  const double v2vw = d.v2(v, w), v2vz = d.v2(v, z), v2wz = d.v2(w, z);
  const double g1z = f[1] * v1z, g1w = f[1] * v1w, g1v = f[1] * v1v;
  double out = d.n2(v, w) * g1z + d.n2(v, z) * g1w + d.n2(w, z) * g1v;
  out += d.n1(v) * (f[2] * v1w * v1z + f[1] * v2wz);
  out += d.n1(w) * (f[2] * v1v * v1z + f[1] * v2vz);
  out += d.n1(z) * (f[2] * v1v * v1w + f[1] * v2vw);
  out += n * (f[3] * v1v * v1w * v1z + f[2] * (v2vw * v1z + v2vz * v1w + v2wz * v1v) +
              f[1] * d.v3(v, w, z));
  return out;
}

Field apply_linearized(const Smms& base, const Field& v) {
  const Params& p = base.params();
  const Field rb = base_weighted_scalar_curvature(base.bg(), p);
  return (p.n + p.m - 1.0) * base.bg().weighted_laplacian(v) + rb.cwiseProduct(v);
}

bool is_cwsc(const Smms& s, double tol_cwsc) {
  const Field r = conformal_weighted_scalar_curvature(s);
  const double rm = mean_curvature(s);
  return sup_norm(r.array() - rm) <= tol_cwsc * std::max(1.0, std::abs(rm));
}

namespace {

void require_base(const Smms& base, double tol_cwsc) {
  require(sup_norm(base.u().array() - 1.0) == 0.0, "closed-form variations are evaluated at u = 1");
  require(std::abs(weighted_volume(base) - 1.0) < 1e-10, "closed-form variations need a unit-volume base");
  require(is_cwsc(base, tol_cwsc), "base does not have constant weighted scalar curvature");
}

}  // namespace

double second_variation_at_base(const Smms& base, const Field& v, const Field& w, double tol_cwsc) {
  require_base(base, tol_cwsc);
  return -(8.0 / base.params().nm2()) * inner(base.bg(), w, apply_linearized(base, v));
}

double third_variation_at_base(const Smms& base, const Field& v, const Field& w, const Field& z,
                               double tol_cwsc) {
  require_base(base, tol_cwsc);
  const Params& p = base.params();
  const double scale = (p.n + p.m - 1.0) * base.bg().spectral_radius() +
                       sup_norm(base_weighted_scalar_curvature(base.bg(), p));
  for (const Field* f : {&v, &w, &z}) {
    const double res = l2_norm(base.bg(), apply_linearized(base, *f));
    require(res <= 1e-8 * scale * std::max(l2_norm(base.bg(), *f), 1e-300) || f->isZero(0.0),
            "closed-form third variation needs kernel directions");
  }
  const double r = mean_curvature(base);
  return -(8.0 * (p.nm2() + 4.0) / (p.nm2() * p.nm2())) * r *
         inner(base.bg(), v, w.cwiseProduct(z));
}

namespace {

double mixed_difference(const Smms& s, const std::vector<Field>& dirs, double h) {
  const int order = static_cast<int>(dirs.size());
  double acc = 0.0;
  for (int mask = 0; mask < (1 << order); ++mask) {
    Field u = s.u();
    int sign = 1;
    for (int i = 0; i < order; ++i) {
      const bool neg = (mask >> i) & 1;
      u += (neg ? -h : h) * dirs[i];
      if (neg) sign = -sign;
    }
    if (!(u.array() > 0.0).all()) throw NumericalError("finite-difference step leaves the positive cone");
    acc += sign * energy(s.with_u(u));
  }
  return acc / (std::pow(2.0 * h, order));
}

}  // namespace

double fd_variation(const Smms& s, const std::vector<Field>& dirs, int order, double h) {
  require(order >= 1 && order <= 3, "finite-difference order must be 1, 2 or 3");
  require(h >= 1e-6 && h <= 1e-2, "finite-difference step must lie in [1e-6, 1e-2]");
  require(!dirs.empty(), "finite difference needs at least one direction");
  std::vector<Field> d;
  for (int i = 0; i < order; ++i) d.push_back(dirs[std::min<std::size_t>(i, dirs.size() - 1)]);
  double dir_size = 0.0;
  for (const Field& f : d) {
    require(f.size() == s.u().size(), "direction has wrong size");
    dir_size = std::max(dir_size, sup_norm(f));
  }
  const double eps = std::numeric_limits<double>::epsilon();
  if (0.5 * h * dir_size < 1e3 * eps * sup_norm(s.u())) {
    throw NumericalError("finite-difference step underflows against the conformal factor");
  }
  const double coarse = mixed_difference(s, d, h);
  const double fine = mixed_difference(s, d, 0.5 * h);
  return fine + (fine - coarse) / 3.0;
}

}  // namespace wyf
