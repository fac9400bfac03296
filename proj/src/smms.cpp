#include "wyf/smms.hpp"

#include <cmath>

namespace wyf {

Params::Params(int n_, double m_) : n(n_), m(m_) {
  require(n >= 1, "dimension n must be at least 1");
  require(std::isfinite(m) && m >= 0.0, "m must be a finite nonnegative real");
  require(n + m > 2.0, "n + m must exceed 2");
}

Smms::Smms(Background bg, Params params, Field u) : bg_(std::move(bg)), params_(params), u_(std::move(u)) {
  Params check(params_.n, params_.m);
  (void)check;
  require(u_.size() == bg_.node_count(), "conformal factor has wrong size");
  require(u_.allFinite(), "conformal factor is not finite");
  require((u_.array() > 0.0).all(), "conformal factor must be positive");
  if (params_.m == 0.0) {
    require(sup_norm(bg_.phi0()) == 0.0, "m = 0 requires phi0 = 0");
  }
}

Smms::Smms(Background bg, Params params) : Smms(bg, params, Field::Ones(bg.node_count())) {}

Field base_weighted_scalar_curvature(const Background& bg, const Params& params) {
  Params p(params.n, params.m);
  const Field& phi = bg.phi0();
  if (p.m == 0.0) {
    require(sup_norm(phi) == 0.0, "m = 0 requires phi0 = 0");
    return bg.base_scalar_curvature();
  }
  return bg.base_scalar_curvature() + 2.0 * bg.laplacian(phi) -
         ((p.m + 1.0) / p.m) * bg.gradient_inner(phi, phi);
}

Field conformal_weighted_scalar_curvature(const Smms& s) {
  const Params& p = s.params();
  const Field& u = s.u();
  const Field rb = base_weighted_scalar_curvature(s.bg(), p);
  const Field top = -p.a() * s.bg().weighted_laplacian(u) + rb.cwiseProduct(u);
  return (top.array() * u.array().pow(-p.q_curv())).matrix();
}

double weighted_volume(const Smms& s) {
  return integrate(s.bg(), s.u().array().pow(s.params().q_vol()).matrix(), true);
}

double mean_curvature(const Smms& s) {
  const Field w = s.u().array().pow(s.params().q_vol()).matrix();
  const Field r = conformal_weighted_scalar_curvature(s);
  return integrate(s.bg(), r.cwiseProduct(w), true) / integrate(s.bg(), w, true);
}

double normalization_factor(const Smms& s) {
  return std::pow(weighted_volume(s), -1.0 / s.params().q_vol());
}

Smms normalize_volume(const Smms& s) { return s.with_u(s.u() * normalization_factor(s)); }

Field phi_of(const Smms& s) {
  const Params& p = s.params();
  return s.bg().phi0() - (2.0 * p.m / p.nm2()) * s.u().array().log().matrix();
}

}  // namespace wyf
