#include "wyf/flow.hpp"

#include "wyf/energy.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace wyf {

void FlowConfig::validate() const {
  require(dt > 0.0 && std::isfinite(dt), "flow.dt must be positive");
  require(t_end > 0.0 && std::isfinite(t_end), "flow.t_end must be positive");
  require(safety > 0.0 && safety <= 1.0, "flow.safety must lie in (0, 1]");
  require(record_every >= 1, "flow.record_every must be at least 1");
  require(snapshot_every >= 1, "snapshot cadence must be at least 1");
}

namespace {

struct Evaluated {
  Field r;
  double rm = 0.0;
  Field velocity;
};

// Curvature data with the base curvature cached across stages.
class FlowRhs {
 public:
  explicit FlowRhs(const Smms& s) : bg_(s.bg()), p_(s.params()), rb_(base_weighted_scalar_curvature(bg_, p_)) {}

  Evaluated eval(const Field& u) const {
    Evaluated e;
    const Field top = -p_.a() * bg_.weighted_laplacian(u) + rb_.cwiseProduct(u);
    e.r = (top.array() * u.array().pow(-p_.q_curv())).matrix();
    const Field w = u.array().pow(p_.q_vol()).matrix();
    e.rm = integrate(bg_, e.r.cwiseProduct(w), true) / integrate(bg_, w, true);
    e.velocity = (0.25 * p_.nm2()) * ((e.rm - e.r.array()) * u.array()).matrix();
    return e;
  }

  double mean(const Field& u) const { return eval(u).rm; }

  // Largest explicit substep: the RK4 stability interval along the diffusion spectrum.
  double stable(const Field& u, double safety) const {
    const double coef = (p_.n + p_.m - 1.0) * u.array().pow(-p_.q_lin()).maxCoeff();
    const double reaction = sup_norm(rb_) * u.array().pow(-p_.q_lin()).maxCoeff();
    return safety * 2.5 / (coef * bg_.spectral_radius() + reaction + 1e-300);
  }

  // One backward-Euler step on the frozen diffusion, explicit on the remainder.
  bool imex(const Field& u, double h, Field& out) const {
    const Evaluated e = eval(u);
    const Field c = (p_.n + p_.m - 1.0) * u.array().pow(-p_.q_lin()).matrix();
    const Field rhs = u + h * (e.velocity - c.cwiseProduct(bg_.weighted_laplacian(u)));
    // (I/c - h Lap_phi) x = rhs / c is self-adjoint and positive in the weighted inner product.
    const Field b = rhs.cwiseQuotient(c);
    auto apply = [&](const Field& x) { return Field(x.cwiseQuotient(c) - h * bg_.weighted_laplacian(x)); };
    auto dot = [&](const Field& x, const Field& y) { return inner(bg_, x, y); };
    Field x = u;
    Field r = b - apply(x);
    Field d = r;
    double rr = dot(r, r);
    const double stop = 1e-20 * std::max(dot(b, b), 1e-300);
    for (int it = 0; it < 10 * static_cast<int>(u.size()) + 100 && rr > stop; ++it) {
      const Field ad = apply(d);
      const double alpha = rr / dot(d, ad);
      x += alpha * d;
      r -= alpha * ad;
      const double rr_new = dot(r, r);
      d = r + (rr_new / rr) * d;
      rr = rr_new;
    }
    if (!(rr <= stop)) throw NumericalError("implicit solve did not reach residual 1e-10");
    out = x;
    return (out.array() > 0.0).all() && out.allFinite();
  }

  bool rk4(const Field& u, double h, Field& out) const {
    const Field k1 = eval(u).velocity;
    const Field u2 = u + 0.5 * h * k1;
    if (!(u2.array() > 0.0).all()) return false;
    const Field k2 = eval(u2).velocity;
    const Field u3 = u + 0.5 * h * k2;
    if (!(u3.array() > 0.0).all()) return false;
    const Field k3 = eval(u3).velocity;
    const Field u4 = u + h * k3;
    if (!(u4.array() > 0.0).all()) return false;
    const Field k4 = eval(u4).velocity;
    out = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    return (out.array() > 0.0).all() && out.allFinite();
  }

  bool advance(Scheme scheme, const Field& u, double h, Field& out) const {
    return scheme == Scheme::rk4 ? rk4(u, h, out) : imex(u, h, out);
  }

  double curvature_scale(const Field& u) const {
    const Evaluated e = eval(u);
    const Field w = u.array().pow(p_.q_vol()).matrix();
    return integrate(bg_, e.r.cwiseAbs().cwiseProduct(w), true) / integrate(bg_, w, true);
  }

 private:
  Background bg_;
  Params p_;
  Field rb_;
};

constexpr int kMaxRejections = 40;

}  // namespace

Field flow_velocity(const Smms& s) { return FlowRhs(s).eval(s.u()).velocity; }

double predicted_dissipation(const Smms& s) {
  const Evaluated e = FlowRhs(s).eval(s.u());
  const Field dev = (e.r.array() - e.rm).matrix();
  const Field w = s.u().array().pow(s.params().q_vol()).matrix();
  return -0.5 * s.params().nm2() * integrate(s.bg(), dev.cwiseProduct(dev).cwiseProduct(w), true);
}

double stable_step(const Smms& s, const FlowConfig& cfg) { return FlowRhs(s).stable(s.u(), cfg.safety); }

namespace {

// Advance u over a macro step of length dt; returns the last substep size and r before it.
struct MacroResult {
  double last_h = 0.0;
  double r_before_last = 0.0;
  long substeps = 0;
};

MacroResult advance_macro(const FlowRhs& rhs, const FlowConfig& cfg, Field& u, double dt) {
  MacroResult res;
  const long n_sub = cfg.scheme == Scheme::rk4
                         ? std::max<long>(1, static_cast<long>(std::ceil(dt / rhs.stable(u, cfg.safety) - 1e-12)))
                         : 1;
  double h = dt / static_cast<double>(n_sub);
  double remaining = dt;
  double r_old = rhs.mean(u);
  const double floor = 1e-13 * (1.0 + rhs.curvature_scale(u));
  int rejections = 0;
  while (remaining > 0.0) {
    const double hh = (h >= remaining * (1.0 - 1e-9)) ? remaining : h;
    Field next;
    bool ok = rhs.advance(cfg.scheme, u, hh, next);
    double r_new = ok ? rhs.mean(next) : 0.0;
    if (ok && r_new > r_old + 1e-9 * std::abs(r_old) + floor) ok = false;
    if (!ok) {
      if (++rejections > kMaxRejections) {
        if (r_new > r_old + 1e-6 * std::abs(r_old) + floor) {
          throw NumericalError("r increased by " + std::to_string(r_new - r_old) +
                               " (under-resolved flow); reduce dt or refine the grid");
        }
        throw NumericalError("stiffness failure: more than 40 consecutive step rejections");
      }
      h *= 0.5;
      continue;
    }
    rejections = 0;
    res.last_h = hh;
    res.r_before_last = r_old;
    ++res.substeps;
    u = next;
    r_old = r_new;
    remaining = (hh == remaining) ? 0.0 : remaining - hh;
    if (remaining <= 1e-12 * dt) remaining = 0.0;
  }
  return res;
}

}  // namespace

Smms step(const Smms& s, const FlowConfig& cfg, double dt) {
  cfg.validate();
  require(dt > 0.0, "step size must be positive");
  FlowRhs rhs(s);
  Field u = s.u();
  advance_macro(rhs, cfg, u, dt);
  return s.with_u(u);
}

Trajectory run(const Smms& s0, const FlowConfig& cfg) {
  cfg.validate();
  Trajectory traj;
  traj.initial_normalization = normalization_factor(s0);
  Smms start = s0.with_u(s0.u() * traj.initial_normalization);
  FlowRhs rhs(start);
  const Background& bg = start.bg();
  const Params& p = start.params();
  const double eps = std::numeric_limits<double>::epsilon();

  Field u = start.u();
  std::vector<Field> states;
  double last_h = 0.0, r_before = 0.0;

  auto record = [&](double t) {
    const Evaluated e = rhs.eval(u);
    const Smms cur = start.with_u(u);
    traj.times.push_back(t);
    traj.r_values.push_back(e.rm);
    traj.volumes.push_back(weighted_volume(cur));
    const Field de = 2.0 * ((e.r.array() - e.rm) * u.array().pow(p.q_curv())).matrix();
    traj.de_l2.push_back(l2_norm(bg, de));
    traj.dissipation.push_back(predicted_dissipation(cur));
    if (last_h > 0.0) {
      Field probe;
      if (!rhs.advance(cfg.scheme, u, last_h, probe)) throw NumericalError("positivity lost while probing dr/dt");
      traj.dr_dt.push_back((rhs.mean(probe) - r_before) / (2.0 * last_h));
      traj.dr_dt_floor.push_back(64.0 * eps * rhs.curvature_scale(u) / last_h);
    } else {
      traj.dr_dt.push_back(std::numeric_limits<double>::quiet_NaN());
      traj.dr_dt_floor.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    states.push_back(u);
  };

  const long steps = std::max<long>(1, std::lround(cfg.t_end / cfg.dt));
  record(0.0);
  for (long k = 1; k <= steps; ++k) {
    const MacroResult m = advance_macro(rhs, cfg, u, cfg.dt);
    traj.substeps += m.substeps;
    last_h = m.last_h;
    r_before = m.r_before_last;
    if (k % cfg.record_every == 0 || k == steps) {
      record(static_cast<double>(k) * cfg.dt);
      if (cfg.renormalize) u *= normalization_factor(start.with_u(u));
    }
  }

  traj.final_u = states.back();
  const Evaluated fin = rhs.eval(traj.final_u);
  traj.final_curvature_deviation = sup_norm(fin.r.array() - fin.rm);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Field d = states[i] - traj.final_u;
    traj.sup_dev.push_back(sup_norm(d));
    traj.h1_dev.push_back(std::sqrt(integrate(bg, bg.gradient_inner(d, d) + d.cwiseProduct(d), true)));
    if (i % static_cast<std::size_t>(cfg.snapshot_every) == 0 || i + 1 == states.size()) {
      traj.snapshot_times.push_back(traj.times[i]);
      traj.snapshots.push_back(states[i]);
    }
  }
  return traj;
}

namespace {

void put(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,r_m,volume,de_l2,sup_dev,h1_dev\n";
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    put(out, traj.times[i]);
    for (double v : {traj.r_values[i], traj.volumes[i], traj.de_l2[i], traj.sup_dev[i], traj.h1_dev[i]}) {
      out << ',';
      put(out, v);
    }
    out << '\n';
  }
}

void write_snapshots_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,node,u\n";
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
    for (Index j = 0; j < traj.snapshots[i].size(); ++j) {
      put(out, traj.snapshot_times[i]);
      out << ',' << j << ',';
      put(out, traj.snapshots[i][j]);
      out << '\n';
    }
  }
}

}  // namespace wyf
