#include "wyf/reduction.hpp"

#include "wyf/energy.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

namespace wyf {

namespace {

// Gradient of the scale-invariant energy, Laplacian form.
Field energy_gradient(const Smms& s) { return first_variation_laplacian_form(s); }

struct Complement {
  // Non-kernel eigenfields except the constant mode, with their L-eigenvalues.
  Eigen::MatrixXd fields;
  Eigen::VectorXd lambdas;
};

Complement complement_of(const SpectralData& sd) {
  std::vector<Index> idx;
  const Field one = Field::Ones(sd.eigenfields.rows());
  const double norm_one = std::sqrt(sd.weights.sum());
  for (Index i : sd.up_indices) {
    const double overlap = std::abs(sd.eigenfields.col(i).dot(sd.weights)) / norm_one;
    if (overlap > 0.5) continue;
    idx.push_back(i);
  }
  for (Index i : sd.down_indices) idx.push_back(i);
  Complement c;
  c.fields.resize(sd.eigenfields.rows(), static_cast<Index>(idx.size()));
  c.lambdas.resize(static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    c.fields.col(static_cast<Index>(j)) = sd.eigenfields.col(idx[j]);
    c.lambdas[static_cast<Index>(j)] = -sd.eigenvalues[idx[j]];
  }
  return c;
}

Field project_w(const SpectralData& sd, const Eigen::MatrixXd& kernel, const Field& f) {
  const Field wf = sd.weights.cwiseProduct(f);
  Field out = f - kernel * (kernel.transpose() * wf);
  out.array() -= out.dot(sd.weights) / sd.weights.sum();
  return out;
}

}  // namespace

ReducedModel make_reduced_model(const Smms& base, const SpectralData& sd, const ReductionOptions& options) {
  require(sd.kernel_dim() >= 1, "reduction needs a nontrivial kernel");
  require(!sd.kernel_is_scale_only, "kernel consists of the scale direction only; reduction refused");
  require(sup_norm(base.u().array() - 1.0) == 0.0, "reduction base must be u = 1");
  require(options.epsilon > 0.0 && options.newton_tol > 0.0, "reduction tolerances must be positive");
  ReducedModel model{base, sd, sd.kernel_basis(), options, 0.0, {}, {}, false, 0, {}, {}, {}, 0.0, 0.0, 0};
  // Kernel fields are orthogonal to constants when R^m != 0.
  for (Index j = 0; j < model.kernel.cols(); ++j) {
    const double mean = model.kernel.col(j).dot(sd.weights) / sd.weights.sum();
    require(std::abs(mean) < 1e-8, "kernel field has a constant component");
  }
  const Complement comp = complement_of(sd);
  model.complement = comp.fields;
  model.complement_lambdas = comp.lambdas;
  model.f0 = energy(base);
  return model;
}

GraphMapResult solve_graph_map(const ReducedModel& model, const Eigen::VectorXd& coords) {
  require(coords.size() == model.k(), "kernel coordinates have the wrong dimension");
  const Field v = model.field(coords);
  const Background& bg = model.base.bg();
  require(l2_norm(bg, v) <= model.options.epsilon * (1.0 + 1e-12),
          "kernel argument exceeds the trust radius " + std::to_string(model.options.epsilon));
  const double nm2 = model.base.params().nm2();
  const Field one = Field::Ones(v.size());

  GraphMapResult res;
  res.residual_scale = 1.0 + l2_norm(bg, energy_gradient(model.base.with_u(one + v)));
  Field chi = Field::Zero(v.size());
  auto residual_of = [&](const Field& c, Field& g) {
    const Field u = one + v + c;
    if (!(u.array() > 0.0).all()) return std::numeric_limits<double>::infinity();
    g = project_w(model.sd, model.kernel, energy_gradient(model.base.with_u(u)));
    return l2_norm(bg, g);
  };
  Field g;
  double r = residual_of(chi, g);
  const double tol = model.options.newton_tol * res.residual_scale;
  while (r >= tol) {
    if (res.iterations >= model.options.newton_max_iter) {
      throw NumericalError("graph-map Newton did not converge: residual " + std::to_string(r));
    }
    ++res.iterations;
    // Frozen Jacobian -(8/(n+m-2)) L on the complement.
    const Eigen::VectorXd c = model.complement.transpose() * model.sd.weights.cwiseProduct(g);
    const Field step = (nm2 / 8.0) * (model.complement * c.cwiseQuotient(model.complement_lambdas));
    double scale = 1.0;
    bool accepted = false;
    for (int damp = 0; damp <= 5; ++damp) {
      Field trial = project_w(model.sd, model.kernel, chi + scale * step);
      Field g_trial;
      const double r_trial = residual_of(trial, g_trial);
      if (r_trial < r) {
        chi = trial;
        g = g_trial;
        r = r_trial;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      throw NumericalError("graph-map Newton diverged: residual " + std::to_string(r) +
                           " did not decrease over 5 damped steps");
    }
  }
  res.residual = r;
  res.chi = chi;
  const Smms s = model.base.with_u(one + v + chi);
  res.psi = s.u() * normalization_factor(s);
  // Phi is re-extracted from the rescaled solution and projected off the kernel.
  const Field rest = res.psi - one - v;
  res.phi = rest - model.kernel * (model.kernel.transpose() * model.sd.weights.cwiseProduct(rest));
  return res;
}

Field solve_graph_map(const Smms& base, const SpectralData& sd, const Field& v, const ReductionOptions& options) {
  ReducedModel model = make_reduced_model(base, sd, options);
  const Eigen::VectorXd coords = model.kernel.transpose() * sd.weights.cwiseProduct(v);
  require(sup_norm(model.field(coords) - v) <= 1e-8 * std::max(1.0, sup_norm(v)), "argument is not a kernel field");
  return solve_graph_map(model, coords).phi;
}

double reduced_functional(const ReducedModel& model, const Eigen::VectorXd& coords) {
  const GraphMapResult g = solve_graph_map(model, coords);
  return energy(model.base.with_u(g.psi));
}

Eigen::VectorXd reduced_gradient(const ReducedModel& model, const Eigen::VectorXd& coords) {
  const GraphMapResult g = solve_graph_map(model, coords);
  const Field u = Field::Ones(g.chi.size()) + model.field(coords) + g.chi;
  const Field de = energy_gradient(model.base.with_u(u));
  return model.kernel.transpose() * model.sd.weights.cwiseProduct(de);
}

namespace {

double evaluate(ReducedModel& model, const Eigen::VectorXd& coords) {
  const GraphMapResult g = solve_graph_map(model, coords);
  const double f = energy(model.base.with_u(g.psi));
  model.samples.push_back({coords, f});
  model.max_residual = std::max(model.max_residual, g.residual / g.residual_scale);
  model.residual_sum += g.residual / g.residual_scale;
  ++model.solves;
  return f;
}

double slope_fit(const std::vector<double>& s, const std::vector<double>& y) {
  const std::size_t n = s.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(s[i]), ly = std::log(std::abs(y[i]));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double factorial(int p) {
  double f = 1.0;
  for (int i = 2; i <= p; ++i) f *= i;
  return f;
}

// p-th mixed difference of F at 0 along the listed coordinate axes, Richardson on h and h/2.
double mixed_derivative(ReducedModel& model, const std::vector<int>& axes, double h) {
  const int p = static_cast<int>(axes.size());
  auto at = [&](double step) {
    double acc = 0.0;
    for (int mask = 0; mask < (1 << p); ++mask) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(model.k());
      int sign = 1;
      for (int i = 0; i < p; ++i) {
        const bool neg = (mask >> i) & 1;
        c[axes[i]] += neg ? -step : step;
        if (neg) sign = -sign;
      }
      acc += sign * (evaluate(model, c) - model.f0);
    }
    return acc / std::pow(2.0 * step, p);
  };
  const double coarse = at(h), fine = at(0.5 * h);
  return fine + (fine - coarse) / 3.0;
}

}  // namespace

OrderResult detect_order_and_tensor(ReducedModel& model) {
  const ReductionOptions& o = model.options;
  const Index k = model.k();
  require(o.ray_points >= 3 && o.ray_min > 0.0 && o.ray_max > o.ray_min, "bad ray grid");
  require(o.ray_max <= o.epsilon, "ray grid exceeds the trust radius");
  std::vector<Eigen::VectorXd> dirs;
  for (Index i = 0; i < k; ++i) dirs.push_back(Eigen::VectorXd::Unit(k, i));
  for (Index i = 0; i < k; ++i)
    for (Index j = i + 1; j < k; ++j) {
      dirs.push_back((Eigen::VectorXd::Unit(k, i) + Eigen::VectorXd::Unit(k, j)) / std::sqrt(2.0));
      dirs.push_back((Eigen::VectorXd::Unit(k, i) - Eigen::VectorXd::Unit(k, j)) / std::sqrt(2.0));
    }
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> gauss;
  if (k > 1) {
    for (int r = 0; r < 3; ++r) {
      Eigen::VectorXd d(k);
      for (Index i = 0; i < k; ++i) d[i] = gauss(rng);
      dirs.push_back(d.normalized());
    }
  }
  std::vector<double> grid;
  for (int i = 0; i < o.ray_points; ++i)
    grid.push_back(o.ray_min * std::pow(o.ray_max / o.ray_min, double(i) / (o.ray_points - 1)));

  const double flat_tol = 1e-11 * (1.0 + std::abs(model.f0));
  const double noise = 1e4 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(model.f0));
  bool flat = true;
  int order = std::numeric_limits<int>::max();
  OrderResult res;
  for (const auto& d : dirs) {
    std::vector<double> odd, even;
    for (double s : grid) {
      const double fp = evaluate(model, s * d) - model.f0;
      const double fm = evaluate(model, -s * d) - model.f0;
      if (std::abs(fp) >= flat_tol || std::abs(fm) >= flat_tol) flat = false;
      odd.push_back(0.5 * (fp - fm));
      even.push_back(0.5 * (fp + fm));
    }
    for (int parity = 1; parity >= 0; --parity) {
      const auto& part = parity ? odd : even;
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::abs(part[i]) > noise) {
          xs.push_back(grid[i]);
          ys.push_back(part[i]);
        }
      if (xs.size() < 3) continue;
      // Lowest decade of resolved points: higher-order terms bend the fit near the trust radius.
      if (xs.size() > 5) {
        xs.resize(5);
        ys.resize(5);
      }
      const double slope = slope_fit(xs, ys);
      res.slopes.push_back(slope);
      const long rounded = std::lround(slope);
      if (std::abs(slope - rounded) < 0.1 && (rounded % 2 == parity)) order = std::min<int>(order, rounded);
    }
  }
  model.ray_slopes = res.slopes;
  if (flat) {
    res.integrable = true;
    model.integrable = true;
    return res;
  }
  if (order == std::numeric_limits<int>::max()) {
    std::ostringstream msg;
    msg << "ray slopes not within 0.1 of an integer:";
    for (double s : res.slopes) msg << ' ' << s;
    throw NumericalError(msg.str());
  }
  if (order < 3) throw NumericalError("detected order " + std::to_string(order) + " < 3; base is not degenerate");
  res.p = order;
  SymmetricTensor<double> t(static_cast<int>(k), order);
  for (const auto& idx : t.multisets()) t.set(idx, mixed_derivative(model, idx, o.fd_step) / factorial(order));
  res.tensor = t;
  model.p = order;
  model.fp = t;
  return res;
}

AsResult check_AS_p(const SymmetricTensor<double>& fp, int restarts, std::uint64_t seed) {
  const int k = fp.dim();
  AsResult res;
  res.max_value = -std::numeric_limits<double>::infinity();
  auto consider = [&](const Eigen::VectorXd& v) {
    const double val = fp(v);
    if (val > res.max_value) {
      res.max_value = val;
      res.v_hat = v;
    }
  };
  if (k == 1) {
    consider(Eigen::VectorXd::Constant(1, 1.0));
    consider(Eigen::VectorXd::Constant(1, -1.0));
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    for (int r = 0; r < restarts; ++r) {
      Eigen::VectorXd v(k);
      for (int i = 0; i < k; ++i) v[i] = gauss(rng);
      v.normalize();
      double f = fp(v);
      double alpha = 1.0;
      for (int it = 0; it < 2000 && alpha > 1e-15; ++it) {
        const Eigen::VectorXd g = fp.gradient(v);
        const Eigen::VectorXd tangent = g - g.dot(v) * v;
        if (tangent.norm() < 1e-15 * (1.0 + g.norm())) break;
        const Eigen::VectorXd trial = (v + alpha * tangent).normalized();
        const double ft = fp(trial);
        if (ft > f) {
          v = trial;
          f = ft;
          alpha *= 1.5;
        } else {
          alpha *= 0.5;
        }
      }
      consider(v);
    }
    // Newton on grad F = lambda v, |v| = 1.
    Eigen::VectorXd v = res.v_hat;
    const int p = fp.order();
    for (int it = 0; it < 30; ++it) {
      const double lambda = p * fp(v);
      const Eigen::VectorXd g = fp.gradient(v) - lambda * v;
      if (g.norm() < 1e-15 * std::max(1.0, fp.scale())) break;
      Eigen::MatrixXd j = Eigen::MatrixXd::Zero(k + 1, k + 1);
      j.topLeftCorner(k, k) = fp.hessian(v) - lambda * Eigen::MatrixXd::Identity(k, k);
      j.block(0, k, k, 1) = -v;
      j.block(k, 0, 1, k) = 2.0 * v.transpose();
      Eigen::VectorXd rhs(k + 1);
      rhs.head(k) = -g;
      rhs[k] = 1.0 - v.squaredNorm();
      const Eigen::VectorXd d = j.fullPivLu().solve(rhs);
      const Eigen::VectorXd next = (v + d.head(k)).normalized();
      if (fp(next) < fp(v) - 1e-12 * std::max(1.0, fp.scale())) break;
      v = next;
    }
    res.v_hat = v;
    res.max_value = fp(v);
  }
  res.as_p = res.max_value > 1e-10 * std::max(fp.scale(), 1e-300);
  return res;
}

CubicNormalization cubic_normalization(const ReducedModel& model, const std::vector<Eigen::VectorXd>& directions,
                                       double tol) {
  require(model.p == 3, "cubic normalization needs a detected order of 3");
  const Params& p = model.base.params();
  const double r = mean_curvature(model.base);
  const double coef = -8.0 * (p.nm2() + 4.0) / (p.nm2() * p.nm2()) * r;
  CubicNormalization out;
  for (const auto& d : directions) {
    const Field v = model.field(d);
    const double closed = coef * inner(model.base.bg(), v, v.cwiseProduct(v));
    out.ratios.push_back(model.fp(d) / closed);
  }
  for (double candidate : {1.0, 1.0 / 6.0}) {
    bool all = !out.ratios.empty();
    for (double q : out.ratios) all = all && std::abs(q / candidate - 1.0) < tol;
    if (all) {
      out.factor = candidate;
      out.consistent = true;
    }
  }
  return out;
}

As3Report as3_certificate(int n1, int n2, double m, double base_weighted_volume, double v3_integral) {
  require(n2 >= 1, "n2 must be at least 1");
  require(n1 >= 1, "n1 must be at least 1");
  require(std::isfinite(m) && m >= 0.0, "m must be finite and nonnegative");
  As3Report r;
  r.n1 = n1;
  r.n2 = n2;
  r.m = m;
  r.n = n1 + 2 * n2;
  require(r.n + m > 2.0, "n + m must exceed 2");
  r.lambda1 = 4.0 * (n2 + 1);
  r.r_fs = 4.0 * n2 * (n2 + 1);
  r.required_curvature = r.lambda1 * (r.n + m - 1.0);
  r.base_volume = base_weighted_volume;
  r.v3 = v3_integral;
  const double nm2 = r.n + m - 2.0;
  r.f3 = -(8.0 * (r.n + m + 2.0) * (r.n + m - 1.0) / (nm2 * nm2)) * r.lambda1 * base_weighted_volume * v3_integral;
  r.as3 = v3_integral != 0.0;
  r.explanation = r.as3 ? "cubic term is nonzero, so the order of integrability is 3 and AS_3 holds"
                        : "the cubic integral vanishes; the cubic term gives no information (as for odd first "
                          "eigenfunctions), so AS_3 is not certified";
  return r;
}

std::string format_report(const As3Report& r) {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "n1 = %d\nn2 = %d\nm = %.17g\nn = %d\nlambda1 = %.17g\nR_FS = %.17g\nrequired R^m = %.17g\n"
                "base weighted volume = %.17g\nint v^3 = %.17g\nF3 = %.17g\nAS3 = %s\n%s\n",
                r.n1, r.n2, r.m, r.n, r.lambda1, r.r_fs, r.required_curvature, r.base_volume, r.v3, r.f3,
                r.as3 ? "true" : "false", r.explanation.c_str());
  return buf;
}

}  // namespace wyf
