#include "wyf/slowflow.hpp"

#include "wyf/energy.hpp"
#include "wyf/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

namespace wyf {

namespace {

constexpr int kDerivPoints = 7;
constexpr int kInterpPoints = 6;

int clamp_start(Index i, int back, int width, Index n) {
  return static_cast<int>(std::clamp<Index>(i - back, 0, n - width));
}

Eigen::VectorXd offsets(int start, Index i, int width) {
  Eigen::VectorXd o(width);
  for (int j = 0; j < width; ++j) o[j] = double(start + j - i);
  return o;
}

// Lagrange basis on nodes evaluated at x.
Eigen::VectorXd lagrange(const Eigen::VectorXd& nodes, double x) {
  Eigen::VectorXd l = Eigen::VectorXd::Ones(nodes.size());
  for (Index j = 0; j < nodes.size(); ++j)
    for (Index m = 0; m < nodes.size(); ++m)
      if (m != j) l[j] *= (x - nodes[m]) / (nodes[j] - nodes[m]);
  return l;
}

// Power-law decay rate of |f| between two grid points; 0 when undefined.
double decay_exponent(const SlowModel& model, const Eigen::VectorXd& f) {
  const Index n = f.size();
  const Index back = std::min<Index>(64, n / 4);
  const double fn = f[n - 1], fm = f[n - 1 - back];
  if (fn == 0.0 || fm == 0.0 || (fn > 0) != (fm > 0)) return 0.0;
  const Eigen::VectorXd& t = model.grid.t();
  return -std::log(std::abs(fn / fm)) / std::log((model.T + t[n - 1]) / (model.T + t[n - 1 - back]));
}

}  // namespace

Eigen::VectorXd fd_weights(const Eigen::VectorXd& nodes, double x0, int order) {
  const Index n = nodes.size();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, order + 1);
  double c1 = 1.0, c4 = nodes[0] - x0;
  c(0, 0) = 1.0;
  for (Index i = 1; i < n; ++i) {
    const int mn = static_cast<int>(std::min<Index>(i, order));
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[i] - x0;
    for (Index j = 0; j < i; ++j) {
      const double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c(i, k) = c1 * (k * c(i - 1, k - 1) - c5 * c(i - 1, k)) / c2;
        c(i, 0) = -c1 * c5 * c(i - 1, 0) / c2;
      }
      for (int k = mn; k >= 1; --k) c(j, k) = (c4 * c(j, k) - k * c(j, k - 1)) / c3;
      c(j, 0) = c4 * c(j, 0) / c3;
    }
    c1 = c2;
  }
  return c.col(order);
}

TimeGrid::TimeGrid(double horizon, int points_per_decade, double t_scale) : t_scale_(t_scale) {
  require(horizon > 0.0 && std::isfinite(horizon), "horizon must be positive");
  require(points_per_decade >= 8, "time grid needs at least 8 points per decade");
  require(t_scale > 0.0, "time scale must be positive");
  const double span = std::log1p(horizon / t_scale);
  const Index n = std::max<Index>(8, static_cast<Index>(std::ceil(span * points_per_decade / std::log(10.0))));
  h_ = span / n;
  sigma_.resize(n + 1);
  t_.resize(n + 1);
  for (Index i = 0; i <= n; ++i) {
    sigma_[i] = i * h_;
    t_[i] = t_scale * std::expm1(sigma_[i]);
  }
  t_[n] = horizon;
}

Eigen::MatrixXd TimeGrid::derivative(const Eigen::MatrixXd& path) const {
  const Index n = size();
  Eigen::MatrixXd out(path.rows(), n);
  for (Index i = 0; i < n; ++i) {
    const int st = clamp_start(i, kDerivPoints / 2, kDerivPoints, n);
    const Eigen::VectorXd w = fd_weights(offsets(st, i, kDerivPoints), 0.0, 1) / h_;
    const double dt_dsigma = t_scale_ * std::exp(sigma_[i]);
    out.col(i) = path.middleCols(st, kDerivPoints) * w / dt_dsigma;
  }
  return out;
}

Eigen::VectorXd TimeGrid::derivative(const Eigen::VectorXd& f) const {
  return derivative(Eigen::MatrixXd(f.transpose())).row(0).transpose();
}

SlowModel make_slow_model(const SymmetricTensor<double>& fp, const Eigen::VectorXd& v_hat, double nm2, double gamma,
                          double T, const Eigen::VectorXd& deltas, double horizon, int points_per_decade) {
  const int p = fp.order();
  const int k = fp.dim();
  require(p >= 3, "slow model needs order p >= 3");
  require(v_hat.size() == k, "v_hat has the wrong dimension");
  require(std::abs(v_hat.norm() - 1.0) < 1e-12, "v_hat must be a unit vector");
  require(nm2 > 0.0, "n + m - 2 must be positive");
  require(T > 0.0, "T must be positive");
  const double fv = fp(v_hat);
  require(fv > 0.0, "F_p(v_hat) <= 0: the Adams-Simon positivity condition fails");
  require(gamma > 1.0 / (p - 2) && gamma < 2.0 / (p - 2), "gamma must lie strictly inside (1/(p-2), 2/(p-2))");
  for (Index i = 0; i < deltas.size(); ++i) require(deltas[i] != 0.0, "zero delta belongs to the kernel");

  SlowModel m;
  m.k = k;
  m.p = p;
  m.fp = fp;
  m.v_hat = v_hat;
  m.nm2 = nm2;
  m.gamma = gamma;
  m.T = T;
  m.deltas = deltas;
  // Resolve the fastest orthogonal rate near t = 0.
  const double fastest = deltas.size() > 0 ? deltas.cwiseAbs().maxCoeff() : 0.0;
  m.grid = TimeGrid(horizon, points_per_decade, std::min(1.0, 0.05 / std::max(fastest, 1e-300)));
  const double scale = 8.0 / (nm2 * p * (p - 2) * fv);
  m.ansatz_constant = std::pow(scale, 1.0 / (p - 2));
  m.d_matrix = scale * fp.hessian(v_hat);
  m.d_matrix = 0.5 * (m.d_matrix + m.d_matrix.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.d_matrix);
  m.mu = es.eigenvalues();
  m.e = es.eigenvectors();
  for (Index i = 0; i < k; ++i) {
    require(std::abs(gamma - m.kappa() * m.mu[i]) >= 1e-6,
            "gamma coincides with (n+m-2) mu_i / 8 for some eigenvalue of D");
  }

  const Index n = m.grid.size();
  require(n >= kDerivPoints, "time grid too short");
  const double h = m.grid.step();
  const Eigen::VectorXd& t = m.grid.t();
  const Eigen::VectorXd& sig = m.grid.sigma();
  Eigen::VectorXd gl, glw;
  gauss_jacobi(8, 0.0, gl, glw);
  // Plain panel integrals in sigma, exact for degree-5 interpolants.
  m.panel_weights.resize(n - 1, kInterpPoints);
  m.heat_stencil.resize(n - 1);
  for (Index i = 0; i + 1 < n; ++i) {
    const int st = clamp_start(i, 2, kInterpPoints, n);
    m.heat_stencil[i] = st;
    const Eigen::VectorXd o = offsets(st, i, kInterpPoints);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(kInterpPoints);
    for (Index q = 0; q < gl.size(); ++q) w += 0.5 * glw[q] * lagrange(o, 0.5 * (gl[q] + 1.0));
    m.panel_weights.row(i) = h * w.transpose();
  }
  // Exponential-integrator weights: int_0^L e^{-a y} E dy measured from the end that the recurrence leaves.
  for (Index mode = 0; mode < deltas.size(); ++mode) {
    const double d = deltas[mode];
    const double a = std::abs(d);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n - 1, kInterpPoints);
    for (Index i = 0; i + 1 < n; ++i) {
      const double dt = t[i + 1] - t[i];
      const double len = std::min(dt, 45.0 / a);
      const int sub = std::max(1, static_cast<int>(std::ceil(a * len)));
      const Eigen::VectorXd o = offsets(m.heat_stencil[i], i, kInterpPoints);
      const double anchor = d > 0.0 ? t[i + 1] : t[i];
      const double dir = d > 0.0 ? -1.0 : 1.0;
      for (int s = 0; s < sub; ++s) {
        const double y0 = len * s / sub, y1 = len * (s + 1) / sub;
        for (Index q = 0; q < gl.size(); ++q) {
          const double y = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * gl[q];
          const double tau = anchor + dir * y;
          const double x = (std::log1p(tau / m.grid.t_scale()) - sig[i]) / h;
          w.row(i) += (0.5 * (y1 - y0) * glw[q] * std::exp(-a * y)) * lagrange(o, x).transpose();
        }
      }
    }
    m.heat_weights.push_back(w);
  }
  return m;
}

Eigen::VectorXd ansatz_phi(const SlowModel& model, double t) {
  require(t >= 0.0, "time must be nonnegative");
  return std::pow(model.T + t, -1.0 / (model.p - 2)) * model.ansatz_constant * model.v_hat;
}

Eigen::VectorXd ansatz_residual(const SlowModel& model, double t) {
  const Eigen::VectorXd phi = ansatz_phi(model, t);
  const Eigen::VectorXd dphi = -phi / ((model.p - 2) * (model.T + t));
  return (8.0 / model.nm2) * dphi + model.fp.gradient(phi);
}

Eigen::MatrixXd ansatz_path(const SlowModel& model) {
  Eigen::MatrixXd out(model.k, model.grid.size());
  for (Index i = 0; i < model.grid.size(); ++i) out.col(i) = ansatz_phi(model, model.grid.t()[i]);
  return out;
}

KernelSolution solve_kernel_ode(const SlowModel& model, const Eigen::MatrixXd& forcing) {
  const Index n = model.grid.size();
  require(forcing.rows() == model.k && forcing.cols() == n, "kernel forcing has the wrong shape");
  require(forcing.allFinite(), "kernel forcing is not finite");
  const Eigen::VectorXd& t = model.grid.t();
  const Eigen::VectorXd& sig = model.grid.sigma();
  const double kappa = model.kappa();
  const Eigen::MatrixXd ef = model.e.transpose() * forcing;
  KernelSolution sol;
  sol.path = Eigen::MatrixXd::Zero(model.k, n);
  sol.envelope = Eigen::VectorXd::Zero(model.k);
  Eigen::MatrixXd coords(model.k, n);
  double tail_total = 0.0, integral_total = 0.0;
  for (int j = 0; j < model.k; ++j) {
    const double b = kappa * model.mu[j];
    const Eigen::VectorXd f = ef.row(j).transpose();
    const double q = decay_exponent(model, f);
    sol.envelope[j] = q;
    if (f[n - 1] != 0.0 && q < 1.0 + model.gamma - 1e-3) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "forcing decays like (T+t)^-%.6g, slower than (T+t)^-(1+gamma) = (T+t)^-%.6g",
                    q, 1.0 + model.gamma);
      throw ValidationError(buf);
    }
    Eigen::VectorXd g(n);
    for (Index i = 0; i < n; ++i)
      g[i] = std::pow(model.T + t[i], b) * f[i] * model.grid.t_scale() * std::exp(sig[i]);
    Eigen::VectorXd panel(n - 1);
    for (Index i = 0; i + 1 < n; ++i)
      panel[i] = model.panel_weights.row(i).dot(g.segment(model.heat_stencil[i], kInterpPoints));
    const bool backward = model.gamma > b;
    sol.backward.push_back(backward);
    Eigen::VectorXd v(n);
    if (backward) {
      double acc = 0.0;
      if (f[n - 1] != 0.0) {
        require(q - b - 1.0 > 0.0, "forcing tail is not integrable against (T+t)^b");
        acc = f[n - 1] * std::pow(model.T + t[n - 1], b + 1.0) / (q - b - 1.0);
      }
      tail_total += std::abs(acc);
      v[n - 1] = -kappa * std::pow(model.T + t[n - 1], -b) * acc;
      for (Index i = n - 2; i >= 0; --i) {
        acc += panel[i];
        v[i] = -kappa * std::pow(model.T + t[i], -b) * acc;
      }
      integral_total += std::abs(acc);
    } else {
      double acc = 0.0;
      v[0] = 0.0;
      for (Index i = 1; i < n; ++i) {
        acc += panel[i - 1];
        v[i] = kappa * std::pow(model.T + t[i], -b) * acc;
      }
    }
    coords.row(j) = v.transpose();
  }
  sol.tail_fraction = integral_total > 0.0 ? tail_total / integral_total : 0.0;
  sol.path = model.e * coords;
  return sol;
}

Eigen::MatrixXd kernel_ode_residual(const SlowModel& model, const Eigen::MatrixXd& path,
                                    const Eigen::MatrixXd& forcing) {
  Eigen::MatrixXd r = (8.0 / model.nm2) * model.grid.derivative(path) - forcing;
  for (Index i = 0; i < model.grid.size(); ++i) r.col(i) += model.d_matrix * path.col(i) / (model.T + model.grid.t()[i]);
  return r;
}

Eigen::MatrixXd solve_orthogonal_heat(const SlowModel& model, const Eigen::MatrixXd& forcing) {
  const Index n = model.grid.size();
  require(forcing.rows() == model.perp_dim() && forcing.cols() == n, "orthogonal forcing has the wrong shape");
  require(forcing.allFinite(), "orthogonal forcing is not finite");
  const Eigen::VectorXd& t = model.grid.t();
  Eigen::MatrixXd u(model.perp_dim(), n);
  // One-sided d/dt and d^2/dt^2 at the horizon from the last grid points.
  const Eigen::VectorXd o = offsets(static_cast<int>(n - kDerivPoints), n - 1, kDerivPoints);
  const double h = model.grid.step();
  const double j = model.grid.t_scale() * std::exp(model.grid.sigma()[n - 1]);
  const Eigen::VectorXd s1 = fd_weights(o, 0.0, 1) / h, s2 = fd_weights(o, 0.0, 2) / (h * h);
  const Eigen::VectorXd end_d1 = s1 / j, end_d2 = (s2 - s1) / (j * j);
  for (Index mode = 0; mode < model.perp_dim(); ++mode) {
    const double d = model.deltas[mode];
    const double a = std::abs(d);
    const Eigen::MatrixXd& w = model.heat_weights[mode];
    const Eigen::VectorXd f = forcing.row(mode).transpose();
    auto panel = [&](Index i) { return w.row(i).dot(f.segment(model.heat_stencil[i], kInterpPoints)); };
    if (d > 0.0) {
      u(mode, 0) = 0.0;
      for (Index i = 0; i + 1 < n; ++i) u(mode, i + 1) = std::exp(-a * (t[i + 1] - t[i])) * u(mode, i) + panel(i);
    } else {
      // -int_H^inf e^{-a(tau-H)} E = -(E/a + E'/a^2 + E''/a^3 + ...) at the horizon.
      u(mode, n - 1) = -(f[n - 1] / a + end_d1.dot(f.tail(kDerivPoints)) / (a * a) +
                         end_d2.dot(f.tail(kDerivPoints)) / (a * a * a));
      for (Index i = n - 2; i >= 0; --i) u(mode, i) = std::exp(-a * (t[i + 1] - t[i])) * u(mode, i + 1) - panel(i);
    }
  }
  return u;
}

Eigen::MatrixXd heat_residual(const SlowModel& model, const Eigen::MatrixXd& path, const Eigen::MatrixXd& forcing) {
  return model.grid.derivative(path) + model.deltas.asDiagonal() * path - forcing;
}

double weighted_sup(const SlowModel& model, const Eigen::MatrixXd& path, double q) {
  double out = 0.0;
  for (Index i = 0; i < path.cols(); ++i)
    out = std::max(out, std::pow(model.T + model.grid.t()[i], q) * path.col(i).norm());
  return out;
}

double kernel_norm(const SlowModel& model, const Eigen::MatrixXd& path) {
  return weighted_sup(model, path, model.gamma) +
         weighted_sup(model, model.grid.derivative(path), 1.0 + model.gamma);
}

double perp_norm(const SlowModel& model, const Eigen::MatrixXd& path) {
  const Eigen::VectorXd weight = (1.0 + model.deltas.array().abs()).matrix();
  return weighted_sup(model, weight.asDiagonal() * path, 1.0 + model.gamma);
}

double star_norm(const SlowModel& model, const Eigen::MatrixXd& w_top, const Eigen::MatrixXd& w_perp) {
  return kernel_norm(model, w_top) + (w_perp.rows() > 0 ? perp_norm(model, w_perp) : 0.0);
}

SyntheticErrors make_synthetic_errors(int k, Index perp_dim, double coupling, std::uint64_t seed) {
  require(k >= 1 && perp_dim >= 0, "bad synthetic dimensions");
  require(std::isfinite(coupling) && coupling >= 0.0, "coupling must be finite and nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  auto draw = [&](Index r, Index c) {
    Eigen::MatrixXd m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = g(rng);
    return m;
  };
  SyntheticErrors e;
  e.coupling = coupling;
  e.a = draw(k, 1).col(0).normalized();
  e.B = draw(k, perp_dim) / std::sqrt(std::max<double>(1.0, perp_dim));
  e.b = perp_dim > 0 ? Eigen::VectorXd(draw(perp_dim, 1).col(0).normalized()) : Eigen::VectorXd();
  e.C = draw(perp_dim, k) / std::sqrt(double(k));
  return e;
}

ErrorTerms evaluate_synthetic_errors(const SlowModel& model, const SyntheticErrors& errors,
                                     const Eigen::MatrixXd& w_top, const Eigen::MatrixXd& w_perp) {
  const Index n = model.grid.size();
  const int p = model.p;
  const Eigen::MatrixXd dtop = model.grid.derivative(w_top);
  ErrorTerms out{Eigen::MatrixXd(model.k, n), Eigen::MatrixXd(model.perp_dim(), n)};
  for (Index i = 0; i < n; ++i) {
    const double s = std::pow(model.T + model.grid.t()[i], -1.0 / (p - 2));
    const Eigen::VectorXd wt = w_top.col(i);
    const Eigen::VectorXd wp = w_perp.col(i);
    const double nt = wt.norm();
    const double nw = std::sqrt(wt.squaredNorm() + wp.squaredNorm());
    Eigen::VectorXd top = std::pow(s, p) * errors.a + std::pow(s, p - 1) * wt + std::pow(s, p - 3) * nt * wt +
                          std::pow(nt, p - 2) * wt;
    if (wp.size() > 0) top += (s + nw) * (errors.B * wp);
    out.top.col(i) = errors.coupling * top;
    if (model.perp_dim() > 0) {
      out.perp.col(i) =
          errors.coupling * (s + nw) * (std::pow(s, p - 1) * errors.b + errors.C * dtop.col(i) + wp);
    }
  }
  return out;
}

GeometricSystem make_geometric_system(const ReducedModel& reduction) {
  GeometricSystem sys;
  sys.reduction = &reduction;
  const SpectralData& sd = reduction.sd;
  std::vector<Index> idx(sd.down_indices.begin(), sd.down_indices.end());
  // The constant field is the scale direction: E is scale invariant, so it carries no dynamics.
  const double total = sd.weights.sum();
  for (Index j : sd.up_indices) {
    const Field f = sd.eigenfields.col(j);
    const double mean = sd.weights.dot(f) / total;
    if ((f.array() - mean).matrix().norm() > 1e-8 * f.norm()) idx.push_back(j);
  }
  std::sort(idx.begin(), idx.end());
  sys.perp_fields.resize(sd.eigenfields.rows(), static_cast<Index>(idx.size()));
  sys.deltas.resize(static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    sys.perp_fields.col(static_cast<Index>(j)) = sd.eigenfields.col(idx[j]);
    sys.deltas[static_cast<Index>(j)] = sd.eigenvalues[idx[j]];
  }
  return sys;
}

GeometricState assemble_geometric(const SlowModel& model, const GeometricSystem& sys, const Eigen::MatrixXd& w_top,
                                  const Eigen::MatrixXd& w_perp) {
  const ReducedModel& red = *sys.reduction;
  const Index n = model.grid.size();
  const Index nodes = red.kernel.rows();
  GeometricState st{Eigen::MatrixXd(nodes, n), Eigen::MatrixXd(nodes, n), Eigen::MatrixXd(nodes, n)};
  for (Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = ansatz_phi(model, model.grid.t()[i]) + w_top.col(i);
    const GraphMapResult g = solve_graph_map(red, x);
    st.graph.col(i) = g.chi;
    st.shape.col(i) = Field::Ones(nodes) + red.kernel * x + g.chi + sys.perp_fields * w_perp.col(i);
    st.u.col(i) = st.shape.col(i) * normalization_factor(red.base.with_u(st.shape.col(i)));
  }
  return st;
}

ErrorTerms error_terms(const SlowModel& model, const GeometricSystem& sys, const Eigen::MatrixXd& w_top,
                       const Eigen::MatrixXd& w_perp) {
  const ReducedModel& red = *sys.reduction;
  const Field& wts = red.sd.weights;
  const double wsum = wts.sum();
  const Index n = model.grid.size();
  const GeometricState st = assemble_geometric(model, sys, w_top, w_perp);
  const Eigen::MatrixXd dgraph = model.grid.derivative(st.graph);
  ErrorTerms out{Eigen::MatrixXd(model.k, n), Eigen::MatrixXd(model.perp_dim(), n)};
  for (Index i = 0; i < n; ++i) {
    const Field shape = st.shape.col(i);
    require((shape.array() > 0.0).all(), "assembled conformal factor lost positivity");
    // The flow moves u = c shape at unit volume; shape = u / mean(u) then obeys
    // shape' = (u' - shape mean(u')) / mean(u).
    const Field u = st.u.col(i);
    const Field du = flow_velocity(red.base.with_u(u));
    const double mean_u = wts.dot(u) / wsum;
    const Field dshape = (du - shape * (wts.dot(du) / wsum)) / mean_u;
    // Minus (8/(n+m-2)) times the weighted velocity: the gradient side of the projected equations.
    const Field total = -(1.0 / model.kappa()) * wts.cwiseProduct(dshape);
    const Eigen::VectorXd phi = ansatz_phi(model, model.grid.t()[i]);
    out.top.col(i) = model.fp.gradient(phi) + model.fp.hessian(phi) * w_top.col(i) - red.kernel.transpose() * total;
    out.perp.col(i) = -model.kappa() * (sys.perp_fields.transpose() * total) -
                      sys.perp_fields.transpose() * wts.cwiseProduct(Field(dgraph.col(i))) +
                      model.deltas.cwiseProduct(w_perp.col(i));
  }
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> decompose(const SlowModel& model, const GeometricSystem& sys,
                                                      const Eigen::MatrixXd& u) {
  const ReducedModel& red = *sys.reduction;
  const Field& wts = red.sd.weights;
  const Index n = model.grid.size();
  require(u.cols() == n && u.rows() == red.kernel.rows(), "field path has the wrong shape");
  Eigen::MatrixXd top(model.k, n), perp(model.perp_dim(), n);
  for (Index i = 0; i < n; ++i) {
    const Field rest = u.col(i) / (wts.dot(u.col(i)) / wts.sum()) - Field::Ones(u.rows());
    const Eigen::VectorXd x = red.kernel.transpose() * wts.cwiseProduct(rest);
    top.col(i) = x - ansatz_phi(model, model.grid.t()[i]);
    const GraphMapResult g = solve_graph_map(red, x);
    perp.col(i) = sys.perp_fields.transpose() * wts.cwiseProduct(Field(rest - g.chi));
  }
  return {top, perp};
}

ContractResult contract(const SlowModel& model, const ErrorFunctional& errors, const ContractOptions& options) {
  require(options.tol > 0.0 && options.max_iter >= 1, "bad contraction options");
  const Index n = model.grid.size();
  ContractResult res;
  res.w_top = Eigen::MatrixXd::Zero(model.k, n);
  res.w_perp = Eigen::MatrixXd::Zero(model.perp_dim(), n);
  const double eps = std::numeric_limits<double>::epsilon();
  for (int it = 1; it <= options.max_iter; ++it) {
    const ErrorTerms e = errors(res.w_top, res.w_perp);
    Eigen::MatrixXd top = solve_kernel_ode(model, e.top).path;
    Eigen::MatrixXd perp = model.perp_dim() > 0 ? solve_orthogonal_heat(model, e.perp) : Eigen::MatrixXd(0, n);
    const double step = star_norm(model, top - res.w_top, perp - res.w_perp);
    res.w_top = std::move(top);
    res.w_perp = std::move(perp);
    res.w_norm = star_norm(model, res.w_top, res.w_perp);
    res.steps.push_back(step);
    res.iterations = it;
    res.final_step = step;
    if (res.w_norm > 1.0) {
      throw NumericalError("iterate left the unit ball (norm " + std::to_string(res.w_norm) + "); increase T");
    }
    const std::size_t m = res.steps.size();
    if (m >= 2 && res.steps[m - 2] > 0.0 && step > 1e3 * eps * std::max(1.0, res.w_norm)) {
      res.rho = std::max(res.rho, step / res.steps[m - 2]);
    }
    if (step < options.tol) break;
    if (it == options.max_iter) {
      const double best = *std::min_element(res.steps.begin(), res.steps.end());
      char msg[200];
      std::snprintf(msg, sizeof msg, "contraction did not converge in %d iterations (smallest step %.3e, tol %.3e)",
                    options.max_iter, best, options.tol);
      throw NumericalError(msg);
    }
  }
  if (res.rho >= 1.0) {
    throw NumericalError("contraction factor " + std::to_string(res.rho) + " >= 1; increase T");
  }
  return res;
}

SlowTrajectory synthetic_trajectory(const SlowModel& model, const ContractResult& fp) {
  constexpr int nodes = 64;
  const Index dim = model.k + model.perp_dim();
  require(dim < nodes / 2, "too many modes for the 64-node cosine realization");
  Eigen::MatrixXd basis(nodes, dim);
  for (int i = 0; i < nodes; ++i)
    for (Index j = 0; j < dim; ++j) basis(i, j) = std::sqrt(2.0) * std::cos((j + 1) * 2.0 * M_PI * i / nodes);
  SlowTrajectory out;
  for (Index i = 0; i < model.grid.size(); ++i) {
    const double t = model.grid.t()[i];
    const Eigen::VectorXd phi = ansatz_phi(model, t);
    const Eigen::VectorXd x = phi + fp.w_top.col(i);
    Eigen::VectorXd coeff(dim);
    coeff << x, fp.w_perp.col(i);
    const Eigen::VectorXd wp = fp.w_perp.col(i);
    out.t.push_back(t);
    out.dev_sup.push_back((basis * coeff).cwiseAbs().maxCoeff());
    out.phi_norm.push_back(phi.norm());
    out.wtop_norm.push_back(fp.w_top.col(i).norm());
    out.wperp_norm.push_back(wp.norm());
    // Quadratic model of the orthogonal directions: E'' = (8/(n+m-2)) delta.
    const double c = 8.0 / model.nm2;
    out.energy_gap.push_back(model.fp(x) + 0.5 * c * wp.dot(model.deltas.cwiseProduct(wp)));
    const Eigen::VectorXd gp = c * model.deltas.cwiseProduct(wp);
    out.gradient_norm.push_back(std::sqrt(model.fp.gradient(x).squaredNorm() + gp.squaredNorm()));
  }
  return out;
}

SlowTrajectory geometric_trajectory(const SlowModel& model, const GeometricSystem& sys, const ContractResult& fp) {
  const ReducedModel& red = *sys.reduction;
  const GeometricState st = assemble_geometric(model, sys, fp.w_top, fp.w_perp);
  SlowTrajectory out;
  for (Index i = 0; i < model.grid.size(); ++i) {
    const double t = model.grid.t()[i];
    const Smms s = red.base.with_u(st.u.col(i));
    out.t.push_back(t);
    out.dev_sup.push_back((st.u.col(i).array() - 1.0).abs().maxCoeff());
    out.phi_norm.push_back(ansatz_phi(model, t).norm());
    out.wtop_norm.push_back(fp.w_top.col(i).norm());
    out.wperp_norm.push_back(fp.w_perp.col(i).norm());
    out.energy_gap.push_back(energy(s) - red.f0);
    out.gradient_norm.push_back(l2_norm(red.base.bg(), first_variation_laplacian_form(s)));
  }
  return out;
}

void write_slowflow_csv(std::ostream& out, const SlowTrajectory& traj) {
  out << "t,dev_sup,phi_norm,wtop_norm,wperp_norm\n";
  char buf[256];
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", traj.t[i], traj.dev_sup[i], traj.phi_norm[i],
                  traj.wtop_norm[i], traj.wperp_norm[i]);
    out << buf;
  }
}

}  // namespace wyf
