#include "wyf/rates.hpp"

#include <algorithm>
#include <cmath>

namespace wyf {

std::string to_string(RateKind kind) {
  switch (kind) {
    case RateKind::exponential: return "exponential";
    case RateKind::polynomial: return "polynomial";
    default: return "undecided";
  }
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "line fit needs at least two points");
  const Index n = static_cast<Index>(x.size());
  Eigen::MatrixXd a(n, 2);
  Eigen::VectorXd b(n);
  for (Index i = 0; i < n; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = x[i];
    b[i] = y[i];
  }
  const Eigen::Vector2d c = a.colPivHouseholderQr().solve(b);
  LineFit f;
  f.intercept = c[0];
  f.slope = c[1];
  f.rss = (a * c - b).squaredNorm();
  const double tss = (b.array() - b.mean()).square().sum();
  f.r2 = tss > 0.0 ? std::clamp(1.0 - f.rss / tss, 0.0, 1.0) : 1.0;
  return f;
}

namespace {

struct Window {
  std::vector<Index> idx;
  double t_lo = 0.0, t_hi = 0.0;
};

// Usable region ends at the first sample at or below the floor; the last tail fraction is dropped and the middle
// keep fraction of the rest is used.
Window select_window(const std::vector<double>& t, const std::vector<std::vector<double>>& series,
                     const WindowOptions& o) {
  require(!t.empty(), "empty series");
  for (const auto& s : series) require(s.size() == t.size(), "series and times differ in length");
  Window w;
  if (o.t_hi > o.t_lo) {
    w.t_lo = o.t_lo;
    w.t_hi = o.t_hi;
  } else {
    require(o.exclude_tail >= 0.0 && o.exclude_tail < 1.0 && o.keep > 0.0 && o.keep <= 1.0,
            "bad window fractions");
    std::size_t end = t.size();
    for (std::size_t i = 0; i < t.size() && end == t.size(); ++i)
      for (const auto& s : series)
        if (!(s[i] > o.floor)) {
          end = i;
          break;
        }
    require(end >= 2, "series is at the noise floor from the start");
    const double t0 = t.front();
    const double span = (t[end - 1] - t0) * (1.0 - o.exclude_tail);
    w.t_lo = t0 + 0.5 * (1.0 - o.keep) * span;
    w.t_hi = t0 + (1.0 - 0.5 * (1.0 - o.keep)) * span;
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < w.t_lo || t[i] > w.t_hi) continue;
    bool ok = true;
    for (const auto& s : series) ok = ok && s[i] > o.floor && std::isfinite(s[i]);
    if (ok) w.idx.push_back(static_cast<Index>(i));
  }
  if (static_cast<int>(w.idx.size()) < o.min_samples) {
    throw ValidationError("rate window [" + std::to_string(w.t_lo) + ", " + std::to_string(w.t_hi) + "] has " +
                          std::to_string(w.idx.size()) + " samples, need " + std::to_string(o.min_samples));
  }
  return w;
}

double score(const LineFit& f, std::size_t n) {
  const double rss = std::max(f.rss, 1e-300 * n);
  return n * std::log(rss / n) + 4.0;
}

}  // namespace

RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& y, const WindowOptions& options) {
  const Window w = select_window(t, {y}, options);
  std::vector<double> tt, lt, ly;
  for (Index i : w.idx) {
    tt.push_back(t[i]);
    lt.push_back(std::log1p(t[i]));
    ly.push_back(std::log(y[i]));
  }
  RateFit r;
  r.t_lo = w.t_lo;
  r.t_hi = w.t_hi;
  r.samples = static_cast<int>(w.idx.size());
  r.exponential = fit_line(tt, ly);
  r.polynomial = fit_line(lt, ly);
  r.exponential_score = score(r.exponential, tt.size());
  r.polynomial_score = score(r.polynomial, tt.size());
  const LineFit* chosen = nullptr;
  if (r.exponential_score + 2.0 < r.polynomial_score) {
    r.kind = RateKind::exponential;
    chosen = &r.exponential;
  } else if (r.polynomial_score + 2.0 < r.exponential_score) {
    r.kind = RateKind::polynomial;
    chosen = &r.polynomial;
  }
  if (chosen) {
    r.rate = -chosen->slope;
    r.constant = std::exp(chosen->intercept);
    r.r2 = chosen->r2;
  }
  return r;
}

RateFit fit_rate(const Trajectory& traj, Series series, const WindowOptions& options) {
  std::vector<double> y;
  switch (series) {
    case Series::sup_dev: y = traj.sup_dev; break;
    case Series::h1_dev: y = traj.h1_dev; break;
    case Series::r_gap:
      for (double r : traj.r_values) y.push_back(r - traj.r_values.back());
      break;
  }
  return fit_rate(traj.times, y, options);
}

LojasiewiczFit lojasiewicz_probe(const std::vector<double>& t, const std::vector<double>& gap,
                                 const std::vector<double>& gradient, const WindowOptions& options) {
  const Window w = select_window(t, {gap, gradient}, options);
  std::vector<double> lx, ly;
  for (Index i : w.idx) {
    lx.push_back(std::log(gradient[i]));
    ly.push_back(std::log(gap[i]));
  }
  const LineFit f = fit_line(lx, ly);
  require(f.slope > 0.0, "gap does not decrease with the gradient; degenerate window");
  LojasiewiczFit out;
  out.slope = f.slope;
  out.theta = 1.0 - 1.0 / f.slope;
  out.r2 = f.r2;
  out.t_lo = w.t_lo;
  out.t_hi = w.t_hi;
  out.samples = static_cast<int>(w.idx.size());
  for (Index i : w.idx) out.constant = std::max(out.constant, std::pow(gap[i], 1.0 - out.theta) / gradient[i]);
  return out;
}

LojasiewiczFit lojasiewicz_probe(const Trajectory& traj, const WindowOptions& options) {
  require(!traj.r_values.empty(), "empty trajectory");
  std::vector<double> gap;
  for (double r : traj.r_values) gap.push_back(r - traj.r_values.back());
  return lojasiewicz_probe(traj.times, gap, traj.de_l2, options);
}

}  // namespace wyf
