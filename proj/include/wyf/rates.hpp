#pragma once

#include "wyf/flow.hpp"

#include <string>
#include <vector>

namespace wyf {

enum class RateKind { exponential, polynomial, undecided };
std::string to_string(RateKind kind);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double rss = 0.0;
};

// Least squares y = intercept + slope x.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct WindowOptions {
  // Samples at or below the floor end the usable region.
  double floor = 1e-12;
  // Fraction of the usable region dropped at the end (reference-state bias).
  double exclude_tail = 0.1;
  // Middle fraction of what remains.
  double keep = 0.6;
  int min_samples = 30;
  // Explicit [t_lo, t_hi] when t_hi > t_lo.
  double t_lo = 0.0;
  double t_hi = 0.0;
};

struct RateFit {
  RateKind kind = RateKind::undecided;
  // delta for exponential decay, exponent for polynomial decay; both reported as positive decay rates.
  double rate = 0.0;
  double constant = 0.0;
  double r2 = 0.0;
  double t_lo = 0.0, t_hi = 0.0;
  int samples = 0;
  LineFit exponential, polynomial;
  double exponential_score = 0.0, polynomial_score = 0.0;
};

// ln y against t and against ln(1+t); the kind with the lower information score wins by a margin of 2.
RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& y, const WindowOptions& options = {});

enum class Series { sup_dev, h1_dev, r_gap };
RateFit fit_rate(const Trajectory& traj, Series series, const WindowOptions& options = {});

struct LojasiewiczFit {
  double theta = 0.0;
  double constant = 0.0;
  double r2 = 0.0;
  double slope = 0.0;
  double t_lo = 0.0, t_hi = 0.0;
  int samples = 0;
};

// Regresses ln(gap) on ln(gradient); slope s gives theta = 1 - 1/s and C = max gap^{1-theta}/gradient.
LojasiewiczFit lojasiewicz_probe(const std::vector<double>& t, const std::vector<double>& gap,
                                 const std::vector<double>& gradient, const WindowOptions& options = {});
// Uses r - r_final and the L^2 norm of DE.
LojasiewiczFit lojasiewicz_probe(const Trajectory& traj, const WindowOptions& options = {});

}  // namespace wyf
