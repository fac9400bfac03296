// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.
#include "support.hpp"
#include "wyf/cli.hpp"
#include "wyf/energy.hpp"
#include "wyf/flow.hpp"
#include "wyf/rates.hpp"
#include "wyf/reduction.hpp"
#include "wyf/slowflow.hpp"
#include "wyf/spectral.hpp"
#include "wyf/synthetic.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace wyf;
using testing_support::sample;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  // Every number the criterion produced, printed exactly; compared across reruns.
  std::string digest;
};

class Digest {
 public:
  Digest& operator<<(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g;", x);
    s_ += buf;
    return *this;
  }
  Digest& operator<<(const std::string& s) {
    s_ += s;
    s_ += ';';
    return *this;
  }
  Digest& operator<<(const std::vector<double>& v) {
    for (double x : v) *this << x;
    return *this;
  }
  const std::string& str() const { return s_; }

 private:
  std::string s_;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string sci(double x) { return fmt("%.2e", x); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wyf_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Background weighted_torus() { return build_torus_background(2, {32, 32}, "expr:0.3*cos(x1)"); }

Smms flow_start() {
  Background t = weighted_torus();
  Smms s(t, Params(2, 2.0), sample(t, [](const double* x) { return 1.0 + 0.1 * std::cos(x[1]); }));
  return normalize_volume(s);
}

// 1. Variational consistency on the weighted torus.
Outcome variational() {
  Outcome o;
  Digest d;
  const Background t = weighted_torus();
  const Params p(2, 2.0);
  std::mt19937_64 rng(1);
  double first = 0.0, second = 0.0, third = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    Field u = testing_support::random_torus_field(t, 3, rng, 0.1);
    u = (u.array() - u.minCoeff() + 0.5).matrix();
    const Field v = testing_support::random_torus_field(t, 3, rng, 0.5);
    const Smms s(t, p, u);
    const double exact = inner(t, first_variation(s), v);
    const double fd = fd_variation(s, {v}, 1, 1e-5);
    first = std::max(first, std::abs(exact - fd) / std::abs(fd));
    d << exact << fd;
  }
  const Smms one(t, p);
  for (int trial = 0; trial < 25; ++trial) {
    const Field v = testing_support::random_torus_field(t, 2, rng, 0.5);
    const Field w = testing_support::random_torus_field(t, 2, rng, 0.5);
    const double exact = second_variation(one, v, w);
    const double fd = fd_variation(one, {v, w}, 2, 1e-4);
    second = std::max(second, std::abs(exact - fd) / std::abs(fd));
    d << exact << fd;
  }
  // Kernel-like directions: the lowest mean-zero Fourier modes, where the base operator is smallest.
  std::normal_distribution<double> g;
  auto low_mode = [&] {
    const double a = g(rng), b = g(rng), c = g(rng), e = g(rng);
    return sample(t, [=](const double* x) {
      return a * std::cos(x[0]) + b * std::sin(x[0]) + c * std::cos(x[1]) + e * std::sin(x[1]);
    });
  };
  for (int trial = 0; trial < 25; ++trial) {
    const Field v = low_mode(), w = low_mode(), z = low_mode();
    const double exact = third_variation(one, v, w, z);
    const double fd = fd_variation(one, {v, w, z}, 3, 1e-3);
    third = std::max(third, std::abs(exact - fd) / std::abs(fd));
    d << exact << fd;
  }
  o.pass = first < 1e-6 && second < 1e-5 && third < 1e-3;
  o.detail = "max rel err DE " + sci(first) + " (<1e-6), D2E(1) " + sci(second) + " (<1e-5), D3E(1) " + sci(third) +
             " (<1e-3)";
  o.digest = d.str();
  return o;
}

FlowConfig acceptance_flow(double t_end) {
  FlowConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = t_end;
  cfg.renormalize = false;
  return cfg;
}

std::string csv_of(const Trajectory& traj) {
  std::ostringstream out;
  write_trajectory_csv(out, traj);
  return out.str();
}

// 2. Volume conservation, monotone r, dissipation identity.
Outcome conservation() {
  Outcome o;
  const Trajectory traj = run(flow_start(), acceptance_flow(5.0));
  double drift = 0.0, worst = 0.0, max_rise = 0.0;
  bool monotone = true, identity = true;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    drift = std::max(drift, std::abs(traj.volumes[i] - traj.volumes[0]) / traj.volumes[0]);
    // Once converged, r sits still and its quadrature jitters by a few ulps.
    if (i > 0 && traj.r_values[i] > traj.r_values[i - 1] + 1e-13 * std::max(1.0, std::abs(traj.r_values[i - 1])))
      monotone = false;
    if (i > 0) max_rise = std::max(max_rise, traj.r_values[i] - traj.r_values[i - 1]);
    // The difference quotient cannot resolve dr/dt below its roundoff floor.
    const double pred = traj.dissipation[i];
    const double err = std::abs(traj.dr_dt[i] - pred);
    if (err > 1e-3 * std::abs(pred) + traj.dr_dt_floor[i]) identity = false;
    if (std::abs(pred) > 1e3 * traj.dr_dt_floor[i]) worst = std::max(worst, err / std::abs(pred));
  }
  o.pass = drift < 1e-8 && monotone && identity;
  o.detail = "volume drift " + sci(drift) + " (<1e-8), r non-increasing " + (monotone ? "yes" : "no") +
             " (largest rise " + sci(max_rise) + ", allowed 1e-13 max(1,|r|))" +
             ", dissipation identity " + (identity ? "holds" : "violated") + " (max rel mismatch " + sci(worst) +
             ", tol 1e-3), " + std::to_string(traj.times.size()) + " records";
  o.digest = csv_of(traj);
  return o;
}

// 3. Exponential convergence and theta = 1/2.
Outcome convergence() {
  Outcome o;
  const Trajectory traj = run(flow_start(), acceptance_flow(20.0));
  const RateFit fit = fit_rate(traj, Series::sup_dev);
  const LojasiewiczFit lf = lojasiewicz_probe(traj);
  o.pass = traj.final_curvature_deviation < 1e-6 && fit.kind == RateKind::exponential && fit.r2 > 0.99 &&
           lf.theta >= 0.45 && lf.theta <= 0.55;
  o.detail = "final sup|R-r| " + sci(traj.final_curvature_deviation) + " (<1e-6), fit " + to_string(fit.kind) +
             " rate " + fmt("%.3f", fit.rate) + " r2 " + fmt("%.6f", fit.r2) + " (>0.99), theta " +
             fmt("%.4f", lf.theta) + " (in [0.45, 0.55])";
  Digest d;
  d << csv_of(traj) << fit.rate << fit.r2 << lf.theta << lf.constant;
  o.digest = d.str();
  return o;
}

// 4. Kernel detection on round spheres.
Outcome kernels() {
  Outcome o;
  const Smms s0(build_unit_volume_sphere(3, 40), Params(3, 0.0));
  const LinearizedOperator op0 = assemble_linearized(s0);
  const SpectralData sd0 = eigendecompose(op0);
  const Field c = sample(s0.bg(), [](const double* th) { return std::cos(th[0]); });
  const double residual = sup_norm(op0.apply(c)) / sup_norm(c);
  const Smms s1(build_unit_volume_sphere(3, 40), Params(3, 1.0));
  const SpectralData sd1 = eigendecompose(assemble_linearized(s1));
  o.pass = sd0.kernel_dim() == 1 && residual < 1e-8 && sd1.kernel_dim() == 0;
  o.detail = "S^3 m=0: kernel dim " + std::to_string(sd0.kernel_dim()) + ", sup|L cos| " + sci(residual) +
             " (<1e-8); S^3 m=1: kernel dim " + std::to_string(sd1.kernel_dim());
  Digest d;
  d << residual << std::vector<double>(sd0.eigenvalues.data(), sd0.eigenvalues.data() + sd0.eigenvalues.size())
    << std::vector<double>(sd1.eigenvalues.data(), sd1.eigenvalues.data() + sd1.eigenvalues.size());
  o.digest = d.str();
  return o;
}

// 5. Graph map on the round S^3, m = 0.
Outcome lyapunov_schmidt() {
  Outcome o;
  const Smms base(build_unit_volume_sphere(3, 40), Params(3, 0.0));
  const SpectralData sd = eigendecompose(assemble_linearized(base));
  ReducedModel model = make_reduced_model(base, sd);
  const GraphMapResult g0 = solve_graph_map(model, Eigen::VectorXd::Zero(1));
  const double phi0 = sup_norm(g0.phi);
  // Order of Phi at 0 from s = 1e-2 and 1e-3: 1 if DPhi(0) != 0, 2 for a quadratic graph.
  const double n2 = l2_norm(base.bg(), solve_graph_map(model, Eigen::VectorXd::Constant(1, 1e-2)).phi);
  const double n3 = l2_norm(base.bg(), solve_graph_map(model, Eigen::VectorXd::Constant(1, 1e-3)).phi);
  const double phi_order = std::log10(n2 / n3);
  double residual = 0.0, flat = 0.0;
  const double f0 = reduced_functional(model, Eigen::VectorXd::Zero(1));
  Digest d;
  for (int i = -5; i <= 5; ++i) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.01 * i);
    const GraphMapResult g = solve_graph_map(model, x);
    residual = std::max(residual, g.residual / g.residual_scale);
    flat = std::max(flat, std::abs(reduced_functional(model, x) - f0));
    d << g.residual;
  }
  const OrderResult order = detect_order_and_tensor(model);
  o.pass = phi0 == 0.0 && phi_order > 1.5 && residual < 1e-10 && flat < 1e-9 && order.integrable;
  o.detail = "Phi(0) " + sci(phi0) + ", order of Phi at 0 " + fmt("%.3f", phi_order) + " (>1.5), rel residual " +
             sci(residual) + " (<1e-10), |F - F(0)| " + sci(flat) + " (<1e-9), verdict " +
             (order.integrable ? "integrable" : "not integrable");
  d << phi0 << n2 << n3 << flat;
  o.digest = d.str();
  return o;
}

// 6. Cubic normalization on a degenerate matrix background, through the CLI.
Outcome cubic_factor() {
  Outcome o;
  const fs::path dir = scratch_dir("c6");
  const cli::Json cfg = {{"background", {{"kind", "degenerate"}, {"node_count", 14}, {"kernel_dim", 3}, {"curvature", 4.0}}},
                         {"params", {{"m", 2.0}}},
                         {"seed", 8}};
  std::ofstream(dir / "deg.json") << cfg.dump();
  const int rc = cli::run({"reduce", "-c", (dir / "deg.json").string(), "-o", (dir / "out").string()});
  if (rc != 0) {
    o.detail = "reduce exited with " + std::to_string(rc);
    return o;
  }
  const std::string text = slurp(dir / "out" / "reduction.json");
  const cli::Json j = cli::Json::parse(text);
  const cli::Json& cn = j["cubic_normalization"];
  const double factor = cn["factor"].get<double>();
  double spread = 0.0;
  for (const auto& r : cn["ratios"]) spread = std::max(spread, std::abs(r.get<double>() - factor) / factor);
  const bool candidate = std::abs(factor - 1.0) < 1e-3 || std::abs(factor - 1.0 / 6.0) < 1e-3 / 6.0;
  o.pass = j["p"] == 3 && cn["ratios"].size() == 5 && cn["consistent"].get<bool>() && spread < 1e-3 && candidate;
  o.detail = "recorded factor " + fmt("%.6f", factor) + " (1/6 = 0.166667), max rel spread over 5 directions " +
             sci(spread) + " (<1e-3), R^m = 4, kernel dim " + j["kernel_dim"].dump();
  o.digest = text;
  return o;
}

// 7. Slow-flow solvers: ansatz, kernel ODE, orthogonal heat equation.
SymmetricTensor<double> cubic_2d(double c) {
  // F = x^3 + c x y^2.
  SymmetricTensor<double> t(2, 3);
  t.set({0, 0, 0}, 1.0);
  t.set({0, 1, 1}, c / 3.0);
  return t;
}

template <class F>
Eigen::MatrixXd rows_on_grid(const SlowModel& m, Index rows, F f) {
  Eigen::MatrixXd out(rows, m.grid.size());
  for (Index i = 0; i < m.grid.size(); ++i) out.col(i) = f(m.grid.t()[i]);
  return out;
}

Outcome solvers() {
  Outcome o;
  Digest d;
  SymmetricTensor<double> f3(1, 3);
  f3.set({0, 0, 0}, 1.0);
  const SlowModel ms = make_slow_model(f3, Eigen::VectorXd::Ones(1), 2.0, 1.5, 100.0, Eigen::VectorXd());
  double ansatz = 0.0;
  for (Index i = 0; i < ms.grid.size(); ++i) ansatz = std::max(ansatz, ansatz_residual(ms, ms.grid.t()[i]).norm());
  d << ansatz;

  // Kernel ODE with b = kappa mu = 1/2 (backward) and 2 (forward), forcing (T+t)^{-1-gamma}.
  const double gamma = 1.5, kappa = 0.25;
  double kernel_err = 0.0;
  std::vector<double> kc;
  for (double T : {10.0, 100.0, 1000.0}) {
    const SlowModel m = make_slow_model(cubic_2d(0.75), Eigen::VectorXd::Unit(2, 0), 2.0, gamma, T, Eigen::VectorXd());
    const Eigen::VectorXd eb = m.e.col(0), ef = m.e.col(1);
    const Eigen::MatrixXd forcing =
        rows_on_grid(m, 2, [&](double t) { return Eigen::VectorXd((eb + ef) * std::pow(T + t, -1.0 - gamma)); });
    const KernelSolution sol = solve_kernel_ode(m, forcing);
    for (Index i = 0; i < m.grid.size(); ++i) {
      const double t = m.grid.t()[i];
      const double back = -kappa / (gamma - 0.5) * std::pow(T + t, -gamma);
      const double fwd = kappa * std::pow(T + t, -2.0) * (std::pow(T + t, 2.0 - gamma) - std::pow(T, 2.0 - gamma)) /
                         (2.0 - gamma);
      const double scale = std::pow(T + t, -gamma);
      kernel_err = std::max(kernel_err, std::abs(sol.path.col(i).dot(eb) - back) / scale);
      kernel_err = std::max(kernel_err, std::abs(sol.path.col(i).dot(ef) - fwd) / scale);
    }
    kc.push_back(kernel_norm(m, sol.path) / weighted_sup(m, forcing, 1.0 + gamma));
  }
  const double kernel_var = *std::max_element(kc.begin(), kc.end()) / *std::min_element(kc.begin(), kc.end()) - 1.0;
  d << kernel_err << kc;

  // Heat equation: u' + u = e^{-2t} gives e^{-t} - e^{-2t}; u' - u = e^{-2t} decaying gives -e^{-2t}/3.
  Eigen::VectorXd pm(2);
  pm << 1.0, -1.0;
  const SlowModel mh = make_slow_model(f3, Eigen::VectorXd::Ones(1), 2.0, 1.5, 10.0, pm, 1e3);
  const Eigen::MatrixXd uh =
      solve_orthogonal_heat(mh, rows_on_grid(mh, 2, [](double t) { return Eigen::VectorXd::Constant(2, std::exp(-2 * t)); }));
  double heat_err = 0.0;
  for (Index i = 0; i < mh.grid.size(); ++i) {
    const double t = mh.grid.t()[i];
    heat_err = std::max(heat_err, std::abs(uh(0, i) - std::exp(-t) * (1.0 - std::exp(-t))));
    heat_err = std::max(heat_err, std::abs(uh(1, i) + std::exp(-2 * t) / 3.0));
  }
  // ||u||_{L2_q} <= C ||E||_{L2_q} with C independent of T.
  Eigen::VectorXd deltas(4);
  deltas << -4.0, -1.5, 2.0, 30.0;
  std::vector<double> hc;
  for (double T : {10.0, 100.0, 1000.0}) {
    const SlowModel m = make_slow_model(f3, Eigen::VectorXd::Ones(1), 2.0, 1.5, T, deltas);
    const Eigen::MatrixXd forcing = rows_on_grid(m, 4, [&](double t) {
      Eigen::VectorXd f(4);
      f << 1.0, -0.5, 0.3, 2.0;
      return Eigen::VectorXd(f * std::pow(T + t, -2.5) * (1.0 + 0.5 * std::sin(std::log(T + t))));
    });
    hc.push_back(weighted_sup(m, solve_orthogonal_heat(m, forcing), 2.5) / weighted_sup(m, forcing, 2.5));
  }
  const double heat_var = *std::max_element(hc.begin(), hc.end()) / *std::min_element(hc.begin(), hc.end()) - 1.0;
  d << heat_err << hc;

  o.pass = ansatz <= 1e-12 && kernel_err < 1e-8 && kernel_var < 0.2 && heat_err < 1e-9 && heat_var < 0.2;
  o.detail = "ansatz residual " + sci(ansatz) + " (<=1e-12), kernel ODE err " + sci(kernel_err) +
             " (<1e-8), C spread " + fmt("%.1f%%", 100 * kernel_var) + " (<20%), heat err " + sci(heat_err) +
             " (<1e-9), L2_q constant spread " + fmt("%.1f%%", 100 * heat_var);
  o.digest = d.str();
  return o;
}

// 8. Slow solution in synthetic mode at T = 1000.
Outcome slow_solution() {
  Outcome o;
  Eigen::VectorXd deltas(5);
  deltas << -3.0, -1.5, 2.0, 5.0, 9.0;
  SymmetricTensor<double> f3(1, 3);
  f3.set({0, 0, 0}, 1.0);
  const double T = 1e3;
  const SlowModel m = make_slow_model(f3, Eigen::VectorXd::Ones(1), 2.0, 1.5, T, deltas);
  const SyntheticErrors errs = make_synthetic_errors(1, 5, 1.0, 7);
  const ContractResult r = contract(m, [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return evaluate_synthetic_errors(m, errs, a, b);
  });
  const SlowTrajectory traj = synthetic_trajectory(m, r);
  double c1 = INFINITY, c2 = 0.0, s1 = INFINITY, s2 = 0.0;
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    const double t = traj.t[i];
    if (t < 1.0 || t > 1e4) continue;
    c1 = std::min(c1, traj.dev_sup[i] * (1.0 + t));
    c2 = std::max(c2, traj.dev_sup[i] * (1.0 + t));
    s1 = std::min(s1, traj.dev_sup[i] * (T + t));
    s2 = std::max(s2, traj.dev_sup[i] * (T + t));
  }
  const RateFit fit = fit_rate(traj.t, traj.dev_sup);
  o.pass = r.rho < 1.0 && r.iterations <= 200 && c2 / c1 < 10.0 && std::abs(fit.rate - 1.0) <= 0.05;
  o.detail = "rho " + sci(r.rho) + " (<1), iterations " + std::to_string(r.iterations) + " (<=200), c2/c1 on [1,1e4] " +
             fmt("%.1f", c2 / c1) + " (<10), fit exponent " + fmt("%.4f", fit.rate) + " (1 +- 0.05)" +
             "; info: with the clock shifted by T the ratio is " + fmt("%.4f", s2 / s1);
  Digest d;
  d << r.rho << static_cast<double>(r.iterations) << traj.dev_sup << fit.rate << c1 << c2;
  o.digest = d.str();
  return o;
}

// 9. Certificate through the CLI.
std::string certify(const std::vector<std::string>& args) {
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  std::vector<std::string> full = {"certify-as3"};
  full.insert(full.end(), args.begin(), args.end());
  const int rc = cli::run(full);
  std::cout.rdbuf(old);
  return rc == 0 ? captured.str() : std::string();
}

double field_of(const std::string& report, const std::string& key) {
  const std::string tag = "\n" + key + " = ";
  const std::size_t at = ("\n" + report).find(tag);
  if (at == std::string::npos) return NAN;
  return std::strtod(report.c_str() + at + tag.size() - 1, nullptr);
}

Outcome certificate() {
  Outcome o;
  const std::string a = certify({"--n1", "2", "--n2", "2", "--m", "1", "--base-volume", "1", "--v3", "1"});
  const std::string zero = certify({"--n1", "2", "--n2", "2", "--m", "1", "--base-volume", "1", "--v3", "0"});
  const std::string b = certify({"--n1", "3", "--n2", "2", "--m", "0.5", "--base-volume", "2.5", "--v3", "-0.4"});
  const bool exact = a.find("\nlambda1 = 12\n") != std::string::npos && a.find("\nR_FS = 24\n") != std::string::npos;
  // F3 = -2 ((n+m+2)/(n+m-2)) (4/(n+m-2)) R int v^3 with R = lambda1 (n+m-1), n = n1 + 2 n2.
  auto f3 = [](int n1, int n2, double m, double vol, double v3) {
    const double n = n1 + 2.0 * n2, lambda1 = 4.0 * (n2 + 1);
    return -2.0 * ((n + m + 2) / (n + m - 2)) * (4.0 / (n + m - 2)) * lambda1 * (n + m - 1) * vol * v3;
  };
  const double ea = f3(2, 2, 1.0, 1.0, 1.0), eb = f3(3, 2, 0.5, 2.5, -0.4);
  const double ga = field_of(a, "F3"), gb = field_of(b, "F3");
  const bool values = std::abs(ga - ea) <= 1e-12 * std::abs(ea) && std::abs(gb - eb) <= 1e-12 * std::abs(eb);
  const bool verdicts = a.find("AS3 = true") != std::string::npos && b.find("AS3 = true") != std::string::npos &&
                        zero.find("AS3 = false") != std::string::npos;
  o.pass = exact && values && verdicts;
  o.detail = std::string("lambda1 = 12 and R_FS = 24 ") + (exact ? "printed" : "missing") + ", F3 " + fmt("%.6g", ga) +
             " vs " + fmt("%.6g", ea) + " and " + fmt("%.6g", gb) + " vs " + fmt("%.6g", eb) + ", AS3 verdicts " +
             (verdicts ? "true/false/true" : "wrong");
  o.digest = a + zero + b;
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget;
  std::function<Outcome()> run;
};

// CLI outputs for the determinism check: flow and slow-flow files written twice.
bool cli_rerun_identical(std::string& detail) {
  const fs::path dir = scratch_dir("c10");
  const cli::Json flow = {{"background", {{"kind", "torus"}, {"grid", {32, 32}}, {"phi0", "expr:0.3*cos(x1)"}}},
                          {"params", {{"m", 2.0}}},
                          {"flow", {{"dt", 1e-3}, {"t_end", 1.0}, {"u0", "expr:1+0.1*cos(x2)"}}}};
  const cli::Json slow = {{"seed", 7}};
  std::ofstream(dir / "flow.json") << flow.dump();
  std::ofstream(dir / "slow.json") << slow.dump();
  bool same = true;
  for (const auto& [cmd, cfg, files] :
       std::vector<std::tuple<std::string, std::string, std::vector<std::string>>>{
           {"flow", "flow.json", {"trajectory.csv", "snapshots.csv", "summary.json"}},
           {"slowmodel", "slow.json", {"slowflow.csv", "fit.json"}}}) {
    for (const char* rep : {"a", "b"}) {
      if (cli::run({cmd, "-c", (dir / cfg).string(), "-o", (dir / (cmd + rep)).string()}) != 0) same = false;
    }
    for (const auto& f : files) {
      const std::string x = slurp(dir / (cmd + "a") / f), y = slurp(dir / (cmd + "b") / f);
      if (x.empty() || x != y) {
        same = false;
        detail += " " + f + " differs;";
      }
    }
  }
  return same;
}

}  // namespace

int main(int argc, char** argv) {
  // --only N runs a single criterion (no rerun).
  int only = 0;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--only") == 0) only = std::atoi(argv[i + 1]);

  const std::vector<Criterion> criteria = {
      {1, "variational consistency", 30.0, variational},
      {2, "conservation and dissipation", 120.0, conservation},
      {3, "exponential convergence and theta", 300.0, convergence},
      {4, "kernel detection", 10.0, kernels},
      {5, "graph map and integrability", 60.0, lyapunov_schmidt},
      {6, "cubic normalization factor", 0.0, cubic_factor},
      {7, "slow-flow solvers", 60.0, solvers},
      {8, "slow solution (synthetic)", 300.0, slow_solution},
      {9, "AS3 certificate", 0.0, certificate},
  };

  int failed = 0;
  std::vector<std::string> digests;
  for (const Criterion& c : criteria) {
    if (only && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const double secs = seconds_since(t0);
    const bool in_time = c.budget <= 0.0 || secs < c.budget;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    digests.push_back(o.digest);
    std::printf("[%s] %d %s: %s; %.1f s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.budget > 0.0 ? (" (budget " + fmt("%.0f", c.budget) + " s)").c_str() : "");
    std::fflush(stdout);
  }
  if (only && only != 10) return failed ? 1 : 0;

  // 10. Rerun everything with the same seeds and compare exactly.
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  int mismatched = 0;
  for (std::size_t i = 0; i < criteria.size() && !only; ++i) {
    Outcome again;
    try {
      again = criteria[i].run();
    } catch (const std::exception& e) {
      again.digest = std::string("threw: ") + e.what();
    }
    if (again.digest.empty() || again.digest != digests[i]) {
      ++mismatched;
      detail += " criterion " + std::to_string(criteria[i].id) + " differs;";
    }
  }
  const bool cli_same = cli_rerun_identical(detail);
  const bool pass = mismatched == 0 && cli_same;
  failed += pass ? 0 : 1;
  std::printf("[%s] 10 determinism: %s%s; %.1f s\n", pass ? "PASS" : "FAIL",
              only ? "CLI outputs only" : "criteria 1-9 rerun, all results bit-identical",
              pass ? (cli_same ? ", CLI flow/slowmodel files byte-identical" : "") : detail.c_str(), seconds_since(t0));
  std::printf("%d of %d criteria failed\n", failed, only ? 1 : 10);
  return failed ? 1 : 0;
}
