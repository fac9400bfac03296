#include "wyf/cli.hpp"

#include "wyf/energy.hpp"
#include "wyf/expression.hpp"
#include "wyf/flow.hpp"
#include "wyf/rates.hpp"
#include "wyf/reduction.hpp"
#include "wyf/slowflow.hpp"
#include "wyf/spectral.hpp"
#include "wyf/synthetic.hpp"

#include <CLI11.hpp>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>

extern char** environ;

namespace wyf::cli {

namespace fs = std::filesystem;

Json default_config() {
  return {
      {"background",
       {{"kind", "torus"},
        {"n", 2},
        {"grid", Json::array({32, 32})},
        {"node_count", 64},
        {"phi0", ""},
        {"radius", 1.0},
        {"unit_volume", false},
        {"dealias", false},
        {"mass", Json::array()},
        {"stiffness", Json::array()},
        {"r0", Json::array()},
        {"phi0_values", Json::array()},
        {"kernel_dim", 1},
        {"curvature", 4.0}}},
      {"params", {{"m", 2.0}}},
      {"flow",
       {{"scheme", "rk4"},
        {"dt", 1e-3},
        {"t_end", 1.0},
        {"renormalize", false},
        {"record_every", 10},
        {"u0", ""}}},
      {"spectral", {{"tol_kernel", 1e-8}}},
      {"reduction", {{"epsilon", 0.1}, {"newton_tol", 1e-10}, {"restarts", 200}}},
      {"slowflow",
       {{"mode", "synthetic"},
        {"p", 3},
        {"k", 1},
        {"gamma", 0.0},
        {"T", 1000.0},
        {"horizon", 1e6},
        {"points_per_decade", 64},
        {"deltas", Json::array({-3.0, -1.5, 2.0, 5.0, 9.0})},
        {"coupling", 1.0},
        {"Fp", Json::array()},
        {"tol", 1e-8},
        {"max_iter", 200}}},
      {"rates", {{"window", Json::array()}, {"series", "sup_dev"}}},
      {"seed", 1},
  };
}

namespace {

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) h = (h ^ c) * 0x100000001b3ull;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void merge(Json& into, const Json& raw, const std::string& path) {
  require(raw.is_object(), "config section '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = raw.begin(); it != raw.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    require(into.contains(it.key()), "unknown config key '" + key + "'");
    Json& slot = into[it.key()];
    const Json& v = it.value();
    if (slot.is_object()) {
      merge(slot, v, key);
    } else if (slot.is_boolean()) {
      require(v.is_boolean(), "config key '" + key + "' must be a boolean");
      slot = v;
    } else if (slot.is_string()) {
      require(v.is_string(), "config key '" + key + "' must be a string");
      slot = v;
    } else if (slot.is_number_integer()) {
      require(v.is_number_integer(), "config key '" + key + "' must be an integer");
      slot = v.get<std::int64_t>();
    } else if (slot.is_number_float()) {
      require(v.is_number(), "config key '" + key + "' must be a number");
      slot = v.get<double>();
    } else if (slot.is_array()) {
      require(v.is_array(), "config key '" + key + "' must be an array");
      slot = v;
    }
  }
}

std::vector<double> numbers(const Json& a, const std::string& key) {
  std::vector<double> out;
  for (const Json& x : a) {
    require(x.is_number(), "config key '" + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Field to_field(const std::vector<double>& v) { return Eigen::Map<const Field>(v.data(), static_cast<Index>(v.size())); }

std::uint64_t seed_of(const Json& cfg) { return cfg["seed"].get<std::uint64_t>(); }

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  require(static_cast<bool>(out), "cannot write " + file.string());
  out << text;
  require(static_cast<bool>(out), "write failed for " + file.string());
}

void write_json(const fs::path& file, const Json& j) { write_text(file, j.dump(2) + "\n"); }

Json stamp(const Json& cfg) {
  return {{"schema_version", schema_version}, {"config", cfg}, {"config_hash", config_hash(cfg)}};
}

// Metadata after the data rows so the header stays on the first line.
std::string csv_trailer(const Json& cfg) {
  return "# schema_version " + std::to_string(schema_version) + "\n# config_hash " + config_hash(cfg) +
         "\n# config " + cfg.dump() + "\n";
}

// NaN and infinities have no JSON spelling.
Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

WindowOptions window_of(const Json& cfg) {
  WindowOptions w;
  const std::vector<double> win = numbers(cfg["rates"]["window"], "rates.window");
  require(win.empty() || (win.size() == 2 && win[1] > win[0]), "rates.window must be [t_lo, t_hi] with t_hi > t_lo");
  if (win.size() == 2) {
    w.t_lo = win[0];
    w.t_hi = win[1];
  }
  return w;
}

Json rate_json(const RateFit& f) {
  return {{"kind", to_string(f.kind)}, {"delta_or_exponent", num(f.rate)}, {"constant", num(f.constant)},
          {"r2", num(f.r2)}, {"window", {num(f.t_lo), num(f.t_hi)}}, {"samples", f.samples}};
}

Json probe_json(const LojasiewiczFit& f) {
  return {{"theta", num(f.theta)}, {"C", num(f.constant)}, {"r2", num(f.r2)},
          {"window", {num(f.t_lo), num(f.t_hi)}}, {"samples", f.samples}};
}

// Unit weighted volume at u = 1 so that the base is a normalized critical point.
Smms unit_base(const Setup& s) {
  const double v = integrate(s.bg, Field::Ones(s.bg.node_count()), true);
  require(v > 0.0, "background has nonpositive weighted volume");
  return Smms(s.bg.scaled(std::pow(v, -1.0 / s.bg.dimension())), s.params);
}

Field sample_expression(const Background& bg, const std::string& spec) {
  if (spec.empty()) return Field::Ones(bg.node_count());
  require(spec.rfind("expr:", 0) == 0, "flow.u0 must be empty or \"expr:...\"");
  const Index d = bg.nodes().cols();
  const Expression e = Expression::parse(spec.substr(5), static_cast<int>(d));
  Field u(bg.node_count());
  std::vector<double> x(static_cast<std::size_t>(d));
  for (Index i = 0; i < bg.node_count(); ++i) {
    for (Index j = 0; j < d; ++j) x[static_cast<std::size_t>(j)] = bg.nodes()(i, j);
    u[i] = e(x.data());
  }
  return u;
}

// ---- subcommands

int cmd_flow(const Json& cfg, const fs::path& out) {
  const Setup s = build_setup(cfg);
  const Json& f = cfg["flow"];
  FlowConfig fc;
  const std::string scheme = f["scheme"];
  require(scheme == "rk4" || scheme == "imex_be", "flow.scheme must be rk4 or imex_be");
  fc.scheme = scheme == "rk4" ? Scheme::rk4 : Scheme::imex_be;
  fc.dt = f["dt"];
  fc.t_end = f["t_end"];
  fc.renormalize = f["renormalize"];
  fc.record_every = f["record_every"];
  fc.validate();
  const Smms s0(s.bg, s.params, sample_expression(s.bg, f["u0"]));
  const Trajectory traj = run(s0, fc);

  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  write_text(out / "trajectory.csv", csv.str() + csv_trailer(cfg));
  std::ostringstream snaps;
  write_snapshots_csv(snaps, traj);
  write_text(out / "snapshots.csv", snaps.str() + csv_trailer(cfg));

  double drift = 0.0, mismatch = 0.0;
  bool monotone = true, dissipation_ok = true;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    drift = std::max(drift, std::abs(traj.volumes[i] - traj.volumes[0]) / traj.volumes[0]);
    if (i > 0 && traj.r_values[i] > traj.r_values[i - 1] + 1e-13 * std::max(1.0, std::abs(traj.r_values[i - 1])))
      monotone = false;
    const double pred = traj.dissipation[i];
    if (std::abs(traj.dr_dt[i] - pred) > 1e-3 * std::abs(pred) + traj.dr_dt_floor[i]) dissipation_ok = false;
    if (std::abs(pred) > 1e3 * traj.dr_dt_floor[i]) mismatch = std::max(mismatch, std::abs(traj.dr_dt[i] - pred) / std::abs(pred));
  }
  Json summary = stamp(cfg);
  summary["command"] = "flow";
  summary["records"] = traj.times.size();
  summary["substeps"] = traj.substeps;
  summary["final_r"] = num(traj.r_values.back());
  summary["final_curvature_deviation"] = num(traj.final_curvature_deviation);
  summary["volume_drift"] = num(drift);
  summary["r_nonincreasing"] = monotone;
  summary["dissipation_identity"] = {{"holds", dissipation_ok}, {"max_relative_mismatch", num(mismatch)}};
  const WindowOptions w = window_of(cfg);
  try {
    summary["sup_dev_fit"] = rate_json(fit_rate(traj, Series::sup_dev, w));
    summary["lojasiewicz"] = probe_json(lojasiewicz_probe(traj, w));
  } catch (const ValidationError& e) {
    summary["fit_skipped"] = e.what();
  }
  write_json(out / "summary.json", summary);
  return 0;
}

int cmd_spectrum(const Json& cfg, const fs::path& out) {
  const Smms base = unit_base(build_setup(cfg));
  const SpectralData sd = eigendecompose(assemble_linearized(base), cfg["spectral"]["tol_kernel"]);
  Json j = stamp(cfg);
  j["command"] = "spectrum";
  j["eigenvalues"] = std::vector<double>(sd.eigenvalues.data(), sd.eigenvalues.data() + sd.eigenvalues.size());
  j["kernel_dim"] = sd.kernel_dim();
  j["kernel_is_scale_only"] = sd.kernel_is_scale_only;
  j["kernel_residual"] = num(sd.kernel_residual);
  j["up_dim"] = sd.up_indices.size();
  j["down_dim"] = sd.down_indices.size();
  j["curvature"] = num(sd.curvature);
  j["tol_kernel"] = sd.tol_kernel;
  write_json(out / "spectrum.json", j);
  return 0;
}

Json tensor_json(const SymmetricTensor<double>& t) {
  Json entries = Json::array();
  for (const auto& idx : t.multisets()) entries.push_back({{"index", idx}, {"value", num(t.get(idx))}});
  return entries;
}

ReductionOptions reduction_options(const Json& cfg) {
  ReductionOptions o;
  o.epsilon = cfg["reduction"]["epsilon"];
  o.newton_tol = cfg["reduction"]["newton_tol"];
  o.restarts = cfg["reduction"]["restarts"];
  o.seed = seed_of(cfg);
  o.ray_max = std::min(o.ray_max, o.epsilon);
  o.ray_min = std::min(o.ray_min, 0.01 * o.ray_max);
  return o;
}

std::vector<Eigen::VectorXd> random_directions(Index k, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Eigen::VectorXd> dirs;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd d(k);
    for (Index j = 0; j < k; ++j) d[j] = g(rng);
    dirs.push_back(d.normalized());
  }
  return dirs;
}

int cmd_reduce(const Json& cfg, const fs::path& out) {
  const Smms base = unit_base(build_setup(cfg));
  const SpectralData sd = eigendecompose(assemble_linearized(base), cfg["spectral"]["tol_kernel"]);
  const ReductionOptions opts = reduction_options(cfg);
  ReducedModel model = make_reduced_model(base, sd, opts);
  const OrderResult o = detect_order_and_tensor(model);

  Json j = stamp(cfg);
  j["command"] = "reduce";
  j["kernel_dim"] = model.k();
  j["f0"] = num(model.f0);
  j["ray_slopes"] = o.slopes;
  if (o.integrable) {
    j["p"] = "integrable";
  } else {
    j["p"] = o.p;
    j["tensor"] = tensor_json(o.tensor);
    const AsResult as = check_AS_p(o.tensor, opts.restarts, opts.seed);
    j["as_p"] = as.as_p;
    j["v_hat"] = std::vector<double>(as.v_hat.data(), as.v_hat.data() + as.v_hat.size());
    j["max_value"] = num(as.max_value);
    if (o.p == 3) {
      const CubicNormalization cn = cubic_normalization(model, random_directions(model.k(), 5, opts.seed));
      j["cubic_normalization"] = {{"factor", num(cn.factor)}, {"ratios", cn.ratios}, {"consistent", cn.consistent}};
    }
  }
  j["residual"] = {{"max", num(model.max_residual)}, {"mean", num(model.mean_residual())}, {"solves", model.solves}};
  write_json(out / "reduction.json", j);
  return 0;
}

SymmetricTensor<double> tensor_from_config(const Json& sf, int k, int p) {
  SymmetricTensor<double> t(k, p);
  if (sf["Fp"].empty()) {
    t.set(std::vector<int>(static_cast<std::size_t>(p), 0), 1.0);
    return t;
  }
  for (const Json& e : sf["Fp"]) {
    require(e.is_array() && e.size() == static_cast<std::size_t>(p) + 1,
            "slowflow.Fp entries must be [i_1, ..., i_p, value]");
    std::vector<int> idx;
    for (int i = 0; i < p; ++i) {
      require(e[i].is_number_integer() && e[i].get<int>() >= 0 && e[i].get<int>() < k,
              "slowflow.Fp index out of range");
      idx.push_back(e[i].get<int>());
    }
    require(e[p].is_number(), "slowflow.Fp value must be a number");
    t.set(idx, e[p].get<double>());
  }
  return t;
}

int cmd_slowmodel(const Json& cfg_in, const fs::path& out) {
  Json cfg = cfg_in;
  Json& sf = cfg["slowflow"];
  const std::string mode = sf["mode"];
  require(mode == "synthetic" || mode == "geometric", "slowflow.mode must be synthetic or geometric");
  const std::uint64_t seed = seed_of(cfg);
  const ContractOptions copt{sf["tol"].get<double>(), sf["max_iter"].get<int>()};
  const double T = sf["T"], horizon = sf["horizon"];
  const int ppd = sf["points_per_decade"];

  SlowModel model;
  ContractResult fixed;
  SlowTrajectory traj;
  std::optional<ReducedModel> red;
  if (mode == "synthetic") {
    const int p = sf["p"], k = sf["k"];
    require(p >= 3 && k >= 1, "slowflow needs p >= 3 and k >= 1");
    if (sf["gamma"].get<double>() <= 0.0) sf["gamma"] = 1.5 / (p - 2);
    const SymmetricTensor<double> fp = tensor_from_config(sf, k, p);
    const AsResult as = check_AS_p(fp, cfg["reduction"]["restarts"], seed);
    require(as.as_p, "F_p has no positive maximum on the unit sphere; no slow ansatz");
    const Params params(cfg["background"]["n"].get<int>(), cfg["params"]["m"].get<double>());
    model = make_slow_model(fp, as.v_hat, params.nm2(), sf["gamma"], T, to_field(numbers(sf["deltas"], "slowflow.deltas")),
                            horizon, ppd);
    const SyntheticErrors errs = make_synthetic_errors(k, model.perp_dim(), sf["coupling"], seed);
    fixed = contract(model, [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
      return evaluate_synthetic_errors(model, errs, a, b);
    }, copt);
    traj = synthetic_trajectory(model, fixed);
  } else {
    const Smms base = unit_base(build_setup(cfg));
    const SpectralData sd = eigendecompose(assemble_linearized(base), cfg["spectral"]["tol_kernel"]);
    red.emplace(make_reduced_model(base, sd, reduction_options(cfg)));
    detect_order_and_tensor(*red);
    require(!red->integrable, "kernel is integrable; no slow solution");
    sf["p"] = red->p;
    sf["k"] = red->k();
    if (sf["gamma"].get<double>() <= 0.0) sf["gamma"] = 1.5 / (red->p - 2);
    const AsResult as = check_AS_p(red->fp, red->options.restarts, seed);
    require(as.as_p, "F_p has no positive maximum on the unit sphere; no slow ansatz");
    const GeometricSystem sys = make_geometric_system(*red);
    model = make_slow_model(red->fp, as.v_hat, base.params().nm2(), sf["gamma"], T, sys.deltas, horizon, ppd);
    fixed = contract(model, [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
      return error_terms(model, sys, a, b);
    }, copt);
    traj = geometric_trajectory(model, sys, fixed);
  }

  std::ostringstream csv;
  write_slowflow_csv(csv, traj);
  write_text(out / "slowflow.csv", csv.str() + csv_trailer(cfg));

  // Sandwich constants of the deviation against (1+t)^{-1/(p-2)} on [1, 1e4].
  const double expo = 1.0 / (model.p - 2);
  double c1 = std::numeric_limits<double>::infinity(), c2 = 0.0, s1 = c1, s2 = 0.0;
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    const double t = traj.t[i];
    if (t < 1.0 || t > 1e4) continue;
    const double a = traj.dev_sup[i] * std::pow(1.0 + t, expo), b = traj.dev_sup[i] * std::pow(T + t, expo);
    c1 = std::min(c1, a);
    c2 = std::max(c2, a);
    s1 = std::min(s1, b);
    s2 = std::max(s2, b);
  }
  Json j = stamp(cfg);
  j["command"] = "slowmodel";
  j["mode"] = mode;
  j["predicted_exponent"] = expo;
  j["ansatz_constant"] = num(model.ansatz_constant);
  j["v_hat"] = std::vector<double>(model.v_hat.data(), model.v_hat.data() + model.v_hat.size());
  j["contraction"] = {{"rho", num(fixed.rho)}, {"iterations", fixed.iterations}, {"final_step", num(fixed.final_step)},
                      {"w_norm", num(fixed.w_norm)}};
  j["sandwich"] = {{"t_range", {1.0, 1e4}}, {"c1", num(c1)}, {"c2", num(c2)}, {"ratio", num(c2 / c1)},
                   {"shifted_ratio", num(s2 / s1)}};
  const WindowOptions w = window_of(cfg);
  j["rate"] = rate_json(fit_rate(traj.t, traj.dev_sup, w));
  j["lojasiewicz"] = probe_json(lojasiewicz_probe(traj.t, traj.energy_gap, traj.gradient_norm, w));
  write_json(out / "fit.json", j);
  return 0;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), "bad number '" + s + "' in input CSV");
  return v;
}

int cmd_rates(const Json& cfg, const fs::path& input, const fs::path& out) {
  std::ifstream in(input, std::ios::binary);
  require(static_cast<bool>(in), "cannot read " + input.string());
  std::stringstream raw;
  raw << in.rdbuf();
  const std::string bytes = raw.str();

  std::istringstream lines(bytes);
  std::string line;
  std::vector<std::string> header;
  std::map<std::string, std::vector<double>> cols;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header.empty()) {
      header = split(line);
      continue;
    }
    const std::vector<std::string> cells = split(line);
    require(cells.size() == header.size(), "ragged row in input CSV");
    for (std::size_t i = 0; i < cells.size(); ++i) cols[header[i]].push_back(parse_number(cells[i]));
  }
  require(cols.count("t") > 0, "input CSV has no 't' column");

  const std::string series = cfg["rates"]["series"];
  const WindowOptions w = window_of(cfg);
  Json j = stamp(cfg);
  j["command"] = "rates";
  j["input"] = input.filename().string();
  j["input_hash"] = fnv1a_hex(bytes);

  const bool flow_csv = cols.count("r_m") && cols.count("de_l2");
  const std::string column = !flow_csv && series == "sup_dev" ? "dev_sup" : series;
  std::vector<double> y;
  if (column == "r_gap") {
    require(flow_csv, "r_gap needs a flow trajectory");
    for (double r : cols["r_m"]) y.push_back(std::abs(r - cols["r_m"].back()));
  } else {
    require(cols.count(column) > 0, "input CSV has no '" + column + "' column");
    y = cols[column];
  }
  const RateFit fit = fit_rate(cols["t"], y, w);
  j["series"] = column;
  const Json rj = rate_json(fit);
  for (auto it = rj.begin(); it != rj.end(); ++it) j[it.key()] = it.value();
  if (flow_csv) {
    std::vector<double> gap;
    for (double r : cols["r_m"]) gap.push_back(r - cols["r_m"].back());
    const LojasiewiczFit lf = lojasiewicz_probe(cols["t"], gap, cols["de_l2"], w);
    j["theta"] = num(lf.theta);
    j["C"] = num(lf.constant);
  } else {
    j["theta"] = nullptr;
    j["C"] = nullptr;
  }
  write_json(out / "fit.json", j);
  return 0;
}

int cmd_certify(int n1, int n2, double m, double volume, double v3, const std::string& out) {
  const As3Report r = as3_certificate(n1, n2, m, volume, v3);
  const std::string text = format_report(r);
  std::cout << text;
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "as3.txt", text);
  }
  return 0;
}

// ---- driver

std::string self_path(const char* argv0) {
  std::error_code ec;
  const fs::path p = fs::read_symlink("/proc/self/exe", ec);
  return ec ? std::string(argv0) : p.string();
}

int exit_for(int status) {
  if (!WIFEXITED(status)) return 3;
  return WEXITSTATUS(status);
}

// One child process per config file, at most `jobs` at a time.
int fan_out(const std::string& exe, const std::string& command, const fs::path& dir, const fs::path& out, int jobs,
            std::optional<long long> seed) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), "no .json configs in " + dir.string());
  int worst = 0;
  std::size_t next = 0, running = 0;
  while (next < files.size() || running > 0) {
    while (running < static_cast<std::size_t>(jobs) && next < files.size()) {
      const fs::path& f = files[next++];
      std::vector<std::string> args = {exe, command, "-c", f.string(), "-o", (out / f.stem()).string()};
      if (seed) {
        args.push_back("--seed");
        args.push_back(std::to_string(*seed));
      }
      std::vector<char*> argv;
      for (auto& a : args) argv.push_back(a.data());
      argv.push_back(nullptr);
      pid_t pid = 0;
      if (posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
        throw NumericalError("failed to start a job for " + f.string());
      }
      ++running;
    }
    int status = 0;
    if (wait(&status) > 0) {
      --running;
      worst = std::max(worst, exit_for(status));
    }
  }
  return worst;
}

struct Invocation {
  std::string command;
  std::string config, out, input;
  int jobs = 1;
  std::optional<long long> seed;
  int n1 = 0, n2 = 0;
  double m = 0.0, base_volume = 0.0, v3 = 0.0;
};

void write_error(const std::string& out, int code, const std::string& kind, const std::string& message) {
  std::cerr << "wyf: " << kind << " error: " << message << "\n";
  if (out.empty()) return;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) return;
  Json j = {{"schema_version", schema_version}, {"exit_code", code}, {"kind", kind}, {"message", message}};
  std::ofstream(fs::path(out) / "error.json", std::ios::binary) << j.dump(2) << "\n";
}

int dispatch(const Invocation& inv, const std::string& exe) {
  if (inv.command == "certify-as3") return cmd_certify(inv.n1, inv.n2, inv.m, inv.base_volume, inv.v3, inv.out);
  require(!inv.out.empty(), "--out is required");
  require(inv.jobs >= 1, "--jobs must be at least 1");
  if (inv.command != "rates" && !inv.config.empty() && fs::is_directory(inv.config)) {
    return fan_out(exe, inv.command, inv.config, inv.out, inv.jobs, inv.seed);
  }
  Json cfg = default_config();
  if (!inv.config.empty()) cfg = load_config(inv.config);
  else require(inv.command == "rates", "--config is required");
  if (inv.seed) {
    require(*inv.seed >= 0, "--seed must be nonnegative");
    cfg["seed"] = *inv.seed;
  }
  fs::create_directories(inv.out);
  const fs::path out(inv.out);
  if (inv.command == "flow") return cmd_flow(cfg, out);
  if (inv.command == "spectrum") return cmd_spectrum(cfg, out);
  if (inv.command == "reduce") return cmd_reduce(cfg, out);
  if (inv.command == "slowmodel") return cmd_slowmodel(cfg, out);
  require(!inv.input.empty(), "--input is required");
  return cmd_rates(cfg, inv.input, out);
}

int run_argv(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for the weighted Yamabe flow"};
  app.require_subcommand(1);
  Invocation inv;
  for (const char* name : {"flow", "spectrum", "reduce", "slowmodel", "rates"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", inv.config, "config file, or a directory of configs");
    sub->add_option("-o,--out", inv.out, "output directory");
    sub->add_option("--jobs", inv.jobs, "parallel processes over a config directory");
    sub->add_option("--seed", inv.seed, "overrides the config seed");
    if (std::string(name) == "rates") sub->add_option("-i,--input", inv.input, "flow or slow-flow CSV")->required();
  }
  CLI::App* cert = app.add_subcommand("certify-as3");
  cert->add_option("--n1", inv.n1)->required();
  cert->add_option("--n2", inv.n2)->required();
  cert->add_option("--m", inv.m)->required();
  cert->add_option("--base-volume", inv.base_volume)->required();
  cert->add_option("--v3", inv.v3)->required();
  cert->add_option("-o,--out", inv.out, "also write as3.txt here");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  inv.command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(inv, self_path(argv[0]));
  } catch (const ValidationError& e) {
    write_error(inv.out, 2, "validation", e.what());
    return 2;
  } catch (const Json::exception& e) {
    write_error(inv.out, 2, "validation", e.what());
    return 2;
  } catch (const NumericalError& e) {
    write_error(inv.out, 3, "numerical", e.what());
    return 3;
  } catch (const std::exception& e) {
    write_error(inv.out, 3, "numerical", e.what());
    return 3;
  }
}

}  // namespace

Json resolve_config(const Json& raw) {
  Json cfg = default_config();
  merge(cfg, raw, "");
  require(cfg["seed"].get<std::int64_t>() >= 0, "seed must be nonnegative");
  return cfg;
}

Json load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot read config " + path);
  Json raw;
  try {
    raw = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return resolve_config(raw);
}

std::string config_hash(const Json& resolved) { return fnv1a_hex(resolved.dump()); }

Setup build_setup(const Json& cfg) {
  const Json& b = cfg["background"];
  const std::string kind = b["kind"];
  const int n = b["n"];
  const double m = cfg["params"]["m"];
  const std::string phi0 = b["phi0"];
  if (kind == "torus") {
    std::vector<int> grid;
    for (const Json& g : b["grid"]) {
      require(g.is_number_integer() && g.get<int>() >= 4, "background.grid entries must be integers >= 4");
      grid.push_back(g.get<int>());
    }
    TorusOptions opts;
    opts.dealias = b["dealias"];
    Background bg = build_torus_background(n, grid, phi0, opts);
    if (b["unit_volume"].get<bool>()) bg = bg.scaled(std::pow(integrate(bg, Field::Ones(bg.node_count()), true), -1.0 / n));
    return {bg, Params(n, m)};
  }
  if (kind == "sphere") {
    require(phi0.empty(), "background.phi0 is not supported on the zonal sphere");
    const int nodes = b["node_count"];
    Background bg = b["unit_volume"].get<bool>() ? build_unit_volume_sphere(n, nodes)
                                                  : build_sphere_background(n, nodes, b["radius"].get<double>());
    return {bg, Params(n, m)};
  }
  if (kind == "matrix") {
    require(phi0.empty(), "matrix backgrounds take phi0_values, not phi0");
    const Field mass = to_field(numbers(b["mass"], "background.mass"));
    const Index N = mass.size();
    require(N >= 2, "background.mass needs at least two nodes");
    require(b["stiffness"].size() == static_cast<std::size_t>(N), "background.stiffness must be N x N");
    Eigen::MatrixXd k(N, N);
    for (Index i = 0; i < N; ++i) {
      const std::vector<double> row = numbers(b["stiffness"][static_cast<std::size_t>(i)], "background.stiffness");
      require(row.size() == static_cast<std::size_t>(N), "background.stiffness must be N x N");
      for (Index j = 0; j < N; ++j) k(i, j) = row[static_cast<std::size_t>(j)];
    }
    auto per_node = [&](const char* key) {
      const std::vector<double> v = numbers(b[key], std::string("background.") + key);
      require(v.empty() || v.size() == static_cast<std::size_t>(N), std::string("background.") + key + " must have N entries");
      return v.empty() ? Field(Field::Zero(N)) : to_field(v);
    };
    Background bg = build_matrix_background(mass, k, per_node("r0"), per_node("phi0_values"), n);
    if (b["unit_volume"].get<bool>()) bg = bg.scaled(std::pow(integrate(bg, Field::Ones(bg.node_count()), true), -1.0 / n));
    return {bg, Params(n, m)};
  }
  if (kind == "degenerate") {
    require(phi0.empty(), "degenerate backgrounds build their own density");
    DegenerateSpec spec;
    spec.nodes = b["node_count"];
    spec.kernel_dim = b["kernel_dim"];
    spec.params = Params(n, m);
    spec.curvature = b["curvature"];
    spec.seed = seed_of(cfg);
    DegenerateBackground deg = build_degenerate_background(spec);
    return {deg.bg, deg.params};
  }
  throw ValidationError("background.kind must be torus, sphere, matrix or degenerate");
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> copy = args;
  copy.insert(copy.begin(), "wyf");
  std::vector<char*> argv;
  for (auto& a : copy) argv.push_back(a.data());
  return run_argv(static_cast<int>(argv.size()), argv.data());
}

int main(int argc, char** argv) { return run_argv(argc, argv); }

}  // namespace wyf::cli
