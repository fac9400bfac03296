#pragma once

#include "wyf/smms.hpp"

#include <iosfwd>
#include <vector>

namespace wyf {

enum class Scheme { rk4, imex_be };

struct FlowConfig {
  Scheme scheme = Scheme::rk4;
  double dt = 1e-3;
  double t_end = 1.0;
  bool renormalize = false;
  int record_every = 10;
  // Fraction of the explicit stability limit used for substeps.
  double safety = 0.9;
  // Keep every k-th recorded state in the trajectory.
  int snapshot_every = 10;

  void validate() const;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<double> r_values;
  std::vector<double> volumes;
  std::vector<double> de_l2;
  std::vector<double> sup_dev;
  std::vector<double> h1_dev;
  // Centered difference of r over one substep, the dissipation predicted by the flow, and the resolution
  // of the difference quotient in double precision.
  std::vector<double> dr_dt;
  std::vector<double> dissipation;
  std::vector<double> dr_dt_floor;
  std::vector<double> snapshot_times;
  std::vector<Field> snapshots;
  Field final_u;
  double final_curvature_deviation = 0.0;
  double initial_normalization = 1.0;
  long substeps = 0;
};

// ((n+m-2)/4)(r - R) u.
Field flow_velocity(const Smms& s);
// -((n+m-2)/2) int (R - r)^2 u^{q_vol} e^{-phi0} dV.
double predicted_dissipation(const Smms& s);
// Largest substep accepted by the explicit scheme at the current state.
double stable_step(const Smms& s, const FlowConfig& cfg);

// Advance by dt, subdividing as needed (positivity rejections halve the substep).
Smms step(const Smms& s, const FlowConfig& cfg, double dt);
Trajectory run(const Smms& s0, const FlowConfig& cfg);

void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
void write_snapshots_csv(std::ostream& out, const Trajectory& traj);

}  // namespace wyf
