#pragma once

// Fixed-step classical RK4 integration of x' = A x + F d(t) for the assembled
// closed loop, with ideal load steps and reconstructed control inputs.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridcert/assess.hpp"
#include "gridcert/gridmodel.hpp"
#include "gridcert/linalg.hpp"
#include "gridcert/protocol.hpp"

namespace gridcert {

/// Everything the integrator needs. Bus k owns states
/// [k * states_per_bus, (k + 1) * states_per_bus) and disturbance column k.
struct ClosedLoopSystem {
  std::vector<BusId> buses;
  Eigen::Index states_per_bus = 3;
  Matrix A;         ///< n x n
  Matrix F;         ///< n x N
  Matrix K_local;   ///< N x n, u^l = -K_local x
  Matrix K_global;  ///< N x n, u^g = -K_global x

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index bus_index(BusId bus) const;
};

ClosedLoopSystem make_closed_loop_system(const std::vector<SubsystemModel>& subsystems,
                                         const std::map<BusId, FeedbackGains>& gains);

struct SimConfig {
  double t_end = 10.0;
  double dt = 1e-3;
  std::vector<Disturbance> disturbances;
  bool record_inputs = true;
  std::optional<Vector> initial_state;  ///< zero when absent
};

struct SimResult {
  std::vector<BusId> buses;
  Eigen::Index states_per_bus = 3;
  std::vector<double> time;
  Matrix states;    ///< samples x n
  Matrix u_local;   ///< samples x N (empty when inputs not recorded)
  Matrix u_global;  ///< samples x N
  Matrix d;         ///< samples x N
  Vector final_derivative;

  Eigen::Index samples() const { return states.rows(); }
  double state(Eigen::Index sample, Eigen::Index bus_index, Eigen::Index component) const {
    return states(sample, bus_index * states_per_bus + component);
  }
};

/// Step profile d(t) for the given system's buses.
Vector disturbance_at(const ClosedLoopSystem& sys, const std::vector<Disturbance>& disturbances, double t);

/// The disturbance is sampled at the start of each step and held for the step,
/// so a load step takes effect at the first grid point at or after t_step.
/// Throws DivergedSimulation on the first non-finite state.
SimResult simulate(const ClosedLoopSystem& sys, const SimConfig& config);

struct SteadyStateReport {
  std::map<BusId, double> omega_abs;  ///< |d_omega_i(t_end)|
  double max_omega_abs = 0.0;
  double max_derivative = 0.0;        ///< ||x'(t_end)||_inf
  double sum_Pm = 0.0;
  double sum_PL = 0.0;
  double power_balance_residual = 0.0;
};

/// Assumes the three-state bus layout [d_delta, d_omega, d_Pm].
SteadyStateReport steady_state_check(const SimResult& result, const GridSpec& grid);

/// First time at or after `after` from which ||x(t) - x(t_end)|| stays below
/// `threshold`. Load steps move the equilibrium, so the final sample is the reference.
/// nullopt if it never settles.
std::optional<double> settling_time(const SimResult& result, double threshold = 1e-4, double after = 0.0);

std::string simulation_csv(const SimResult& result);

/// Real-time neighbour state exchange for agents running global control: one
/// message per recorded sample from each neighbour j to each escalated agent i.
/// Empty unless the protocol verdict was stable.
std::vector<Message> state_sample_messages(const SimResult& result, const DsaResult& dsa, Eigen::Index stride = 1);

}  // namespace gridcert
