#include "gridcert/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gridcert/errors.hpp"

namespace gridcert {

Eigen::Index ClosedLoopSystem::bus_index(BusId bus) const {
  auto it = std::find(buses.begin(), buses.end(), bus);
  if (it == buses.end()) throw InvalidInput("unknown bus " + std::to_string(bus));
  return static_cast<Eigen::Index>(it - buses.begin());
}

ClosedLoopSystem make_closed_loop_system(const std::vector<SubsystemModel>& subsystems,
                                         const std::map<BusId, FeedbackGains>& gains) {
  ClosedLoopSystem sys;
  if (subsystems.empty()) throw InvalidInput("make_closed_loop_system: no subsystems");
  sys.states_per_bus = subsystems.front().order();
  for (const auto& s : subsystems) {
    if (s.order() != sys.states_per_bus) throw InvalidInput("make_closed_loop_system: mixed subsystem orders");
    sys.buses.push_back(s.bus);
  }
  sys.A = assemble_full(subsystems, gains);
  sys.F = assemble_disturbance_input(subsystems);
  const auto offsets = state_offsets(subsystems);
  const auto N = static_cast<Eigen::Index>(subsystems.size());
  sys.K_local = Matrix::Zero(N, sys.A.rows());
  sys.K_global = Matrix::Zero(N, sys.A.rows());
  for (Eigen::Index k = 0; k < N; ++k) {
    const auto& s = subsystems[static_cast<std::size_t>(k)];
    auto g = gains.find(s.bus);
    if (g == gains.end()) continue;
    if (g->second.local.size() == s.order()) {
      sys.K_local.block(k, offsets.at(s.bus), 1, s.order()) = g->second.local.transpose();
    }
    for (const auto& [j, Kij] : g->second.global) {
      sys.K_global.block(k, offsets.at(j), 1, Kij.size()) = Kij.transpose();
    }
  }
  return sys;
}

Vector disturbance_at(const ClosedLoopSystem& sys, const std::vector<Disturbance>& disturbances, double t) {
  Vector d = Vector::Zero(static_cast<Eigen::Index>(sys.buses.size()));
  for (const auto& dist : disturbances) {
    if (t >= dist.t_step - 1e-12) d(sys.bus_index(dist.bus)) += dist.delta_PL;
  }
  return d;
}

SimResult simulate(const ClosedLoopSystem& sys, const SimConfig& config) {
  if (!(config.dt > 0.0) || !(config.dt <= config.t_end)) throw InvalidInput("simulate: need 0 < dt <= t_end");
  const double ratio = config.t_end / config.dt;
  const auto steps = static_cast<Eigen::Index>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-6) {
    throw InvalidInput("simulate: t_end must be an integer multiple of dt");
  }
  const Eigen::Index n = sys.state_dim();
  const auto N = static_cast<Eigen::Index>(sys.buses.size());
  if (sys.F.rows() != n || sys.F.cols() != N) throw InvalidInput("simulate: F has wrong shape");
  for (const auto& d : config.disturbances) sys.bus_index(d.bus);

  Vector x = Vector::Zero(n);
  if (config.initial_state) {
    if (config.initial_state->size() != n) throw InvalidInput("simulate: initial state has wrong length");
    x = *config.initial_state;
  }

  SimResult r;
  r.buses = sys.buses;
  r.states_per_bus = sys.states_per_bus;
  r.time.resize(static_cast<std::size_t>(steps + 1));
  r.states.resize(steps + 1, n);
  r.d.resize(steps + 1, N);
  if (config.record_inputs) {
    r.u_local.resize(steps + 1, N);
    r.u_global.resize(steps + 1, N);
  }

  // d is held over each step at its value at the step start, so load steps
  // switch on grid points and the integrator never straddles a discontinuity.
  const auto rhs = [&](const Vector& state, const Vector& Fd) -> Vector { return sys.A * state + Fd; };
  const auto record = [&](Eigen::Index k, double t) {
    r.time[static_cast<std::size_t>(k)] = t;
    r.states.row(k) = x.transpose();
    r.d.row(k) = disturbance_at(sys, config.disturbances, t).transpose();
    if (config.record_inputs) {
      r.u_local.row(k) = -(sys.K_local * x).transpose();
      r.u_global.row(k) = -(sys.K_global * x).transpose();
    }
  };

  const double h = config.dt;
  record(0, 0.0);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * h;
    const Vector Fd = sys.F * disturbance_at(sys, config.disturbances, t);
    const Vector k1 = rhs(x, Fd);
    const Vector k2 = rhs(x + 0.5 * h * k1, Fd);
    const Vector k3 = rhs(x + 0.5 * h * k2, Fd);
    const Vector k4 = rhs(x + h * k3, Fd);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double t_next = static_cast<double>(k + 1) * h;
    if (!x.allFinite()) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6g", t_next);
      throw DivergedSimulation(std::string("simulation diverged at t = ") + buf + " s", t_next);
    }
    record(k + 1, t_next);
  }
  r.final_derivative = rhs(x, sys.F * disturbance_at(sys, config.disturbances, r.time.back()));
  return r;
}

SteadyStateReport steady_state_check(const SimResult& result, const GridSpec& grid) {
  SteadyStateReport rep;
  if (result.samples() == 0) return rep;
  const Eigen::Index last = result.samples() - 1;
  for (std::size_t b = 0; b < result.buses.size(); ++b) {
    const auto k = static_cast<Eigen::Index>(b);
    const double w = std::abs(result.state(last, k, 1));
    rep.omega_abs[result.buses[b]] = w;
    rep.max_omega_abs = std::max(rep.max_omega_abs, w);
    rep.sum_Pm += result.state(last, k, 2);
    rep.sum_PL += result.d(last, k);
  }
  for (BusId b : result.buses) grid.generator(b);
  rep.max_derivative = result.final_derivative.size() ? result.final_derivative.cwiseAbs().maxCoeff() : 0.0;
  rep.power_balance_residual = std::abs(rep.sum_Pm - rep.sum_PL);
  return rep;
}

std::optional<double> settling_time(const SimResult& result, double threshold, double after) {
  std::optional<double> settled;
  if (result.samples() == 0) return settled;
  const Vector final_state = result.states.row(result.samples() - 1).transpose();
  for (Eigen::Index k = result.samples() - 1; k >= 0; --k) {
    const double t = result.time[static_cast<std::size_t>(k)];
    if (t < after) break;
    if ((result.states.row(k).transpose() - final_state).norm() < threshold) {
      settled = t;
    } else {
      break;
    }
  }
  return settled;
}

std::string simulation_csv(const SimResult& result) {
  std::string out = "t,bus,delta_rad,omega_rad_s,Pm_pu,ul_pu,ug_pu,d_pu\n";
  const bool inputs = result.u_local.rows() == result.samples();
  char buf[256];
  for (Eigen::Index k = 0; k < result.samples(); ++k) {
    for (std::size_t b = 0; b < result.buses.size(); ++b) {
      const auto i = static_cast<Eigen::Index>(b);
      std::snprintf(buf, sizeof(buf), "%.6f,%d,%.12e,%.12e,%.12e,%.12e,%.12e,%.12e\n",
                    result.time[static_cast<std::size_t>(k)], result.buses[b], result.state(k, i, 0),
                    result.state(k, i, 1), result.state(k, i, 2), inputs ? result.u_local(k, i) : 0.0,
                    inputs ? result.u_global(k, i) : 0.0, result.d(k, i));
      out += buf;
    }
  }
  return out;
}

std::vector<Message> state_sample_messages(const SimResult& result, const DsaResult& dsa, Eigen::Index stride) {
  std::vector<Message> out;
  if (dsa.verdict != Verdict::Stable || stride < 1) return out;
  for (BusId i : dsa.escalated_agents()) {
    for (BusId j : dsa.agents.at(i).neighbours) {
      auto it = std::find(result.buses.begin(), result.buses.end(), j);
      if (it == result.buses.end()) throw InvalidInput("state_sample_messages: bus missing from result");
      const auto col = static_cast<Eigen::Index>(it - result.buses.begin()) * result.states_per_bus;
      for (Eigen::Index k = 0; k < result.samples(); k += stride) {
        StateSample s{result.states.row(k).segment(col, result.states_per_bus).transpose(),
                      result.time[static_cast<std::size_t>(k)]};
        out.push_back(Message{Endpoint::agent(j), Endpoint::agent(i), dsa.rounds + 1 + static_cast<int>(k / stride),
                              std::move(s)});
      }
    }
  }
  std::sort(out.begin(), out.end(), message_before);
  return out;
}

}  // namespace gridcert
