#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridcert/linalg.hpp"

namespace gridcert {

using BusId = int;

struct Generator {
  BusId bus = 0;
  double M = 0.0;    ///< inertia constant, s
  double D = 0.0;    ///< damping, pu
  double T_T = 0.0;  ///< turbine time constant, s
  /// Desired closed-loop poles from the optional "control" key.
  std::optional<std::vector<Complex>> poles;
  bool operator==(const Generator&) const = default;
};

struct Line {
  BusId from = 0;
  BusId to = 0;
  double X = 0.0;  ///< reactance, pu
  bool operator==(const Line&) const = default;
};

struct Disturbance {
  BusId bus = 0;
  double delta_PL = 0.0;  ///< load step, pu
  double t_step = 0.5;    ///< s
  bool operator==(const Disturbance&) const = default;
};

struct GridSpec {
  double base_frequency_hz = 60.0;
  std::vector<Generator> generators;
  std::vector<Line> lines;
  std::vector<Disturbance> disturbances;

  double omega_b() const;
  const Generator& generator(BusId bus) const;
  std::vector<BusId> buses() const;  ///< ascending
  /// Neighbour -> reactance for one bus.
  std::map<BusId, double> neighbours(BusId bus) const;
  bool operator==(const GridSpec&) const = default;
};

/// Open-loop model of one bus: x_i = [d_delta, d_omega, d_Pm].
struct SubsystemModel {
  BusId bus = 0;
  Matrix A_hat;                    ///< 3x3
  Vector B;                        ///< 3, nonzero only in entry 3
  Vector F;                        ///< 3, nonzero only in entry 2
  std::map<BusId, Matrix> couplings;  ///< neighbour j -> A_hat_ij (3x3, only (2,1) nonzero)

  Eigen::Index order() const { return A_hat.rows(); }
};

/// Parses and validates the JSON grid document. Errors are ParseError with a
/// JSON-path prefix, e.g. "$.lines[0].X: nonpositive reactance".
GridSpec parse_grid(const std::string& text);
GridSpec load_grid_file(const std::string& path);
std::string serialize_grid(const GridSpec& grid);

/// Checks every GridSpec invariant; throws ParseError.
void validate_grid(const GridSpec& grid);

std::vector<SubsystemModel> build_subsystems(const GridSpec& grid);

/// Closed-loop feedback in original coordinates for one bus:
/// u_i = -K_i^T x_i - sum_j K_ij^T x_j.
struct FeedbackGains {
  Vector local;
  std::map<BusId, Vector> global;
};

/// Block matrix with A_i = A_hat_i - B_i K_i^T on the diagonal and
/// A_ij = A_hat_ij - B_i K_ij^T off it. Buses are laid out in the order given.
/// A bus absent from `gains` is treated as open loop.
Matrix assemble_full(const std::vector<SubsystemModel>& subsystems,
                     const std::map<BusId, FeedbackGains>& gains);

/// Stacked disturbance input matrix, column k for subsystems[k].
Matrix assemble_disturbance_input(const std::vector<SubsystemModel>& subsystems);

/// Row offset of each bus in the stacked state.
std::map<BusId, Eigen::Index> state_offsets(const std::vector<SubsystemModel>& subsystems);

}  // namespace gridcert
