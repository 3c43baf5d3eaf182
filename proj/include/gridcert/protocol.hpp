#pragma once

// Deterministic round-based simulation of the distributed assessment:
//
//   round 0      every agent places its local poles, computes T_i and sends
//                T_i plus the coupling term A_hat_ji to each neighbour j;
//   later rounds agents holding fresh neighbour data evaluate their row of
//                S~ (or S), report to the operator, retry with scaled poles,
//                and finally escalate to global control;
//   operator     declares "stable" once every agent's latest status is met,
//                or "inconclusive" when the rounds go quiet without that.
//
// Messages sent in round r are delivered in round r + 1. Within a round the
// outbox is ordered by (from, to, kind); the operator sorts after all agents.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gridcert/assess.hpp"
#include "gridcert/certify.hpp"
#include "gridcert/control.hpp"
#include "gridcert/gridmodel.hpp"

namespace gridcert {

struct Endpoint {
  bool is_operator = false;
  BusId id = 0;

  static Endpoint agent(BusId id) { return {false, id}; }
  static Endpoint system_operator() { return {true, 0}; }
  auto operator<=>(const Endpoint&) const = default;
};

std::string to_string(const Endpoint& e);

struct ShareTransform {
  Matrix T;
};
struct ShareCoupling {
  Matrix A_hat;  ///< the term entering the receiver's dynamics (A_hat_{to,from})
};
struct ConditionStatus {
  bool met = false;
};
struct OperatorVerdict {
  bool stable = false;
};
struct StateSample {
  Vector x;
  double timestamp = 0.0;
};

using Payload = std::variant<ShareTransform, ShareCoupling, ConditionStatus, OperatorVerdict, StateSample>;

enum class MessageKind { ShareTransform = 0, ShareCoupling, ConditionStatus, OperatorVerdict, StateSample };

std::string to_string(MessageKind k);

struct Message {
  Endpoint from;
  Endpoint to;
  int round = 0;
  Payload payload;

  MessageKind kind() const { return static_cast<MessageKind>(payload.index()); }
};

bool message_before(const Message& a, const Message& b);

nlohmann::json payload_json(const Payload& p);
std::string payload_digest(const Payload& p);
/// One JSON-lines record; `full` adds the payload itself.
std::string trace_line(const Message& m, bool full);
std::string serialize_trace(const std::vector<Message>& trace, bool full);

enum class AgentPhase { Designing, AwaitingNeighbors, Evaluating, Escalated, Done };
std::string to_string(AgentPhase p);

struct RetryPolicy {
  double pole_scale = 1.15;  ///< applied to every desired pole per retry
  bool escalate_with_base_poles = true;
};

struct AgentOptions {
  Variant variant = Variant::Transformed;
  int max_retries = 3;
  bool allow_global = true;
  /// Add global gains one neighbour at a time (strongest coupling first) until
  /// the row is met, instead of all at once.
  bool selective_escalation = false;
  RetryPolicy retry;
};

/// What one agent knows privately, plus everything it has received.
struct AgentState {
  BusId id = 0;
  AgentPhase phase = AgentPhase::Designing;
  int retry_count = 0;
  bool escalated = false;
  bool pending_evaluation = false;
  bool gave_up = false;
  bool met = false;

  // private local model
  Matrix A_hat;
  Vector B;
  std::vector<BusId> neighbours;
  std::map<BusId, Matrix> outgoing_couplings;  ///< j -> A_hat_ji, sent to j
  PoleSpec base_poles;
  PoleSpec poles;
  AgentOptions options;

  // current design
  GainSet gains;
  std::optional<ModalTransform> modal;

  // received
  std::map<BusId, Matrix> neighbour_transforms;
  std::map<BusId, Matrix> neighbour_couplings;  ///< j -> A_hat_ij
  std::optional<bool> last_sent_status;
  std::optional<ConditionReport> last_report;
  std::vector<ConditionReport> report_history;
  std::optional<bool> operator_verdict;
};

/// Initial state of agent `model.bus`. `grid_models` provides the outgoing
/// coupling terms (A_hat_ji for each neighbour j).
AgentState make_agent(const SubsystemModel& model, const std::vector<SubsystemModel>& grid_models,
                      const PoleSpec& poles, const AgentOptions& options);

struct AgentStepResult {
  AgentState state;
  std::vector<Message> outbox;
};

/// Pure transition. Throws ProtocolViolation for messages that do not belong
/// to this agent or break the message-set invariants.
AgentStepResult agent_step(AgentState state, std::span<const Message> inbox, int round);

struct OperatorState {
  std::vector<BusId> agents;
  std::map<BusId, bool> statuses;
  std::optional<bool> verdict;
};

struct OperatorStepResult {
  OperatorState state;
  std::vector<Message> outbox;
};

OperatorStepResult operator_step(OperatorState state, std::span<const Message> inbox, int round);
/// Called when no messages are in flight: settles "inconclusive" if no verdict yet.
OperatorStepResult operator_finalize(OperatorState state, int round);

struct DsaOptions {
  AgentOptions agent;
  int max_rounds = 200;
};

struct DsaResult {
  std::vector<Message> trace;
  Verdict verdict = Verdict::Inconclusive;
  int rounds = 0;
  std::map<BusId, AgentState> agents;
  OperatorState operator_state;

  std::map<BusId, GainSet> gains() const;
  std::vector<BusId> escalated_agents() const;
};

/// Throws Uncontrollable (with the agent id) if a local design is impossible.
DsaResult run_dsa(const GridSpec& grid, const std::map<BusId, PoleSpec>& poles, const DsaOptions& options = {});
DsaResult run_dsa(const std::vector<SubsystemModel>& subsystems, const std::map<BusId, PoleSpec>& poles,
                  const DsaOptions& options = {});

/// Checks the per-kind direction rules; the neighbour relation comes from the grid.
void validate_message(const Message& m, const std::map<BusId, std::vector<BusId>>& neighbours);

}  // namespace gridcert
