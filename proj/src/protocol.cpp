#include "gridcert/protocol.hpp"

#include <algorithm>
#include <set>

#include "gridcert/digest.hpp"
#include "gridcert/errors.hpp"

namespace gridcert {

using ordered_json = nlohmann::ordered_json;

std::string to_string(const Endpoint& e) { return e.is_operator ? "SO" : std::to_string(e.id); }

std::string to_string(MessageKind k) {
  switch (k) {
    case MessageKind::ShareTransform: return "ShareTransform";
    case MessageKind::ShareCoupling: return "ShareCoupling";
    case MessageKind::ConditionStatus: return "ConditionStatus";
    case MessageKind::OperatorVerdict: return "OperatorVerdict";
    case MessageKind::StateSample: return "StateSample";
  }
  return "?";
}

std::string to_string(AgentPhase p) {
  switch (p) {
    case AgentPhase::Designing: return "Designing";
    case AgentPhase::AwaitingNeighbors: return "AwaitingNeighbors";
    case AgentPhase::Evaluating: return "Evaluating";
    case AgentPhase::Escalated: return "Escalated";
    case AgentPhase::Done: return "Done";
  }
  return "?";
}

bool message_before(const Message& a, const Message& b) {
  if (a.round != b.round) return a.round < b.round;
  if (a.from != b.from) return a.from < b.from;
  if (a.to != b.to) return a.to < b.to;
  return a.kind() < b.kind();
}

namespace {

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json endpoint_json(const Endpoint& e) {
  if (e.is_operator) return "SO";
  return e.id;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

nlohmann::json payload_json(const Payload& p) {
  ordered_json j = std::visit(
      overloaded{
          [](const ShareTransform& m) { return ordered_json{{"T", matrix_json(m.T)}}; },
          [](const ShareCoupling& m) { return ordered_json{{"A_hat", matrix_json(m.A_hat)}}; },
          [](const ConditionStatus& m) { return ordered_json{{"met", m.met}}; },
          [](const OperatorVerdict& m) { return ordered_json{{"stable", m.stable}}; },
          [](const StateSample& m) {
            ordered_json x = ordered_json::array();
            for (Eigen::Index k = 0; k < m.x.size(); ++k) x.push_back(m.x(k));
            return ordered_json{{"t", m.timestamp}, {"x", std::move(x)}};
          },
      },
      p);
  return nlohmann::json::parse(j.dump());
}

std::string payload_digest(const Payload& p) { return sha256_hex(payload_json(p).dump()); }

std::string trace_line(const Message& m, bool full) {
  ordered_json j;
  j["round"] = m.round;
  j["from"] = endpoint_json(m.from);
  j["to"] = endpoint_json(m.to);
  j["kind"] = to_string(m.kind());
  j["digest"] = payload_digest(m.payload);
  if (full) j["payload"] = ordered_json::parse(payload_json(m.payload).dump());
  return j.dump();
}

std::string serialize_trace(const std::vector<Message>& trace, bool full) {
  std::string out;
  for (const auto& m : trace) {
    out += trace_line(m, full);
    out += '\n';
  }
  return out;
}

void validate_message(const Message& m, const std::map<BusId, std::vector<BusId>>& neighbours) {
  auto are_neighbours = [&](const Endpoint& a, const Endpoint& b) {
    if (a.is_operator || b.is_operator) return false;
    auto it = neighbours.find(a.id);
    return it != neighbours.end() && std::find(it->second.begin(), it->second.end(), b.id) != it->second.end();
  };
  const std::string where = to_string(m.kind()) + " " + to_string(m.from) + "->" + to_string(m.to) +
                            " in round " + std::to_string(m.round);
  switch (m.kind()) {
    case MessageKind::ShareTransform:
    case MessageKind::ShareCoupling:
    case MessageKind::StateSample:
      if (!are_neighbours(m.from, m.to)) throw ProtocolViolation(where + ": endpoints are not neighbours");
      break;
    case MessageKind::ConditionStatus:
      if (m.from.is_operator || !m.to.is_operator) throw ProtocolViolation(where + ": must go agent -> operator");
      break;
    case MessageKind::OperatorVerdict:
      if (!m.from.is_operator || m.to.is_operator) throw ProtocolViolation(where + ": must go operator -> agent");
      break;
  }
}

AgentState make_agent(const SubsystemModel& model, const std::vector<SubsystemModel>& grid_models,
                      const PoleSpec& poles, const AgentOptions& options) {
  if (options.max_retries < 0) throw InvalidInput("max_retries must be nonnegative");
  if (!(options.retry.pole_scale > 0.0)) throw InvalidInput("retry pole scale must be positive");
  AgentState s;
  s.id = model.bus;
  s.A_hat = model.A_hat;
  s.B = model.B;
  s.base_poles = poles;
  s.poles = poles;
  s.options = options;
  for (const auto& [j, c] : model.couplings) {
    s.neighbours.push_back(j);
    auto other = std::find_if(grid_models.begin(), grid_models.end(),
                              [&](const SubsystemModel& m) { return m.bus == j; });
    if (other == grid_models.end()) throw InvalidInput("agent " + std::to_string(s.id) + ": unknown neighbour " + std::to_string(j));
    auto back = other->couplings.find(s.id);
    if (back == other->couplings.end()) {
      throw InvalidInput("agent " + std::to_string(s.id) + ": neighbour " + std::to_string(j) + " has no coupling back");
    }
    s.outgoing_couplings.emplace(j, back->second);
  }
  return s;
}

namespace {

bool has_all_neighbour_data(const AgentState& s) {
  return std::all_of(s.neighbours.begin(), s.neighbours.end(), [&](BusId j) {
    return s.neighbour_transforms.count(j) && s.neighbour_couplings.count(j);
  });
}

bool has_work(const AgentState& s) {
  return s.phase == AgentPhase::Designing || (s.pending_evaluation && has_all_neighbour_data(s));
}

SubsystemModel local_model(const AgentState& s) {
  SubsystemModel m;
  m.bus = s.id;
  m.A_hat = s.A_hat;
  m.B = s.B;
  m.couplings = s.neighbour_couplings;
  return m;
}

void redesign(AgentState& s, const PoleSpec& poles) {
  const auto d = design_local(local_model(s), poles);
  s.poles = poles;
  s.modal = d.modal;
  s.gains = GainSet{};
  s.gains.local = d.K;
  s.gains.local_modal = gain_to_modal(d.K, d.modal.T);
  s.pending_evaluation = true;
}

void emit_shares(const AgentState& s, int round, std::vector<Message>& out) {
  for (BusId j : s.neighbours) {
    out.push_back(Message{Endpoint::agent(s.id), Endpoint::agent(j), round, ShareTransform{s.modal->T}});
    out.push_back(Message{Endpoint::agent(s.id), Endpoint::agent(j), round, ShareCoupling{s.outgoing_couplings.at(j)}});
  }
}

bool modal_variant(const AgentState& s) { return s.options.variant == Variant::Transformed; }

ConditionReport evaluate_with(const AgentState& s, const std::map<BusId, Vector>& global) {
  const auto cl = close_loop(s.A_hat, s.B, s.gains.local, s.neighbour_couplings, global);
  if (modal_variant(s)) {
    const auto tr = transform_subsystem(cl.A_local, s.B, cl.couplings, s.modal->T, s.neighbour_transforms);
    return transformed_row(s.id, *s.modal, tr.couplings);
  }
  return original_row(s.id, certify_decoupled(cl.A_local), cl.couplings);
}

// Global gains for every neighbour, from the latest received transforms.
GainSet full_global_gains(const AgentState& s) {
  LocalDesign self{s.poles, s.gains.local, s.A_hat - s.B * s.gains.local.transpose(), *s.modal};
  return design_global(local_model(s), self, s.neighbour_transforms, s.neighbour_couplings, modal_variant(s));
}

ConditionReport evaluate(AgentState& s) {
  if (!s.escalated) return evaluate_with(s, {});
  GainSet all = full_global_gains(s);
  if (!s.options.selective_escalation) {
    s.gains = all;
    return evaluate_with(s, s.gains.global);
  }
  const ConditionReport base = evaluate_with(s, {});
  std::vector<BusId> order = s.neighbours;
  std::stable_sort(order.begin(), order.end(),
                   [&](BusId a, BusId b) { return base.offdiag.at(a) > base.offdiag.at(b); });
  GainSet chosen = all;
  chosen.global.clear();
  chosen.global_modal.clear();
  ConditionReport report = base;
  for (BusId j : order) {
    chosen.global[j] = all.global.at(j);
    chosen.global_modal[j] = all.global_modal.at(j);
    report = evaluate_with(s, chosen.global);
    if (report.met) break;
  }
  s.gains = chosen;
  return report;
}

void send_status(AgentState& s, bool met, int round, std::vector<Message>& out) {
  if (s.last_sent_status && *s.last_sent_status == met) return;
  out.push_back(Message{Endpoint::agent(s.id), Endpoint::system_operator(), round, ConditionStatus{met}});
  s.last_sent_status = met;
}

}  // namespace

AgentStepResult agent_step(AgentState state, std::span<const Message> inbox, int round) {
  AgentState& s = state;
  const auto is_neighbour = [&](const Endpoint& e) {
    return !e.is_operator && std::find(s.neighbours.begin(), s.neighbours.end(), e.id) != s.neighbours.end();
  };
  const Eigen::Index n = s.A_hat.rows();

  for (const auto& m : inbox) {
    const std::string where = to_string(m.kind()) + " " + to_string(m.from) + "->" + to_string(m.to);
    if (m.to != Endpoint::agent(s.id)) throw ProtocolViolation(where + ": not addressed to agent " + std::to_string(s.id));
    switch (m.kind()) {
      case MessageKind::ShareTransform: {
        if (!is_neighbour(m.from)) throw ProtocolViolation(where + ": sender is not a neighbour");
        const auto& T = std::get<ShareTransform>(m.payload).T;
        if (T.rows() != T.cols() || T.rows() == 0 || !T.allFinite()) throw ProtocolViolation(where + ": malformed transform");
        s.neighbour_transforms[m.from.id] = T;
        s.pending_evaluation = true;
        break;
      }
      case MessageKind::ShareCoupling: {
        if (!is_neighbour(m.from)) throw ProtocolViolation(where + ": sender is not a neighbour");
        const auto& A = std::get<ShareCoupling>(m.payload).A_hat;
        if (A.rows() != n || !A.allFinite()) throw ProtocolViolation(where + ": malformed coupling");
        s.neighbour_couplings[m.from.id] = A;
        s.pending_evaluation = true;
        break;
      }
      case MessageKind::OperatorVerdict:
        if (!m.from.is_operator) throw ProtocolViolation(where + ": verdict from a non-operator");
        s.operator_verdict = std::get<OperatorVerdict>(m.payload).stable;
        break;
      case MessageKind::StateSample:
        if (!is_neighbour(m.from)) throw ProtocolViolation(where + ": sender is not a neighbour");
        if (s.operator_verdict != true || !s.escalated) {
          throw ProtocolViolation(where + ": state sample before a stable verdict or to a non-escalated agent");
        }
        break;
      case MessageKind::ConditionStatus:
        throw ProtocolViolation(where + ": condition status addressed to an agent");
    }
  }
  for (const auto& [j, T] : s.neighbour_transforms) {
    auto c = s.neighbour_couplings.find(j);
    if (c != s.neighbour_couplings.end() && c->second.cols() != T.rows()) {
      throw ProtocolViolation("agent " + std::to_string(s.id) + ": transform and coupling of " + std::to_string(j) +
                              " disagree in dimension");
    }
  }

  std::vector<Message> out;
  if (s.phase == AgentPhase::Designing) {
    redesign(s, s.base_poles);
    emit_shares(s, round, out);
    s.phase = AgentPhase::AwaitingNeighbors;
    return {std::move(state), std::move(out)};
  }

  if (!s.pending_evaluation || !has_all_neighbour_data(s)) return {std::move(state), std::move(out)};

  s.phase = AgentPhase::Evaluating;
  ConditionReport report = evaluate(s);
  s.pending_evaluation = false;
  s.met = report.met;
  s.report_history.push_back(report);
  s.last_report = report;

  if (report.met) {
    s.gave_up = false;
    send_status(s, true, round, out);
    s.phase = AgentPhase::Done;
  } else {
    send_status(s, false, round, out);
    if (!s.escalated && s.retry_count < s.options.max_retries) {
      ++s.retry_count;
      redesign(s, s.poles.scaled(s.options.retry.pole_scale));
      emit_shares(s, round, out);
      s.phase = AgentPhase::AwaitingNeighbors;
    } else if (!s.escalated && s.options.allow_global) {
      s.escalated = true;
      redesign(s, s.options.retry.escalate_with_base_poles ? s.base_poles : s.poles);
      s.gains = full_global_gains(s);
      emit_shares(s, round, out);
      s.phase = AgentPhase::Escalated;
    } else {
      s.gave_up = true;
      s.phase = AgentPhase::Done;
    }
  }
  return {std::move(state), std::move(out)};
}

OperatorStepResult operator_step(OperatorState state, std::span<const Message> inbox, int round) {
  std::map<BusId, bool> this_round;
  for (const auto& m : inbox) {
    const std::string where = to_string(m.kind()) + " " + to_string(m.from) + "->" + to_string(m.to);
    if (m.kind() != MessageKind::ConditionStatus || !m.to.is_operator || m.from.is_operator) {
      throw ProtocolViolation(where + ": operator accepts only condition statuses from agents");
    }
    if (std::find(state.agents.begin(), state.agents.end(), m.from.id) == state.agents.end()) {
      throw ProtocolViolation(where + ": unknown agent");
    }
    const bool met = std::get<ConditionStatus>(m.payload).met;
    auto [it, inserted] = this_round.emplace(m.from.id, met);
    if (!inserted && it->second != met) throw ProtocolViolation(where + ": conflicting statuses in one round");
    state.statuses[m.from.id] = met;
  }
  std::vector<Message> out;
  const bool unanimous = !state.agents.empty() && std::all_of(state.agents.begin(), state.agents.end(), [&](BusId a) {
    auto it = state.statuses.find(a);
    return it != state.statuses.end() && it->second;
  });
  if (!state.verdict && unanimous) {
    state.verdict = true;
    for (BusId a : state.agents) {
      out.push_back(Message{Endpoint::system_operator(), Endpoint::agent(a), round, OperatorVerdict{true}});
    }
  }
  return {std::move(state), std::move(out)};
}

OperatorStepResult operator_finalize(OperatorState state, int round) {
  std::vector<Message> out;
  if (!state.verdict) {
    state.verdict = false;
    for (BusId a : state.agents) {
      out.push_back(Message{Endpoint::system_operator(), Endpoint::agent(a), round, OperatorVerdict{false}});
    }
  }
  return {std::move(state), std::move(out)};
}

std::map<BusId, GainSet> DsaResult::gains() const {
  std::map<BusId, GainSet> out;
  for (const auto& [id, a] : agents) out.emplace(id, a.gains);
  return out;
}

std::vector<BusId> DsaResult::escalated_agents() const {
  std::vector<BusId> out;
  for (const auto& [id, a] : agents) {
    if (a.escalated) out.push_back(id);
  }
  return out;
}

DsaResult run_dsa(const GridSpec& grid, const std::map<BusId, PoleSpec>& poles, const DsaOptions& options) {
  return run_dsa(build_subsystems(grid), poles, options);
}

DsaResult run_dsa(const std::vector<SubsystemModel>& subsystems, const std::map<BusId, PoleSpec>& poles,
                  const DsaOptions& options) {
  DsaResult result;
  for (const auto& m : subsystems) {
    auto p = poles.find(m.bus);
    if (p == poles.end()) throw InvalidInput("run_dsa: no poles for agent " + std::to_string(m.bus));
    result.agents.emplace(m.bus, make_agent(m, subsystems, p->second, options.agent));
    result.operator_state.agents.push_back(m.bus);
  }
  std::sort(result.operator_state.agents.begin(), result.operator_state.agents.end());
  std::map<BusId, std::vector<BusId>> topology;
  for (const auto& [id, a] : result.agents) topology[id] = a.neighbours;

  std::vector<Message> in_flight;
  int round = 0;
  for (; round < options.max_rounds; ++round) {
    std::map<Endpoint, std::vector<Message>> inbox;
    for (auto& m : in_flight) inbox[m.to].push_back(std::move(m));
    in_flight.clear();

    std::vector<Message> sent;
    for (auto& [id, agent] : result.agents) {
      const auto& mine = inbox[Endpoint::agent(id)];
      auto step = agent_step(std::move(agent), mine, round);
      agent = std::move(step.state);
      sent.insert(sent.end(), step.outbox.begin(), step.outbox.end());
    }
    auto op = operator_step(std::move(result.operator_state), inbox[Endpoint::system_operator()], round);
    result.operator_state = std::move(op.state);
    sent.insert(sent.end(), op.outbox.begin(), op.outbox.end());

    const bool busy = std::any_of(result.agents.begin(), result.agents.end(),
                                  [](const auto& kv) { return has_work(kv.second); });
    if (sent.empty() && !busy) {
      if (result.operator_state.verdict) break;
      auto fin = operator_finalize(std::move(result.operator_state), round);
      result.operator_state = std::move(fin.state);
      sent = std::move(fin.outbox);
    }
    std::sort(sent.begin(), sent.end(), message_before);
    for (const auto& m : sent) validate_message(m, topology);
    result.trace.insert(result.trace.end(), sent.begin(), sent.end());
    in_flight = std::move(sent);
  }
  if (round >= options.max_rounds) {
    throw ProtocolViolation("protocol did not settle within " + std::to_string(options.max_rounds) + " rounds");
  }
  result.rounds = round;
  result.verdict = result.operator_state.verdict.value_or(false) ? Verdict::Stable : Verdict::Inconclusive;
  return result;
}

}  // namespace gridcert
