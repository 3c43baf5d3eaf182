#include "gridcert/assess.hpp"

#include "gridcert/errors.hpp"

namespace gridcert {

PoleSpec default_poles() { return PoleSpec({Complex(-20.0, 0.0), Complex(-30.0, 0.0), Complex(-40.0, 0.0)}); }

PoleSpec poles_for(const Generator& g) { return g.poles ? PoleSpec(*g.poles) : default_poles(); }

std::map<BusId, PoleSpec> poles_from_grid(const GridSpec& grid, double scale) {
  if (!(scale > 0.0)) throw InvalidInput("pole scale must be positive");
  std::map<BusId, PoleSpec> out;
  for (const auto& g : grid.generators) out.emplace(g.bus, poles_for(g).scaled(scale));
  return out;
}

LocalDesign design_local(const SubsystemModel& model, const PoleSpec& poles) {
  LocalDesign d;
  d.poles = poles;
  try {
    d.K = pole_place(model.A_hat, model.B, poles);
  } catch (const Uncontrollable& e) {
    throw Uncontrollable("bus " + std::to_string(model.bus) + ": " + e.what());
  }
  d.A_closed = model.A_hat - model.B * d.K.transpose();
  d.modal = modal_decompose(d.A_closed);
  return d;
}

GainSet design_global(const SubsystemModel& model, const LocalDesign& self,
                      const std::map<BusId, Matrix>& T_neighbours, const std::map<BusId, Matrix>& couplings,
                      bool modal_coordinates) {
  GainSet g;
  g.local = self.K;
  const Eigen::Index n = model.order();
  const Matrix T_self = modal_coordinates ? self.modal.T : Matrix::Identity(n, n);
  g.local_modal = gain_to_modal(self.K, T_self);

  std::map<BusId, Matrix> transforms;
  for (const auto& [j, c] : couplings) {
    if (modal_coordinates) {
      auto it = T_neighbours.find(j);
      if (it == T_neighbours.end()) throw InvalidInput("design_global: missing transform of bus " + std::to_string(j));
      transforms.emplace(j, it->second);
    } else {
      transforms.emplace(j, Matrix::Identity(c.cols(), c.cols()));
    }
  }
  const auto tr = transform_subsystem(model.A_hat, model.B, couplings, T_self, transforms);
  for (const auto& [j, Ap] : tr.couplings) {
    Vector Kt = optimal_global_gain(tr.B_tilde, Ap);
    g.global.emplace(j, gain_from_modal(Kt, transforms.at(j)));
    g.global_modal.emplace(j, std::move(Kt));
  }
  return g;
}

const std::map<BusId, GainSet>& Assessment::final_gains() const {
  for (const auto& v : variants) {
    if (v.verdict == Verdict::Stable) return v.gains;
  }
  return variants.front().gains;
}

Assessment assess_grid(const GridSpec& grid, const std::map<BusId, PoleSpec>& poles, bool use_global,
                       const std::vector<Variant>& variants) {
  if (variants.empty()) throw InvalidInput("assess_grid: no variant requested");
  Assessment out;
  out.subsystems = build_subsystems(grid);
  for (const auto& m : out.subsystems) {
    auto p = poles.find(m.bus);
    if (p == poles.end()) throw InvalidInput("assess_grid: no poles for bus " + std::to_string(m.bus));
    out.designs.emplace(m.bus, design_local(m, p->second));
  }
  std::map<BusId, Matrix> T_all;
  for (const auto& [id, d] : out.designs) T_all.emplace(id, d.modal.T);

  out.verdict = Verdict::Inconclusive;
  for (Variant variant : variants) {
    VariantAssessment va{variant, {}, {}, Verdict::Inconclusive};
    const bool modal = variant == Variant::Transformed;
    for (const auto& m : out.subsystems) {
      const auto& d = out.designs.at(m.bus);
      GainSet g;
      if (use_global) {
        g = design_global(m, d, T_all, m.couplings, modal);
      } else {
        g.local = d.K;
        if (modal) g.local_modal = gain_to_modal(d.K, d.modal.T);
      }
      va.gains.emplace(m.bus, std::move(g));
    }
    if (modal) {
      std::map<BusId, TransformedAgentData> data;
      for (const auto& m : out.subsystems) {
        const auto& d = out.designs.at(m.bus);
        const auto cl = close_loop(m.A_hat, m.B, d.K, m.couplings, va.gains.at(m.bus).global);
        const auto tr = transform_subsystem(d.A_closed, m.B, cl.couplings, d.modal.T, T_all);
        data.emplace(m.bus, TransformedAgentData{d.modal, tr.couplings});
      }
      va.s = build_S_tilde(data);
    } else {
      std::map<BusId, OriginalAgentData> data;
      for (const auto& m : out.subsystems) {
        const auto& d = out.designs.at(m.bus);
        const auto cl = close_loop(m.A_hat, m.B, d.K, m.couplings, va.gains.at(m.bus).global);
        data.emplace(m.bus, OriginalAgentData{certify_decoupled(cl.A_local), cl.couplings});
      }
      va.s = build_S(data);
    }
    va.verdict = compositional_verdict(va.s.reports);
    if (va.verdict == Verdict::Stable) out.verdict = Verdict::Stable;
    out.variants.push_back(std::move(va));
  }
  return out;
}

std::map<BusId, FeedbackGains> feedback_of(const std::map<BusId, GainSet>& gains) {
  std::map<BusId, FeedbackGains> out;
  for (const auto& [id, g] : gains) out.emplace(id, g.feedback());
  return out;
}

}  // namespace gridcert
