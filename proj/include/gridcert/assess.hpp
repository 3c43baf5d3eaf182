#pragma once

// One-shot (centralised) design and certification of a grid: local pole
// placement for every bus, modal transforms, optional global gains, and the
// S / S~ reports. The protocol module reaches the same designs by message
// passing; this path is what `gridcert assess` runs.

#include <map>
#include <optional>
#include <vector>

#include "gridcert/certify.hpp"
#include "gridcert/control.hpp"
#include "gridcert/gridmodel.hpp"

namespace gridcert {

/// Poles used when a generator carries no "control" list.
PoleSpec default_poles();
PoleSpec poles_for(const Generator& g);
std::map<BusId, PoleSpec> poles_from_grid(const GridSpec& grid, double scale = 1.0);

struct LocalDesign {
  PoleSpec poles;
  Vector K;
  Matrix A_closed;  ///< A_hat - B K^T
  ModalTransform modal;
};

LocalDesign design_local(const SubsystemModel& model, const PoleSpec& poles);

/// Global gains for one bus: K~_ij from the pseudo-inverse of B~_i and the
/// corresponding K_ij. With identity transforms this is the original-coordinate
/// minimiser.
GainSet design_global(const SubsystemModel& model, const LocalDesign& self,
                      const std::map<BusId, Matrix>& T_neighbours, const std::map<BusId, Matrix>& couplings,
                      bool modal_coordinates = true);

struct VariantAssessment {
  Variant variant;
  std::map<BusId, GainSet> gains;
  SMatrix s;
  Verdict verdict;
};

struct Assessment {
  std::vector<SubsystemModel> subsystems;
  std::map<BusId, LocalDesign> designs;
  std::vector<VariantAssessment> variants;  ///< in the order requested
  Verdict verdict;                          ///< stable if any variant certifies
  /// Gains of the first certifying variant, else of the first variant.
  const std::map<BusId, GainSet>& final_gains() const;
};

Assessment assess_grid(const GridSpec& grid, const std::map<BusId, PoleSpec>& poles, bool use_global,
                       const std::vector<Variant>& variants = {Variant::Transformed});

std::map<BusId, FeedbackGains> feedback_of(const std::map<BusId, GainSet>& gains);

}  // namespace gridcert
