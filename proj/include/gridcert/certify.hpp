#pragma once

// S / S~ test matrices and the compositional verdict.
//
// Original coordinates: s_ii = lambda_min(Q_i), s_ij = -2 lambda_max(P_i) ||A_ij||_2.
// Modal coordinates:    s~_ii = sigma_M^i,      s~_ij = -||A~_ij||_2.
// A row is "met" when s_ii strictly exceeds the sum of |s_ij| over neighbours;
// every row met makes S a diagonally dominant M-matrix and certifies the
// interconnection. A failed row never implies instability.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridcert/gridmodel.hpp"
#include "gridcert/linalg.hpp"

namespace gridcert {

enum class Variant { Original, Transformed };
enum class Verdict { Stable, Inconclusive };

std::string to_string(Variant v);
std::string to_string(Verdict v);
Variant parse_variant(const std::string& s);

struct LyapunovCertificate {
  Matrix P;
  Matrix Q;
  double lambda_min_Q = 0.0;
  double lambda_max_P = 0.0;
};

struct TransformedCertificate {
  double theta = 1.0;
  Matrix P_tilde;  ///< theta * I
  Matrix Q_tilde;  ///< -theta (Lambda + Lambda^T)
  double ratio = 0.0;  ///< lambda_min(Q~) / lambda_max(P~) = 2 sigma_M
};

struct ConditionReport {
  BusId agent = 0;
  Variant variant = Variant::Transformed;
  double diagonal = 0.0;
  std::map<BusId, double> offdiag;  ///< neighbour -> |s_ij|
  double margin = 0.0;
  bool met = false;

  double offdiag_sum() const;
};

struct SMatrix {
  std::vector<BusId> agents;  ///< row/column order
  Matrix S;
  std::vector<ConditionReport> reports;
};

/// P from A^T P + P A = -Q. Throws CertificateInvalid when A is not Hurwitz.
LyapunovCertificate certify_decoupled(const Matrix& A, const Matrix& Q);
LyapunovCertificate certify_decoupled(const Matrix& A);  ///< Q = I

TransformedCertificate transformed_certificate(const ModalTransform& modal, double theta = 1.0);

ConditionReport make_report(BusId agent, Variant variant, double diagonal, std::map<BusId, double> offdiag);

/// Row of S for one agent given its certificate and closed-loop couplings A_ij.
ConditionReport original_row(BusId agent, const LyapunovCertificate& cert, const std::map<BusId, Matrix>& couplings);

/// Row of S~ for one agent given its modal form and transformed couplings A~_ij.
/// Throws CertificateInvalid when Lambda_i is not Hurwitz.
ConditionReport transformed_row(BusId agent, const ModalTransform& modal,
                                const std::map<BusId, Matrix>& transformed_couplings);

struct OriginalAgentData {
  LyapunovCertificate certificate;
  std::map<BusId, Matrix> couplings;
};

struct TransformedAgentData {
  ModalTransform modal;
  std::map<BusId, Matrix> couplings;
};

SMatrix build_S(const std::map<BusId, OriginalAgentData>& agents);
SMatrix build_S_tilde(const std::map<BusId, TransformedAgentData>& agents);

Verdict compositional_verdict(const std::vector<ConditionReport>& reports);

/// ||T_i^-1||_2 * omega_b / (M_i X_ij) * ||T_j||_2, an upper bound on ||A~_ij||_2 for
/// the rank-one swing coupling.
double worst_case_coupling_bound(double X_ij, double M_i, double omega_b, double inv_norm_T_i, double norm_T_j);
double worst_case_coupling_bound(double X_ij, double M_i, double omega_b, const Matrix& T_i, const Matrix& T_j);

nlohmann::json to_json(const ConditionReport& report);
ConditionReport report_from_json(const nlohmann::json& j);

}  // namespace gridcert
