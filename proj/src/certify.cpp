#include "gridcert/certify.hpp"

#include <algorithm>
#include <cmath>

#include "gridcert/errors.hpp"

namespace gridcert {

std::string to_string(Variant v) { return v == Variant::Original ? "original" : "transformed"; }

std::string to_string(Verdict v) { return v == Verdict::Stable ? "stable" : "inconclusive"; }

Variant parse_variant(const std::string& s) {
  if (s == "original") return Variant::Original;
  if (s == "transformed") return Variant::Transformed;
  throw InvalidInput("unknown variant '" + s + "'");
}

double ConditionReport::offdiag_sum() const {
  double sum = 0.0;
  for (const auto& [j, v] : offdiag) sum += std::abs(v);
  return sum;
}

LyapunovCertificate certify_decoupled(const Matrix& A, const Matrix& Q) {
  const double abscissa = spectral_abscissa(A);
  if (!(abscissa < 0.0)) {
    throw CertificateInvalid("decoupled subsystem is not Hurwitz (max Re lambda = " + std::to_string(abscissa) + ")",
                             abscissa);
  }
  LyapunovCertificate cert;
  cert.P = solve_lyapunov(A, Q);
  cert.Q = 0.5 * (Q + Q.transpose());
  cert.lambda_min_Q = symmetric_min_eigenvalue(cert.Q);
  cert.lambda_max_P = symmetric_max_eigenvalue(cert.P);
  return cert;
}

LyapunovCertificate certify_decoupled(const Matrix& A) {
  return certify_decoupled(A, Matrix::Identity(A.rows(), A.cols()));
}

TransformedCertificate transformed_certificate(const ModalTransform& modal, double theta) {
  if (!(theta > 0.0)) throw InvalidInput("transformed_certificate: theta must be positive");
  const Eigen::Index n = modal.Lambda.rows();
  TransformedCertificate c;
  c.theta = theta;
  c.P_tilde = theta * Matrix::Identity(n, n);
  c.Q_tilde = -theta * (modal.Lambda + modal.Lambda.transpose());
  c.ratio = symmetric_min_eigenvalue(c.Q_tilde) / symmetric_max_eigenvalue(c.P_tilde);
  return c;
}

ConditionReport make_report(BusId agent, Variant variant, double diagonal, std::map<BusId, double> offdiag) {
  ConditionReport r;
  r.agent = agent;
  r.variant = variant;
  r.diagonal = diagonal;
  r.offdiag = std::move(offdiag);
  r.margin = std::abs(diagonal) - r.offdiag_sum();
  r.met = diagonal > 0.0 && r.margin > 0.0;
  return r;
}

ConditionReport original_row(BusId agent, const LyapunovCertificate& cert, const std::map<BusId, Matrix>& couplings) {
  std::map<BusId, double> off;
  for (const auto& [j, Aij] : couplings) off[j] = 2.0 * cert.lambda_max_P * spectral_norm(Aij);
  return make_report(agent, Variant::Original, cert.lambda_min_Q, std::move(off));
}

ConditionReport transformed_row(BusId agent, const ModalTransform& modal,
                                const std::map<BusId, Matrix>& transformed_couplings) {
  if (!(modal.sigma_M > 0.0)) {
    throw CertificateInvalid("agent " + std::to_string(agent) + ": Lambda is not Hurwitz", -modal.sigma_M);
  }
  std::map<BusId, double> off;
  for (const auto& [j, Aij] : transformed_couplings) off[j] = spectral_norm(Aij);
  return make_report(agent, Variant::Transformed, modal.sigma_M, std::move(off));
}

namespace {

SMatrix assemble(std::vector<ConditionReport> reports) {
  SMatrix out;
  for (const auto& r : reports) out.agents.push_back(r.agent);
  const auto n = static_cast<Eigen::Index>(out.agents.size());
  std::map<BusId, Eigen::Index> index;
  for (Eigen::Index k = 0; k < n; ++k) index[out.agents[static_cast<std::size_t>(k)]] = k;
  out.S = Matrix::Zero(n, n);
  for (const auto& r : reports) {
    const Eigen::Index i = index.at(r.agent);
    out.S(i, i) = r.diagonal;
    for (const auto& [j, v] : r.offdiag) {
      auto it = index.find(j);
      if (it == index.end()) {
        throw InvalidInput("agent " + std::to_string(r.agent) + " couples to " + std::to_string(j) +
                           ", which has no certificate");
      }
      out.S(i, it->second) = -v;
    }
  }
  out.reports = std::move(reports);
  return out;
}

}  // namespace

SMatrix build_S(const std::map<BusId, OriginalAgentData>& agents) {
  std::vector<ConditionReport> reports;
  for (const auto& [id, data] : agents) reports.push_back(original_row(id, data.certificate, data.couplings));
  return assemble(std::move(reports));
}

SMatrix build_S_tilde(const std::map<BusId, TransformedAgentData>& agents) {
  std::vector<ConditionReport> reports;
  for (const auto& [id, data] : agents) reports.push_back(transformed_row(id, data.modal, data.couplings));
  return assemble(std::move(reports));
}

Verdict compositional_verdict(const std::vector<ConditionReport>& reports) {
  if (reports.empty()) return Verdict::Inconclusive;
  const bool all = std::all_of(reports.begin(), reports.end(), [](const ConditionReport& r) { return r.met; });
  return all ? Verdict::Stable : Verdict::Inconclusive;
}

double worst_case_coupling_bound(double X_ij, double M_i, double omega_b, double inv_norm_T_i, double norm_T_j) {
  if (!(X_ij > 0.0) || !(M_i > 0.0) || !(omega_b > 0.0) || !(inv_norm_T_i > 0.0) || !(norm_T_j > 0.0)) {
    throw InvalidInput("worst_case_coupling_bound: inputs must be positive");
  }
  return inv_norm_T_i * (omega_b / (M_i * X_ij)) * norm_T_j;
}

double worst_case_coupling_bound(double X_ij, double M_i, double omega_b, const Matrix& T_i, const Matrix& T_j) {
  const Matrix Ti_inv = T_i.fullPivLu().inverse();
  return worst_case_coupling_bound(X_ij, M_i, omega_b, spectral_norm(Ti_inv), spectral_norm(T_j));
}

nlohmann::json to_json(const ConditionReport& report) {
  nlohmann::json off = nlohmann::json::object();
  for (const auto& [j, v] : report.offdiag) off[std::to_string(j)] = v;
  return {{"agent", report.agent},   {"variant", to_string(report.variant)}, {"diagonal", report.diagonal},
          {"offdiag", std::move(off)}, {"margin", report.margin},            {"met", report.met}};
}

ConditionReport report_from_json(const nlohmann::json& j) {
  ConditionReport r;
  r.agent = j.at("agent").get<int>();
  r.variant = parse_variant(j.at("variant").get<std::string>());
  r.diagonal = j.at("diagonal").get<double>();
  for (const auto& [k, v] : j.at("offdiag").items()) r.offdiag[std::stoi(k)] = v.get<double>();
  r.margin = j.at("margin").get<double>();
  r.met = j.at("met").get<bool>();
  return r;
}

}  // namespace gridcert
