#include <doctest.h>

#include <algorithm>
#include <numbers>

#include "gridcert/assess.hpp"
#include "gridcert/certify.hpp"
#include "gridcert/errors.hpp"
#include "support.hpp"

using namespace gridcert;
using namespace gridcert::testing;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

const ConditionReport& row_of(const SMatrix& s, BusId agent) {
  return *std::find_if(s.reports.begin(), s.reports.end(), [&](const ConditionReport& r) { return r.agent == agent; });
}

}  // namespace

TEST_CASE("decoupled certificates") {
  auto c = certify_decoupled(-Matrix::Identity(2, 2), 2 * Matrix::Identity(2, 2));
  CHECK((c.P - Matrix::Identity(2, 2)).norm() < 1e-12);
  CHECK(c.lambda_min_Q == doctest::Approx(2));
  CHECK(c.lambda_max_P == doctest::Approx(1));

  auto d = certify_decoupled(mat({{0, 1}, {-2, -3}}));
  CHECK(d.lambda_max_P == doctest::Approx(0.75 + std::sqrt(0.5 * 0.5 + 0.25 * 0.25)).epsilon(1e-12));
  CHECK(d.lambda_max_P == doctest::Approx(1.3090).epsilon(1e-4));
  CHECK(d.lambda_min_Q == doctest::Approx(1));

  CHECK_THROWS_AS(certify_decoupled(mat({{1, 0}, {0, -1}})), CertificateInvalid);
}

TEST_CASE("S for decoupled agents is diagonal and met") {
  std::map<BusId, OriginalAgentData> agents;
  agents.emplace(1, OriginalAgentData{certify_decoupled(-Matrix::Identity(2, 2)), {}});
  agents.emplace(2, OriginalAgentData{certify_decoupled(-3 * Matrix::Identity(2, 2)), {}});
  auto s = build_S(agents);
  CHECK(s.S.isDiagonal());
  for (const auto& r : s.reports) CHECK(r.met);
  CHECK(compositional_verdict(s.reports) == Verdict::Stable);
}

TEST_CASE("one S row by direct substitution") {
  // A = -2I, Q = 4I gives P = I.
  std::map<BusId, OriginalAgentData> agents;
  Matrix Aij = Matrix::Zero(2, 2);
  Aij(1, 0) = 1.0;
  agents.emplace(1, OriginalAgentData{certify_decoupled(-2 * Matrix::Identity(2, 2), 4 * Matrix::Identity(2, 2)),
                                      {{2, Aij}}});
  agents.emplace(2, OriginalAgentData{certify_decoupled(-Matrix::Identity(2, 2)), {}});
  auto s = build_S(agents);
  const auto& r = row_of(s, 1);
  CHECK(r.diagonal == doctest::Approx(4));
  CHECK(r.offdiag.at(2) == doctest::Approx(2));
  CHECK(s.S(0, 1) == doctest::Approx(-2));
  CHECK(r.margin == doctest::Approx(2));
  CHECK(r.met);
}

TEST_CASE("three-bus local-only S~ rows") {
  auto a = assess_grid(three_bus(), poles_from_grid(three_bus()), false);
  const auto& s = a.variants.at(0).s;
  const double want[3][3] = {{22, 296.58, 249.13}, {24, 236.70, 135.88}, {25, 325.07, 222.14}};
  for (int i = 0; i < 3; ++i) {
    const auto& r = row_of(s, i + 1);
    CHECK(rel_err(r.diagonal, want[i][0]) < 1e-9);
    std::vector<double> off;
    for (const auto& [j, v] : r.offdiag) off.push_back(v);
    CHECK(rel_err(off.at(0), want[i][1]) < 1e-3);
    CHECK(rel_err(off.at(1), want[i][2]) < 1e-3);
    CHECK_FALSE(r.met);
  }
  CHECK(a.verdict == Verdict::Inconclusive);
}

TEST_CASE("three-bus S~ rows with global control") {
  auto a = assess_grid(three_bus(), poles_from_grid(three_bus()), true);
  const auto& s = a.variants.at(0).s;
  const double want[3][2] = {{11.15, 9.37}, {13.0, 7.46}, {12.23, 8.36}};
  for (int i = 0; i < 3; ++i) {
    const auto& r = row_of(s, i + 1);
    std::vector<double> off;
    for (const auto& [j, v] : r.offdiag) off.push_back(v);
    CHECK(rel_err(off.at(0), want[i][0]) < 2e-3);
    CHECK(rel_err(off.at(1), want[i][1]) < 2e-3);
    CHECK(r.met);
  }
  CHECK(is_dd_m_matrix(s.S).is_m_matrix);
  CHECK(compositional_verdict(s.reports) == Verdict::Stable);
  CHECK(is_hurwitz(assemble_full(a.subsystems, feedback_of(a.final_gains()))));
}

TEST_CASE("three-bus S in original coordinates matches the direct formula") {
  auto grid = three_bus();
  auto a = assess_grid(grid, poles_from_grid(grid), false, {Variant::Original});
  const auto& v = a.variants.at(0);
  CHECK(v.variant == Variant::Original);
  for (const auto& m : a.subsystems) {
    const auto& d = a.designs.at(m.bus);
    Matrix P = solve_lyapunov(d.A_closed, Matrix::Identity(3, 3));
    const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(P).eigenvalues().maxCoeff();
    const auto& r = row_of(v.s, m.bus);
    CHECK(r.diagonal == doctest::Approx(1.0));
    for (const auto& [j, c] : m.couplings) {
      const double norm = Eigen::JacobiSVD<Matrix>(c).singularValues()(0);
      CHECK(rel_err(r.offdiag.at(j), 2 * lmax * norm) < 1e-9);
    }
    CHECK_FALSE(r.met);
  }
}

TEST_CASE("verdict aggregation") {
  auto met = make_report(1, Variant::Transformed, 3, {{2, 1}});
  auto not_met = make_report(2, Variant::Transformed, 1, {{1, 2}});
  CHECK(met.met);
  CHECK_FALSE(not_met.met);
  CHECK(compositional_verdict({met}) == Verdict::Stable);
  CHECK(compositional_verdict({met, not_met}) == Verdict::Inconclusive);
  CHECK(compositional_verdict({}) == Verdict::Inconclusive);
  CHECK_FALSE(make_report(3, Variant::Original, -5, {}).met);
  CHECK_FALSE(make_report(3, Variant::Original, 2, {{1, 2}}).met);
}

TEST_CASE("worst-case coupling bound") {
  const double wb = 2 * std::numbers::pi * 60;
  const Matrix I = Matrix::Identity(3, 3);
  CHECK(worst_case_coupling_bound(0.4, 8, wb, I, I) == doctest::Approx(wb / (8 * 0.4)));
  CHECK(worst_case_coupling_bound(0.4, 8, wb, I, I) == doctest::Approx(117.81).epsilon(1e-4));
  auto s = build_subsystems(three_bus());
  CHECK(spectral_norm(s[0].couplings.at(2)) == doctest::Approx(worst_case_coupling_bound(0.4, 8, wb, I, I)));

  auto rng = make_rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix Ti = random_matrix(rng, 3, 3) + 2 * I;
    Matrix Tj = random_matrix(rng, 3, 3) + 2 * I;
    if (condition_number(Ti) > 1e6) continue;
    const Matrix exact = Ti.fullPivLu().solve(s[0].couplings.at(2) * Tj);
    CHECK(worst_case_coupling_bound(0.4, 8, wb, Ti, Tj) >= spectral_norm(exact) * (1 - 1e-12));
  }
  CHECK_THROWS_AS(worst_case_coupling_bound(0, 8, wb, 1, 1), InvalidInput);
}

TEST_CASE("transformed certificate ratio is optimal") {
  auto rng = make_rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 2 + trial % 3;
    auto modal = modal_decompose(random_hurwitz(rng, n));
    auto c = transformed_certificate(modal, 1.0 + trial);
    CHECK(c.ratio == doctest::Approx(2 * modal.sigma_M).epsilon(1e-12));
    CHECK(transformed_certificate(modal, 0.25).ratio == doctest::Approx(c.ratio).epsilon(1e-12));
    for (int k = 0; k < 50; ++k) {
      Matrix Q = random_spd(rng, n);
      Matrix P = solve_lyapunov(modal.Lambda, Q);
      const double ratio = symmetric_min_eigenvalue(Q) / symmetric_max_eigenvalue(P);
      CHECK(ratio <= 2 * modal.sigma_M + 1e-8);
    }
  }
}

TEST_CASE("S~ does not depend on eigenvector sign and order") {
  auto grid = three_bus();
  auto s = build_subsystems(grid);
  const auto poles = poles_from_grid(grid);
  std::map<BusId, LocalDesign> d;
  for (const auto& m : s) d.emplace(m.bus, design_local(m, poles.at(m.bus)));

  auto build = [&](const std::map<BusId, Matrix>& T) {
    std::map<BusId, TransformedAgentData> data;
    for (const auto& m : s) {
      std::map<BusId, Matrix> Tn;
      for (const auto& [j, c] : m.couplings) Tn.emplace(j, T.at(j));
      auto tr = transform_subsystem(d.at(m.bus).A_closed, m.B, m.couplings, T.at(m.bus), Tn);
      ModalTransform mt = d.at(m.bus).modal;
      mt.T = T.at(m.bus);
      data.emplace(m.bus, TransformedAgentData{mt, tr.couplings});
    }
    return build_S_tilde(data).S;
  };
  std::map<BusId, Matrix> T0;
  for (const auto& [id, dd] : d) T0.emplace(id, dd.modal.T);
  const Matrix ref = build(T0);

  auto rng = make_rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto T = T0;
    for (auto& [id, Ti] : T) {
      Eigen::VectorXi perm = Eigen::VectorXi::LinSpaced(3, 0, 2);
      std::shuffle(perm.data(), perm.data() + 3, rng);
      Vector signs(3);
      for (int k = 0; k < 3; ++k) signs(k) = (rng() & 1) ? 1.0 : -1.0;
      Ti = Ti * Eigen::PermutationMatrix<Eigen::Dynamic>(perm) * Matrix(signs.asDiagonal());
    }
    CHECK((build(T) - ref).cwiseAbs().maxCoeff() <= 1e-9 * ref.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("both conditions agree on the transformed pair") {
  auto rng = make_rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    auto sys = random_interconnection(rng);
    auto tdata = transformed_data(sys);
    for (const auto& [id, td] : tdata) {
      auto tc = transformed_certificate(td.modal);
      LyapunovCertificate lc{tc.P_tilde, tc.Q_tilde, symmetric_min_eigenvalue(tc.Q_tilde),
                             symmetric_max_eigenvalue(tc.P_tilde)};
      auto a = original_row(id, lc, td.couplings);
      auto b = transformed_row(id, td.modal, td.couplings);
      CHECK(a.met == b.met);
      CHECK(a.diagonal == doctest::Approx(2 * b.diagonal).epsilon(1e-12));
    }
  }
}

TEST_CASE("soundness sampling, original coordinates") {
  auto rng = make_rng(25);
  int certified = 0;
  for (int attempt = 0; attempt < 5000 && certified < 100; ++attempt) {
    auto sys = random_interconnection(rng);
    auto S = build_S(original_data(sys));
    if (compositional_verdict(S.reports) != Verdict::Stable) continue;
    ++certified;
    CHECK(is_hurwitz(sys.assembled()));
  }
  CHECK(certified == 100);
}

TEST_CASE("soundness sampling, modal coordinates") {
  auto rng = make_rng(26);
  int certified = 0;
  for (int attempt = 0; attempt < 5000 && certified < 100; ++attempt) {
    auto sys = random_interconnection(rng);
    std::map<BusId, TransformedAgentData> data;
    try {
      data = transformed_data(sys);
    } catch (const IllConditionedTransform&) {
      continue;
    }
    auto S = build_S_tilde(data);
    if (compositional_verdict(S.reports) != Verdict::Stable) continue;
    ++certified;
    CHECK(is_hurwitz(sys.assembled()));
  }
  CHECK(certified == 100);
}

TEST_CASE("report JSON round trip") {
  auto r = make_report(2, Variant::Original, 4.5, {{1, 1.25}, {3, 0.5}});
  auto j = to_json(r);
  CHECK(j.at("agent") == 2);
  CHECK(j.at("variant") == "original");
  CHECK(j.at("offdiag").at("3") == 0.5);
  auto back = report_from_json(j);
  CHECK(back.agent == r.agent);
  CHECK(back.variant == r.variant);
  CHECK(back.offdiag == r.offdiag);
  CHECK(back.margin == r.margin);
  CHECK(back.met == r.met);
  CHECK_THROWS(parse_variant("sideways"));
}
