#pragma once

// Shared fixtures for the test binaries: seeded RNG (GRIDCERT_SEED), random
// matrix generators, and the bundled three-bus grid.

#include <cstdint>
#include <cstdlib>
#include <map>
#include <random>
#include <string>

#include "gridcert/assess.hpp"
#include "gridcert/certify.hpp"
#include "gridcert/gridmodel.hpp"
#include "gridcert/linalg.hpp"

namespace gridcert::testing {

inline std::uint64_t test_seed() {
  if (const char* s = std::getenv("GRIDCERT_SEED")) return std::strtoull(s, nullptr, 10);
  return 20240611ULL;
}

/// Fresh generator per call site so test order does not change the samples.
inline std::mt19937_64 make_rng(std::uint64_t salt = 0) { return std::mt19937_64(test_seed() ^ (salt * 0x9e3779b97f4a7c15ULL)); }

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix A(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) A(r, c) = n(rng);
  return A;
}

/// Random matrix shifted so its spectral abscissa is in [-1.5, -0.5].
inline Matrix random_hurwitz(std::mt19937_64& rng, Eigen::Index n) {
  Matrix A = random_matrix(rng, n, n);
  const double shift = spectral_abscissa(A) + uniform(rng, 0.5, 1.5);
  return A - shift * Matrix::Identity(n, n);
}

inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index n) {
  Matrix G = random_matrix(rng, n, n);
  return G * G.transpose() + 0.5 * Matrix::Identity(n, n);
}

inline std::string source_path(const std::string& rel) { return std::string(GRIDCERT_SOURCE_DIR) + "/" + rel; }

inline GridSpec three_bus() { return load_grid_file(source_path("examples/three_bus.json")); }

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

/// N stable subsystems (order 1..3) with random couplings; the block layout
/// follows ascending agent id.
struct RandomInterconnection {
  std::map<BusId, Matrix> A;
  std::map<BusId, std::map<BusId, Matrix>> couplings;  ///< i -> j -> A_ij

  Matrix assembled() const {
    std::map<BusId, Eigen::Index> off;
    Eigen::Index n = 0;
    for (const auto& [id, Ai] : A) {
      off[id] = n;
      n += Ai.rows();
    }
    Matrix full = Matrix::Zero(n, n);
    for (const auto& [id, Ai] : A) full.block(off.at(id), off.at(id), Ai.rows(), Ai.cols()) = Ai;
    for (const auto& [i, row] : couplings)
      for (const auto& [j, Aij] : row) full.block(off.at(i), off.at(j), Aij.rows(), Aij.cols()) = Aij;
    return full;
  }
};

inline RandomInterconnection random_interconnection(std::mt19937_64& rng) {
  RandomInterconnection sys;
  const int N = 2 + static_cast<int>(rng() % 3);
  for (int i = 1; i <= N; ++i) sys.A[i] = random_hurwitz(rng, 1 + static_cast<Eigen::Index>(rng() % 3));
  const double scale = uniform(rng, 0.02, 0.6);
  for (int i = 1; i <= N; ++i) {
    for (int j = 1; j <= N; ++j) {
      if (i == j || uniform(rng, 0, 1) < 0.3) continue;
      sys.couplings[i][j] = random_matrix(rng, sys.A[i].rows(), sys.A[j].rows(), scale);
    }
  }
  return sys;
}

inline std::map<BusId, OriginalAgentData> original_data(const RandomInterconnection& sys) {
  std::map<BusId, OriginalAgentData> out;
  for (const auto& [id, Ai] : sys.A) {
    OriginalAgentData d{certify_decoupled(Ai), {}};
    if (auto it = sys.couplings.find(id); it != sys.couplings.end()) d.couplings = it->second;
    out.emplace(id, std::move(d));
  }
  return out;
}

inline std::map<BusId, TransformedAgentData> transformed_data(const RandomInterconnection& sys) {
  std::map<BusId, ModalTransform> modal;
  for (const auto& [id, Ai] : sys.A) modal.emplace(id, modal_decompose(Ai));
  std::map<BusId, TransformedAgentData> out;
  for (const auto& [id, Ai] : sys.A) {
    TransformedAgentData d{modal.at(id), {}};
    if (auto it = sys.couplings.find(id); it != sys.couplings.end()) {
      const Eigen::FullPivLU<Matrix> lu(modal.at(id).T);
      for (const auto& [j, Aij] : it->second) d.couplings.emplace(j, lu.solve(Aij * modal.at(j).T));
    }
    out.emplace(id, std::move(d));
  }
  return out;
}

}  // namespace gridcert::testing
