#pragma once

// Local gain design by single-input pole placement and global gains that
// minimise the transformed interconnection terms.

#include <map>
#include <optional>
#include <vector>

#include "gridcert/gridmodel.hpp"
#include "gridcert/linalg.hpp"

namespace gridcert {

/// Desired closed-loop eigenvalues: conjugate-closed, all in the open left half plane.
class PoleSpec {
 public:
  PoleSpec() = default;
  explicit PoleSpec(std::vector<Complex> poles);

  const std::vector<Complex>& poles() const { return poles_; }
  std::size_t size() const { return poles_.size(); }
  PoleSpec scaled(double factor) const;
  /// Coefficients of prod (s - p_k), highest power first, leading 1.
  std::vector<double> characteristic_polynomial() const;

 private:
  std::vector<Complex> poles_;
};

/// Local and global gains in both coordinate systems. Gains are designed in
/// modal coordinates; the original-coordinate members are kept in sync through
/// K~_i^T = K_i^T T_i and K~_ij^T = K_ij^T T_j.
struct GainSet {
  Vector local;                          ///< K_i
  std::map<BusId, Vector> global;        ///< K_ij
  Vector local_modal;                    ///< K~_i (empty when T_i unknown)
  std::map<BusId, Vector> global_modal;  ///< K~_ij

  FeedbackGains feedback() const { return FeedbackGains{local, global}; }
};

/// K~ such that K~^T = K^T T.
Vector gain_to_modal(const Vector& K, const Matrix& T);
/// K such that K^T = K~^T T^-1.
Vector gain_from_modal(const Vector& K_modal, const Matrix& T);

/// Max discrepancy of the two representations; 0 when modal members are empty.
double gain_consistency_error(const GainSet& gains, const Matrix& T_self, const std::map<BusId, Matrix>& T_neighbours);

bool is_controllable(const Matrix& A, const Matrix& B);

/// Ackermann placement for single-input (A, B). Returns K with
/// eig(A - B K^T) = poles. Throws Uncontrollable or Unsupported (multi-input).
Vector pole_place(const Matrix& A, const Matrix& B, const PoleSpec& poles);

struct TransformedSubsystem {
  Matrix A_prime;                     ///< T_i^-1 A_hat_i T_i
  Vector B_tilde;                     ///< T_i^-1 B_i
  std::map<BusId, Matrix> couplings;  ///< T_i^-1 A_hat_ij T_j
};

TransformedSubsystem transform_subsystem(const Matrix& A_hat, const Vector& B,
                                         const std::map<BusId, Matrix>& couplings, const Matrix& T_self,
                                         const std::map<BusId, Matrix>& T_neighbours);

/// K~_ij with K~_ij^T = (B~^T B~)^-1 B~^T A'_ij. Throws Degenerate for B~ = 0.
Vector optimal_global_gain(const Vector& B_tilde, const Matrix& A_prime_ij);

struct ClosedLoop {
  Matrix A_local;
  std::map<BusId, Matrix> couplings;
};

/// A_i = A_hat_i - B_i K_i^T, A_ij = A_hat_ij - B_i K_ij^T (missing K_ij = 0).
ClosedLoop close_loop(const Matrix& A_hat, const Vector& B, const Vector& K,
                      const std::map<BusId, Matrix>& couplings, const std::map<BusId, Vector>& K_global = {});

}  // namespace gridcert
