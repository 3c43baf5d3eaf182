#include "gridcert/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "gridcert/errors.hpp"

namespace gridcert {

PoleSpec::PoleSpec(std::vector<Complex> poles) : poles_(std::move(poles)) {
  if (poles_.empty()) throw InvalidInput("PoleSpec: empty pole set");
  for (const auto& z : poles_) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw InvalidInput("PoleSpec: non-finite pole");
    if (!(z.real() < 0.0)) throw InvalidInput("PoleSpec: pole with nonnegative real part");
  }
  // Conjugate closure with multiplicity: pair every upper-half pole with a distinct lower one.
  std::vector<bool> used(poles_.size(), false);
  for (std::size_t a = 0; a < poles_.size(); ++a) {
    if (poles_[a].imag() <= 0.0) continue;
    bool matched = false;
    for (std::size_t b = 0; b < poles_.size() && !matched; ++b) {
      if (used[b] || poles_[b].imag() >= 0.0) continue;
      if (std::abs(poles_[b] - std::conj(poles_[a])) <= 1e-12 * std::max(1.0, std::abs(poles_[a]))) {
        used[b] = true;
        matched = true;
      }
    }
    if (!matched) throw InvalidInput("PoleSpec: pole set is not closed under conjugation");
  }
  const auto lower = std::count_if(poles_.begin(), poles_.end(), [](const Complex& z) { return z.imag() < 0.0; });
  if (static_cast<std::size_t>(lower) != static_cast<std::size_t>(std::count(used.begin(), used.end(), true))) {
    throw InvalidInput("PoleSpec: pole set is not closed under conjugation");
  }
}

PoleSpec PoleSpec::scaled(double factor) const {
  std::vector<Complex> out = poles_;
  for (auto& z : out) z *= factor;
  return PoleSpec(std::move(out));
}

std::vector<double> PoleSpec::characteristic_polynomial() const {
  std::vector<Complex> c{Complex(1.0, 0.0)};
  for (const auto& p : poles_) {
    std::vector<Complex> next(c.size() + 1, Complex(0.0, 0.0));
    for (std::size_t k = 0; k < c.size(); ++k) {
      next[k] += c[k];
      next[k + 1] -= p * c[k];
    }
    c = std::move(next);
  }
  std::vector<double> out;
  out.reserve(c.size());
  for (const auto& z : c) out.push_back(z.real());
  return out;
}

Vector gain_to_modal(const Vector& K, const Matrix& T) { return T.transpose() * K; }

Vector gain_from_modal(const Vector& K_modal, const Matrix& T) {
  return T.transpose().fullPivLu().solve(K_modal);
}

double gain_consistency_error(const GainSet& gains, const Matrix& T_self, const std::map<BusId, Matrix>& T_neighbours) {
  double err = 0.0;
  if (gains.local_modal.size() != 0 && gains.local.size() != 0) {
    err = std::max(err, (gain_to_modal(gains.local, T_self) - gains.local_modal).cwiseAbs().maxCoeff());
  }
  for (const auto& [j, Kt] : gains.global_modal) {
    auto K = gains.global.find(j);
    auto T = T_neighbours.find(j);
    if (K == gains.global.end() || T == T_neighbours.end()) continue;
    err = std::max(err, (gain_to_modal(K->second, T->second) - Kt).cwiseAbs().maxCoeff());
  }
  return err;
}

namespace {

Matrix controllability_matrix(const Matrix& A, const Vector& b) {
  const Eigen::Index n = A.rows();
  Matrix C(n, n);
  C.col(0) = b;
  for (Eigen::Index k = 1; k < n; ++k) C.col(k) = A * C.col(k - 1);
  return C;
}

}  // namespace

bool is_controllable(const Matrix& A, const Matrix& B) {
  require_square(A, "is_controllable");
  if (B.rows() != A.rows()) throw InvalidInput("is_controllable: B row count mismatch");
  const Eigen::Index n = A.rows();
  Matrix C(n, n * B.cols());
  C.leftCols(B.cols()) = B;
  for (Eigen::Index k = 1; k < n; ++k) {
    C.middleCols(k * B.cols(), B.cols()) = A * C.middleCols((k - 1) * B.cols(), B.cols());
  }
  for (Eigen::Index k = 0; k < C.cols(); ++k) {
    const double nk = C.col(k).norm();
    if (nk > 0.0) C.col(k) /= nk;
  }
  Eigen::JacobiSVD<Matrix> svd(C);
  const auto& s = svd.singularValues();
  if (s(0) == 0.0) return false;
  return s(n - 1) / s(0) > 1e-10;
}

Vector pole_place(const Matrix& A, const Matrix& B, const PoleSpec& poles) {
  require_square(A, "pole_place(A)");
  require_finite(A, "pole_place(A)");
  require_finite(B, "pole_place(B)");
  if (B.rows() != A.rows()) throw InvalidInput("pole_place: B row count mismatch");
  if (B.cols() != 1) throw Unsupported("pole_place: only single-input placement is supported");
  const Eigen::Index n = A.rows();
  if (static_cast<Eigen::Index>(poles.size()) != n) throw InvalidInput("pole_place: pole count differs from order");
  if (!is_controllable(A, B)) throw Uncontrollable("pole_place: (A, B) is not controllable");

  const Vector b = B.col(0);
  const Matrix C = controllability_matrix(A, b);

  // phi(A) by Horner on the desired characteristic polynomial.
  const auto coeffs = poles.characteristic_polynomial();
  Matrix phi = Matrix::Identity(n, n) * coeffs[0];
  for (std::size_t k = 1; k < coeffs.size(); ++k) {
    phi = (A * phi).eval();
    phi.diagonal().array() += coeffs[k];
  }

  // K^T = e_n^T C^-1 phi(A)
  Vector e = Vector::Zero(n);
  e(n - 1) = 1.0;
  const Matrix Ct = C.transpose();
  Eigen::FullPivLU<Matrix> lu(Ct);
  Vector w = lu.solve(e);
  w += lu.solve(e - Ct * w);
  return phi.transpose() * w;
}

TransformedSubsystem transform_subsystem(const Matrix& A_hat, const Vector& B,
                                         const std::map<BusId, Matrix>& couplings, const Matrix& T_self,
                                         const std::map<BusId, Matrix>& T_neighbours) {
  require_square(A_hat, "transform_subsystem(A_hat)");
  require_square(T_self, "transform_subsystem(T_i)");
  if (T_self.rows() != A_hat.rows() || B.size() != A_hat.rows()) {
    throw InvalidInput("transform_subsystem: dimension mismatch");
  }
  Eigen::FullPivLU<Matrix> lu(T_self);
  if (!lu.isInvertible()) throw IllConditionedTransform("transform_subsystem: T_i is singular");

  TransformedSubsystem out;
  out.A_prime = lu.solve(A_hat * T_self);
  out.B_tilde = lu.solve(B);
  for (const auto& [j, Aij] : couplings) {
    auto Tj = T_neighbours.find(j);
    if (Tj == T_neighbours.end()) {
      throw InvalidInput("transform_subsystem: no transform for neighbour " + std::to_string(j));
    }
    if (Aij.rows() != A_hat.rows() || Aij.cols() != Tj->second.rows() || Tj->second.rows() != Tj->second.cols()) {
      throw InvalidInput("transform_subsystem: coupling dimension mismatch for neighbour " + std::to_string(j));
    }
    if (!Tj->second.fullPivLu().isInvertible()) {
      throw IllConditionedTransform("transform_subsystem: T_" + std::to_string(j) + " is singular");
    }
    out.couplings.emplace(j, lu.solve(Aij * Tj->second));
  }
  return out;
}

Vector optimal_global_gain(const Vector& B_tilde, const Matrix& A_prime_ij) {
  if (B_tilde.size() != A_prime_ij.rows()) throw InvalidInput("optimal_global_gain: dimension mismatch");
  const double bb = B_tilde.squaredNorm();
  if (!(bb > 0.0)) throw Degenerate("optimal_global_gain: B~ is zero");
  return A_prime_ij.transpose() * B_tilde / bb;
}

ClosedLoop close_loop(const Matrix& A_hat, const Vector& B, const Vector& K,
                      const std::map<BusId, Matrix>& couplings, const std::map<BusId, Vector>& K_global) {
  require_square(A_hat, "close_loop(A_hat)");
  const Eigen::Index n = A_hat.rows();
  if (B.size() != n || K.size() != n) throw InvalidInput("close_loop: dimension mismatch");
  ClosedLoop out;
  out.A_local = A_hat - B * K.transpose();
  for (const auto& [j, Aij] : couplings) {
    if (Aij.rows() != n) throw InvalidInput("close_loop: coupling row mismatch");
    Matrix c = Aij;
    if (auto k = K_global.find(j); k != K_global.end()) {
      if (k->second.size() != Aij.cols()) throw InvalidInput("close_loop: global gain length mismatch");
      c -= B * k->second.transpose();
    }
    out.couplings.emplace(j, std::move(c));
  }
  for (const auto& [j, k] : K_global) {
    if (!couplings.count(j)) out.couplings.emplace(j, -B * k.transpose());
  }
  return out;
}

}  // namespace gridcert
