#include "gridcert/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "gridcert/errors.hpp"

namespace gridcert {

namespace {

struct Eigenpair {
  Complex value;
  Eigen::VectorXcd vector;
  Eigen::Index index;
};

bool is_complex_value(const Complex& z) { return z.imag() != 0.0; }

// Strict weak order implementing the ordering rule documented on Spectrum.
bool spectrum_before(const Complex& a, Eigen::Index ia, const Complex& b, Eigen::Index ib) {
  const bool ca = is_complex_value(a);
  const bool cb = is_complex_value(b);
  if (ca != cb) return ca;
  if (a.real() != b.real()) return a.real() < b.real();
  if (std::abs(a.imag()) != std::abs(b.imag())) return std::abs(a.imag()) < std::abs(b.imag());
  if (ia != ib) return ia < ib;
  return a.imag() > b.imag();
}

// Eigenpairs with exact conjugate symmetry: only the positive-imaginary member
// of each complex pair is kept here; callers expand pairs as needed.
std::vector<Eigenpair> ordered_eigenpairs(const Matrix& A, bool with_vectors) {
  Eigen::EigenSolver<Matrix> es(A, with_vectors);
  if (es.info() != Eigen::Success) throw InvalidInput("eigenvalue iteration did not converge");
  const Eigen::VectorXcd values = es.eigenvalues();
  Eigen::MatrixXcd vectors;
  if (with_vectors) vectors = es.eigenvectors();

  std::vector<Eigenpair> pairs;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    Complex z = values(k);
    if (z.imag() < 0.0) continue;
    Eigenpair p{z, with_vectors ? Eigen::VectorXcd(vectors.col(k)) : Eigen::VectorXcd(), k};
    pairs.push_back(std::move(p));
  }
  std::sort(pairs.begin(), pairs.end(), [](const Eigenpair& a, const Eigenpair& b) {
    return spectrum_before(a.value, a.index, b.value, b.index);
  });
  return pairs;
}

// Column with unit norm and largest-magnitude component positive.
Vector normalized_real_column(const Vector& v) {
  Vector out = v / v.norm();
  Eigen::Index k = 0;
  out.cwiseAbs().maxCoeff(&k);
  if (out(k) < 0.0) out = -out;
  return out;
}

double largest_signed_component(const Vector& v) {
  Eigen::Index k = 0;
  v.cwiseAbs().maxCoeff(&k);
  return v(k);
}

// Real and imaginary columns of equal unit norm spanning the invariant plane
// of an eigenvector a + ib.
std::pair<Vector, Vector> normalized_complex_columns(const Eigen::VectorXcd& v) {
  const Vector a = v.real();
  const Vector b = v.imag();
  const double alpha = a.squaredNorm();
  const double beta = b.squaredNorm();
  const double gamma = a.dot(b);
  const double phi0 = 0.5 * std::atan2(alpha - beta, 2.0 * gamma);

  Vector best_a, best_b;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 4; ++k) {
    const double phi = phi0 + k * (M_PI / 2.0);
    Vector ra = a * std::cos(phi) - b * std::sin(phi);
    Vector rb = a * std::sin(phi) + b * std::cos(phi);
    const double score = largest_signed_component(ra / ra.norm());
    if (score > best_score + 1e-14) {
      best_score = score;
      best_a = std::move(ra);
      best_b = std::move(rb);
    }
  }
  const double scale = best_a.norm();
  return {best_a / scale, best_b / scale};
}

bool cluster_is_defective(const Matrix& A, const std::vector<Complex>& all_values, const Complex& center) {
  const double scale = std::max(1.0, spectral_norm(A));
  const double cluster_tol = 1e-6 * scale;
  int algebraic = 0;
  for (const auto& z : all_values) {
    if (std::abs(z - center) <= cluster_tol) ++algebraic;
  }
  if (algebraic < 2) return false;
  const Eigen::Index n = A.rows();
  Eigen::MatrixXcd shifted = A.cast<Complex>() - center * Eigen::MatrixXcd::Identity(n, n);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(shifted);
  const auto& s = svd.singularValues();
  int geometric = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) <= 1e-7 * scale) ++geometric;
  }
  return geometric < algebraic;
}

}  // namespace

void require_finite(const Matrix& A, const char* what) {
  if (!A.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}

void require_square(const Matrix& A, const char* what) {
  if (A.rows() != A.cols() || A.rows() == 0) {
    throw InvalidInput(std::string(what) + ": expected a non-empty square matrix, got " +
                       std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
  }
}

Spectrum eigenvalues(const Matrix& A) {
  require_square(A, "eigenvalues");
  require_finite(A, "eigenvalues");
  Spectrum out;
  out.reserve(static_cast<std::size_t>(A.rows()));
  for (const auto& p : ordered_eigenpairs(A, false)) {
    out.push_back(p.value);
    if (is_complex_value(p.value)) out.push_back(std::conj(p.value));
  }
  return out;
}

double spectral_norm(const Matrix& A) {
  require_finite(A, "spectral_norm");
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(A);
  return svd.singularValues()(0);
}

double spectral_abscissa(const Matrix& A) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& z : eigenvalues(A)) best = std::max(best, z.real());
  return best;
}

double symmetric_min_eigenvalue(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double symmetric_max_eigenvalue(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

bool is_symmetric_positive_definite(const Matrix& S, double symmetry_tol) {
  if (S.rows() != S.cols() || S.rows() == 0 || !S.allFinite()) return false;
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > symmetry_tol * scale) return false;
  Eigen::LLT<Matrix> llt(0.5 * (S + S.transpose()));
  return llt.info() == Eigen::Success;
}

Matrix solve_lyapunov(const Matrix& A, const Matrix& Q) {
  require_square(A, "solve_lyapunov(A)");
  require_square(Q, "solve_lyapunov(Q)");
  require_finite(A, "solve_lyapunov(A)");
  require_finite(Q, "solve_lyapunov(Q)");
  if (A.rows() != Q.rows()) throw InvalidInput("solve_lyapunov: A and Q differ in order");
  if (!is_symmetric_positive_definite(Q, 1e-10)) {
    throw InvalidInput("solve_lyapunov: Q must be symmetric positive definite");
  }

  const Spectrum spec = eigenvalues(A);
  double largest = 1.0;
  for (const auto& z : spec) largest = std::max(largest, std::abs(z));
  for (const auto& zi : spec) {
    for (const auto& zj : spec) {
      if (std::abs(zi + zj) <= 1e-10 * largest) {
        throw NoUniqueSolution("solve_lyapunov: eigenvalue pair sums to zero");
      }
    }
  }

  const Eigen::Index n = A.rows();
  const Eigen::Index nn = n * n;
  // Column-major vec: vec(A^T P) = (I kron A^T) vec P, vec(P A) = (A^T kron I) vec P.
  Matrix op = Matrix::Zero(nn, nn);
  const Matrix At = A.transpose();
  for (Eigen::Index c = 0; c < n; ++c) {
    op.block(c * n, c * n, n, n) += At;
    for (Eigen::Index r = 0; r < n; ++r) {
      op.block(r * n, c * n, n, n).diagonal().array() += At(r, c);
    }
  }
  const Vector rhs = -Eigen::Map<const Vector>(Q.data(), nn);
  Eigen::FullPivLU<Matrix> lu(op);
  if (!lu.isInvertible()) throw NoUniqueSolution("solve_lyapunov: singular Lyapunov operator");
  Vector x = lu.solve(rhs);
  x += lu.solve(rhs - op * x);

  Matrix P = Eigen::Map<Matrix>(x.data(), n, n);
  P = 0.5 * (P + P.transpose()).eval();

  Eigen::LLT<Matrix> llt(P);
  if (llt.info() != Eigen::Success) {
    const double abscissa = spectral_abscissa(A);
    throw CertificateInvalid(
        "solve_lyapunov: solution is not positive definite; A is not Hurwitz (max Re lambda = " +
            std::to_string(abscissa) + ")",
        abscissa);
  }
  return P;
}

double lyapunov_residual(const Matrix& A, const Matrix& P, const Matrix& Q) {
  return (A.transpose() * P + P * A + Q).norm();
}

ModalTransform modal_decompose(const Matrix& A) {
  require_square(A, "modal_decompose");
  require_finite(A, "modal_decompose");
  const Eigen::Index n = A.rows();
  const auto pairs = ordered_eigenpairs(A, true);
  std::vector<Complex> all_values;
  for (const auto& p : pairs) {
    all_values.push_back(p.value);
    if (is_complex_value(p.value)) all_values.push_back(std::conj(p.value));
  }

  Matrix T = Matrix::Zero(n, n);
  Matrix Lambda = Matrix::Zero(n, n);
  Eigen::Index col = 0;
  bool degenerate_column = false;
  for (const auto& p : pairs) {
    if (is_complex_value(p.value)) {
      if (!(p.vector.real().norm() > 0.0) || !(p.vector.imag().norm() > 0.0) || !p.vector.allFinite()) {
        degenerate_column = true;
      } else {
        auto [re, im] = normalized_complex_columns(p.vector);
        T.col(col) = re;
        T.col(col + 1) = im;
      }
      const double s = p.value.real();
      const double w = p.value.imag();
      Lambda(col, col) = s;
      Lambda(col, col + 1) = w;
      Lambda(col + 1, col) = -w;
      Lambda(col + 1, col + 1) = s;
      col += 2;
    } else {
      const Vector v = p.vector.real();
      if (!(v.norm() > 0.0) || !v.allFinite()) {
        degenerate_column = true;
      } else {
        T.col(col) = normalized_real_column(v);
      }
      Lambda(col, col) = p.value.real();
      col += 1;
    }
  }

  const double cond = degenerate_column ? std::numeric_limits<double>::infinity() : condition_number(T);
  if (!(cond <= 1e12)) {
    for (const auto& z : all_values) {
      if (cluster_is_defective(A, all_values, z)) {
        throw NotSemiSimple("modal_decompose: matrix is defective (geometric multiplicity deficit)");
      }
    }
    throw IllConditionedTransform("modal_decompose: transform is singular to working precision (cond = " +
                                  std::to_string(cond) + ")");
  }

  const Matrix check = T.fullPivLu().solve(A * T);
  const double scale = std::max(A.norm(), std::numeric_limits<double>::min());
  if ((check - Lambda).norm() > 1e-8 * scale) {
    throw IllConditionedTransform("modal_decompose: similarity residual exceeds tolerance");
  }

  double abscissa = -std::numeric_limits<double>::infinity();
  for (const auto& z : all_values) abscissa = std::max(abscissa, z.real());
  return ModalTransform{std::move(T), std::move(Lambda), -abscissa};
}

MMatrixTest is_dd_m_matrix(const Matrix& S) {
  require_square(S, "is_dd_m_matrix");
  require_finite(S, "is_dd_m_matrix");
  MMatrixTest out;
  out.is_m_matrix = true;
  out.margins.resize(static_cast<std::size_t>(S.rows()));
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      if (j == i) continue;
      if (S(i, j) > 0.0) out.is_m_matrix = false;
      off += std::abs(S(i, j));
    }
    const double margin = std::abs(S(i, i)) - off;
    out.margins[static_cast<std::size_t>(i)] = margin;
    if (!(S(i, i) > 0.0) || !(margin > 0.0)) out.is_m_matrix = false;
  }
  return out;
}

bool is_hurwitz(const Matrix& A, double margin) { return spectral_abscissa(A) < -margin; }

double condition_number(const Matrix& A) {
  Eigen::JacobiSVD<Matrix> svd(A);
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  if (smallest == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smallest;
}

}  // namespace gridcert
