#pragma once

// Small dense kernels used throughout the toolkit. Everything here is a pure
// function of its arguments; matrices are Eigen::MatrixXd and sizes are tiny
// (order <= 10 for the Lyapunov solve, 3 per bus in the grid model).

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace gridcert {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;

/// Eigenvalues ordered as: complex values first, then real values; each group by
/// ascending real part, ties by ascending |imag| then by original index. The two
/// members of a conjugate pair are adjacent, positive imaginary part first.
using Spectrum = std::vector<Complex>;

/// Real block-diagonal form Lambda = T^-1 A T.
struct ModalTransform {
  Matrix T;        ///< unit 2-norm columns
  Matrix Lambda;   ///< 2x2 blocks [[s, w], [-w, s]] first, then 1x1 real blocks
  double sigma_M;  ///< -max Re(lambda); positive when A is Hurwitz
};

struct MMatrixTest {
  bool is_m_matrix = false;
  std::vector<double> margins;  ///< |s_ii| - sum_{j != i} |s_ij| per row
};

void require_finite(const Matrix& A, const char* what);
void require_square(const Matrix& A, const char* what);

Spectrum eigenvalues(const Matrix& A);

/// Largest singular value. Rectangular input allowed.
double spectral_norm(const Matrix& A);

/// Largest real part of the spectrum.
double spectral_abscissa(const Matrix& A);

/// Smallest / largest eigenvalue of a symmetric matrix.
double symmetric_min_eigenvalue(const Matrix& S);
double symmetric_max_eigenvalue(const Matrix& S);

bool is_symmetric_positive_definite(const Matrix& S, double symmetry_tol = 1e-12);

/// Solves A^T P + P A = -Q via the n^2 x n^2 stacked system. P is returned exactly
/// symmetric. Throws NoUniqueSolution when some lambda_i + lambda_j = 0, and
/// CertificateInvalid when Q is SPD but the solution is not (A is not Hurwitz).
Matrix solve_lyapunov(const Matrix& A, const Matrix& Q);

/// Residual ||A^T P + P A + Q||_F.
double lyapunov_residual(const Matrix& A, const Matrix& P, const Matrix& Q);

/// Throws NotSemiSimple for defective input and IllConditionedTransform when
/// cond(T) exceeds 1e12.
ModalTransform modal_decompose(const Matrix& A);

MMatrixTest is_dd_m_matrix(const Matrix& S);

/// True iff every eigenvalue has real part < -margin.
bool is_hurwitz(const Matrix& A, double margin = 0.0);

/// 2-norm condition number.
double condition_number(const Matrix& A);

}  // namespace gridcert
