#pragma once

#include <complex>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ocscale/matrix.hpp"

namespace ocscale {

Matrix multiply(const Matrix& a, const Matrix& b);
Vec multiply(const Matrix& a, const Vec& x);
double norm1(const Matrix& a);

/// Solves A x = b for symmetric positive definite A. nullopt when the
/// factorization breaks down (A not positive definite).
std::optional<Vec> cholesky_solve(const Matrix& a, const Vec& b);

struct LuImpl;

/// LU factorization with partial pivoting.
struct LuFactors {
  std::shared_ptr<const LuImpl> impl;
  bool singular = false;
};

LuFactors lu_factor(Matrix a);
Vec lu_solve(const LuFactors& f, Vec b);
/// ||A||_1 ||A^-1||_1 computed from an explicit inverse; small systems only.
/// Infinity for a singular factorization.
double condition_number_1(const Matrix& a, const LuFactors& f);

class EigenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eigenvalues of a real square matrix: balancing, Householder reduction to
/// upper Hessenberg form, then the Francis double-shift QR iteration.
/// Throws EigenError when an eigenvalue fails to converge within
/// 100*n iterations in total.
std::vector<std::complex<double>> eigenvalues(Matrix a);

/// Largest eigenvalue modulus.
double spectral_radius(const Matrix& a);

}  // namespace ocscale
