#include "ocscale/linalg.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace ocscale {

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("multiply: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

Vec multiply(const Matrix& a, const Vec& x) {
  if (a.cols() != x.size()) throw std::invalid_argument("multiply: inner dimensions differ");
  Vec y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
  return y;
}

double norm1(const Matrix& a) {
  double best = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += std::fabs(a(i, j));
    best = std::max(best, s);
  }
  return best;
}

namespace {

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EMatrix> view(const Matrix& a) {
  return {a.data().data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols())};
}

Eigen::Map<const Eigen::VectorXd> view(const Vec& v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }

Vec to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::optional<Vec> cholesky_solve(const Matrix& a, const Vec& b) {
  const Eigen::LLT<EMatrix> llt(view(a));
  if (llt.info() != Eigen::Success) return std::nullopt;
  return to_vec(llt.solve(view(b)));
}

struct LuImpl {
  Eigen::PartialPivLU<EMatrix> lu;
};

LuFactors lu_factor(Matrix a) {
  if (a.cols() != a.rows()) throw std::invalid_argument("lu_factor: matrix is not square");
  auto impl = std::make_shared<LuImpl>();
  impl->lu.compute(view(a));
  LuFactors f;
  const EMatrix& m = impl->lu.matrixLU();
  for (Eigen::Index k = 0; k < m.rows(); ++k) f.singular = f.singular || m(k, k) == 0.0;
  f.impl = std::move(impl);
  return f;
}

Vec lu_solve(const LuFactors& f, Vec b) {
  if (static_cast<Eigen::Index>(b.size()) != f.impl->lu.rows()) throw std::invalid_argument("lu_solve: length mismatch");
  return to_vec(f.impl->lu.solve(view(b)));
}

double condition_number_1(const Matrix& a, const LuFactors& f) {
  if (f.singular) return std::numeric_limits<double>::infinity();
  const EMatrix inv = f.impl->lu.inverse();
  const double c = norm1(a) * inv.cwiseAbs().colwise().sum().maxCoeff();
  return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
}

namespace {

// Parlett-Reinsch balancing by powers of two: a diagonal similarity that
// equalizes row and column norms, leaving the spectrum exact.
void balance(Matrix& a) {
  const std::size_t n = a.rows();
  constexpr double radix = 2.0, sqrdx = radix * radix;
  bool done = false;
  while (!done) {
    done = true;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) {
          c += std::fabs(a(j, i));
          r += std::fabs(a(i, j));
        }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix, f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        g = 1.0 / f;
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= g;
        for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
      }
    }
  }
}

// Householder reduction to upper Hessenberg form, in place.
void hessenberg(Matrix& a) {
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) alpha += a(i, k) * a(i, k);
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (a(k + 1, k) > 0) alpha = -alpha;
    Vec v(n, 0.0);
    v[k + 1] = a(k + 1, k) - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = a(i, k);
    double vv = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) vv += v[i] * v[i];
    if (vv == 0.0) continue;
    // A <- (I - 2vv'/v'v) A (I - 2vv'/v'v)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) s += v[i] * a(i, j);
      s = 2.0 * s / vv;
      for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= s * v[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) s += a(i, j) * v[j];
      s = 2.0 * s / vv;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= s * v[j];
    }
    for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
  }
}

double sign_of(double a, double b) { return b >= 0.0 ? std::fabs(a) : -std::fabs(a); }

}  // namespace

std::vector<std::complex<double>> eigenvalues(Matrix a) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != a.rows()) throw std::invalid_argument("eigenvalues: matrix is not square");
  std::vector<std::complex<double>> w(n);
  if (n == 0) return w;
  balance(a);
  hessenberg(a);

  // Francis double-shift QR on the Hessenberg matrix, deflating from the
  // bottom (after the EISPACK hqr routine).
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::fabs(a(i, j));
  const int max_total = 100 * n;
  int total = 0;
  int nn = n - 1;
  double t = 0.0;
  double p = 0, q = 0, r = 0, s, x, y, z, ww;
  while (nn >= 0) {
    int its = 0, l;
    do {
      for (l = nn; l >= 1; --l) {
        s = std::fabs(a(l - 1, l - 1)) + std::fabs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::fabs(a(l, l - 1)) <= std::numeric_limits<double>::epsilon() * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        w[nn--] = {x + t, 0.0};
      } else {
        y = a(nn - 1, nn - 1);
        ww = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + ww;
          z = std::sqrt(std::fabs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            w[nn - 1] = w[nn] = {x + z, 0.0};
            if (z != 0.0) w[nn] = {x - ww / z, 0.0};
          } else {
            w[nn - 1] = {x + p, z};
            w[nn] = {x + p, -z};
          }
          nn -= 2;
        } else {
          if (total >= max_total) throw EigenError("QR iteration did not converge");
          ++total;
          if (its == 10 || its == 20) {
            // Exceptional shift.
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            s = std::fabs(a(nn, nn - 1)) + std::fabs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            ww = -0.4375 * s * s;
          }
          ++its;
          int m;
          for (m = nn - 2; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - ww) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::fabs(p) + std::fabs(q) + std::fabs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::fabs(a(m, m - 1)) * (std::fabs(q) + std::fabs(r));
            const double v = std::fabs(p) * (std::fabs(a(m - 1, m - 1)) + std::fabs(z) + std::fabs(a(m + 1, m + 1)));
            if (u <= std::numeric_limits<double>::epsilon() * v) break;
          }
          for (int i = m; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k < nn; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              if ((x = std::fabs(p) + std::fabs(q) + std::fabs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l < nn - 1);
  }
  return w;
}

double spectral_radius(const Matrix& a) {
  double rho = 0.0;
  for (const auto& lambda : eigenvalues(a)) rho = std::max(rho, std::abs(lambda));
  return rho;
}

}  // namespace ocscale
