#include "ocscale/audit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "ocscale/linalg.hpp"

namespace ocscale {

void ScaleSequence::check() const {
  const std::size_t n = size();
  if (P.rows() != n) throw std::invalid_argument("ScaleSequence: P has " + std::to_string(P.rows()) + " rows for " + std::to_string(n) + " grid points");
  if (!q.empty() && (q.rows() != n || q.cols() != P.cols()))
    throw std::invalid_argument("ScaleSequence: q shape does not match P");
  for (std::size_t k = 1; k < n; ++k)
    if (!(t[k] > t[k - 1])) throw std::invalid_argument("ScaleSequence: grid is not strictly increasing at " + std::to_string(k));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < P.cols(); ++i)
      if (P(k, i) == 0.0 || !std::isfinite(P(k, i)))
        throw std::invalid_argument("ScaleSequence: P(" + std::to_string(k) + ", " + std::to_string(i) + ") is zero or not finite");
}

ScaleSequence constant_scales(const Vec& t, const Vec& P, const Vec& q) {
  return interpolated_scales(t, P, P, q, q);
}

ScaleSequence interpolated_scales(const Vec& t, const Vec& P0, const Vec& P1, const Vec& q0, const Vec& q1) {
  if (P0.size() != P1.size() || q0.size() != q1.size() || (!q0.empty() && q0.size() != P0.size()))
    throw std::invalid_argument("interpolated_scales: endpoint sizes differ");
  if (t.empty()) throw std::invalid_argument("interpolated_scales: empty grid");
  ScaleSequence s;
  s.t = t;
  s.P = Matrix(t.size(), P0.size());
  if (!q0.empty()) s.q = Matrix(t.size(), q0.size());
  const double span = t.back() - t.front();
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double w = span > 0.0 ? (t[k] - t.front()) / span : 0.0;
    for (std::size_t i = 0; i < P0.size(); ++i) {
      s.P(k, i) = P0[i] + w * (P1[i] - P0[i]);
      if (!q0.empty()) s.q(k, i) = q0[i] + w * (q1[i] - q0[i]);
    }
  }
  return s;
}

namespace {

struct Pair {
  double hi, lo;
};

Pair two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

Pair two_prod(double a, double b) {
  const double p = a * b;
  return {p, std::fma(a, b, -p)};
}

// Correctly rounded sum of exact terms: nonoverlapping partials, then a
// top-down pass with half-way correction.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }
  void add(Pair p) {
    add(p.hi);
    add(p.lo);
  }
  double value() const {
    if (partials_.empty()) return 0.0;
    std::size_t n = partials_.size();
    double hi = partials_[--n], lo = 0.0;
    while (n > 0) {
      const double x = hi, y = partials_[--n];
      hi = x + y;
      lo = y - (hi - x);
      if (lo != 0.0) break;
    }
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
};

double ulps_apart(double a, double b) {
  if (a == b) return 0.0;
  const double m = std::max(std::fabs(a), std::fabs(b));
  const double ulp = std::nextafter(m, std::numeric_limits<double>::infinity()) - m;
  return std::fabs(a - b) / ulp;
}

void check_samples(const ScaleSequence& s, const Matrix& xtilde, const char* who) {
  s.check();
  if (xtilde.rows() != s.size() || xtilde.cols() != s.dim())
    throw std::invalid_argument(std::string(who) + ": samples are " + std::to_string(xtilde.rows()) + "x" +
                                std::to_string(xtilde.cols()) + ", scales are " + std::to_string(s.size()) + "x" +
                                std::to_string(s.dim()));
}

// Second-order derivative weights at grid point k.
std::array<double, 3> fd_weights(const Vec& t, std::size_t k, std::size_t& first) {
  const std::size_t n = t.size();
  if (k == 0) {
    first = 0;
    const double h1 = t[1] - t[0], h2 = t[2] - t[1];
    return {-(2 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))};
  }
  if (k == n - 1) {
    first = n - 3;
    const double h1 = t[n - 2] - t[n - 3], h2 = t[n - 1] - t[n - 2];
    return {h2 / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (2 * h2 + h1) / (h2 * (h1 + h2))};
  }
  first = k - 1;
  const double h1 = t[k] - t[k - 1], h2 = t[k + 1] - t[k];
  return {-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))};
}

double rel_error(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300});
}

}  // namespace

DiscreteErrorReport discrete_scaling_error(const ScaleSequence& s, const Matrix& xtilde) {
  check_samples(s, xtilde, "discrete_scaling_error");
  if (s.size() < 2) throw std::invalid_argument("discrete_scaling_error: need at least two grid points");
  const std::size_t N = s.size() - 1, n = s.dim();
  DiscreteErrorReport rep;
  rep.error = Matrix(N, n);
  rep.direct = Matrix(N, n);
  rep.sup_norm.assign(n, 0.0);
  rep.increment_sup.assign(n, 0.0);
  rep.ratio.assign(n, 0.0);
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      const double P0 = s.P(k, i), P1 = s.P(k + 1, i);
      const double x0 = xtilde(k, i), x1 = xtilde(k + 1, i);

      // (dP)(dx~) with both differences kept exact.
      const Pair dP = two_sum(P1, -P0), dx = two_sum(x1, -x0);
      ExactSum product;
      product.add(two_prod(dP.hi, dx.hi));
      product.add(two_prod(dP.hi, dx.lo));
      product.add(two_prod(dP.lo, dx.hi));
      product.add(two_prod(dP.lo, dx.lo));

      // d(P x~) - P0 (x1 - x0) - (P1 - P0) x0, term by term.
      ExactSum direct, increment;
      for (auto [a, b, sign] : {std::tuple{P1, x1, 1.0}, {P0, x0, -1.0}}) {
        direct.add(two_prod(sign * a, b));
        increment.add(two_prod(sign * a, b));
      }
      direct.add(two_prod(-P0, x1));
      direct.add(two_prod(P0, x0));
      direct.add(two_prod(-P1, x0));
      direct.add(two_prod(P0, x0));

      rep.error(k, i) = product.value();
      rep.direct(k, i) = direct.value();
      rep.max_ulps = std::max(rep.max_ulps, ulps_apart(rep.error(k, i), rep.direct(k, i)));
      rep.sup_norm[i] = std::max(rep.sup_norm[i], std::fabs(rep.error(k, i)));
      rep.increment_sup[i] = std::max(rep.increment_sup[i], std::fabs(increment.value()));
    }
  if (rep.max_ulps > 1.0)
    throw std::logic_error("discrete_scaling_error: the two evaluations differ by " + std::to_string(rep.max_ulps) +
                           " ulps");
  for (std::size_t i = 0; i < n; ++i)
    rep.ratio[i] = rep.increment_sup[i] > 0.0 ? rep.sup_norm[i] / rep.increment_sup[i] : 0.0;
  return rep;
}

AdditionalDynamicsReport additional_dynamics(const ScaleSequence& s, const Matrix& xtilde, double pt) {
  check_samples(s, xtilde, "additional_dynamics");
  if (s.size() < 3) throw std::invalid_argument("additional_dynamics: need at least three grid points");
  if (!(pt > 0.0)) throw std::invalid_argument("additional_dynamics: pt must be positive");
  const std::size_t n = s.dim();
  AdditionalDynamicsReport rep;
  rep.term = Matrix(s.size(), n);
  rep.sup_norm.assign(n, 0.0);
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::size_t first = 0;
    const auto w = fd_weights(s.t, k, first);
    for (std::size_t i = 0; i < n; ++i) {
      const double P = s.P(k, i);
      if (std::fabs(P) < 1e-12)
        throw std::invalid_argument("additional_dynamics: |P| < 1e-12 at grid point " + std::to_string(k) +
                                    ", component " + std::to_string(i));
      double dP = 0.0, dq = 0.0;
      // Differences against the centre value, so constants give exactly 0.
      for (std::size_t j = 0; j < 3; ++j) {
        dP += w[j] * (s.P(first + j, i) - P);
        if (!s.q.empty()) dq += w[j] * (s.q(first + j, i) - s.q(k, i));
      }
      rep.term(k, i) = pt * (dP * xtilde(k, i) + dq) / P;
      rep.sup_norm[i] = std::max(rep.sup_norm[i], std::fabs(rep.term(k, i)));
    }
  }
  return rep;
}

double spectral_radius(const Conditions& c, CSpan x, CSpan u, double t) {
  const std::size_t nx = c.problem().nx();
  if (nx > 16) throw std::invalid_argument("spectral_radius: " + std::to_string(nx) + " states (at most 16)");
  return spectral_radius(c.state_jacobian(x, u, t));
}

double spectral_radius(const OCProblem& p, CSpan x, CSpan u, double t) {
  return spectral_radius(Conditions(p), x, u, t);
}

SensitivityReport sensitivity_invariance(const OCProblem& p, const ScaleSet& s, const Trajectory& tr,
                                         double tolerance) {
  check_scales(p, s);
  check_shapes(p, tr);
  if (tr.label == SolutionLabel::Scaled)
    throw std::invalid_argument("sensitivity_invariance: expects a physical trajectory, got a scaled one");
  if (tr.size() < 2) throw std::invalid_argument("sensitivity_invariance: need at least two grid points");
  const std::size_t nx = p.nx();
  if (nx > 16) throw std::invalid_argument("sensitivity_invariance: " + std::to_string(nx) + " states (at most 16)");

  const Conditions phys(p);
  const Conditions scaled(scale_problem(p, s));
  const Trajectory trs = rescale_primal(tr, s);
  const double span = tr.t.back() - tr.t.front();
  const double span_s = trs.t.back() - trs.t.front();

  SensitivityReport rep;
  rep.tolerance = tolerance;
  const std::size_t N = tr.size();
  rep.unscaled.resize(N);
  rep.scaled.resize(N);
  rep.similarity.resize(N);
  for (std::size_t k = 0; k < N; ++k) {
    const Matrix J = phys.state_jacobian(tr.x.row(k), tr.u.row(k), tr.t[k]);
    Matrix Js(nx, nx);
    for (std::size_t i = 0; i < nx; ++i)
      for (std::size_t j = 0; j < nx; ++j) Js(i, j) = s.pt * J(i, j) * s.Px[j] / s.Px[i];
    rep.unscaled[k] = span * spectral_radius(J);
    rep.scaled[k] = span_s * spectral_radius(scaled.state_jacobian(trs.x.row(k), trs.u.row(k), trs.t[k]));
    rep.similarity[k] = span_s * spectral_radius(Js);
    rep.max_rel_error_scaled = std::max(rep.max_rel_error_scaled, rel_error(rep.scaled[k], rep.unscaled[k]));
    rep.max_rel_error_similarity =
        std::max(rep.max_rel_error_similarity, rel_error(rep.similarity[k], rep.unscaled[k]));
  }
  return rep;
}

}  // namespace ocscale
