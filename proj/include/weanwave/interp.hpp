#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "weanwave/common.hpp"
#include "weanwave/series.hpp"

namespace weanwave {

enum class InterpMethod {
  kLinear,
  kNearest,
  kNext,
  kPrevious,
  kPchip,
  kSpline,
  kMakima,
};

// Canonical method order; sweep tie-breaking relies on it.
inline constexpr std::array<InterpMethod, 7> kAllInterpMethods = {
    InterpMethod::kLinear, InterpMethod::kNearest,  InterpMethod::kNext,
    InterpMethod::kPrevious, InterpMethod::kPchip,  InterpMethod::kSpline,
    InterpMethod::kMakima};

inline const char* to_string(InterpMethod m) {
  switch (m) {
    case InterpMethod::kLinear: return "linear";
    case InterpMethod::kNearest: return "nearest";
    case InterpMethod::kNext: return "next";
    case InterpMethod::kPrevious: return "previous";
    case InterpMethod::kPchip: return "pchip";
    case InterpMethod::kSpline: return "spline";
    case InterpMethod::kMakima: return "makima";
  }
  return "?";
}

inline InterpMethod interp_method_from_string(const std::string& s) {
  for (InterpMethod m : kAllInterpMethods)
    if (s == to_string(m)) return m;
  throw InvalidArgument("unknown interpolation method '" + s + "'");
}

inline bool is_cubic(InterpMethod m) {
  return m == InterpMethod::kPchip || m == InterpMethod::kSpline ||
         m == InterpMethod::kMakima;
}

namespace detail {

// Solves the natural cubic spline tridiagonal system for second derivatives.
inline std::vector<double> natural_spline_m(const std::vector<double>& t,
                                            const std::vector<double>& x) {
  const std::size_t n = t.size();
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;
  // Thomas algorithm on the n-2 interior unknowns.
  std::vector<double> diag(n - 2), rhs(n - 2), upper(n - 2);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hl = t[i] - t[i - 1];
    const double hr = t[i + 1] - t[i];
    diag[i - 1] = 2.0 * (hl + hr);
    upper[i - 1] = hr;
    rhs[i - 1] =
        6.0 * ((x[i + 1] - x[i]) / hr - (x[i] - x[i - 1]) / hl);
  }
  for (std::size_t i = 1; i < n - 2; ++i) {
    const double lower = t[i + 1] - t[i];  // sub-diagonal = h_i
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  for (std::size_t i = n - 2; i-- > 0;) {
    double v = rhs[i];
    if (i + 1 < n - 2) v -= upper[i] * m[i + 2];
    m[i + 1] = v / diag[i];
  }
  return m;
}

// Shape-preserving slopes (the Fritsch-Carlson construction with the
// standard three-point end conditions).
inline std::vector<double> pchip_slopes(const std::vector<double>& t,
                                        const std::vector<double>& x) {
  const std::size_t n = t.size();
  std::vector<double> h(n - 1), del(n - 1), d(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = t[i + 1] - t[i];
    del[i] = (x[i + 1] - x[i]) / h[i];
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (del[i - 1] * del[i] > 0.0) {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0)
      s = 0.0;
    else if (d0 * d1 < 0.0 && std::abs(s) > 3.0 * std::abs(d0))
      s = 3.0 * d0;
    return s;
  };
  d[0] = end_slope(h[0], h[1], del[0], del[1]);
  d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
  return d;
}

// Modified Akima slopes: weights damp oscillation where consecutive secant
// slopes agree, with two mirrored ghost slopes at each boundary.
inline std::vector<double> makima_slopes(const std::vector<double>& t,
                                         const std::vector<double>& x) {
  const std::size_t n = t.size();
  // del[k] holds the secant slope of interval k-2 in ghost-extended indexing.
  std::vector<double> del(n + 3);
  for (std::size_t i = 0; i + 1 < n; ++i)
    del[i + 2] = (x[i + 1] - x[i]) / (t[i + 1] - t[i]);
  del[1] = 2.0 * del[2] - del[3];
  del[0] = 2.0 * del[1] - del[2];
  del[n + 1] = 2.0 * del[n] - del[n - 1];
  del[n + 2] = 2.0 * del[n + 1] - del[n];

  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double dm2 = del[i], dm1 = del[i + 1], d0 = del[i + 2],
                 dp1 = del[i + 3];
    const double w1 = std::abs(dp1 - d0) + std::abs(dp1 + d0) / 2.0;
    const double w2 = std::abs(dm1 - dm2) + std::abs(dm1 + dm2) / 2.0;
    d[i] = (w1 + w2 > 0.0) ? (w1 * dm1 + w2 * d0) / (w1 + w2) : 0.0;
  }
  return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Interpolant over strictly increasing knots. Queries exactly at a knot
// return the knot value for every method; queries outside the knot span
// throw OutOfRange. Cubic methods (pchip, spline, makima) require at least
// 4 knots; the step/linear methods require at least 2.
// ---------------------------------------------------------------------------

class Interpolant {
 public:
  Interpolant(std::vector<double> t, std::vector<double> x, InterpMethod method)
      : t_(std::move(t)), x_(std::move(x)), method_(method) {
    if (t_.size() != x_.size())
      throw ShapeMismatch("knot time/value length mismatch");
    const std::size_t need = is_cubic(method_) ? 4 : 2;
    if (t_.size() < need)
      throw TooFewKnots(std::string(to_string(method_)) + " needs at least " +
                        std::to_string(need) + " knots, got " +
                        std::to_string(t_.size()));
    for (std::size_t i = 1; i < t_.size(); ++i)
      if (!(t_[i] > t_[i - 1]))
        throw NonMonotonicTime("knots must be strictly increasing");
    if (is_cubic(method_)) build_cubic();
  }

  Interpolant(const IrregularSeries& s, InterpMethod method)
      : Interpolant(s.t, s.x, method) {}

  double t_min() const { return t_.front(); }
  double t_max() const { return t_.back(); }

  double operator()(double tq) const {
    if (tq < t_.front() || tq > t_.back())
      throw OutOfRange("query " + format_double(tq) + " outside [" +
                       format_double(t_.front()) + ", " +
                       format_double(t_.back()) + "]");
    // Interval index i with t_[i] <= tq < t_[i+1] (last interval closed).
    std::size_t i =
        static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), tq) -
                                 t_.begin());
    if (i > 0) --i;
    if (i + 1 >= t_.size()) i = t_.size() - 2;
    if (tq == t_[i]) return x_[i];  // exact knot pass-through
    if (tq == t_[i + 1]) return x_[i + 1];

    switch (method_) {
      case InterpMethod::kLinear: {
        const double w = (tq - t_[i]) / (t_[i + 1] - t_[i]);
        return x_[i] + w * (x_[i + 1] - x_[i]);
      }
      case InterpMethod::kNearest: {
        // Midpoint ties round to the later knot.
        return (tq - t_[i] < t_[i + 1] - tq) ? x_[i] : x_[i + 1];
      }
      case InterpMethod::kNext:
        return x_[i + 1];
      case InterpMethod::kPrevious:
        return x_[i];
      default: {
        const double dx = tq - t_[i];
        const auto& c = coef_[i];
        return c[0] + dx * (c[1] + dx * (c[2] + dx * c[3]));
      }
    }
  }

 private:
  void build_cubic() {
    const std::size_t n = t_.size();
    std::vector<double> d;
    if (method_ == InterpMethod::kPchip)
      d = detail::pchip_slopes(t_, x_);
    else if (method_ == InterpMethod::kMakima)
      d = detail::makima_slopes(t_, x_);
    else {
      const std::vector<double> m = detail::natural_spline_m(t_, x_);
      d.resize(n);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = t_[i + 1] - t_[i];
        d[i] = (x_[i + 1] - x_[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
      }
      const double hl = t_[n - 1] - t_[n - 2];
      d[n - 1] = (x_[n - 1] - x_[n - 2]) / hl +
                 hl * (2.0 * m[n - 1] + m[n - 2]) / 6.0;
    }
    // Hermite form -> per-interval polynomial coefficients.
    coef_.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double h = t_[i + 1] - t_[i];
      const double delta = (x_[i + 1] - x_[i]) / h;
      coef_[i] = {x_[i], d[i], (3.0 * delta - 2.0 * d[i] - d[i + 1]) / h,
                  (d[i] + d[i + 1] - 2.0 * delta) / (h * h)};
    }
  }

  std::vector<double> t_, x_;
  InterpMethod method_;
  std::vector<std::array<double, 4>> coef_;
};

// Convenience wrapper for scattered queries.
inline std::vector<double> interpolate(const IrregularSeries& s,
                                       const std::vector<double>& tq,
                                       InterpMethod method) {
  Interpolant f(s, method);
  std::vector<double> out(tq.size());
  for (std::size_t i = 0; i < tq.size(); ++i) out[i] = f(tq[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Uniform resampling.
// ---------------------------------------------------------------------------

struct UniformSeries {
  std::string patient_id;
  std::string variable_id;
  double t0 = 0.0;
  double fs_hz = 0.0;
  std::vector<double> x;

  std::size_t size() const { return x.size(); }
  double time_at(std::size_t n) const {
    return t0 + static_cast<double>(n) / fs_hz;
  }
  double duration_seconds() const {
    return x.empty() ? 0.0
                     : static_cast<double>(x.size() - 1) / fs_hz;
  }
};

// Samples the interpolant on the grid t0 + n/fs, n = 0..floor(span*fs).
// A half-ulp-scale guard absorbs representation error in span*fs so that
// e.g. a 10 s span at 0.3 Hz yields 4 samples, not 3.
inline UniformSeries resample_uniform(const IrregularSeries& s, double fs_hz,
                                      InterpMethod method) {
  if (!(fs_hz > 0.0)) throw InvalidArgument("sampling rate must be positive");
  Interpolant f(s, method);
  const double span = s.t.back() - s.t.front();
  const std::size_t n_out = uniform_sample_count(span, fs_hz);
  UniformSeries u;
  u.patient_id = s.patient_id;
  u.variable_id = s.variable_id;
  u.t0 = s.t.front();
  u.fs_hz = fs_hz;
  u.x.resize(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    double tq = u.t0 + static_cast<double>(n) / fs_hz;
    if (tq > s.t.back()) tq = s.t.back();  // grid rounding guard
    u.x[n] = f(tq);
  }
  return u;
}

}  // namespace weanwave
