#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "weanwave/common.hpp"
#include "weanwave/interp.hpp"
#include "weanwave/series.hpp"

namespace weanwave {

inline constexpr double kPi = 3.14159265358979323846;

namespace detail {

// Iterative radix-2 FFT, length must be a power of two. Twiddles come from a
// per-call sincos table rather than a rotation recurrence: the table keeps
// per-stage error at O(log n * eps), which downstream 1e-9 comparisons need.
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n < 2) return;
  if ((n & (n - 1)) != 0)
    throw InvalidArgument("fft_pow2 length must be a power of two");

  std::vector<std::complex<double>> tw(n / 2);
  const double sgn = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = sgn * 2.0 * kPi * static_cast<double>(k) /
                       static_cast<double>(n);
    tw[k] = {std::cos(ang), std::sin(ang)};
  }

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = tw[k * stride];
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& z : a) z *= inv;
  }
}

// DFT of arbitrary length via the Bluestein chirp-z transform. Chirp angles
// are reduced with exact integer arithmetic (m^2 mod 2N) before the sincos,
// so long transforms keep full precision.
inline std::vector<std::complex<double>> dft(
    std::vector<std::complex<double>> x, bool inverse = false) {
  const std::size_t n = x.size();
  if (n == 0) return x;
  if ((n & (n - 1)) == 0) {
    fft_pow2(x, inverse);
    return x;
  }
  const double sgn = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> w(n);
  for (std::size_t m = 0; m < n; ++m) {
    const std::uint64_t q = (static_cast<std::uint64_t>(m) * m) %
                            (2 * static_cast<std::uint64_t>(n));
    const double ang = sgn * kPi * static_cast<double>(q) /
                       static_cast<double>(n);
    w[m] = {std::cos(ang), std::sin(ang)};
  }
  const std::size_t m2 = next_pow2(2 * n - 1);
  std::vector<std::complex<double>> a(m2), b(m2);
  for (std::size_t i = 0; i < n; ++i) a[i] = x[i] * w[i];
  b[0] = std::conj(w[0]);
  for (std::size_t i = 1; i < n; ++i) b[i] = b[m2 - i] = std::conj(w[i]);
  fft_pow2(a, false);
  fft_pow2(b, false);
  for (std::size_t i = 0; i < m2; ++i) a[i] *= b[i];
  fft_pow2(a, true);
  std::vector<std::complex<double>> out(n);
  const double scale = inverse ? 1.0 / static_cast<double>(n) : 1.0;
  for (std::size_t k = 0; k < n; ++k) out[k] = w[k] * a[k] * scale;
  return out;
}

inline std::vector<std::complex<double>> dft_real(
    const std::vector<double>& x, bool inverse = false) {
  std::vector<std::complex<double>> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i];
  return dft(std::move(z), inverse);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Non-uniform discrete Fourier transform: X(w_k) = sum_n x[n] exp(-i w_k t_n).
// The direct sum, evaluated exactly as written.
// ---------------------------------------------------------------------------

inline std::vector<std::complex<double>> nudft(
    const std::vector<double>& t, const std::vector<std::complex<double>>& x,
    const std::vector<double>& omega) {
  if (t.size() != x.size()) throw ShapeMismatch("nudft time/value mismatch");
  if (t.empty()) throw EmptySeries("nudft of empty series");
  std::vector<std::complex<double>> out(omega.size());
  for (std::size_t k = 0; k < omega.size(); ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t n = 0; n < t.size(); ++n) {
      const double ang = -omega[k] * t[n];
      acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline std::vector<std::complex<double>> nudft(
    const std::vector<double>& t, const std::vector<double>& x,
    const std::vector<double>& omega) {
  std::vector<std::complex<double>> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i];
  return nudft(t, z, omega);
}

// Same transform restricted to the harmonic grid w_k = k * delta_omega,
// k = 0..n_bins-1. Per sample the bin phasor advances by a constant rotation,
// so one sincos per sample covers every bin. Agrees with nudft() to the
// rotation-recurrence roundoff (~1e-12 relative for thousands of bins).
inline std::vector<std::complex<double>> nudft_harmonic(
    const std::vector<double>& t, const std::vector<double>& x,
    double delta_omega, std::size_t n_bins) {
  if (t.size() != x.size()) throw ShapeMismatch("nudft time/value mismatch");
  if (t.empty()) throw EmptySeries("nudft of empty series");
  std::vector<std::complex<double>> out(n_bins, {0.0, 0.0});
  for (std::size_t n = 0; n < t.size(); ++n) {
    const double ang = -delta_omega * t[n];
    const std::complex<double> rot(std::cos(ang), std::sin(ang));
    std::complex<double> c(x[n], 0.0);
    for (std::size_t k = 0; k < n_bins; ++k) {
      out[k] += c;
      c *= rot;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectrum agreement between a candidate uniform resampling and the source.
// ---------------------------------------------------------------------------

inline double pearson(const std::vector<double>& a,
                      const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeMismatch("pearson length mismatch");
  if (a.size() < 2) throw InvalidArgument("pearson needs at least 2 points");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double denom = std::sqrt(saa) * std::sqrt(sbb);
  if (denom == 0.0) return 0.0;  // constant spectrum: no linear agreement
  return sab / denom;
}

// Pearson correlation between |DFT| of the resampled series and |NUDFT| of
// the source evaluated at the same angular frequencies, bins 0..floor(Nu/2).
// Magnitudes are invariant to the time origin, so source timestamps are used
// as-is.
inline double spectrum_correlation(const IrregularSeries& source,
                                   double fs_hz, InterpMethod method) {
  const UniformSeries u = resample_uniform(source, fs_hz, method);
  const std::size_t nu = u.size();
  if (nu < 4)
    throw InvalidArgument("resampled series too short for a spectrum");
  const std::size_t n_bins = nu / 2 + 1;
  const double delta_omega = 2.0 * kPi * fs_hz / static_cast<double>(nu);

  const auto src_spec = nudft_harmonic(source.t, source.x, delta_omega, n_bins);
  const auto uni_spec = detail::dft_real(u.x);

  std::vector<double> ms(n_bins), mu(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    ms[k] = std::abs(src_spec[k]);
    mu[k] = std::abs(uni_spec[k]);
  }
  return pearson(ms, mu);
}

// ---------------------------------------------------------------------------
// Sweep over interpolation method x sampling rate.
// ---------------------------------------------------------------------------

struct SweepGrid {
  double f_lo_hz = 0.1;
  double f_hi_hz = 3.0;
  double f_step_hz = 0.1;

  std::vector<double> frequencies() const {
    if (!(f_step_hz > 0.0) || !(f_lo_hz > 0.0) || f_hi_hz < f_lo_hz)
      throw InvalidArgument("malformed sweep grid");
    std::vector<double> f;
    const std::size_t n = static_cast<std::size_t>(
        std::floor((f_hi_hz - f_lo_hz) / f_step_hz + 0.5)) + 1;
    for (std::size_t i = 0; i < n; ++i) f.push_back(f_lo_hz + f_step_hz * static_cast<double>(i));
    return f;
  }
};

struct SweepCellStats {
  InterpMethod method = InterpMethod::kLinear;
  double fs_hz = 0.0;
  double mean_correlation = 0.0;
  // Five-number summary of the per-series correlations.
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  std::vector<double> per_series;
};

struct SweepResult {
  std::vector<SweepCellStats> cells;  // rate-major, canonical method order
  InterpMethod best_method = InterpMethod::kLinear;
  double best_fs_hz = 0.0;
  double best_mean_correlation = 0.0;
};

// Evaluates every (method, rate) cell over all series and picks the cell with
// the highest mean correlation. Exact ties resolve to the lower rate first,
// then to the earlier method in canonical order; the scan order below makes
// a strict > comparison implement exactly that.
inline SweepResult sweep_select(const std::vector<IrregularSeries>& series,
                                const SweepGrid& grid = {}) {
  if (series.empty()) throw EmptySeries("sweep over no series");
  const std::vector<double> freqs = grid.frequencies();
  SweepResult res;
  res.cells.reserve(freqs.size() * kAllInterpMethods.size());
  res.best_mean_correlation = -2.0;

  for (double fs : freqs) {
    // |NUDFT| of each source depends on the rate only; hoist it out of the
    // method loop.
    std::vector<std::vector<double>> src_mags(series.size());
    std::vector<std::size_t> n_bins_of(series.size());
    for (std::size_t s = 0; s < series.size(); ++s) {
      const std::size_t nu = uniform_sample_count(series[s].span_seconds(), fs);
      const std::size_t n_bins = nu / 2 + 1;
      n_bins_of[s] = n_bins;
      const double dw = 2.0 * kPi * fs / static_cast<double>(nu);
      const auto spec =
          nudft_harmonic(series[s].t, series[s].x, dw, n_bins);
      src_mags[s].resize(n_bins);
      for (std::size_t k = 0; k < n_bins; ++k)
        src_mags[s][k] = std::abs(spec[k]);
    }

    for (InterpMethod m : kAllInterpMethods) {
      SweepCellStats cell;
      cell.method = m;
      cell.fs_hz = fs;
      for (std::size_t s = 0; s < series.size(); ++s) {
        const UniformSeries u = resample_uniform(series[s], fs, m);
        const auto uni_spec = detail::dft_real(u.x);
        std::vector<double> mu(n_bins_of[s]);
        for (std::size_t k = 0; k < n_bins_of[s]; ++k)
          mu[k] = std::abs(uni_spec[k]);
        cell.per_series.push_back(pearson(src_mags[s], mu));
      }
      cell.mean_correlation = mean_of(cell.per_series);
      cell.min = quantile_r7(cell.per_series, 0.0);
      cell.q1 = quantile_r7(cell.per_series, 0.25);
      cell.median = quantile_r7(cell.per_series, 0.5);
      cell.q3 = quantile_r7(cell.per_series, 0.75);
      cell.max = quantile_r7(cell.per_series, 1.0);
      if (cell.mean_correlation > res.best_mean_correlation) {
        res.best_mean_correlation = cell.mean_correlation;
        res.best_method = m;
        res.best_fs_hz = fs;
      }
      res.cells.push_back(std::move(cell));
    }
  }
  return res;
}

// Writes the sweep table. header_comment, when nonempty, is emitted first as
// a '#' line (used to stamp config hash + seed).
inline void write_sweep_csv(const SweepResult& res,
                            const std::filesystem::path& path,
                            const std::string& header_comment = "") {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path.string());
  if (!header_comment.empty()) f << "# " << header_comment << '\n';
  f << "method,fs_hz,mean_correlation,min,q1,median,q3,max\n";
  for (const auto& c : res.cells) {
    f << to_string(c.method) << ',' << format_double(c.fs_hz) << ','
      << format_double(c.mean_correlation) << ',' << format_double(c.min)
      << ',' << format_double(c.q1) << ',' << format_double(c.median) << ','
      << format_double(c.q3) << ',' << format_double(c.max) << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace weanwave
