#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "weanwave/common.hpp"
#include "weanwave/interp.hpp"
#include "weanwave/spectrum.hpp"

namespace weanwave {

// ---------------------------------------------------------------------------
// Mother wavelets, defined in the frequency domain and normalized to a unit
// spectral peak.
// ---------------------------------------------------------------------------

enum class WaveletKind { kMorse, kMorlet };

inline const char* to_string(WaveletKind k) {
  return k == WaveletKind::kMorse ? "morse" : "morlet";
}

inline WaveletKind wavelet_kind_from_string(const std::string& s) {
  if (s == "morse") return WaveletKind::kMorse;
  if (s == "morlet") return WaveletKind::kMorlet;
  throw InvalidArgument("unknown wavelet '" + s + "'");
}

struct MotherWavelet {
  WaveletKind kind = WaveletKind::kMorse;
  double morse_gamma = 3.0;
  double morse_beta = 20.0;
  double morlet_omega0 = 6.0;

  // Angular frequency of the spectral peak (scale 1).
  double peak_omega() const {
    if (kind == WaveletKind::kMorse)
      return std::pow(morse_beta / morse_gamma, 1.0 / morse_gamma);
    return morlet_omega0;
  }

  // Peak-normalized spectrum. The Morse branch evaluates in the log domain:
  // omega^beta overflows long before the exponential pulls it back.
  double spectrum(double omega) const {
    if (kind == WaveletKind::kMorse) {
      if (omega <= 0.0) return 0.0;
      const double wp = peak_omega();
      const double ln_val = morse_beta * std::log(omega / wp) +
                            std::pow(wp, morse_gamma) -
                            std::pow(omega, morse_gamma);
      return std::exp(ln_val);
    }
    const double d = omega - morlet_omega0;
    return std::exp(-0.5 * d * d);
  }

  // Pseudo-frequency in Hz represented by a given scale.
  double pseudo_frequency(double scale) const {
    return peak_omega() / (2.0 * kPi * scale);
  }

  double scale_for_frequency(double f_hz) const {
    return peak_omega() / (2.0 * kPi * f_hz);
  }
};

inline MotherWavelet make_wavelet(WaveletKind kind) {
  MotherWavelet w;
  w.kind = kind;
  return w;
}

// ---------------------------------------------------------------------------
// Continuous wavelet transform of a uniform series, computed per scale in the
// frequency domain. The input is zero-padded to a power of two at least twice
// the signal length: power-of-two for the FFT, and at least one signal length
// of guard zeros so circular wrap-around of the largest-scale wavelets stays
// below oracle tolerances.
// ---------------------------------------------------------------------------

struct Scalogram {
  MotherWavelet wavelet;
  double fs_hz = 0.0;
  std::size_t n_times = 0;
  // Descending pseudo-frequency order: row 0 is the highest frequency.
  std::vector<double> scales;
  std::vector<double> pseudo_freqs_hz;
  std::vector<std::complex<double>> coeffs;  // n_scales x n_times, row-major

  std::size_t n_scales() const { return scales.size(); }
  std::complex<double> at(std::size_t scale_idx, std::size_t t_idx) const {
    return coeffs[scale_idx * n_times + t_idx];
  }
};

// Scale grid: voices_per_octave logarithmic steps per octave, from fs/2 down
// to min_cycles/duration (a wavelet needs a few full cycles inside the
// record to be meaningful).
inline std::vector<double> cwt_pseudo_frequencies(double fs_hz,
                                                  double duration_seconds,
                                                  std::size_t voices_per_octave = 12,
                                                  double min_cycles = 4.0) {
  if (!(fs_hz > 0.0) || !(duration_seconds > 0.0))
    throw InvalidArgument("cwt grid needs positive rate and duration");
  const double f_max = fs_hz / 2.0;
  const double f_min = min_cycles / duration_seconds;
  if (f_min > f_max)
    throw InvalidArgument("record too short for any wavelet scale");
  const double octaves = std::log2(f_max / f_min);
  const std::size_t n = static_cast<std::size_t>(std::floor(
      octaves * static_cast<double>(voices_per_octave) + 1e-9)) + 1;
  std::vector<double> f(n);
  for (std::size_t j = 0; j < n; ++j)
    f[j] = f_max * std::pow(2.0, -static_cast<double>(j) /
                                      static_cast<double>(voices_per_octave));
  return f;
}

inline Scalogram cwt(const UniformSeries& u, const MotherWavelet& wavelet,
                     std::size_t voices_per_octave = 12,
                     double min_cycles = 4.0) {
  const std::size_t n = u.size();
  if (n < 2) throw EmptySeries("cwt needs at least 2 samples");

  Scalogram sg;
  sg.wavelet = wavelet;
  sg.fs_hz = u.fs_hz;
  sg.n_times = n;
  sg.pseudo_freqs_hz = cwt_pseudo_frequencies(u.fs_hz, u.duration_seconds(),
                                              voices_per_octave, min_cycles);
  sg.scales.resize(sg.pseudo_freqs_hz.size());
  for (std::size_t j = 0; j < sg.scales.size(); ++j)
    sg.scales[j] = wavelet.scale_for_frequency(sg.pseudo_freqs_hz[j]);

  const std::size_t l = next_pow2(2 * n);
  std::vector<std::complex<double>> spec(l, {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) spec[i] = u.x[i];
  detail::fft_pow2(spec, false);

  sg.coeffs.resize(sg.scales.size() * n);
  std::vector<std::complex<double>> row(l);
  const double dw = 2.0 * kPi * u.fs_hz / static_cast<double>(l);
  for (std::size_t j = 0; j < sg.scales.size(); ++j) {
    const double a = sg.scales[j];
    const double amp = std::sqrt(a);
    // Analytic transform: only non-negative frequency bins contribute.
    for (std::size_t k = 0; k <= l / 2; ++k)
      row[k] = spec[k] * (amp * wavelet.spectrum(a * dw * static_cast<double>(k)));
    std::fill(row.begin() + static_cast<std::ptrdiff_t>(l / 2) + 1, row.end(),
              std::complex<double>{0.0, 0.0});
    detail::fft_pow2(row, true);
    std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(n),
              sg.coeffs.begin() + static_cast<std::ptrdiff_t>(j * n));
  }
  return sg;
}

// ---------------------------------------------------------------------------
// Power map and ridge.
// ---------------------------------------------------------------------------

struct PsdMap {
  double fs_hz = 0.0;
  std::vector<double> pseudo_freqs_hz;  // per row, descending
  Matrix power;                         // |coeff|^2
};

inline PsdMap psd_map(const Scalogram& sg) {
  PsdMap m;
  m.fs_hz = sg.fs_hz;
  m.pseudo_freqs_hz = sg.pseudo_freqs_hz;
  m.power = Matrix(sg.n_scales(), sg.n_times);
  for (std::size_t j = 0; j < sg.n_scales(); ++j)
    for (std::size_t i = 0; i < sg.n_times; ++i)
      m.power.at(j, i) = std::norm(sg.at(j, i));
  return m;
}

// Pseudo-frequency of the row with the highest mean power (earliest row wins
// exact ties, i.e. the higher frequency).
inline double ridge_pseudo_frequency(const PsdMap& m) {
  if (m.power.rows == 0) throw EmptySeries("ridge of empty map");
  std::size_t best = 0;
  double best_mean = -1.0;
  for (std::size_t r = 0; r < m.power.rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.power.cols; ++c) acc += m.power.at(r, c);
    const double rm = acc / static_cast<double>(m.power.cols);
    if (rm > best_mean) {
      best_mean = rm;
      best = r;
    }
  }
  return m.pseudo_freqs_hz[best];
}

// ---------------------------------------------------------------------------
// Normalized 2-D cross-correlation over all shifts. Same-shape inputs; the
// output is (2H-1) x (2W-1) with the zero shift at the center. At shift
// (sr, sc) = (r-H+1, c-W+1) the value correlates A(i, j) against
// B(i-sr, j-sc) over the overlap, with the overlap's own means removed and
// its own norms dividing, so every entry lies in [-1, 1]. Shifts whose
// overlap is constant (or a single cell) yield 0. Fully constant inputs have
// no defined correlation anywhere and are rejected.
// ---------------------------------------------------------------------------

inline Matrix xcorr2_norm(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("xcorr2 inputs must match");
  if (a.rows == 0 || a.cols == 0) throw EmptySeries("xcorr2 of empty matrix");
  auto is_const = [](const Matrix& m) {
    for (double x : m.v)
      if (x != m.v[0]) return false;
    return true;
  };
  if (is_const(a) || is_const(b))
    throw DegenerateConstant("xcorr2 of constant matrix");

  const std::size_t h = a.rows, w = a.cols;
  const std::size_t pr = next_pow2(2 * h - 1), pc = next_pow2(2 * w - 1);

  // Raw cross-correlation sum(A[i,j] * B[i-sr, j-sc]) for all shifts at once:
  // correlation is convolution with an index-reversed partner, so two forward
  // transforms and one inverse cover every shift.
  std::vector<std::complex<double>> fa(pr * pc), fb(pr * pc);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      fa[i * pc + j] = a.at(i, j);
      fb[((pr - i) % pr) * pc + ((pc - j) % pc)] = b.at(i, j);
    }
  auto fft2 = [&](std::vector<std::complex<double>>& m, bool inv) {
    std::vector<std::complex<double>> tmp_row(pc), tmp_col(pr);
    for (std::size_t i = 0; i < pr; ++i) {
      std::copy(m.begin() + static_cast<std::ptrdiff_t>(i * pc),
                m.begin() + static_cast<std::ptrdiff_t>((i + 1) * pc),
                tmp_row.begin());
      detail::fft_pow2(tmp_row, inv);
      std::copy(tmp_row.begin(), tmp_row.end(),
                m.begin() + static_cast<std::ptrdiff_t>(i * pc));
    }
    for (std::size_t j = 0; j < pc; ++j) {
      for (std::size_t i = 0; i < pr; ++i) tmp_col[i] = m[i * pc + j];
      detail::fft_pow2(tmp_col, inv);
      for (std::size_t i = 0; i < pr; ++i) m[i * pc + j] = tmp_col[i];
    }
  };
  fft2(fa, false);
  fft2(fb, false);
  for (std::size_t i = 0; i < pr * pc; ++i) fa[i] *= fb[i];
  fft2(fa, true);

  // Rectangle sums of values and squares via inclusive prefix tables.
  auto prefix = [&](const Matrix& m, bool squared) {
    std::vector<double> p((h + 1) * (w + 1), 0.0);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double x = squared ? m.at(i, j) * m.at(i, j) : m.at(i, j);
        p[(i + 1) * (w + 1) + (j + 1)] = x + p[i * (w + 1) + (j + 1)] +
                                         p[(i + 1) * (w + 1) + j] -
                                         p[i * (w + 1) + j];
      }
    return p;
  };
  const auto sa = prefix(a, false), sa2 = prefix(a, true);
  const auto sb = prefix(b, false), sb2 = prefix(b, true);
  auto rect = [&](const std::vector<double>& p, std::size_t r0, std::size_t c0,
                  std::size_t r1, std::size_t c1) {  // inclusive corners
    return p[(r1 + 1) * (w + 1) + (c1 + 1)] - p[r0 * (w + 1) + (c1 + 1)] -
           p[(r1 + 1) * (w + 1) + c0] + p[r0 * (w + 1) + c0];
  };

  Matrix out(2 * h - 1, 2 * w - 1);
  for (std::size_t r = 0; r < out.rows; ++r) {
    const std::ptrdiff_t sr =
        static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(h) + 1;
    const std::size_t ar0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, sr));
    const std::size_t ar1 = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h) - 1,
                                 static_cast<std::ptrdiff_t>(h) - 1 + sr));
    for (std::size_t c = 0; c < out.cols; ++c) {
      const std::ptrdiff_t sc =
          static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(w) + 1;
      const std::size_t ac0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, sc));
      const std::size_t ac1 = static_cast<std::size_t>(
          std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1,
                                   static_cast<std::ptrdiff_t>(w) - 1 + sc));
      const double n = static_cast<double>((ar1 - ar0 + 1) * (ac1 - ac0 + 1));
      if (n < 2.0) {
        out.at(r, c) = 0.0;
        continue;
      }
      const std::size_t br0 = static_cast<std::size_t>(
          static_cast<std::ptrdiff_t>(ar0) - sr);
      const std::size_t br1 = static_cast<std::size_t>(
          static_cast<std::ptrdiff_t>(ar1) - sr);
      const std::size_t bc0 = static_cast<std::size_t>(
          static_cast<std::ptrdiff_t>(ac0) - sc);
      const std::size_t bc1 = static_cast<std::size_t>(
          static_cast<std::ptrdiff_t>(ac1) - sc);
      const double sum_a = rect(sa, ar0, ac0, ar1, ac1);
      const double sum_b = rect(sb, br0, bc0, br1, bc1);
      const double raw = fa[((r + pr - (h - 1)) % pr) * pc +
                            ((c + pc - (w - 1)) % pc)].real();
      const double num = raw - sum_a * sum_b / n;
      const double var_a = rect(sa2, ar0, ac0, ar1, ac1) - sum_a * sum_a / n;
      const double var_b = rect(sb2, br0, bc0, br1, bc1) - sum_b * sum_b / n;
      if (var_a <= 0.0 || var_b <= 0.0) {
        out.at(r, c) = 0.0;
        continue;
      }
      double val = num / std::sqrt(var_a * var_b);
      out.at(r, c) = std::clamp(val, -1.0, 1.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wavelet selection: the preferred wavelet is the one whose cross-class
// correlation maps pool closest to zero mean (classes look least alike),
// with smaller pooled variance breaking ties.
// ---------------------------------------------------------------------------

struct WaveletScore {
  double pooled_mean = 0.0;
  double pooled_variance = 0.0;
  std::size_t n_values = 0;
  std::size_t n_pairs = 0;
};

// Cross-correlates every (a, b) pair and pools all output entries into one
// mean/variance. Inputs must share one common shape.
inline WaveletScore pooled_xcorr_score(const std::vector<Matrix>& group_a,
                                       const std::vector<Matrix>& group_b) {
  if (group_a.empty() || group_b.empty())
    throw EmptySeries("pooled_xcorr_score needs both groups non-empty");
  WaveletScore sc;
  double sum = 0.0, sumsq = 0.0;
  for (const Matrix& a : group_a)
    for (const Matrix& b : group_b) {
      const Matrix x = xcorr2_norm(a, b);
      for (double v : x.v) {
        sum += v;
        sumsq += v * v;
      }
      sc.n_values += x.v.size();
      ++sc.n_pairs;
    }
  const double n = static_cast<double>(sc.n_values);
  sc.pooled_mean = sum / n;
  // Sample variance; pooled counts are huge so the convention hardly matters,
  // but it stays consistent with the rest of the library.
  sc.pooled_variance =
      sc.n_values > 1 ? (sumsq - sum * sum / n) / (n - 1.0) : 0.0;
  return sc;
}

struct WaveletChoice {
  WaveletKind chosen = WaveletKind::kMorse;
  WaveletScore morse_score;
  WaveletScore morlet_score;
};

inline WaveletChoice select_wavelet(const std::vector<Matrix>& morse_success,
                                    const std::vector<Matrix>& morse_failure,
                                    const std::vector<Matrix>& morlet_success,
                                    const std::vector<Matrix>& morlet_failure) {
  WaveletChoice ch;
  ch.morse_score = pooled_xcorr_score(morse_success, morse_failure);
  ch.morlet_score = pooled_xcorr_score(morlet_success, morlet_failure);
  const double am = std::abs(ch.morse_score.pooled_mean);
  const double al = std::abs(ch.morlet_score.pooled_mean);
  if (al < am)
    ch.chosen = WaveletKind::kMorlet;
  else if (al == am &&
           ch.morlet_score.pooled_variance < ch.morse_score.pooled_variance)
    ch.chosen = WaveletKind::kMorlet;
  else
    ch.chosen = WaveletKind::kMorse;
  return ch;
}

}  // namespace weanwave
