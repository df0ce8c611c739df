#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "oracles.hpp"
#include "weanwave/cwt.hpp"

namespace ww = weanwave;

namespace {

ww::UniformSeries tone_series(double fs, std::size_t n, double f0,
                              double f1 = 0.0) {
  ww::UniformSeries u;
  u.fs_hz = fs;
  u.x.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    u.x[i] = std::sin(2.0 * ww::kPi * f0 * t);
    if (f1 > 0.0) u.x[i] += 0.4 * std::sin(2.0 * ww::kPi * f1 * t + 0.3);
  }
  return u;
}

ww::Matrix random_matrix(std::uint64_t seed, std::size_t r, std::size_t c) {
  ww::Rng rng(seed);
  ww::Matrix m(r, c);
  for (auto& v : m.v) v = rng.normal();
  return m;
}

oracle::Grid to_grid(const ww::Matrix& m) {
  return {m.rows, m.cols, m.v};
}

}  // namespace

TEST(Wavelet, PeakAndSpectrumProperties) {
  const auto morse = ww::make_wavelet(ww::WaveletKind::kMorse);
  const auto morlet = ww::make_wavelet(ww::WaveletKind::kMorlet);

  EXPECT_DOUBLE_EQ(morse.peak_omega(), std::pow(20.0 / 3.0, 1.0 / 3.0));
  EXPECT_DOUBLE_EQ(morlet.peak_omega(), 6.0);

  // Unit peak, and strictly below it off-peak.
  EXPECT_NEAR(morse.spectrum(morse.peak_omega()), 1.0, 1e-14);
  EXPECT_NEAR(morlet.spectrum(6.0), 1.0, 1e-14);
  EXPECT_LT(morse.spectrum(morse.peak_omega() * 1.3), 1.0);
  EXPECT_LT(morse.spectrum(morse.peak_omega() * 0.7), 1.0);
  EXPECT_DOUBLE_EQ(morlet.spectrum(5.0), std::exp(-0.5));
  EXPECT_DOUBLE_EQ(morlet.spectrum(7.0), std::exp(-0.5));

  // Morse spectrum is one-sided and survives huge arguments (log-domain eval).
  EXPECT_DOUBLE_EQ(morse.spectrum(0.0), 0.0);
  EXPECT_DOUBLE_EQ(morse.spectrum(-3.0), 0.0);
  EXPECT_EQ(morse.spectrum(1e6), 0.0);

  // scale_for_frequency inverts pseudo_frequency.
  for (double f : {0.05, 0.25, 1.0}) {
    EXPECT_NEAR(morse.pseudo_frequency(morse.scale_for_frequency(f)), f, 1e-14);
    EXPECT_NEAR(morlet.pseudo_frequency(morlet.scale_for_frequency(f)), f,
                1e-14);
  }

  EXPECT_EQ(ww::wavelet_kind_from_string("morse"), ww::WaveletKind::kMorse);
  EXPECT_EQ(ww::wavelet_kind_from_string("morlet"), ww::WaveletKind::kMorlet);
  EXPECT_THROW(ww::wavelet_kind_from_string("haar"), ww::InvalidArgument);
}

TEST(CwtGrid, LogSpacedAndBounded) {
  const auto f = ww::cwt_pseudo_frequencies(2.0, 100.0, 12, 4.0);
  // f_max = 1 Hz, f_min = 0.04 Hz: log2(25) octaves at 12 voices -> 56 rows.
  ASSERT_EQ(f.size(), 56u);
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  const double ratio = std::pow(2.0, -1.0 / 12.0);
  for (std::size_t j = 1; j < f.size(); ++j) {
    EXPECT_NEAR(f[j] / f[j - 1], ratio, 1e-12);
    EXPECT_LT(f[j], f[j - 1]);
  }
  EXPECT_GE(f.back(), 0.04 - 1e-12);

  EXPECT_THROW(ww::cwt_pseudo_frequencies(0.0, 100.0), ww::InvalidArgument);
  EXPECT_THROW(ww::cwt_pseudo_frequencies(2.0, 0.0), ww::InvalidArgument);
  // 4 cycles do not fit below Nyquist on a 2 s record at 2 Hz.
  EXPECT_THROW(ww::cwt_pseudo_frequencies(2.0, 2.0), ww::InvalidArgument);
}

TEST(Cwt, MatchesDirectTimeConvolutionMorlet) {
  const auto u = tone_series(2.0, 200, 0.25, 0.5);
  const auto wl = ww::make_wavelet(ww::WaveletKind::kMorlet);
  const auto sg = ww::cwt(u, wl);

  // Row closest to the strong tone.
  std::size_t jr = 0;
  for (std::size_t j = 1; j < sg.n_scales(); ++j)
    if (std::abs(sg.pseudo_freqs_hz[j] - 0.25) <
        std::abs(sg.pseudo_freqs_hz[jr] - 0.25))
      jr = j;

  const auto ref = oracle::cwt_direct(u.x, u.fs_hz, sg.scales[jr], false);
  double max_err = 0.0, max_mag = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    max_err = std::max(max_err, std::abs(sg.at(jr, i) - ref[i]));
    max_mag = std::max(max_mag, std::abs(ref[i]));
  }
  ASSERT_GT(max_mag, 0.0);
  EXPECT_LT(max_err / max_mag, 0.01);
}

TEST(Cwt, MatchesDirectTimeConvolutionMorse) {
  const auto u = tone_series(2.0, 160, 0.25);
  const auto wl = ww::make_wavelet(ww::WaveletKind::kMorse);
  const auto sg = ww::cwt(u, wl);

  std::size_t jr = 0;
  for (std::size_t j = 1; j < sg.n_scales(); ++j)
    if (std::abs(sg.pseudo_freqs_hz[j] - 0.25) <
        std::abs(sg.pseudo_freqs_hz[jr] - 0.25))
      jr = j;

  const auto ref = oracle::cwt_direct(u.x, u.fs_hz, sg.scales[jr], true,
                                      wl.morse_gamma, wl.morse_beta);
  double max_err = 0.0, max_mag = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    max_err = std::max(max_err, std::abs(sg.at(jr, i) - ref[i]));
    max_mag = std::max(max_mag, std::abs(ref[i]));
  }
  ASSERT_GT(max_mag, 0.0);
  EXPECT_LT(max_err / max_mag, 0.01);
}

TEST(Cwt, ScalogramShapeAndGuards) {
  const auto u = tone_series(2.0, 120, 0.2);
  const auto sg = ww::cwt(u, ww::make_wavelet(ww::WaveletKind::kMorse));
  EXPECT_EQ(sg.n_times, 120u);
  EXPECT_EQ(sg.coeffs.size(), sg.n_scales() * sg.n_times);
  EXPECT_EQ(sg.scales.size(), sg.pseudo_freqs_hz.size());
  for (std::size_t j = 0; j < sg.n_scales(); ++j)
    EXPECT_NEAR(sg.wavelet.pseudo_frequency(sg.scales[j]),
                sg.pseudo_freqs_hz[j], 1e-12);

  ww::UniformSeries tiny;
  tiny.fs_hz = 2.0;
  tiny.x = {1.0};
  EXPECT_THROW(ww::cwt(tiny, ww::make_wavelet(ww::WaveletKind::kMorse)),
               ww::EmptySeries);
}

TEST(Cwt, RidgeFindsToneWithinFivePercent) {
  for (ww::WaveletKind kind :
       {ww::WaveletKind::kMorse, ww::WaveletKind::kMorlet}) {
    const auto u = tone_series(2.0, 400, 0.25);
    const auto sg = ww::cwt(u, ww::make_wavelet(kind));
    const auto m = ww::psd_map(sg);
    const double fr = ww::ridge_pseudo_frequency(m);
    EXPECT_NEAR(fr, 0.25, 0.05 * 0.25) << ww::to_string(kind);
  }
}

TEST(PsdMap, IsSquaredMagnitudeOfCoefficients) {
  const auto u = tone_series(2.0, 64, 0.3);
  const auto sg = ww::cwt(u, ww::make_wavelet(ww::WaveletKind::kMorlet));
  const auto m = ww::psd_map(sg);
  EXPECT_EQ(m.power.rows, sg.n_scales());
  EXPECT_EQ(m.power.cols, sg.n_times);
  for (std::size_t j = 0; j < sg.n_scales(); j += 7)
    for (std::size_t i = 0; i < sg.n_times; i += 11)
      EXPECT_DOUBLE_EQ(m.power.at(j, i), std::norm(sg.at(j, i)));
  EXPECT_THROW(ww::ridge_pseudo_frequency(ww::PsdMap{}), ww::EmptySeries);
}

TEST(Xcorr2, MatchesBruteForceOracle) {
  struct Case {
    std::size_t ra, ca;
  };
  for (const auto& [r, c] : {Case{7, 9}, Case{4, 4}, Case{1, 5}, Case{6, 2}}) {
    const auto a = random_matrix(100 + r * 10 + c, r, c);
    const auto b = random_matrix(200 + r * 10 + c, r, c);
    const auto got = ww::xcorr2_norm(a, b);
    const auto want = oracle::xcorr2_norm(to_grid(a), to_grid(b));
    ASSERT_EQ(got.rows, 2 * r - 1);
    ASSERT_EQ(got.cols, 2 * c - 1);
    ASSERT_EQ(want.rows, got.rows);
    ASSERT_EQ(want.cols, got.cols);
    for (std::size_t i = 0; i < got.rows; ++i)
      for (std::size_t j = 0; j < got.cols; ++j)
        EXPECT_LT(std::abs(got.at(i, j) - want.at(i, j)), 1e-9)
            << r << "x" << c << " @ " << i << "," << j;
  }
}

TEST(Xcorr2, CenterOfAutocorrelationIsOne) {
  const auto a = random_matrix(31, 6, 8);
  const auto x = ww::xcorr2_norm(a, a);
  EXPECT_NEAR(x.at(5, 7), 1.0, 1e-12);
  for (double v : x.v) {
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, -1.0);
  }
  // Corner overlaps are single cells: correlation undefined, reported as 0.
  EXPECT_DOUBLE_EQ(x.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(x.at(10, 14), 0.0);
}

TEST(Xcorr2, RejectsDegenerateInput) {
  ww::Matrix c(3, 3, 2.0);
  const auto a = random_matrix(1, 3, 3);
  EXPECT_THROW(ww::xcorr2_norm(a, c), ww::DegenerateConstant);
  EXPECT_THROW(ww::xcorr2_norm(c, a), ww::DegenerateConstant);
  EXPECT_THROW(ww::xcorr2_norm(a, random_matrix(2, 3, 4)), ww::ShapeMismatch);
  EXPECT_THROW(ww::xcorr2_norm(ww::Matrix(), ww::Matrix()), ww::EmptySeries);
}

TEST(WaveletSelection, PooledScoreMatchesManualAccumulation) {
  std::vector<ww::Matrix> ga = {random_matrix(51, 5, 6), random_matrix(52, 5, 6)};
  std::vector<ww::Matrix> gb = {random_matrix(53, 5, 6), random_matrix(54, 5, 6),
                                random_matrix(55, 5, 6)};
  const auto sc = ww::pooled_xcorr_score(ga, gb);
  EXPECT_EQ(sc.n_pairs, 6u);
  EXPECT_EQ(sc.n_values, 6u * 9u * 11u);

  double sum = 0.0, sumsq = 0.0;
  for (const auto& a : ga)
    for (const auto& b : gb) {
      const auto x = ww::xcorr2_norm(a, b);
      for (double v : x.v) {
        sum += v;
        sumsq += v * v;
      }
    }
  const double n = static_cast<double>(sc.n_values);
  EXPECT_NEAR(sc.pooled_mean, sum / n, 1e-12);
  EXPECT_NEAR(sc.pooled_variance, (sumsq - sum * sum / n) / (n - 1.0), 1e-12);

  EXPECT_THROW(ww::pooled_xcorr_score({}, gb), ww::EmptySeries);
  EXPECT_THROW(ww::pooled_xcorr_score(ga, {}), ww::EmptySeries);
}

TEST(WaveletSelection, PrefersWaveletWithCrossClassMeanNearestZero) {
  // Group pairs that look alike produce a pooled mean far from zero; pairs
  // that look unrelated pool near zero. The chooser must pick the latter and
  // report scores that reproduce its own decision rule.
  std::vector<ww::Matrix> alike_a, alike_b, unlike_a, unlike_b;
  const auto base = random_matrix(71, 6, 6);
  for (int k = 0; k < 2; ++k) {
    ww::Matrix a = base, b = base;
    for (auto& v : b.v) v *= 1.5;  // strongly correlated with a
    alike_a.push_back(a);
    alike_b.push_back(b);
    unlike_a.push_back(random_matrix(80 + k, 6, 6));
    unlike_b.push_back(random_matrix(90 + k, 6, 6));
  }

  const auto ch = ww::select_wavelet(alike_a, alike_b, unlike_a, unlike_b);
  EXPECT_EQ(ch.chosen, ww::WaveletKind::kMorlet);
  EXPECT_LT(std::abs(ch.morlet_score.pooled_mean),
            std::abs(ch.morse_score.pooled_mean));

  const auto ch2 = ww::select_wavelet(unlike_a, unlike_b, alike_a, alike_b);
  EXPECT_EQ(ch2.chosen, ww::WaveletKind::kMorse);
}
