#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace weanwave {

inline constexpr const char* kLibraryVersion = "1.0.0";
// Bumped whenever the model file layout changes.
inline constexpr std::uint32_t kModelFormatVersion = 1;

// ---------------------------------------------------------------------------
// Error hierarchy. Every failure the library raises derives from Error so
// callers can map failures to exit codes in one place.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define WEANWAVE_DEFINE_ERROR(Name)                              \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

WEANWAVE_DEFINE_ERROR(EmptySeries);
WEANWAVE_DEFINE_ERROR(NonMonotonicTime);
WEANWAVE_DEFINE_ERROR(SigmaZero);
WEANWAVE_DEFINE_ERROR(OutOfRange);
WEANWAVE_DEFINE_ERROR(TooFewKnots);
WEANWAVE_DEFINE_ERROR(ShapeMismatch);
WEANWAVE_DEFINE_ERROR(DegenerateConstant);
WEANWAVE_DEFINE_ERROR(InvalidArgument);
WEANWAVE_DEFINE_ERROR(NonFiniteLoss);
WEANWAVE_DEFINE_ERROR(SingleClassOnly);
WEANWAVE_DEFINE_ERROR(AllZeroWeights);
WEANWAVE_DEFINE_ERROR(WindowTooLarge);
WEANWAVE_DEFINE_ERROR(ConfigInvalid);
WEANWAVE_DEFINE_ERROR(MissingUpstreamArtifact);
WEANWAVE_DEFINE_ERROR(IoError);
WEANWAVE_DEFINE_ERROR(VersionMismatch);
WEANWAVE_DEFINE_ERROR(ChecksumMismatch);

#undef WEANWAVE_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 output is pinned by the standard, but the
// std distributions are not, so the transforms live here. Same seed, same
// platform-independent stream.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combines a base seed with stream indices into an independent child seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(base ^ 0x5851f42d4c957f2dULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return splitmix64(s ^ c);
}

class Rng {
 public:
  // mt19937_64's output sequence is pinned by the standard; the value
  // transforms below are hand-rolled because the std distributions are not.
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  void reseed(std::uint64_t seed) { engine_.seed(splitmix64(seed)); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive. Modulo mapping: bias is far below
  // anything observable and the mapping is stable, which is what matters here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Standard normal via Box-Muller; two fresh uniforms per draw, no cached
  // spare, so the consumption pattern is easy to reason about.
  double normal() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Hashing + small numeric helpers shared across modules.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw EmptySeries("mean of empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample (n-1) standard deviation, the convention used throughout.
inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) throw SigmaZero("sample std needs at least 2 values");
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Linear-interpolation quantile (the numpy/R-7 rule). q in [0,1].
inline double quantile_r7(std::vector<double> v, double q) {
  if (v.empty()) throw EmptySeries("quantile of empty vector");
  std::sort(v.begin(), v.end());
  if (q <= 0.0) return v.front();
  if (q >= 1.0) return v.back();
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Number of grid samples t0 + n/fs that fit in [t0, t0+span]. The half-ulp
// scale guard absorbs representation error in span*fs (e.g. a 10 s span at
// 0.3 Hz must yield 4 samples, not 3).
inline std::size_t uniform_sample_count(double span_seconds, double fs_hz) {
  const double steps = span_seconds * fs_hz;
  return static_cast<std::size_t>(
             std::floor(steps * (1.0 + 8.0 * 2.220446049250313e-16))) + 1;
}

// Dense (h, w, c) tensor, channel-minor: index (y, x, ch) -> (y*w + x)*c + ch.
struct Tensor3 {
  std::size_t h = 0, w = 0, c = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(std::size_t h_, std::size_t w_, std::size_t c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), v(h_ * w_ * c_, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t ch) {
    return v[(y * w + x) * c + ch];
  }
  double at(std::size_t y, std::size_t x, std::size_t ch) const {
    return v[(y * w + x) * c + ch];
  }
  std::size_t size() const { return v.size(); }
};

// Dense row-major matrix of doubles; the scalogram/imaging currency.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), v(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

// Shortest-round-trip-ish formatting for CSV cells: 17 significant digits
// always round-trips a double; trailing-zero trimming keeps files readable.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace weanwave
