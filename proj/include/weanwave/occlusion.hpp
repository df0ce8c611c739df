#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "weanwave/common.hpp"
#include "weanwave/nn.hpp"

namespace weanwave {

// ---------------------------------------------------------------------------
// Occlusion sensitivity: slide a square occluder over every channel
// separately and record how much the target-class score drops.
// ---------------------------------------------------------------------------

struct OcclusionParams {
  std::size_t window = 40;
  std::size_t stride = 20;
  enum class Fill { kChannelMean, kZero } fill = Fill::kChannelMean;
};

struct OcclusionMap {
  std::size_t window = 0, stride = 0;
  int target_class = 0;
  double baseline_score = 0.0;
  std::vector<Matrix> grids;  // one sensitivity grid per channel
  std::size_t n_forward_passes = 0;
};

// scorer(x) returns class probabilities (or scores) for one input.
using Scorer = std::function<std::vector<double>(const Tensor3&)>;

// Sensitivity of cell (gy, gx) in channel ch is baseline minus the score
// with rows [gy*stride, gy*stride+window) x cols [gx*stride, gx*stride+window)
// of that channel replaced by the occluder value (the channel's mean by
// default). Exactly channels * grid_cells + 1 scorer calls are made.
inline OcclusionMap occlusion_map(const Scorer& scorer, const Tensor3& x,
                                  int target_class,
                                  const OcclusionParams& p = {}) {
  if (p.window == 0 || p.stride == 0)
    throw InvalidArgument("window and stride must be positive");
  if (p.window > x.h || p.window > x.w)
    throw WindowTooLarge("occluder " + std::to_string(p.window) +
                         " exceeds image " + std::to_string(x.h) + "x" +
                         std::to_string(x.w));
  OcclusionMap out;
  out.window = p.window;
  out.stride = p.stride;
  out.target_class = target_class;

  const std::vector<double> base = scorer(x);
  ++out.n_forward_passes;
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= base.size())
    throw InvalidArgument("target class out of range");
  out.baseline_score = base[static_cast<std::size_t>(target_class)];

  const std::size_t gh = (x.h - p.window) / p.stride + 1;
  const std::size_t gw = (x.w - p.window) / p.stride + 1;

  std::vector<double> fill_value(x.c, 0.0);
  if (p.fill == OcclusionParams::Fill::kChannelMean) {
    for (std::size_t ch = 0; ch < x.c; ++ch) {
      double acc = 0.0;
      for (std::size_t y = 0; y < x.h; ++y)
        for (std::size_t xx = 0; xx < x.w; ++xx) acc += x.at(y, xx, ch);
      fill_value[ch] = acc / static_cast<double>(x.h * x.w);
    }
  }

  Tensor3 work = x;
  out.grids.assign(x.c, Matrix(gh, gw));
  for (std::size_t ch = 0; ch < x.c; ++ch) {
    for (std::size_t gy = 0; gy < gh; ++gy) {
      for (std::size_t gx = 0; gx < gw; ++gx) {
        const std::size_t y0 = gy * p.stride, x0 = gx * p.stride;
        for (std::size_t y = y0; y < y0 + p.window; ++y)
          for (std::size_t xx = x0; xx < x0 + p.window; ++xx)
            work.at(y, xx, ch) = fill_value[ch];
        const std::vector<double> sc = scorer(work);
        ++out.n_forward_passes;
        out.grids[ch].at(gy, gx) =
            out.baseline_score - sc[static_cast<std::size_t>(target_class)];
        for (std::size_t y = y0; y < y0 + p.window; ++y)
          for (std::size_t xx = x0; xx < x0 + p.window; ++xx)
            work.at(y, xx, ch) = x.at(y, xx, ch);
      }
    }
  }
  return out;
}

inline OcclusionMap occlusion_map(const Model& model, const Tensor3& x,
                                  int target_class,
                                  const OcclusionParams& p = {}) {
  // One shared cache across the hundreds of forwards.
  auto cache = std::make_shared<ForwardCache>();
  Scorer scorer = [&model, cache](const Tensor3& in) {
    return model.forward(in, *cache, false, nullptr);
  };
  return occlusion_map(scorer, x, target_class, p);
}

inline void write_occlusion_csv(const OcclusionMap& m,
                                const std::filesystem::path& path,
                                const std::string& header_comment = "") {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path.string());
  if (!header_comment.empty()) f << "# " << header_comment << '\n';
  f << "channel,grid_row,grid_col,sensitivity\n";
  for (std::size_t ch = 0; ch < m.grids.size(); ++ch)
    for (std::size_t r = 0; r < m.grids[ch].rows; ++r)
      for (std::size_t c = 0; c < m.grids[ch].cols; ++c)
        f << ch << ',' << r << ',' << c << ','
          << format_double(m.grids[ch].at(r, c)) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace weanwave
