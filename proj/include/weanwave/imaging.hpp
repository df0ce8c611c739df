#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weanwave/common.hpp"
#include "weanwave/variables.hpp"

namespace weanwave {

// ---------------------------------------------------------------------------
// Plane rendering: power map -> [0,1] image plane.
// ---------------------------------------------------------------------------

// Corner-anchored bilinear resize: output corners sample input corners
// exactly, interior points interpolate the 2x2 neighborhood.
inline Matrix resize_bilinear(const Matrix& in, std::size_t out_h,
                              std::size_t out_w) {
  if (in.rows == 0 || in.cols == 0) throw EmptySeries("resize of empty matrix");
  if (out_h == 0 || out_w == 0)
    throw InvalidArgument("resize target must be non-empty");
  Matrix out(out_h, out_w);
  const double ry = out_h > 1 ? static_cast<double>(in.rows - 1) /
                                    static_cast<double>(out_h - 1)
                              : 0.0;
  const double rx = out_w > 1 ? static_cast<double>(in.cols - 1) /
                                    static_cast<double>(out_w - 1)
                              : 0.0;
  for (std::size_t r = 0; r < out_h; ++r) {
    const double sy = ry * static_cast<double>(r);
    std::size_t y0 = static_cast<std::size_t>(sy);
    if (y0 + 1 >= in.rows && in.rows >= 2) y0 = in.rows - 2;
    const std::size_t y1 = in.rows >= 2 ? y0 + 1 : y0;
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_w; ++c) {
      const double sx = rx * static_cast<double>(c);
      std::size_t x0 = static_cast<std::size_t>(sx);
      if (x0 + 1 >= in.cols && in.cols >= 2) x0 = in.cols - 2;
      const std::size_t x1 = in.cols >= 2 ? x0 + 1 : x0;
      const double fx = sx - static_cast<double>(x0);
      const double top = in.at(y0, x0) * (1.0 - fx) + in.at(y0, x1) * fx;
      const double bot = in.at(y1, x0) * (1.0 - fx) + in.at(y1, x1) * fx;
      out.at(r, c) = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

struct RenderOptions {
  std::size_t out_h = 224;
  std::size_t out_w = 224;
  bool log_compress = true;
};

// log(1+p) compression, min-max normalization to [0,1] (constant maps become
// all zeros), then bilinear resize. Input rows must already be ordered with
// the highest pseudo-frequency first; rendering preserves that orientation
// (frequency top-to-bottom, time left-to-right).
inline Matrix render_plane(const Matrix& power, const RenderOptions& opt = {}) {
  if (power.rows == 0 || power.cols == 0)
    throw EmptySeries("render of empty map");
  Matrix m = power;
  if (opt.log_compress)
    for (double& x : m.v) x = std::log1p(x);
  double lo = m.v[0], hi = m.v[0];
  for (double x : m.v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi > lo) {
    const double inv = 1.0 / (hi - lo);
    for (double& x : m.v) x = (x - lo) * inv;
  } else {
    std::fill(m.v.begin(), m.v.end(), 0.0);
  }
  return resize_bilinear(m, opt.out_h, opt.out_w);
}

// Stacks equally-shaped planes into one (h, w, c) tensor; callers pass planes
// in canonical channel order.
inline Tensor3 stack_channels(const std::vector<Matrix>& planes) {
  if (planes.empty()) throw EmptySeries("stack of no planes");
  const std::size_t h = planes[0].rows, w = planes[0].cols;
  for (const Matrix& p : planes)
    if (p.rows != h || p.cols != w)
      throw ShapeMismatch("channel planes differ in shape");
  Tensor3 t(h, w, planes.size());
  for (std::size_t ch = 0; ch < planes.size(); ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t.at(y, x, ch) = planes[ch].at(y, x);
  return t;
}

// ---------------------------------------------------------------------------
// 8-bit grayscale export. Quantization rounds half up.
// ---------------------------------------------------------------------------

inline std::uint8_t quantize_byte(double v01) {
  const double q = std::floor(v01 * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

struct GrayImage {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> pix;  // row-major
};

inline GrayImage quantize_plane(const Matrix& m01) {
  GrayImage g;
  g.h = m01.rows;
  g.w = m01.cols;
  g.pix.resize(g.h * g.w);
  for (std::size_t i = 0; i < m01.v.size(); ++i)
    g.pix[i] = quantize_byte(m01.v[i]);
  return g;
}

inline void write_pgm(const GrayImage& g, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f << "P5\n" << g.w << ' ' << g.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(g.pix.data()),
          static_cast<std::streamsize>(g.pix.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P5") throw IoError("not a P5 pgm: " + path.string());
  // Header tokens may be separated by whitespace and '#' comment lines.
  auto next_int = [&]() {
    long v = -1;
    while (f) {
      f >> std::ws;
      if (f.peek() == '#') {
        std::string skip;
        std::getline(f, skip);
        continue;
      }
      f >> v;
      break;
    }
    if (!f || v < 0) throw IoError("bad pgm header: " + path.string());
    return static_cast<std::size_t>(v);
  };
  GrayImage g;
  g.w = next_int();
  g.h = next_int();
  const std::size_t maxval = next_int();
  if (maxval != 255) throw IoError("unsupported pgm maxval");
  f.get();  // single whitespace after maxval
  g.pix.resize(g.h * g.w);
  f.read(reinterpret_cast<char*>(g.pix.data()),
         static_cast<std::streamsize>(g.pix.size()));
  if (f.gcount() != static_cast<std::streamsize>(g.pix.size()))
    throw IoError("truncated pgm: " + path.string());
  return g;
}

// ---------------------------------------------------------------------------
// Minimal PNG (8-bit grayscale) backed by zlib for IDAT and CRC. Writing
// always uses filter 0; reading understands all five standard filters so any
// conforming grayscale-8 PNG round-trips.
// ---------------------------------------------------------------------------

namespace detail {

inline void png_put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void png_chunk(std::vector<std::uint8_t>& out, const char type[4],
                      const std::vector<std::uint8_t>& data) {
  png_put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  const auto crc =
      ::crc32(0L, body.data(), static_cast<uInt>(body.size()));
  png_put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

inline void write_png(const GrayImage& g, const std::filesystem::path& path) {
  std::vector<std::uint8_t> raw;
  raw.reserve(g.h * (g.w + 1));
  for (std::size_t r = 0; r < g.h; ++r) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), g.pix.begin() + static_cast<std::ptrdiff_t>(r * g.w),
               g.pix.begin() + static_cast<std::ptrdiff_t>((r + 1) * g.w));
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("png deflate failed");
  comp.resize(comp_len);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  detail::png_put_u32(ihdr, static_cast<std::uint32_t>(g.w));
  detail::png_put_u32(ihdr, static_cast<std::uint32_t>(g.h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // color type: grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", comp);
  detail::png_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline GrayImage read_png(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
    throw IoError("not a png: " + path.string());
  auto rd_u32 = [&](std::size_t pos) {
    return (static_cast<std::uint32_t>(buf[pos]) << 24) |
           (static_cast<std::uint32_t>(buf[pos + 1]) << 16) |
           (static_cast<std::uint32_t>(buf[pos + 2]) << 8) |
           static_cast<std::uint32_t>(buf[pos + 3]);
  };
  GrayImage g;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  bool saw_ihdr = false;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t len = rd_u32(pos);
    if (pos + 12 + len > buf.size())
      throw IoError("truncated png: " + path.string());
    const std::string type(buf.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                           buf.begin() + static_cast<std::ptrdiff_t>(pos + 8));
    const std::size_t data = pos + 8;
    if (type == "IHDR") {
      g.w = rd_u32(data);
      g.h = rd_u32(data + 4);
      if (buf[data + 8] != 8 || buf[data + 9] != 0)
        throw IoError("png is not 8-bit grayscale: " + path.string());
      saw_ihdr = true;
    } else if (type == "IDAT") {
      idat.insert(idat.end(), buf.begin() + static_cast<std::ptrdiff_t>(data),
                  buf.begin() + static_cast<std::ptrdiff_t>(data + len));
    } else if (type == "IEND") {
      break;
    }
    pos = data + len + 4;
  }
  if (!saw_ihdr || idat.empty()) throw IoError("png missing chunks");

  std::vector<std::uint8_t> raw(g.h * (g.w + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw IoError("png inflate failed: " + path.string());

  g.pix.assign(g.h * g.w, 0);
  auto paeth = [](int a, int b, int c) {
    const int p = a + b - c, pa = std::abs(p - a), pb = std::abs(p - b),
              pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    return pb <= pc ? b : c;
  };
  for (std::size_t r = 0; r < g.h; ++r) {
    const std::uint8_t filter = raw[r * (g.w + 1)];
    const std::uint8_t* src = &raw[r * (g.w + 1) + 1];
    std::uint8_t* dst = &g.pix[r * g.w];
    const std::uint8_t* up = r > 0 ? &g.pix[(r - 1) * g.w] : nullptr;
    for (std::size_t x = 0; x < g.w; ++x) {
      const int a = x > 0 ? dst[x - 1] : 0;
      const int b = up ? up[x] : 0;
      const int c = (x > 0 && up) ? up[x - 1] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw IoError("png filter type unsupported");
      }
      dst[x] = static_cast<std::uint8_t>(v & 0xff);
    }
  }
  return g;
}

enum class ImageFormat { kPgm, kPng };

inline void export_image(const Matrix& plane01, const std::filesystem::path& path,
                         ImageFormat fmt) {
  const GrayImage g = quantize_plane(plane01);
  if (fmt == ImageFormat::kPgm)
    write_pgm(g, path);
  else
    write_png(g, path);
}

// ---------------------------------------------------------------------------
// Tensor archive: raw float64 blob + JSON sidecar describing it. Values are
// written in (y, x, channel) order, native little-endian.
// ---------------------------------------------------------------------------

struct LabeledImage {
  Tensor3 image;
  std::string patient_id;
  int class_label = -1;
};

inline void save_tensor(const LabeledImage& li,
                        const std::filesystem::path& base_path) {
  const std::filesystem::path blob = base_path.string() + ".f64";
  const std::filesystem::path side = base_path.string() + ".json";
  {
    std::ofstream f(blob, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + blob.string());
    f.write(reinterpret_cast<const char*>(li.image.v.data()),
            static_cast<std::streamsize>(li.image.v.size() * sizeof(double)));
    if (!f) throw IoError("write failed: " + blob.string());
  }
  nlohmann::json j{{"h", li.image.h},
                   {"w", li.image.w},
                   {"c", li.image.c},
                   {"channel_order", nlohmann::json::array()},
                   {"patient_id", li.patient_id},
                   {"class_label", li.class_label}};
  if (li.image.c == kChannelOrder.size())
    for (VariableId v : kChannelOrder) j["channel_order"].push_back(to_string(v));
  std::ofstream f(side);
  if (!f) throw IoError("cannot open for write: " + side.string());
  f << j.dump(2) << '\n';
}

inline LabeledImage load_tensor(const std::filesystem::path& base_path) {
  const std::filesystem::path blob = base_path.string() + ".f64";
  const std::filesystem::path side = base_path.string() + ".json";
  std::ifstream js(side);
  if (!js) throw IoError("cannot open for read: " + side.string());
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad sidecar " + side.string() + ": " + e.what());
  }
  LabeledImage li;
  li.image =
      Tensor3(j.at("h").get<std::size_t>(), j.at("w").get<std::size_t>(),
              j.at("c").get<std::size_t>());
  li.patient_id = j.at("patient_id").get<std::string>();
  li.class_label = j.at("class_label").get<int>();

  std::ifstream f(blob, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + blob.string());
  f.read(reinterpret_cast<char*>(li.image.v.data()),
         static_cast<std::streamsize>(li.image.v.size() * sizeof(double)));
  if (f.gcount() !=
      static_cast<std::streamsize>(li.image.v.size() * sizeof(double)))
    throw IoError("tensor blob size mismatch: " + blob.string());
  char extra;
  if (f.read(&extra, 1))
    throw IoError("tensor blob longer than sidecar shape: " + blob.string());
  return li;
}

}  // namespace weanwave
