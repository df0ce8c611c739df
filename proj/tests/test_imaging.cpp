#include <gtest/gtest.h>

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "oracles.hpp"
#include "weanwave/imaging.hpp"

namespace ww = weanwave;

namespace {

ww::Matrix random_matrix(std::uint64_t seed, std::size_t r, std::size_t c) {
  ww::Rng rng(seed);
  ww::Matrix m(r, c);
  for (auto& v : m.v) v = rng.uniform(-3.0, 9.0);
  return m;
}

oracle::Grid to_grid(const ww::Matrix& m) { return {m.rows, m.cols, m.v}; }

}  // namespace

TEST(Resize, MatchesOracleAndAnchorsCorners) {
  struct Case {
    std::size_t ih, iw, oh, ow;
  };
  for (const auto& [ih, iw, oh, ow] :
       {Case{9, 13, 17, 5}, Case{3, 3, 8, 8}, Case{5, 4, 2, 9},
        Case{2, 2, 31, 7}}) {
    const auto in = random_matrix(ih * 100 + iw, ih, iw);
    const auto got = ww::resize_bilinear(in, oh, ow);
    const auto want = oracle::resize_bilinear(to_grid(in), oh, ow);
    ASSERT_EQ(got.rows, oh);
    ASSERT_EQ(got.cols, ow);
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c)
        EXPECT_NEAR(got.at(r, c), want.at(r, c), 1e-12);
    EXPECT_DOUBLE_EQ(got.at(0, 0), in.at(0, 0));
    EXPECT_DOUBLE_EQ(got.at(0, ow - 1), in.at(0, iw - 1));
    EXPECT_DOUBLE_EQ(got.at(oh - 1, 0), in.at(ih - 1, 0));
    EXPECT_DOUBLE_EQ(got.at(oh - 1, ow - 1), in.at(ih - 1, iw - 1));
  }
}

TEST(Resize, IdentityAndDegenerateInputs) {
  const auto in = random_matrix(5, 6, 7);
  const auto same = ww::resize_bilinear(in, 6, 7);
  for (std::size_t i = 0; i < in.v.size(); ++i)
    EXPECT_DOUBLE_EQ(same.v[i], in.v[i]);

  // A single input pixel spreads to a constant image.
  ww::Matrix one(1, 1);
  one.at(0, 0) = 4.2;
  const auto spread = ww::resize_bilinear(one, 3, 5);
  for (double v : spread.v) EXPECT_DOUBLE_EQ(v, 4.2);

  EXPECT_THROW(ww::resize_bilinear(ww::Matrix(), 2, 2), ww::EmptySeries);
  EXPECT_THROW(ww::resize_bilinear(in, 0, 2), ww::InvalidArgument);
}

TEST(RenderPlane, LogCompressionAndMinMaxByHand) {
  ww::Matrix p(2, 2);
  p.at(0, 0) = 0.0;
  p.at(0, 1) = std::exp(1.0) - 1.0;
  p.at(1, 0) = std::exp(2.0) - 1.0;
  p.at(1, 1) = std::exp(3.0) - 1.0;
  const auto img = ww::render_plane(p, {2, 2, true});
  EXPECT_NEAR(img.at(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(img.at(0, 1), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(img.at(1, 0), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(img.at(1, 1), 1.0, 1e-15);

  ww::Matrix q(2, 2);
  q.v = {1.0, 2.0, 3.0, 4.0};
  const auto raw = ww::render_plane(q, {2, 2, false});
  EXPECT_DOUBLE_EQ(raw.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(raw.at(0, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(raw.at(1, 0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(raw.at(1, 1), 1.0);
}

TEST(RenderPlane, RangeOrientationAndConstantMap) {
  auto p = random_matrix(77, 12, 30);
  for (auto& v : p.v) v = std::abs(v);
  const auto img = ww::render_plane(p, {24, 60, true});
  for (double v : img.v) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }

  // Top-heavy power stays top-heavy: row order is preserved by rendering.
  ww::Matrix tb(2, 2);
  tb.v = {10.0, 10.0, 0.0, 0.0};
  const auto o = ww::render_plane(tb, {4, 4, false});
  EXPECT_DOUBLE_EQ(o.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(o.at(3, 3), 0.0);
  EXPECT_GT(o.at(1, 0), o.at(2, 0));

  ww::Matrix flat(3, 4, 7.5);
  const auto z = ww::render_plane(flat, {5, 5, true});
  for (double v : z.v) EXPECT_DOUBLE_EQ(v, 0.0);

  EXPECT_THROW(ww::render_plane(ww::Matrix()), ww::EmptySeries);
}

TEST(StackChannels, LayoutAndGuards) {
  std::vector<ww::Matrix> planes = {random_matrix(1, 2, 3),
                                    random_matrix(2, 2, 3),
                                    random_matrix(3, 2, 3)};
  const auto t = ww::stack_channels(planes);
  EXPECT_EQ(t.h, 2u);
  EXPECT_EQ(t.w, 3u);
  EXPECT_EQ(t.c, 3u);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 3; ++x)
        EXPECT_DOUBLE_EQ(t.at(y, x, ch), planes[ch].at(y, x));

  planes.push_back(random_matrix(4, 3, 2));
  EXPECT_THROW(ww::stack_channels(planes), ww::ShapeMismatch);
  EXPECT_THROW(ww::stack_channels({}), ww::EmptySeries);
}

TEST(Quantize, RoundsHalfUpAndClamps) {
  EXPECT_EQ(ww::quantize_byte(0.0), 0);
  EXPECT_EQ(ww::quantize_byte(1.0), 255);
  EXPECT_EQ(ww::quantize_byte(0.5), 128);  // 127.5 rounds up
  EXPECT_EQ(ww::quantize_byte(127.0 / 255.0), 127);
  EXPECT_EQ(ww::quantize_byte(0.4999 / 255.0), 0);
  EXPECT_EQ(ww::quantize_byte(0.5 / 255.0), 1);
  EXPECT_EQ(ww::quantize_byte(-0.2), 0);
  EXPECT_EQ(ww::quantize_byte(1.7), 255);
}

TEST(Pgm, RoundTripsAndParsesComments) {
  oracle::TempDir dir("pgm");
  ww::GrayImage g;
  g.h = 5;
  g.w = 7;
  g.pix.resize(35);
  for (std::size_t i = 0; i < 35; ++i) g.pix[i] = static_cast<std::uint8_t>(i * 7);
  const auto path = dir.path() / "img.pgm";
  ww::write_pgm(g, path);
  const auto r = ww::read_pgm(path);
  EXPECT_EQ(r.h, 5u);
  EXPECT_EQ(r.w, 7u);
  EXPECT_EQ(r.pix, g.pix);

  // Header comments are legal and skipped.
  const auto commented = dir.path() / "c.pgm";
  {
    std::ofstream f(commented, std::ios::binary);
    f << "P5\n# made by hand\n2 2\n# another\n255\n";
    const char px[4] = {0, 40, 80, 120};
    f.write(px, 4);
  }
  const auto rc = ww::read_pgm(commented);
  EXPECT_EQ(rc.w, 2u);
  EXPECT_EQ(rc.h, 2u);
  EXPECT_EQ(rc.pix[3], 120);

  const auto bad = dir.path() / "bad.pgm";
  { std::ofstream(bad) << "P2\n2 2\n255\n0 0 0 0\n"; }
  EXPECT_THROW(ww::read_pgm(bad), ww::IoError);
  EXPECT_THROW(ww::read_pgm(dir.path() / "none.pgm"), ww::IoError);
}

TEST(Png, RoundTripsExactly) {
  oracle::TempDir dir("png");
  ww::GrayImage g;
  g.h = 23;
  g.w = 31;
  g.pix.resize(g.h * g.w);
  ww::Rng rng(12);
  for (auto& p : g.pix)
    p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  const auto path = dir.path() / "img.png";
  ww::write_png(g, path);
  const auto r = ww::read_png(path);
  EXPECT_EQ(r.h, g.h);
  EXPECT_EQ(r.w, g.w);
  EXPECT_EQ(r.pix, g.pix);

  const auto notpng = dir.path() / "x.png";
  { std::ofstream(notpng) << "hello"; }
  EXPECT_THROW(ww::read_png(notpng), ww::IoError);
}

TEST(Png, DecodesSubAndUpFilters) {
  // Hand-assembled 3x2 grayscale PNG using filter 1 (sub) on row 0, filter 2
  // (up) on row 1, filter 4 (paeth) on row 2, to exercise the decoder paths
  // the writer itself never produces.
  const std::uint8_t want[6] = {10, 25, 200, 210, 50, 52};
  std::vector<std::uint8_t> raw;
  raw.push_back(1);  // sub: first byte literal, second stores delta to left
  raw.push_back(10);
  raw.push_back(15);
  raw.push_back(2);  // up: deltas to the row above
  raw.push_back(static_cast<std::uint8_t>(200 - 10));
  raw.push_back(static_cast<std::uint8_t>(210 - 25));
  raw.push_back(4);  // paeth: left=0/up=200 -> predictor 200; then full paeth
  raw.push_back(static_cast<std::uint8_t>(50 - 200));
  // For x=1: a=50 (left), b=210 (up), c=200 (up-left); p=60 -> nearest is a.
  raw.push_back(static_cast<std::uint8_t>(52 - 50));

  uLongf clen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(clen);
  ASSERT_EQ(compress2(comp.data(), &clen, raw.data(),
                      static_cast<uLong>(raw.size()), 6),
            Z_OK);
  comp.resize(clen);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  auto put_u32 = [&](std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x));
  };
  auto chunk = [&](const char type[4], const std::vector<std::uint8_t>& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    put_u32(out, static_cast<std::uint32_t>(
                     ::crc32(0L, body.data(), static_cast<uInt>(body.size()))));
  };
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, 2);  // width
  put_u32(ihdr, 3);  // height
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});
  chunk("IHDR", ihdr);
  chunk("IDAT", comp);
  chunk("IEND", {});

  oracle::TempDir dir("png-filters");
  const auto path = dir.path() / "f.png";
  {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
  }
  const auto r = ww::read_png(path);
  ASSERT_EQ(r.w, 2u);
  ASSERT_EQ(r.h, 3u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(r.pix[i], want[i]) << i;
}

TEST(ExportImage, FormatsAgreeOnPixels) {
  oracle::TempDir dir("export");
  ww::Matrix plane(4, 6);
  ww::Rng rng(8);
  for (auto& v : plane.v) v = rng.uniform();
  ww::export_image(plane, dir.path() / "p.pgm", ww::ImageFormat::kPgm);
  ww::export_image(plane, dir.path() / "p.png", ww::ImageFormat::kPng);
  const auto a = ww::read_pgm(dir.path() / "p.pgm");
  const auto b = ww::read_png(dir.path() / "p.png");
  EXPECT_EQ(a.pix, b.pix);
  EXPECT_EQ(a.h, 4u);
  EXPECT_EQ(b.w, 6u);
  for (std::size_t i = 0; i < plane.v.size(); ++i)
    EXPECT_EQ(a.pix[i], ww::quantize_byte(plane.v[i]));
}

TEST(TensorArchive, RoundTripsBitExact) {
  oracle::TempDir dir("tensor");
  ww::LabeledImage li;
  li.image = ww::Tensor3(5, 4, 8);
  ww::Rng rng(3);
  for (auto& v : li.image.v) v = rng.normal();
  li.patient_id = "s001";
  li.class_label = 1;
  const auto base = dir.path() / "s001";
  ww::save_tensor(li, base);

  const auto r = ww::load_tensor(base);
  EXPECT_EQ(r.patient_id, "s001");
  EXPECT_EQ(r.class_label, 1);
  EXPECT_EQ(r.image.h, 5u);
  EXPECT_EQ(r.image.w, 4u);
  EXPECT_EQ(r.image.c, 8u);
  EXPECT_EQ(r.image.v, li.image.v);

  // The sidecar documents the channel order for full 8-channel stacks.
  nlohmann::json j;
  std::ifstream(base.string() + ".json") >> j;
  ASSERT_EQ(j.at("channel_order").size(), ww::kChannelOrder.size());
  EXPECT_EQ(j.at("channel_order").at(0).get<std::string>(),
            ww::to_string(ww::kChannelOrder[0]));
}

TEST(TensorArchive, DetectsSizeDrift) {
  oracle::TempDir dir("tensor-drift");
  ww::LabeledImage li;
  li.image = ww::Tensor3(2, 2, 2, 0.5);
  li.patient_id = "x";
  li.class_label = 0;
  const auto base = dir.path() / "x";
  ww::save_tensor(li, base);

  // Truncated blob.
  std::filesystem::resize_file(base.string() + ".f64", 8 * 7);
  EXPECT_THROW(ww::load_tensor(base), ww::IoError);

  // Oversized blob.
  ww::save_tensor(li, base);
  {
    std::ofstream f(base.string() + ".f64",
                    std::ios::binary | std::ios::app);
    const double extra = 1.0;
    f.write(reinterpret_cast<const char*>(&extra), sizeof extra);
  }
  EXPECT_THROW(ww::load_tensor(base), ww::IoError);

  EXPECT_THROW(ww::load_tensor(dir.path() / "missing"), ww::IoError);
  {
    std::ofstream f(dir.path().string() + "/bad.json");
    f << "{ not json";
  }
  std::ofstream(dir.path().string() + "/bad.f64").put(0);
  EXPECT_THROW(ww::load_tensor(dir.path() / "bad"), ww::IoError);
}
