#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "weanwave/common.hpp"

namespace weanwave {

// ---------------------------------------------------------------------------
// Layer and model specifications.
// ---------------------------------------------------------------------------

enum class LayerKind {
  kConv3x3,    // valid padding, stride 1, cross-correlation
  kMaxPool2x2, // stride 2, floor semantics
  kDropout,
  kRelu,
  kFlatten,
  kDense,
  kSoftmax,
};

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConv3x3: return "conv3x3";
    case LayerKind::kMaxPool2x2: return "maxpool2x2";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  for (LayerKind k :
       {LayerKind::kConv3x3, LayerKind::kMaxPool2x2, LayerKind::kDropout,
        LayerKind::kRelu, LayerKind::kFlatten, LayerKind::kDense,
        LayerKind::kSoftmax})
    if (s == to_string(k)) return k;
  throw InvalidArgument("unknown layer kind '" + s + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t units = 0;   // conv: filter count; dense: output units
  double p_drop = 0.5;     // dropout only

  static LayerSpec conv(std::size_t filters) {
    return {LayerKind::kConv3x3, filters, 0.0};
  }
  static LayerSpec maxpool() { return {LayerKind::kMaxPool2x2, 0, 0.0}; }
  static LayerSpec dropout(double p_drop) {
    return {LayerKind::kDropout, 0, p_drop};
  }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0.0}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten, 0, 0.0}; }
  static LayerSpec dense(std::size_t units) {
    return {LayerKind::kDense, units, 0.0};
  }
  static LayerSpec softmax() { return {LayerKind::kSoftmax, 0, 0.0}; }
};

// Activation shape between layers: spatial (h, w, c) or flat n.
struct TensorShape {
  bool flat = false;
  std::size_t h = 0, w = 0, c = 0;
  std::size_t n = 0;

  static TensorShape spatial(std::size_t h, std::size_t w, std::size_t c) {
    TensorShape s;
    s.h = h;
    s.w = w;
    s.c = c;
    return s;
  }
  static TensorShape flat_n(std::size_t n) {
    TensorShape s;
    s.flat = true;
    s.n = n;
    return s;
  }
  std::size_t count() const { return flat ? n : h * w * c; }
  bool operator==(const TensorShape&) const = default;
  std::string str() const {
    if (flat) return "(" + std::to_string(n) + ")";
    return "(" + std::to_string(h) + "," + std::to_string(w) + "," +
           std::to_string(c) + ")";
  }
};

struct ModelSpec {
  TensorShape input;
  std::vector<LayerSpec> layers;
};

// Walks the spec and returns the activation shape after every layer
// (element 0 is the input shape). Throws ShapeMismatch on any layer whose
// input cannot be consumed.
inline std::vector<TensorShape> shape_chain(const ModelSpec& spec) {
  std::vector<TensorShape> chain{spec.input};
  if (spec.input.count() == 0) throw ShapeMismatch("empty input shape");
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const TensorShape in = chain.back();
    TensorShape out;
    switch (l.kind) {
      case LayerKind::kConv3x3:
        if (in.flat || in.h < 3 || in.w < 3)
          throw ShapeMismatch("conv3x3 needs a spatial input of at least 3x3, got " +
                              in.str() + " at layer " + std::to_string(i));
        if (l.units == 0) throw ShapeMismatch("conv3x3 needs filters > 0");
        out = TensorShape::spatial(in.h - 2, in.w - 2, l.units);
        break;
      case LayerKind::kMaxPool2x2:
        if (in.flat || in.h < 2 || in.w < 2)
          throw ShapeMismatch("maxpool2x2 needs a spatial input of at least 2x2, got " +
                              in.str() + " at layer " + std::to_string(i));
        out = TensorShape::spatial(in.h / 2, in.w / 2, in.c);
        break;
      case LayerKind::kDropout:
        if (!(l.p_drop >= 0.0 && l.p_drop < 1.0))
          throw ShapeMismatch("dropout rate must lie in [0,1)");
        out = in;
        break;
      case LayerKind::kRelu:
        out = in;
        break;
      case LayerKind::kFlatten:
        if (in.flat) throw ShapeMismatch("flatten of already-flat input");
        out = TensorShape::flat_n(in.count());
        break;
      case LayerKind::kDense:
        if (!in.flat)
          throw ShapeMismatch("dense needs a flat input, got " + in.str() +
                              " at layer " + std::to_string(i));
        if (l.units == 0) throw ShapeMismatch("dense needs units > 0");
        out = TensorShape::flat_n(l.units);
        break;
      case LayerKind::kSoftmax:
        if (!in.flat || in.n < 2)
          throw ShapeMismatch("softmax needs a flat input of at least 2");
        out = in;
        break;
    }
    chain.push_back(out);
  }
  return chain;
}

inline std::size_t layer_param_count(const LayerSpec& l, const TensorShape& in) {
  switch (l.kind) {
    case LayerKind::kConv3x3: return (9 * in.c + 1) * l.units;
    case LayerKind::kDense: return (in.n + 1) * l.units;
    default: return 0;
  }
}

inline std::size_t param_count(const ModelSpec& spec) {
  const auto chain = shape_chain(spec);
  std::size_t total = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    total += layer_param_count(spec.layers[i], chain[i]);
  return total;
}

// The stacked reference architecture: two conv/pool blocks of 32 filters,
// dropout + relu, then the 1024/512 fully connected pair feeding a 2-way
// softmax.
inline ModelSpec stacked_cnn_spec(std::size_t h = 224, std::size_t w = 224,
                                  std::size_t c = 8) {
  ModelSpec s;
  s.input = TensorShape::spatial(h, w, c);
  s.layers = {LayerSpec::conv(32),     LayerSpec::maxpool(),
              LayerSpec::conv(32),     LayerSpec::maxpool(),
              LayerSpec::dropout(0.5), LayerSpec::relu(),
              LayerSpec::flatten(),    LayerSpec::dense(1024),
              LayerSpec::dense(512),   LayerSpec::dense(2),
              LayerSpec::softmax()};
  return s;
}

inline void to_json(nlohmann::json& j, const TensorShape& s) {
  if (s.flat)
    j = nlohmann::json{{"flat", true}, {"n", s.n}};
  else
    j = nlohmann::json{{"flat", false}, {"h", s.h}, {"w", s.w}, {"c", s.c}};
}

inline void from_json(const nlohmann::json& j, TensorShape& s) {
  s.flat = j.at("flat").get<bool>();
  if (s.flat) {
    s.n = j.at("n").get<std::size_t>();
  } else {
    s.h = j.at("h").get<std::size_t>();
    s.w = j.at("w").get<std::size_t>();
    s.c = j.at("c").get<std::size_t>();
  }
}

inline void to_json(nlohmann::json& j, const LayerSpec& l) {
  j = nlohmann::json{{"kind", to_string(l.kind)}};
  if (l.kind == LayerKind::kConv3x3) j["filters"] = l.units;
  if (l.kind == LayerKind::kDense) j["units"] = l.units;
  if (l.kind == LayerKind::kDropout) j["p_drop"] = l.p_drop;
}

inline void from_json(const nlohmann::json& j, LayerSpec& l) {
  l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  l.units = 0;
  l.p_drop = 0.5;
  if (l.kind == LayerKind::kConv3x3) l.units = j.at("filters").get<std::size_t>();
  if (l.kind == LayerKind::kDense) l.units = j.at("units").get<std::size_t>();
  if (l.kind == LayerKind::kDropout) l.p_drop = j.at("p_drop").get<double>();
}

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = nlohmann::json{{"input", s.input}, {"layers", s.layers}};
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
  j.at("input").get_to(s.input);
  j.at("layers").get_to(s.layers);
}

// ---------------------------------------------------------------------------
// Stable softmax + cross-entropy on logits. Both the probabilities and the
// loss are computed after subtracting the max logit; the loss stays finite
// for any finite logits because it never leaves the log domain.
// ---------------------------------------------------------------------------

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

struct SoftmaxXent {
  double loss = 0.0;
  std::vector<double> dlogits;  // p - onehot(label)
};

inline SoftmaxXent softmax_xent(const std::vector<double>& logits,
                                std::size_t label) {
  if (label >= logits.size()) throw InvalidArgument("label out of range");
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double log_z = std::log(z);
  SoftmaxXent r;
  r.loss = -(logits[label] - m - log_z);
  r.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    r.dlogits[i] = std::exp(logits[i] - m - log_z);
  r.dlogits[label] -= 1.0;
  return r;
}

// ---------------------------------------------------------------------------
// Model: parameters plus allocation-free forward/backward passes.
// ---------------------------------------------------------------------------

struct ForwardCache {
  // act[0] is the input; act[i+1] the output of layer i.
  std::vector<std::vector<double>> act;
  // Per layer: maxpool argmax codes (0..3) or dropout keep flags.
  std::vector<std::vector<std::uint8_t>> mask;
  // Scratch gradients, one per activation, reused across samples.
  std::vector<std::vector<double>> dact;
};

struct GradBuffer {
  std::vector<std::vector<double>> gw, gb;

  void zero() {
    for (auto& v : gw) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : gb) std::fill(v.begin(), v.end(), 0.0);
  }
  void scale(double s) {
    for (auto& v : gw)
      for (double& x : v) x *= s;
    for (auto& v : gb)
      for (double& x : v) x *= s;
  }
};

class Model {
 public:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {
    shapes_ = shape_chain(spec_);
    weights_.resize(spec_.layers.size());
    biases_.resize(spec_.layers.size());
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const LayerSpec& l = spec_.layers[i];
      if (l.kind == LayerKind::kConv3x3) {
        weights_[i].assign(9 * shapes_[i].c * l.units, 0.0);
        biases_[i].assign(l.units, 0.0);
      } else if (l.kind == LayerKind::kDense) {
        weights_[i].assign(shapes_[i].n * l.units, 0.0);
        biases_[i].assign(l.units, 0.0);
      }
    }
  }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<TensorShape>& shapes() const { return shapes_; }
  std::size_t n_layers() const { return spec_.layers.size(); }
  std::size_t n_classes() const { return shapes_.back().count(); }

  std::size_t total_params() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weights_.size(); ++i)
      n += weights_[i].size() + biases_[i].size();
    return n;
  }

  std::vector<double>& layer_weights(std::size_t i) { return weights_[i]; }
  std::vector<double>& layer_biases(std::size_t i) { return biases_[i]; }
  const std::vector<double>& layer_weights(std::size_t i) const {
    return weights_[i];
  }
  const std::vector<double>& layer_biases(std::size_t i) const {
    return biases_[i];
  }

  // He-normal weights (std = sqrt(2 / fan_in)), zero biases, drawn in layer
  // order from the single stream.
  void init_he(Rng& rng) {
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      if (weights_[i].empty()) continue;
      const std::size_t fan_in = spec_.layers[i].kind == LayerKind::kConv3x3
                                     ? 9 * shapes_[i].c
                                     : shapes_[i].n;
      const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (double& w : weights_[i]) w = rng.normal(0.0, sd);
      std::fill(biases_[i].begin(), biases_[i].end(), 0.0);
    }
  }

  GradBuffer make_grad_buffer() const {
    GradBuffer g;
    g.gw.resize(weights_.size());
    g.gb.resize(biases_.size());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      g.gw[i].assign(weights_[i].size(), 0.0);
      g.gb[i].assign(biases_[i].size(), 0.0);
    }
    return g;
  }

  // Forward pass. In training mode (train=true) dropout draws one uniform per
  // element from rng; in eval mode dropout is the identity and rng is never
  // touched. Returns the final activation (post-softmax probabilities when
  // the spec ends in softmax).
  const std::vector<double>& forward(const Tensor3& x, ForwardCache& cache,
                                     bool train = false,
                                     Rng* rng = nullptr) const {
    if (x.h != shapes_[0].h || x.w != shapes_[0].w || x.c != shapes_[0].c)
      throw ShapeMismatch("input is (" + std::to_string(x.h) + "," +
                          std::to_string(x.w) + "," + std::to_string(x.c) +
                          "), model expects " + shapes_[0].str());
    prepare_cache(cache);
    cache.act[0] = x.v;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i)
      forward_layer(i, cache, train, rng);
    return cache.act.back();
  }

  std::vector<double> predict_proba(const Tensor3& x) const {
    ForwardCache cache;
    return forward(x, cache, false, nullptr);
  }

  // Backward pass for a training forward recorded in cache. dlast is the
  // gradient w.r.t. the network's logits (the input of a trailing softmax
  // layer, which softmax_xent already folds in), or w.r.t. the final output
  // when the spec does not end in softmax. Gradients accumulate into grads.
  void backward(ForwardCache& cache, const std::vector<double>& dlast,
                GradBuffer& grads) const {
    std::size_t top = spec_.layers.size();
    if (top > 0 && spec_.layers[top - 1].kind == LayerKind::kSoftmax) --top;
    if (dlast.size() != shapes_[top].count())
      throw ShapeMismatch("loss gradient size mismatch");
    cache.dact[top] = dlast;
    for (std::size_t i = top; i-- > 0;) backward_layer(i, cache, grads);
  }

 private:
  void prepare_cache(ForwardCache& cache) const {
    if (cache.act.size() == shapes_.size()) return;
    cache.act.resize(shapes_.size());
    cache.dact.resize(shapes_.size());
    cache.mask.resize(spec_.layers.size());
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      cache.act[i].resize(shapes_[i].count());
      cache.dact[i].resize(shapes_[i].count());
    }
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const LayerKind k = spec_.layers[i].kind;
      if (k == LayerKind::kMaxPool2x2)
        cache.mask[i].resize(shapes_[i + 1].count());
      else if (k == LayerKind::kDropout)
        cache.mask[i].resize(shapes_[i + 1].count());
    }
  }

  void forward_layer(std::size_t i, ForwardCache& cache, bool train,
                     Rng* rng) const {
    const LayerSpec& l = spec_.layers[i];
    const TensorShape& si = shapes_[i];
    const std::vector<double>& in = cache.act[i];
    std::vector<double>& out = cache.act[i + 1];
    switch (l.kind) {
      case LayerKind::kConv3x3: {
        const std::size_t H = si.h, W = si.w, CI = si.c, CO = l.units;
        const std::size_t OW = W - 2;
        const double* wp = weights_[i].data();
        const double* bp = biases_[i].data();
        for (std::size_t y = 0; y + 2 < H; ++y) {
          for (std::size_t x = 0; x + 2 < W; ++x) {
            double* o = &out[(y * OW + x) * CO];
            std::memcpy(o, bp, CO * sizeof(double));
            for (std::size_t kh = 0; kh < 3; ++kh) {
              const double* xrow = &in[((y + kh) * W + x) * CI];
              const double* wrow = &wp[kh * 3 * CI * CO];
              for (std::size_t kw = 0; kw < 3; ++kw) {
                const double* xp = xrow + kw * CI;
                const double* wr = wrow + kw * CI * CO;
                for (std::size_t ci = 0; ci < CI; ++ci) {
                  const double xv = xp[ci];
                  const double* wc = wr + ci * CO;
                  for (std::size_t co = 0; co < CO; ++co) o[co] += xv * wc[co];
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::kMaxPool2x2: {
        const std::size_t H = si.h, W = si.w, C = si.c;
        const std::size_t OH = H / 2, OW = W / 2;
        std::uint8_t* m = cache.mask[i].data();
        for (std::size_t y = 0; y < OH; ++y) {
          for (std::size_t x = 0; x < OW; ++x) {
            const std::size_t base = (2 * y * W + 2 * x) * C;
            double* o = &out[(y * OW + x) * C];
            for (std::size_t c = 0; c < C; ++c) {
              // Window scan order (0,0),(0,1),(1,0),(1,1); strict > keeps
              // the first index on ties.
              double best = in[base + c];
              std::uint8_t arg = 0;
              const double v01 = in[base + C + c];
              if (v01 > best) { best = v01; arg = 1; }
              const double v10 = in[base + W * C + c];
              if (v10 > best) { best = v10; arg = 2; }
              const double v11 = in[base + (W + 1) * C + c];
              if (v11 > best) { best = v11; arg = 3; }
              o[c] = best;
              m[(y * OW + x) * C + c] = arg;
            }
          }
        }
        break;
      }
      case LayerKind::kDropout: {
        const std::size_t n = out.size();
        if (train) {
          if (!rng)
            throw InvalidArgument("training forward through dropout needs an rng");
          const double p_keep = 1.0 - l.p_drop;
          const double inv_keep = 1.0 / p_keep;
          std::uint8_t* m = cache.mask[i].data();
          for (std::size_t k = 0; k < n; ++k) {
            const bool keep = rng->uniform() < p_keep;
            m[k] = keep ? 1 : 0;
            out[k] = keep ? in[k] * inv_keep : 0.0;  // inverted scaling
          }
        } else {
          std::copy(in.begin(), in.end(), out.begin());
        }
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t k = 0; k < out.size(); ++k)
          out[k] = in[k] > 0.0 ? in[k] : 0.0;
        break;
      case LayerKind::kFlatten:
        // (y, x, c) storage is already flat in that order.
        std::copy(in.begin(), in.end(), out.begin());
        break;
      case LayerKind::kDense: {
        const std::size_t NI = si.n, NO = l.units;
        const double* wp = weights_[i].data();
        std::memcpy(out.data(), biases_[i].data(), NO * sizeof(double));
        for (std::size_t a = 0; a < NI; ++a) {
          const double xv = in[a];
          if (xv == 0.0) continue;
          const double* wr = wp + a * NO;
          for (std::size_t b = 0; b < NO; ++b) out[b] += xv * wr[b];
        }
        break;
      }
      case LayerKind::kSoftmax: {
        double m = in[0];
        for (double v : in) m = std::max(m, v);
        double z = 0.0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          out[k] = std::exp(in[k] - m);
          z += out[k];
        }
        const double inv = 1.0 / z;
        for (double& v : out) v *= inv;
        break;
      }
    }
  }

  void backward_layer(std::size_t i, ForwardCache& cache,
                      GradBuffer& grads) const {
    const LayerSpec& l = spec_.layers[i];
    const TensorShape& si = shapes_[i];
    const std::vector<double>& in = cache.act[i];
    const std::vector<double>& dout = cache.dact[i + 1];
    std::vector<double>& din = cache.dact[i];
    switch (l.kind) {
      case LayerKind::kConv3x3: {
        const std::size_t H = si.h, W = si.w, CI = si.c, CO = l.units;
        const std::size_t OH = H - 2, OW = W - 2;
        double* gw = grads.gw[i].data();
        double* gb = grads.gb[i].data();
        const double* wp = weights_[i].data();
        std::fill(din.begin(), din.end(), 0.0);
        for (std::size_t y = 0; y < OH; ++y) {
          for (std::size_t x = 0; x < OW; ++x) {
            const double* dz = &dout[(y * OW + x) * CO];
            for (std::size_t co = 0; co < CO; ++co) gb[co] += dz[co];
            for (std::size_t kh = 0; kh < 3; ++kh) {
              const std::size_t iy = y + kh;
              for (std::size_t kw = 0; kw < 3; ++kw) {
                const std::size_t ix = x + kw;
                const double* xp = &in[(iy * W + ix) * CI];
                double* dip = &din[(iy * W + ix) * CI];
                const std::size_t wbase = (kh * 3 + kw) * CI;
                for (std::size_t ci = 0; ci < CI; ++ci) {
                  const double xv = xp[ci];
                  double* gwr = gw + (wbase + ci) * CO;
                  const double* wr = wp + (wbase + ci) * CO;
                  double acc = 0.0;
                  for (std::size_t co = 0; co < CO; ++co) {
                    gwr[co] += xv * dz[co];
                    acc += wr[co] * dz[co];
                  }
                  dip[ci] += acc;
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::kMaxPool2x2: {
        const std::size_t H = si.h, W = si.w, C = si.c;
        const std::size_t OH = H / 2, OW = W / 2;
        const std::uint8_t* m = cache.mask[i].data();
        std::fill(din.begin(), din.end(), 0.0);
        for (std::size_t y = 0; y < OH; ++y) {
          for (std::size_t x = 0; x < OW; ++x) {
            const std::size_t base = (2 * y * W + 2 * x) * C;
            const double* dz = &dout[(y * OW + x) * C];
            const std::uint8_t* mc = &m[(y * OW + x) * C];
            for (std::size_t c = 0; c < C; ++c) {
              static constexpr std::size_t off_y[4] = {0, 0, 1, 1};
              static constexpr std::size_t off_x[4] = {0, 1, 0, 1};
              const std::size_t idx =
                  base + (off_y[mc[c]] * W + off_x[mc[c]]) * C + c;
              din[idx] += dz[c];
            }
          }
        }
        break;
      }
      case LayerKind::kDropout: {
        const double inv_keep = 1.0 / (1.0 - l.p_drop);
        const std::uint8_t* m = cache.mask[i].data();
        for (std::size_t k = 0; k < din.size(); ++k)
          din[k] = m[k] ? dout[k] * inv_keep : 0.0;
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t k = 0; k < din.size(); ++k)
          din[k] = in[k] > 0.0 ? dout[k] : 0.0;
        break;
      case LayerKind::kFlatten:
        std::copy(dout.begin(), dout.end(), din.begin());
        break;
      case LayerKind::kDense: {
        const std::size_t NI = si.n, NO = l.units;
        double* gw = grads.gw[i].data();
        double* gb = grads.gb[i].data();
        const double* wp = weights_[i].data();
        for (std::size_t b = 0; b < NO; ++b) gb[b] += dout[b];
        for (std::size_t a = 0; a < NI; ++a) {
          const double xv = in[a];
          double* gwr = gw + a * NO;
          const double* wr = wp + a * NO;
          double acc = 0.0;
          for (std::size_t b = 0; b < NO; ++b) {
            gwr[b] += xv * dout[b];
            acc += wr[b] * dout[b];
          }
          din[a] = acc;
        }
        break;
      }
      case LayerKind::kSoftmax:
        // Trailing softmax is folded into the loss gradient; a softmax in any
        // other position is not part of this library's model space.
        throw InvalidArgument("softmax backward outside the final position");
    }
  }

  ModelSpec spec_;
  std::vector<TensorShape> shapes_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> biases_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient verification. Training-mode forwards re-seed a
// fresh rng per evaluation, so dropout masks are identical across the +h/-h
// probes and the analytic pass; parameter values never change draw counts.
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t n_params_checked = 0;
  std::string worst_location;
};

inline GradCheckResult grad_check(const ModelSpec& spec, const Tensor3& x,
                                  std::size_t label, std::uint64_t seed,
                                  double h = 1e-5) {
  Model model(spec);
  {
    Rng init_rng(derive_seed(seed, 1));
    model.init_he(init_rng);
  }
  const std::uint64_t pass_seed = derive_seed(seed, 2);

  auto loss_at = [&]() {
    Rng rng(pass_seed);
    ForwardCache cache;
    const auto& out = model.forward(x, cache, true, &rng);
    // Loss is computed from logits when a softmax tail is present.
    if (model.spec().layers.back().kind == LayerKind::kSoftmax)
      return softmax_xent(cache.act[model.n_layers() - 1], label).loss;
    return softmax_xent(out, label).loss;
  };

  // Analytic gradients.
  GradBuffer grads = model.make_grad_buffer();
  {
    Rng rng(pass_seed);
    ForwardCache cache;
    model.forward(x, cache, true, &rng);
    const std::size_t logits_idx =
        model.spec().layers.back().kind == LayerKind::kSoftmax
            ? model.n_layers() - 1
            : model.n_layers();
    const SoftmaxXent sx = softmax_xent(cache.act[logits_idx], label);
    model.backward(cache, sx.dlogits, grads);
  }

  GradCheckResult res;
  auto check_array = [&](std::vector<double>& p, const std::vector<double>& g,
                         const std::string& tag) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p[k];
      p[k] = saved + h;
      const double lp = loss_at();
      p[k] = saved - h;
      const double lm = loss_at();
      p[k] = saved;
      const double num = (lp - lm) / (2.0 * h);
      const double rel =
          std::abs(g[k] - num) / std::max({std::abs(g[k]), std::abs(num), 1e-6});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_location = tag + "[" + std::to_string(k) + "]";
      }
      ++res.n_params_checked;
    }
  };
  for (std::size_t i = 0; i < model.n_layers(); ++i) {
    check_array(model.layer_weights(i), grads.gw[i],
                std::string(to_string(spec.layers[i].kind)) + std::to_string(i) + ".w");
    check_array(model.layer_biases(i), grads.gb[i],
                std::string(to_string(spec.layers[i].kind)) + std::to_string(i) + ".b");
  }
  return res;
}

}  // namespace weanwave
