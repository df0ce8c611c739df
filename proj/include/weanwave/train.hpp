#pragma once

#include <unistd.h>

#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "weanwave/common.hpp"
#include "weanwave/nn.hpp"

namespace weanwave {

struct Sample {
  Tensor3 x;
  int label = 0;
};
using Dataset = std::vector<Sample>;

enum class OptimizerKind { kAdam, kSgd };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw InvalidArgument("unknown optimizer '" + s + "'");
}

// ---------------------------------------------------------------------------
// Optimizers. Adam keeps bias-corrected first/second moment estimates per
// parameter; step count is shared across all parameter arrays.
// ---------------------------------------------------------------------------

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9,
            double beta2 = 0.999, double eps = 1e-8)
      : kind_(kind), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  }

  void step(Model& model, const GradBuffer& grads) {
    if (kind_ == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < model.n_layers(); ++i) {
        apply_sgd(model.layer_weights(i), grads.gw[i]);
        apply_sgd(model.layer_biases(i), grads.gb[i]);
      }
      return;
    }
    if (mw_.empty()) {
      const auto alloc = [&](std::vector<std::vector<double>>& m,
                             std::vector<std::vector<double>>& v, bool w) {
        m.resize(model.n_layers());
        v.resize(model.n_layers());
        for (std::size_t i = 0; i < model.n_layers(); ++i) {
          const std::size_t n =
              w ? model.layer_weights(i).size() : model.layer_biases(i).size();
          m[i].assign(n, 0.0);
          v[i].assign(n, 0.0);
        }
      };
      alloc(mw_, vw_, true);
      alloc(mb_, vb_, false);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < model.n_layers(); ++i) {
      apply_adam(model.layer_weights(i), grads.gw[i], mw_[i], vw_[i], bc1, bc2);
      apply_adam(model.layer_biases(i), grads.gb[i], mb_[i], vb_[i], bc1, bc2);
    }
  }

 private:
  void apply_sgd(std::vector<double>& p, const std::vector<double>& g) {
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr_ * g[k];
  }
  void apply_adam(std::vector<double>& p, const std::vector<double>& g,
                  std::vector<double>& m, std::vector<double>& v, double bc1,
                  double bc2) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

  OptimizerKind kind_;
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> mw_, mb_, vw_, vb_;
};

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

struct EvalResult {
  double mean_loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<double>> probs;  // per sample
  std::vector<int> predicted;              // argmax, first index on ties
};

inline EvalResult evaluate(const Model& model, const Dataset& data) {
  if (data.empty()) throw EmptySeries("evaluate on empty dataset");
  EvalResult r;
  r.probs.reserve(data.size());
  r.predicted.reserve(data.size());
  ForwardCache cache;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const bool has_softmax =
      model.spec().layers.back().kind == LayerKind::kSoftmax;
  for (const Sample& s : data) {
    const auto& out = model.forward(s.x, cache, false, nullptr);
    const auto& logits =
        has_softmax ? cache.act[model.n_layers() - 1] : out;
    loss_sum += softmax_xent(logits, static_cast<std::size_t>(s.label)).loss;
    const std::vector<double> p = has_softmax ? out : softmax(out);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[arg]) arg = k;
    if (static_cast<int>(arg) == s.label) ++correct;
    r.probs.push_back(p);
    r.predicted.push_back(static_cast<int>(arg));
  }
  r.mean_loss = loss_sum / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

// ---------------------------------------------------------------------------
// Training with early stopping.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 6.3e-4;
  std::size_t batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::size_t max_epochs = 30;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  // Optional extra stopping rule: halt once validation accuracy reaches this
  // value (disabled when negative). The stopping epoch's parameters are kept.
  double stop_at_val_accuracy = -1.0;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  bool reached_accuracy_goal = false;
};

namespace detail {

// Best-epoch parameter snapshot. Large models spill to a temporary file:
// a full in-memory copy of the biggest supported models does not fit next
// to Adam state in modest containers.
class ParamSnapshot {
 public:
  explicit ParamSnapshot(std::size_t spill_threshold = std::size_t{1} << 25)
      : threshold_(spill_threshold) {}

  ~ParamSnapshot() {
    if (!path_.empty()) {
      std::error_code ec;
      std::filesystem::remove(path_, ec);
    }
  }

  ParamSnapshot(const ParamSnapshot&) = delete;
  ParamSnapshot& operator=(const ParamSnapshot&) = delete;

  void capture(const Model& m) {
    has_ = true;
    if (m.total_params() <= threshold_) {
      mem_.clear();
      for (std::size_t i = 0; i < m.n_layers(); ++i) {
        mem_.push_back(m.layer_weights(i));
        mem_.push_back(m.layer_biases(i));
      }
      return;
    }
    if (path_.empty()) {
      static std::atomic<std::uint64_t> counter{0};
      path_ = std::filesystem::temp_directory_path() /
              ("weanwave-snap-" + std::to_string(::getpid()) + "-" +
               std::to_string(counter.fetch_add(1)) + ".bin");
    }
    std::ofstream f(path_, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open snapshot file " + path_.string());
    for (std::size_t i = 0; i < m.n_layers(); ++i) {
      write_vec(f, m.layer_weights(i));
      write_vec(f, m.layer_biases(i));
    }
    if (!f) throw IoError("snapshot write failed");
  }

  void restore(Model& m) const {
    if (!has_) throw InvalidArgument("restore without capture");
    if (!path_.empty()) {
      std::ifstream f(path_, std::ios::binary);
      if (!f) throw IoError("cannot reopen snapshot file " + path_.string());
      for (std::size_t i = 0; i < m.n_layers(); ++i) {
        read_vec(f, m.layer_weights(i));
        read_vec(f, m.layer_biases(i));
      }
      return;
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < m.n_layers(); ++i) {
      m.layer_weights(i) = mem_[k++];
      m.layer_biases(i) = mem_[k++];
    }
  }

  bool has() const { return has_; }

 private:
  static void write_vec(std::ofstream& f, const std::vector<double>& v) {
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  static void read_vec(std::ifstream& f, std::vector<double>& v) {
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (f.gcount() != static_cast<std::streamsize>(v.size() * sizeof(double)))
      throw IoError("snapshot truncated");
  }

  std::size_t threshold_;
  bool has_ = false;
  std::vector<std::vector<double>> mem_;
  std::filesystem::path path_;
};

}  // namespace detail

// Trains with mini-batch gradient descent and early stopping on validation
// loss: stop after `patience` epochs without an improvement larger than
// min_delta, then restore the best epoch's parameters. One seeded stream
// drives initialization, per-epoch shuffling and dropout, in that order, so
// identical configs and seeds reproduce identical parameters bit for bit.
inline TrainResult train_early_stop(const ModelSpec& spec,
                                    const Dataset& train_set,
                                    const Dataset& val_set,
                                    const TrainConfig& cfg) {
  if (train_set.empty() || val_set.empty())
    throw EmptySeries("training needs non-empty train and validation sets");
  if (cfg.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (cfg.max_epochs == 0) throw InvalidArgument("max_epochs must be positive");

  TrainResult res{Model(spec), {}, 0, 0.0, false, false};
  Model& model = res.model;
  const std::size_t n_classes = model.n_classes();
  for (const Dataset* ds : {&train_set, &val_set})
    for (const Sample& s : *ds)
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= n_classes)
        throw InvalidArgument("label " + std::to_string(s.label) +
                              " outside the model's " +
                              std::to_string(n_classes) + " classes");

  Rng rng(cfg.seed);
  model.init_he(rng);
  Optimizer opt(cfg.optimizer, cfg.lr);
  GradBuffer grads = model.make_grad_buffer();
  ForwardCache cache;
  detail::ParamSnapshot snapshot;

  const bool has_softmax =
      model.spec().layers.back().kind == LayerKind::kSoftmax;
  const std::size_t logits_idx =
      has_softmax ? model.n_layers() - 1 : model.n_layers();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improve = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      grads.zero();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const Sample& s = train_set[order[k]];
        model.forward(s.x, cache, true, &rng);
        const SoftmaxXent sx = softmax_xent(
            cache.act[logits_idx], static_cast<std::size_t>(s.label));
        batch_loss += sx.loss;
        model.backward(cache, sx.dlogits, grads);
      }
      if (!std::isfinite(batch_loss))
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch at " +
                            std::to_string(start));
      const double inv = 1.0 / static_cast<double>(stop - start);
      grads.scale(inv);
      opt.step(model, grads);
      train_loss_sum += batch_loss;
    }

    const EvalResult val = evaluate(model, val_set);
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = train_loss_sum / static_cast<double>(train_set.size());
    st.val_loss = val.mean_loss;
    st.val_accuracy = val.accuracy;
    res.history.push_back(st);

    if (cfg.stop_at_val_accuracy >= 0.0 &&
        val.accuracy >= cfg.stop_at_val_accuracy) {
      snapshot.capture(model);
      res.best_epoch = epoch;
      res.best_val_loss = val.mean_loss;
      res.reached_accuracy_goal = true;
      break;
    }
    if (val.mean_loss < best_val - cfg.min_delta) {
      best_val = val.mean_loss;
      res.best_epoch = epoch;
      res.best_val_loss = val.mean_loss;
      epochs_since_improve = 0;
      snapshot.capture(model);
    } else {
      ++epochs_since_improve;
      if (epochs_since_improve >= cfg.patience) {
        res.stopped_early = true;
        break;
      }
    }
  }
  if (snapshot.has()) snapshot.restore(model);
  return res;
}

// ---------------------------------------------------------------------------
// Model files: one line of JSON metadata, then the raw little-endian f64
// parameter blob (per layer: weights then biases). The header pins format
// version, parameter count and an FNV-1a checksum of the blob.
// ---------------------------------------------------------------------------

inline std::string fnv_hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016" PRIx64, h);
  return buf;
}

inline void save_model(const Model& model, const std::filesystem::path& path,
                       const nlohmann::json& extra_meta = nlohmann::json::object()) {
  std::vector<double> blob;
  blob.reserve(model.total_params());
  for (std::size_t i = 0; i < model.n_layers(); ++i) {
    const auto& w = model.layer_weights(i);
    const auto& b = model.layer_biases(i);
    blob.insert(blob.end(), w.begin(), w.end());
    blob.insert(blob.end(), b.begin(), b.end());
  }
  nlohmann::json header = extra_meta;
  header["format_version"] = kModelFormatVersion;
  header["library_version"] = kLibraryVersion;
  header["param_count"] = blob.size();
  header["blob_fnv64"] =
      fnv_hex(fnv1a64(blob.data(), blob.size() * sizeof(double)));
  header["spec"] = model.spec();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f << header.dump() << '\n';
  f.write(reinterpret_cast<const char*>(blob.data()),
          static_cast<std::streamsize>(blob.size() * sizeof(double)));
  if (!f) throw IoError("write failed: " + path.string());
}

struct LoadedModel {
  Model model;
  nlohmann::json meta;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty model file: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad model header in " + path.string() + ": " + e.what());
  }
  const auto version = header.at("format_version").get<std::uint32_t>();
  if (version != kModelFormatVersion)
    throw VersionMismatch("model format " + std::to_string(version) +
                          ", this build reads " +
                          std::to_string(kModelFormatVersion));
  LoadedModel lm{Model(header.at("spec").get<ModelSpec>()), header};
  const std::size_t expect = header.at("param_count").get<std::size_t>();
  if (expect != lm.model.total_params())
    throw ChecksumMismatch("header param_count " + std::to_string(expect) +
                           " does not match spec (" +
                           std::to_string(lm.model.total_params()) + ")");
  std::vector<double> blob(expect);
  f.read(reinterpret_cast<char*>(blob.data()),
         static_cast<std::streamsize>(expect * sizeof(double)));
  if (f.gcount() != static_cast<std::streamsize>(expect * sizeof(double)))
    throw ChecksumMismatch("model blob truncated: " + path.string());
  char extra;
  if (f.read(&extra, 1))
    throw ChecksumMismatch("model blob longer than declared: " + path.string());
  const std::string sum =
      fnv_hex(fnv1a64(blob.data(), blob.size() * sizeof(double)));
  if (sum != header.at("blob_fnv64").get<std::string>())
    throw ChecksumMismatch("model blob checksum mismatch: " + path.string());
  std::size_t k = 0;
  for (std::size_t i = 0; i < lm.model.n_layers(); ++i) {
    for (double& w : lm.model.layer_weights(i)) w = blob[k++];
    for (double& b : lm.model.layer_biases(i)) b = blob[k++];
  }
  return lm;
}

}  // namespace weanwave
