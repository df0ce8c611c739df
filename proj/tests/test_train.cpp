#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "weanwave/train.hpp"

namespace ww = weanwave;

namespace {

ww::ModelSpec linear_classifier_spec(std::size_t h, std::size_t w) {
  ww::ModelSpec s;
  s.input = ww::TensorShape::spatial(h, w, 1);
  s.layers = {ww::LayerSpec::flatten(), ww::LayerSpec::dense(2),
              ww::LayerSpec::softmax()};
  return s;
}

// Class 0 lights the top half of a 4x4 patch, class 1 the bottom half, plus
// mild noise. Linearly separable, so a dense layer learns it in a few epochs.
ww::Dataset half_bright_dataset(std::size_t n_per_class, std::uint64_t seed) {
  ww::Rng rng(seed);
  ww::Dataset d;
  for (int label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      ww::Tensor3 x(4, 4, 1);
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t xx = 0; xx < 4; ++xx) {
          const bool lit = (label == 0) == (y < 2);
          x.at(y, xx, 0) = (lit ? 1.0 : 0.0) + 0.1 * rng.normal();
        }
      d.push_back({x, label});
    }
  }
  return d;
}

ww::Dataset noise_dataset(std::size_t n, std::uint64_t seed) {
  ww::Rng rng(seed);
  ww::Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    ww::Tensor3 x(4, 4, 1);
    for (auto& v : x.v) v = rng.normal();
    d.push_back({x, static_cast<int>(i % 2)});
  }
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Optimizer, KindStringsRoundTrip) {
  EXPECT_STREQ(ww::to_string(ww::OptimizerKind::kAdam), "adam");
  EXPECT_STREQ(ww::to_string(ww::OptimizerKind::kSgd), "sgd");
  EXPECT_EQ(ww::optimizer_from_string("adam"), ww::OptimizerKind::kAdam);
  EXPECT_EQ(ww::optimizer_from_string("sgd"), ww::OptimizerKind::kSgd);
  EXPECT_THROW(ww::optimizer_from_string("rmsprop"), ww::InvalidArgument);
  EXPECT_THROW(ww::Optimizer(ww::OptimizerKind::kSgd, 0.0),
               ww::InvalidArgument);
  EXPECT_THROW(ww::Optimizer(ww::OptimizerKind::kAdam, -1e-3),
               ww::InvalidArgument);
}

TEST(Optimizer, SgdTakesPlainGradientStep) {
  ww::ModelSpec spec = linear_classifier_spec(1, 1);
  spec.input = ww::TensorShape::spatial(1, 1, 1);
  ww::Model m(spec);
  m.layer_weights(1) = {1.0, -2.0};
  m.layer_biases(1) = {0.5, 0.25};
  ww::GradBuffer g = m.make_grad_buffer();
  g.gw[1] = {0.25, -0.5};
  g.gb[1] = {1.0, 0.0};
  ww::Optimizer opt(ww::OptimizerKind::kSgd, 0.1);
  opt.step(m, g);
  EXPECT_DOUBLE_EQ(m.layer_weights(1)[0], 1.0 - 0.1 * 0.25);
  EXPECT_DOUBLE_EQ(m.layer_weights(1)[1], -2.0 - 0.1 * -0.5);
  EXPECT_DOUBLE_EQ(m.layer_biases(1)[0], 0.5 - 0.1);
  EXPECT_DOUBLE_EQ(m.layer_biases(1)[1], 0.25);
}

TEST(Optimizer, AdamMatchesScalarRestatement) {
  // Independent per-parameter restatement of the moment updates, driven by
  // random gradients for several steps across two parameterized layers.
  ww::ModelSpec spec;
  spec.input = ww::TensorShape::spatial(1, 1, 3);
  spec.layers = {ww::LayerSpec::flatten(), ww::LayerSpec::dense(4),
                 ww::LayerSpec::dense(2)};
  ww::Model m(spec);
  ww::Rng rng(31);
  m.init_he(rng);

  struct Moments {
    std::vector<double> m, v;
  };
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<std::vector<double>> want_w(m.n_layers()), want_b(m.n_layers());
  std::vector<Moments> mom_w(m.n_layers()), mom_b(m.n_layers());
  for (std::size_t i = 0; i < m.n_layers(); ++i) {
    want_w[i] = m.layer_weights(i);
    want_b[i] = m.layer_biases(i);
    mom_w[i] = {std::vector<double>(want_w[i].size(), 0.0),
                std::vector<double>(want_w[i].size(), 0.0)};
    mom_b[i] = {std::vector<double>(want_b[i].size(), 0.0),
                std::vector<double>(want_b[i].size(), 0.0)};
  }

  auto oracle_update = [&](std::vector<double>& p, Moments& mo,
                           const std::vector<double>& g, std::uint64_t t) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      mo.m[k] = b1 * mo.m[k] + (1.0 - b1) * g[k];
      mo.v[k] = b2 * mo.v[k] + (1.0 - b2) * g[k] * g[k];
      const double mh = mo.m[k] / (1.0 - std::pow(b1, static_cast<double>(t)));
      const double vh = mo.v[k] / (1.0 - std::pow(b2, static_cast<double>(t)));
      p[k] -= lr * mh / (std::sqrt(vh) + eps);
    }
  };

  ww::Optimizer opt(ww::OptimizerKind::kAdam, lr);
  ww::GradBuffer g = m.make_grad_buffer();
  for (std::uint64_t t = 1; t <= 5; ++t) {
    for (auto& v : g.gw)
      for (auto& x : v) x = rng.normal();
    for (auto& v : g.gb)
      for (auto& x : v) x = rng.normal();
    opt.step(m, g);
    for (std::size_t i = 0; i < m.n_layers(); ++i) {
      oracle_update(want_w[i], mom_w[i], g.gw[i], t);
      oracle_update(want_b[i], mom_b[i], g.gb[i], t);
    }
  }
  for (std::size_t i = 0; i < m.n_layers(); ++i) {
    for (std::size_t k = 0; k < want_w[i].size(); ++k)
      EXPECT_NEAR(m.layer_weights(i)[k], want_w[i][k], 1e-12);
    for (std::size_t k = 0; k < want_b[i].size(); ++k)
      EXPECT_NEAR(m.layer_biases(i)[k], want_b[i][k], 1e-12);
  }
}

TEST(Optimizer, AdamFirstStepApproachesSignedLearningRate) {
  ww::ModelSpec spec;
  spec.input = ww::TensorShape::spatial(1, 1, 1);
  spec.layers = {ww::LayerSpec::flatten(), ww::LayerSpec::dense(1)};
  ww::Model m(spec);
  m.layer_weights(1) = {3.0};
  ww::GradBuffer g = m.make_grad_buffer();
  g.gw[1] = {2.0};
  ww::Optimizer opt(ww::OptimizerKind::kAdam, 0.05);
  opt.step(m, g);
  // Bias-corrected first step: lr * g / (|g| + eps).
  EXPECT_NEAR(m.layer_weights(1)[0], 3.0 - 0.05 * 2.0 / (2.0 + 1e-8), 1e-15);
}

TEST(Evaluate, HandComputedLossAccuracyAndTies) {
  ww::Model m(linear_classifier_spec(1, 1));
  // Reshape to two input channels for direct logit control.
  ww::ModelSpec spec;
  spec.input = ww::TensorShape::spatial(1, 1, 2);
  spec.layers = {ww::LayerSpec::flatten(), ww::LayerSpec::dense(2),
                 ww::LayerSpec::softmax()};
  ww::Model id(spec);
  id.layer_weights(1) = {1.0, 0.0, 0.0, 1.0};  // logits == input

  ww::Dataset data;
  ww::Tensor3 a(1, 1, 2);
  a.v = {2.0, 0.0};  // predicted 0, labeled 0
  ww::Tensor3 b(1, 1, 2);
  b.v = {0.0, 3.0};  // predicted 1, labeled 0
  ww::Tensor3 tie(1, 1, 2);
  tie.v = {1.0, 1.0};  // tie resolves to class 0
  data.push_back({a, 0});
  data.push_back({b, 0});
  data.push_back({tie, 1});

  const auto r = ww::evaluate(id, data);
  ASSERT_EQ(r.predicted.size(), 3u);
  EXPECT_EQ(r.predicted[0], 0);
  EXPECT_EQ(r.predicted[1], 1);
  EXPECT_EQ(r.predicted[2], 0);
  EXPECT_NEAR(r.accuracy, 1.0 / 3.0, 1e-15);
  const double want_loss =
      (std::log1p(std::exp(-2.0)) + std::log1p(std::exp(3.0)) +
       std::log(2.0)) /
      3.0;
  EXPECT_NEAR(r.mean_loss, want_loss, 1e-12);
  EXPECT_NEAR(r.probs[0][0], 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(r.probs[2][0], 0.5, 1e-15);

  EXPECT_THROW(ww::evaluate(id, {}), ww::EmptySeries);
}

TEST(Evaluate, ModelsWithoutSoftmaxTailGetProbabilitiesAnyway) {
  ww::ModelSpec spec;
  spec.input = ww::TensorShape::spatial(1, 1, 2);
  spec.layers = {ww::LayerSpec::flatten(), ww::LayerSpec::dense(2)};
  ww::Model m(spec);
  m.layer_weights(1) = {1.0, 0.0, 0.0, 1.0};
  ww::Tensor3 x(1, 1, 2);
  x.v = {0.5, -0.5};
  const auto r = ww::evaluate(m, {{x, 0}});
  const auto p = ww::softmax({0.5, -0.5});
  EXPECT_NEAR(r.probs[0][0], p[0], 1e-15);
  EXPECT_NEAR(r.probs[0][1], p[1], 1e-15);
  EXPECT_EQ(r.predicted[0], 0);
  EXPECT_NEAR(r.mean_loss, -std::log(p[0]), 1e-15);
}

TEST(Training, LearnsSeparableProblemAndStopsAtAccuracyGoal) {
  const auto train = half_bright_dataset(12, 100);
  const auto val = half_bright_dataset(4, 200);
  ww::TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.batch_size = 4;
  cfg.max_epochs = 40;
  cfg.patience = 40;
  cfg.stop_at_val_accuracy = 1.0;
  cfg.seed = 5;
  const auto res =
      ww::train_early_stop(linear_classifier_spec(4, 4), train, val, cfg);
  EXPECT_TRUE(res.reached_accuracy_goal);
  EXPECT_FALSE(res.stopped_early);
  ASSERT_FALSE(res.history.empty());
  EXPECT_EQ(res.history.back().val_accuracy, 1.0);
  EXPECT_EQ(res.best_epoch, res.history.size());
  const auto check = ww::evaluate(res.model, val);
  EXPECT_EQ(check.accuracy, 1.0);
}

TEST(Training, IdenticalSeedsReproduceParametersBitForBit) {
  const auto train = half_bright_dataset(8, 300);
  const auto val = half_bright_dataset(3, 400);
  ww::TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.batch_size = 4;
  cfg.max_epochs = 6;
  cfg.patience = 6;
  cfg.seed = 77;
  const auto spec = linear_classifier_spec(4, 4);
  const auto r1 = ww::train_early_stop(spec, train, val, cfg);
  const auto r2 = ww::train_early_stop(spec, train, val, cfg);
  ASSERT_EQ(r1.history.size(), r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    EXPECT_EQ(r1.history[i].train_loss, r2.history[i].train_loss);
    EXPECT_EQ(r1.history[i].val_loss, r2.history[i].val_loss);
  }
  EXPECT_EQ(r1.model.layer_weights(1), r2.model.layer_weights(1));
  EXPECT_EQ(r1.model.layer_biases(1), r2.model.layer_biases(1));

  ww::TrainConfig other = cfg;
  other.seed = 78;
  const auto r3 = ww::train_early_stop(spec, train, val, other);
  EXPECT_NE(r1.model.layer_weights(1), r3.model.layer_weights(1));
}

TEST(Training, FixedBudgetRunImprovesLossAcrossEpochs) {
  const auto train = half_bright_dataset(10, 500);
  const auto val = half_bright_dataset(4, 600);
  ww::TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.batch_size = 5;
  cfg.max_epochs = 10;
  cfg.patience = 10;
  cfg.seed = 9;
  const auto res =
      ww::train_early_stop(linear_classifier_spec(4, 4), train, val, cfg);
  ASSERT_EQ(res.history.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_EQ(res.history[i].epoch, i + 1);
  EXPECT_LT(res.history.back().train_loss, res.history.front().train_loss);
  EXPECT_GE(res.history.back().val_accuracy, 0.9);
}

TEST(Training, PatienceStopsEarlyAndRestoresBestEpoch) {
  const auto train = noise_dataset(12, 700);
  const auto val = noise_dataset(6, 800);
  const auto spec = linear_classifier_spec(4, 4);

  ww::TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.batch_size = 4;
  cfg.max_epochs = 30;
  cfg.patience = 2;
  cfg.min_delta = 1e9;  // nothing after epoch 1 can count as an improvement
  cfg.seed = 3;
  const auto res = ww::train_early_stop(spec, train, val, cfg);
  EXPECT_TRUE(res.stopped_early);
  EXPECT_FALSE(res.reached_accuracy_goal);
  EXPECT_EQ(res.history.size(), 3u);
  EXPECT_EQ(res.best_epoch, 1u);
  EXPECT_EQ(res.best_val_loss, res.history[0].val_loss);

  // The restored parameters must equal a run truncated at the best epoch.
  ww::TrainConfig one = cfg;
  one.max_epochs = 1;
  const auto ref = ww::train_early_stop(spec, train, val, one);
  EXPECT_EQ(res.model.layer_weights(1), ref.model.layer_weights(1));
  EXPECT_EQ(res.model.layer_biases(1), ref.model.layer_biases(1));
}

TEST(Training, AccuracyGoalZeroStopsAfterFirstEpoch) {
  const auto train = noise_dataset(8, 900);
  const auto val = noise_dataset(4, 901);
  ww::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 20;
  cfg.stop_at_val_accuracy = 0.0;
  const auto res =
      ww::train_early_stop(linear_classifier_spec(4, 4), train, val, cfg);
  EXPECT_TRUE(res.reached_accuracy_goal);
  EXPECT_EQ(res.history.size(), 1u);
  EXPECT_EQ(res.best_epoch, 1u);
}

TEST(Training, RejectsDegenerateInputs) {
  const auto spec = linear_classifier_spec(4, 4);
  const auto good = noise_dataset(4, 1000);
  ww::TrainConfig cfg;
  EXPECT_THROW(ww::train_early_stop(spec, {}, good, cfg), ww::EmptySeries);
  EXPECT_THROW(ww::train_early_stop(spec, good, {}, cfg), ww::EmptySeries);

  ww::TrainConfig zero_batch;
  zero_batch.batch_size = 0;
  EXPECT_THROW(ww::train_early_stop(spec, good, good, zero_batch),
               ww::InvalidArgument);
  ww::TrainConfig zero_epochs;
  zero_epochs.max_epochs = 0;
  EXPECT_THROW(ww::train_early_stop(spec, good, good, zero_epochs),
               ww::InvalidArgument);

  auto bad = good;
  bad[1].label = 2;
  EXPECT_THROW(ww::train_early_stop(spec, bad, good, cfg),
               ww::InvalidArgument);
  bad[1].label = -1;
  EXPECT_THROW(ww::train_early_stop(spec, bad, good, cfg),
               ww::InvalidArgument);
}

TEST(Training, NonFiniteBatchLossIsReportedWithLocation) {
  auto train = noise_dataset(4, 1100);
  const auto val = noise_dataset(2, 1101);
  train[0].x.v[0] = std::numeric_limits<double>::quiet_NaN();
  ww::TrainConfig cfg;
  cfg.batch_size = 2;
  try {
    ww::train_early_stop(linear_classifier_spec(4, 4), train, val, cfg);
    FAIL() << "expected NonFiniteLoss";
  } catch (const ww::NonFiniteLoss& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST(ParamSnapshot, InMemoryAndSpilledCopiesRestoreExactly) {
  ww::ModelSpec spec;
  spec.input = ww::TensorShape::spatial(4, 4, 1);
  spec.layers = {ww::LayerSpec::conv(2), ww::LayerSpec::flatten(),
                 ww::LayerSpec::dense(2), ww::LayerSpec::softmax()};
  ww::Model m(spec);
  ww::Rng rng(4);
  m.init_he(rng);
  const auto w0 = m.layer_weights(0);
  const auto b2 = m.layer_biases(2);

  for (std::size_t threshold : {std::size_t{1} << 30, std::size_t{0}}) {
    ww::detail::ParamSnapshot snap(threshold);
    EXPECT_FALSE(snap.has());
    snap.capture(m);
    EXPECT_TRUE(snap.has());
    for (auto& w : m.layer_weights(0)) w += 1.5;
    for (auto& b : m.layer_biases(2)) b -= 2.0;
    snap.restore(m);
    EXPECT_EQ(m.layer_weights(0), w0);
    EXPECT_EQ(m.layer_biases(2), b2);
  }

  ww::detail::ParamSnapshot empty;
  EXPECT_THROW(empty.restore(m), ww::InvalidArgument);
}

TEST(ModelFile, RoundTripsBitExactWithMetadata) {
  oracle::TempDir dir("modelfile");
  const auto path = dir.path() / "model.wwm";

  ww::ModelSpec spec;
  spec.input = ww::TensorShape::spatial(6, 6, 2);
  spec.layers = {ww::LayerSpec::conv(3), ww::LayerSpec::relu(),
                 ww::LayerSpec::flatten(), ww::LayerSpec::dense(2),
                 ww::LayerSpec::softmax()};
  ww::Model m(spec);
  ww::Rng rng(8);
  m.init_he(rng);

  nlohmann::json extra{{"purpose", "roundtrip"}, {"fold", 3}};
  ww::save_model(m, path, extra);
  const auto lm = ww::load_model(path);

  ASSERT_EQ(lm.model.n_layers(), m.n_layers());
  for (std::size_t i = 0; i < m.n_layers(); ++i) {
    EXPECT_EQ(lm.model.layer_weights(i), m.layer_weights(i));
    EXPECT_EQ(lm.model.layer_biases(i), m.layer_biases(i));
  }
  EXPECT_EQ(lm.meta.at("purpose").get<std::string>(), "roundtrip");
  EXPECT_EQ(lm.meta.at("fold").get<int>(), 3);
  EXPECT_EQ(lm.meta.at("format_version").get<std::uint32_t>(),
            ww::kModelFormatVersion);
  EXPECT_EQ(lm.meta.at("param_count").get<std::size_t>(), m.total_params());
  EXPECT_EQ(lm.meta.at("blob_fnv64").get<std::string>().substr(0, 2), "0x");

  // Loaded model behaves identically.
  ww::Tensor3 x(6, 6, 2);
  ww::Rng fill(12);
  for (auto& v : x.v) v = fill.normal();
  EXPECT_EQ(m.predict_proba(x), lm.model.predict_proba(x));
}

TEST(ModelFile, DetectsVersionDriftAndCorruption) {
  oracle::TempDir dir("modelfile");
  const auto path = dir.path() / "model.wwm";
  ww::ModelSpec spec;
  spec.input = ww::TensorShape::spatial(1, 1, 3);
  spec.layers = {ww::LayerSpec::flatten(), ww::LayerSpec::dense(2),
                 ww::LayerSpec::softmax()};
  ww::Model m(spec);
  ww::Rng rng(21);
  m.init_he(rng);
  ww::save_model(m, path);
  const std::string bytes = slurp(path);
  const auto nl = bytes.find('\n');
  ASSERT_NE(nl, std::string::npos);

  // Future format version.
  {
    auto header = nlohmann::json::parse(bytes.substr(0, nl));
    header["format_version"] = ww::kModelFormatVersion + 1;
    spit(dir.path() / "future.wwm", header.dump() + bytes.substr(nl));
    EXPECT_THROW(ww::load_model(dir.path() / "future.wwm"),
                 ww::VersionMismatch);
  }
  // Header that does not parse at all.
  {
    spit(dir.path() / "broken.wwm", "{ not json\n" + bytes.substr(nl + 1));
    EXPECT_THROW(ww::load_model(dir.path() / "broken.wwm"), ww::IoError);
  }
  // Declared parameter count disagreeing with the spec.
  {
    auto header = nlohmann::json::parse(bytes.substr(0, nl));
    header["param_count"] = header["param_count"].get<std::size_t>() + 1;
    spit(dir.path() / "drift.wwm", header.dump() + bytes.substr(nl));
    EXPECT_THROW(ww::load_model(dir.path() / "drift.wwm"),
                 ww::ChecksumMismatch);
  }
  // One corrupted payload byte.
  {
    std::string bad = bytes;
    bad.back() = static_cast<char>(bad.back() ^ 0xFF);
    spit(dir.path() / "corrupt.wwm", bad);
    EXPECT_THROW(ww::load_model(dir.path() / "corrupt.wwm"),
                 ww::ChecksumMismatch);
  }
  // Truncated payload.
  {
    spit(dir.path() / "short.wwm", bytes.substr(0, bytes.size() - 1));
    EXPECT_THROW(ww::load_model(dir.path() / "short.wwm"),
                 ww::ChecksumMismatch);
  }
  // Trailing junk.
  {
    spit(dir.path() / "long.wwm", bytes + "x");
    EXPECT_THROW(ww::load_model(dir.path() / "long.wwm"),
                 ww::ChecksumMismatch);
  }
  // Missing and empty files.
  EXPECT_THROW(ww::load_model(dir.path() / "absent.wwm"), ww::IoError);
  spit(dir.path() / "empty.wwm", "");
  EXPECT_THROW(ww::load_model(dir.path() / "empty.wwm"), ww::IoError);
}
