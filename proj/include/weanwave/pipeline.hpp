#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "weanwave/common.hpp"
#include "weanwave/cwt.hpp"
#include "weanwave/hpo.hpp"
#include "weanwave/imaging.hpp"
#include "weanwave/interp.hpp"
#include "weanwave/metrics.hpp"
#include "weanwave/nn.hpp"
#include "weanwave/occlusion.hpp"
#include "weanwave/series.hpp"
#include "weanwave/spectrum.hpp"
#include "weanwave/synth.hpp"
#include "weanwave/train.hpp"
#include "weanwave/variables.hpp"

namespace weanwave {

// ---------------------------------------------------------------------------
// Pipeline configuration. One JSON document drives every stage; a single
// master seed feeds per-stage derived streams so stages stay reproducible
// independently of each other.
// ---------------------------------------------------------------------------

struct CleaningConfig {
  double k_sigma = 5.0;
  std::size_t neighbor_window = 3;
  double max_gap_seconds = 20.0;
};

struct SweepConfig {
  double fs_min_hz = 0.1;
  double fs_max_hz = 3.0;
  double fs_step_hz = 0.1;
  // Number of cleaned records the sweep scores (taken in manifest order;
  // 0 means all). The default covers one full patient.
  std::size_t max_series = 8;
};

struct WaveletConfig {
  std::size_t voices_per_octave = 12;
  double min_cycles = 4.0;
  // Patients per outcome class whose planes feed wavelet selection.
  std::size_t selection_patients_per_class = 1;
};

struct ImageConfig {
  std::size_t height = 224;
  std::size_t width = 224;
  bool log_compress = true;
  bool export_png = false;
};

struct TrainStageConfig {
  double lr = 6.3e-4;
  std::size_t batch = 32;
  std::string optimizer = "adam";
  std::size_t max_epochs = 30;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  double stop_at_val_accuracy = 0.95;
  double val_fraction = 0.3;
};

struct HpoStageConfig {
  bool enabled = false;
  std::string space = "channel_head";
  std::size_t budget = 8;
  std::size_t max_epochs = 2;
};

struct OcclusionConfig {
  std::size_t window = 40;
  std::size_t stride = 20;
  std::string fill = "channel_mean";
};

struct EnsembleConfig {
  bool enabled = false;
};

struct PipelineConfig {
  std::uint64_t seed = 1234;
  CohortSpec cohort;
  CleaningConfig cleaning;
  SweepConfig sweep;
  WaveletConfig wavelet;
  ImageConfig image;
  TrainStageConfig train;
  HpoStageConfig hpo;
  OcclusionConfig occlusion;
  EnsembleConfig ensemble;

  void validate() const {
    if (cohort.n_success < 2 || cohort.n_failure < 2)
      throw ConfigInvalid("need at least 2 patients per trained class");
    if (!(sweep.fs_min_hz > 0.0) || sweep.fs_max_hz < sweep.fs_min_hz ||
        !(sweep.fs_step_hz > 0.0))
      throw ConfigInvalid("sweep grid must satisfy 0 < fs_min <= fs_max, step > 0");
    if (image.height < 8 || image.width < 8)
      throw ConfigInvalid("image dimensions must be at least 8x8");
    if (!(train.val_fraction > 0.0) || train.val_fraction >= 1.0)
      throw ConfigInvalid("val_fraction must lie in (0, 1)");
    if (train.batch == 0 || train.max_epochs == 0)
      throw ConfigInvalid("train.batch and train.max_epochs must be positive");
    if (!(train.lr > 0.0)) throw ConfigInvalid("train.lr must be positive");
    if (train.optimizer != "adam" && train.optimizer != "sgd")
      throw ConfigInvalid("train.optimizer must be adam or sgd");
    if (hpo.space != "channel_head" && hpo.space != "scratch_cnn")
      throw ConfigInvalid("hpo.space must be channel_head or scratch_cnn");
    if (hpo.enabled && (hpo.budget == 0 || hpo.max_epochs == 0))
      throw ConfigInvalid("hpo.budget and hpo.max_epochs must be positive");
    if (occlusion.window == 0 || occlusion.stride == 0)
      throw ConfigInvalid("occlusion.window and occlusion.stride must be positive");
    if (occlusion.window > image.height || occlusion.window > image.width)
      throw ConfigInvalid("occlusion.window exceeds the image size");
    if (occlusion.fill != "channel_mean" && occlusion.fill != "zero")
      throw ConfigInvalid("occlusion.fill must be channel_mean or zero");
    if (wavelet.voices_per_octave == 0 ||
        wavelet.selection_patients_per_class == 0)
      throw ConfigInvalid("wavelet voices and selection patient count must be positive");
  }
};

inline void to_json(nlohmann::json& j, const CleaningConfig& c) {
  j = {{"k_sigma", c.k_sigma},
       {"neighbor_window", c.neighbor_window},
       {"max_gap_seconds", c.max_gap_seconds}};
}
inline void from_json(const nlohmann::json& j, CleaningConfig& c) {
  CleaningConfig d;
  c.k_sigma = j.value("k_sigma", d.k_sigma);
  c.neighbor_window = j.value("neighbor_window", d.neighbor_window);
  c.max_gap_seconds = j.value("max_gap_seconds", d.max_gap_seconds);
}

inline void to_json(nlohmann::json& j, const SweepConfig& c) {
  j = {{"fs_min_hz", c.fs_min_hz},
       {"fs_max_hz", c.fs_max_hz},
       {"fs_step_hz", c.fs_step_hz},
       {"max_series", c.max_series}};
}
inline void from_json(const nlohmann::json& j, SweepConfig& c) {
  SweepConfig d;
  c.fs_min_hz = j.value("fs_min_hz", d.fs_min_hz);
  c.fs_max_hz = j.value("fs_max_hz", d.fs_max_hz);
  c.fs_step_hz = j.value("fs_step_hz", d.fs_step_hz);
  c.max_series = j.value("max_series", d.max_series);
}

inline void to_json(nlohmann::json& j, const WaveletConfig& c) {
  j = {{"voices_per_octave", c.voices_per_octave},
       {"min_cycles", c.min_cycles},
       {"selection_patients_per_class", c.selection_patients_per_class}};
}
inline void from_json(const nlohmann::json& j, WaveletConfig& c) {
  WaveletConfig d;
  c.voices_per_octave = j.value("voices_per_octave", d.voices_per_octave);
  c.min_cycles = j.value("min_cycles", d.min_cycles);
  c.selection_patients_per_class =
      j.value("selection_patients_per_class", d.selection_patients_per_class);
}

inline void to_json(nlohmann::json& j, const ImageConfig& c) {
  j = {{"height", c.height},
       {"width", c.width},
       {"log_compress", c.log_compress},
       {"export_png", c.export_png}};
}
inline void from_json(const nlohmann::json& j, ImageConfig& c) {
  ImageConfig d;
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.log_compress = j.value("log_compress", d.log_compress);
  c.export_png = j.value("export_png", d.export_png);
}

inline void to_json(nlohmann::json& j, const TrainStageConfig& c) {
  j = {{"lr", c.lr},
       {"batch", c.batch},
       {"optimizer", c.optimizer},
       {"max_epochs", c.max_epochs},
       {"patience", c.patience},
       {"min_delta", c.min_delta},
       {"stop_at_val_accuracy", c.stop_at_val_accuracy},
       {"val_fraction", c.val_fraction}};
}
inline void from_json(const nlohmann::json& j, TrainStageConfig& c) {
  TrainStageConfig d;
  c.lr = j.value("lr", d.lr);
  c.batch = j.value("batch", d.batch);
  c.optimizer = j.value("optimizer", d.optimizer);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.patience = j.value("patience", d.patience);
  c.min_delta = j.value("min_delta", d.min_delta);
  c.stop_at_val_accuracy = j.value("stop_at_val_accuracy", d.stop_at_val_accuracy);
  c.val_fraction = j.value("val_fraction", d.val_fraction);
}

inline void to_json(nlohmann::json& j, const HpoStageConfig& c) {
  j = {{"enabled", c.enabled},
       {"space", c.space},
       {"budget", c.budget},
       {"max_epochs", c.max_epochs}};
}
inline void from_json(const nlohmann::json& j, HpoStageConfig& c) {
  HpoStageConfig d;
  c.enabled = j.value("enabled", d.enabled);
  c.space = j.value("space", d.space);
  c.budget = j.value("budget", d.budget);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
}

inline void to_json(nlohmann::json& j, const OcclusionConfig& c) {
  j = {{"window", c.window}, {"stride", c.stride}, {"fill", c.fill}};
}
inline void from_json(const nlohmann::json& j, OcclusionConfig& c) {
  OcclusionConfig d;
  c.window = j.value("window", d.window);
  c.stride = j.value("stride", d.stride);
  c.fill = j.value("fill", d.fill);
}

inline void to_json(nlohmann::json& j, const EnsembleConfig& c) {
  j = {{"enabled", c.enabled}};
}
inline void from_json(const nlohmann::json& j, EnsembleConfig& c) {
  EnsembleConfig d;
  c.enabled = j.value("enabled", d.enabled);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"seed", c.seed},       {"cohort", c.cohort},
       {"cleaning", c.cleaning}, {"sweep", c.sweep},
       {"wavelet", c.wavelet},   {"image", c.image},
       {"train", c.train},       {"hpo", c.hpo},
       {"occlusion", c.occlusion}, {"ensemble", c.ensemble}};
}
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  PipelineConfig d;
  c.seed = j.value("seed", d.seed);
  c.cohort = j.value("cohort", d.cohort);
  c.cleaning = j.value("cleaning", d.cleaning);
  c.sweep = j.value("sweep", d.sweep);
  c.wavelet = j.value("wavelet", d.wavelet);
  c.image = j.value("image", d.image);
  c.train = j.value("train", d.train);
  c.hpo = j.value("hpo", d.hpo);
  c.occlusion = j.value("occlusion", d.occlusion);
  c.ensemble = j.value("ensemble", d.ensemble);
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid("config is not valid JSON (" + path.string() +
                        "): " + e.what());
  }
  PipelineConfig cfg;
  try {
    cfg = j.get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid("config field has the wrong type: " +
                        std::string(e.what()));
  }
  cfg.validate();
  return cfg;
}

// Stable 64-bit digest over the canonical JSON form of the configuration.
// It stamps every stage output, so artifacts from mismatched configurations
// are detectable.
inline std::uint64_t pipeline_config_hash(const PipelineConfig& cfg) {
  const nlohmann::json j = cfg;
  return fnv1a64(j.dump());
}

// ---------------------------------------------------------------------------
// Stage plumbing.
// ---------------------------------------------------------------------------

struct PipelineContext {
  PipelineConfig cfg;
  std::filesystem::path out;
  bool verbose = false;
  std::ostream* log = &std::cerr;

  std::uint64_t config_hash() const { return pipeline_config_hash(cfg); }
  std::filesystem::path stage_dir(const std::string& stage) const {
    return out / stage;
  }
  void say(const std::string& msg) const {
    if (verbose && log) (*log) << "[weanwave] " << msg << '\n';
  }
};

// Per-stage deterministic seed streams.
inline constexpr std::uint64_t kSeedCohort = 0x01;
inline constexpr std::uint64_t kSeedSplit = 0x02;   // + class index
inline constexpr std::uint64_t kSeedTrain = 0x03;   // + model tag
inline constexpr std::uint64_t kSeedTune = 0x04;    // suggestions
inline constexpr std::uint64_t kSeedTrial = 0x05;   // + trial index

namespace detail {

inline void write_text_atomic(const std::filesystem::path& path,
                              const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + tmp.string());
    f << text;
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json_atomic(const std::filesystem::path& path,
                              const nlohmann::json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

inline nlohmann::json require_json(const std::filesystem::path& path,
                                   const std::string& producing_stage) {
  if (!std::filesystem::exists(path))
    throw MissingUpstreamArtifact(path.string() + " not found; run stage '" +
                                  producing_stage + "' first");
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  try {
    nlohmann::json j;
    f >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void require_file(const std::filesystem::path& path,
                         const std::string& producing_stage) {
  if (!std::filesystem::exists(path))
    throw MissingUpstreamArtifact(path.string() + " not found; run stage '" +
                                  producing_stage + "' first");
}

inline nlohmann::json stage_stamp(const PipelineContext& ctx,
                                  const std::string& stage) {
  return {{"stage", stage},
          {"library_version", kLibraryVersion},
          {"config_hash", fnv_hex(ctx.config_hash())},
          {"seed", ctx.cfg.seed}};
}

inline std::string stamp_comment(const PipelineContext& ctx) {
  return "config_hash=" + fnv_hex(ctx.config_hash()) +
         " seed=" + std::to_string(ctx.cfg.seed) +
         " library_version=" + std::string(kLibraryVersion);
}

inline Tensor3 select_channel(const Tensor3& x, std::size_t ch) {
  if (ch >= x.c) throw OutOfRange("channel index out of range");
  Tensor3 out;
  out.h = x.h;
  out.w = x.w;
  out.c = 1;
  out.v.resize(x.h * x.w);
  for (std::size_t y = 0; y < x.h; ++y)
    for (std::size_t xx = 0; xx < x.w; ++xx)
      out.v[y * x.w + xx] = x.at(y, xx, ch);
  return out;
}

// Patients as listed by a stage manifest, in manifest order.
struct ManifestPatient {
  std::string patient_id;
  int class_label = 0;
  std::vector<std::string> files;
};

inline std::vector<ManifestPatient> manifest_patients(const nlohmann::json& m) {
  std::vector<ManifestPatient> out;
  for (const auto& p : m.at("patients")) {
    ManifestPatient mp;
    mp.patient_id = p.at("patient_id").get<std::string>();
    mp.class_label = p.at("class_label").get<int>();
    if (p.contains("files"))
      for (const auto& f : p.at("files"))
        mp.files.push_back(f.get<std::string>());
    out.push_back(std::move(mp));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth: generate the cohort.
// ---------------------------------------------------------------------------

inline void run_synth(const PipelineContext& ctx) {
  CohortSpec spec = ctx.cfg.cohort;
  spec.seed = derive_seed(ctx.cfg.seed, kSeedCohort);
  const std::filesystem::path dir = ctx.stage_dir("cohort");
  std::filesystem::create_directories(dir);

  const std::vector<SynthPatient> cohort = synth_cohort(spec);
  for (const SynthPatient& p : cohort)
    for (const IrregularSeries& s : p.series)
      write_series_csv(s, dir / series_filename(p.patient_id, s.variable_id));

  nlohmann::json manifest = cohort_manifest(cohort, spec);
  manifest.update(detail::stage_stamp(ctx, "synth"));
  detail::write_json_atomic(dir / "manifest.json", manifest);
  detail::write_json_atomic(dir / "provenance.json",
                            cohort_provenance_json(cohort));
  ctx.say("synth: wrote " + std::to_string(cohort.size()) + " patients to " +
          dir.string());
}

// ---------------------------------------------------------------------------
// clean: spike replacement, longest-dense-segment extraction, z-scoring.
// ---------------------------------------------------------------------------

inline void run_clean(const PipelineContext& ctx) {
  const std::filesystem::path in_dir = ctx.stage_dir("cohort");
  const nlohmann::json cohort_m =
      detail::require_json(in_dir / "manifest.json", "synth");
  const std::filesystem::path dir = ctx.stage_dir("clean");
  std::filesystem::create_directories(dir);

  nlohmann::json patients = nlohmann::json::array();
  for (const auto& mp : detail::manifest_patients(cohort_m)) {
    nlohmann::json series_reports = nlohmann::json::array();
    for (const std::string& file : mp.files) {
      const IrregularSeries raw = read_series_csv(in_dir / file);
      CleaningReport rep_spikes, rep_segment;
      const IrregularSeries despiked =
          replace_outliers(raw, ctx.cfg.cleaning.k_sigma,
                           ctx.cfg.cleaning.neighbor_window, &rep_spikes);
      const IrregularSeries segment = segment_longest(
          despiked, ctx.cfg.cleaning.max_gap_seconds, &rep_segment);
      const IrregularSeries cleaned = zscore(segment);
      write_series_csv(cleaned, dir / file);

      CleaningReport rep = rep_segment;
      rep.n_samples_in = rep_spikes.n_samples_in;
      rep.n_outliers_replaced = rep_spikes.n_outliers_replaced;
      rep.mean_used = rep_spikes.mean_used;
      rep.std_used = rep_spikes.std_used;
      series_reports.push_back(
          {{"file", file}, {"variable", cleaned.variable_id}, {"report", rep}});
    }
    patients.push_back({{"patient_id", mp.patient_id},
                        {"class_label", mp.class_label},
                        {"files", cohort_m.at("patients")
                                      [patients.size()]["files"]},
                        {"series", series_reports}});
  }

  nlohmann::json manifest = detail::stage_stamp(ctx, "clean");
  manifest["patients"] = patients;
  detail::write_json_atomic(dir / "manifest.json", manifest);
  ctx.say("clean: wrote cleaned records to " + dir.string());
}

// ---------------------------------------------------------------------------
// sweep: choose the resampling method and rate.
// ---------------------------------------------------------------------------

inline void run_sweep(const PipelineContext& ctx) {
  const std::filesystem::path in_dir = ctx.stage_dir("clean");
  const nlohmann::json clean_m =
      detail::require_json(in_dir / "manifest.json", "clean");
  const std::filesystem::path dir = ctx.stage_dir("sweep");
  std::filesystem::create_directories(dir);

  std::vector<IrregularSeries> series;
  const std::size_t cap = ctx.cfg.sweep.max_series;
  for (const auto& mp : detail::manifest_patients(clean_m)) {
    for (const std::string& file : mp.files) {
      if (cap != 0 && series.size() >= cap) break;
      series.push_back(read_series_csv(in_dir / file));
    }
    if (cap != 0 && series.size() >= cap) break;
  }
  if (series.empty()) throw MissingUpstreamArtifact("clean stage produced no records");

  SweepGrid grid;
  grid.f_lo_hz = ctx.cfg.sweep.fs_min_hz;
  grid.f_hi_hz = ctx.cfg.sweep.fs_max_hz;
  grid.f_step_hz = ctx.cfg.sweep.fs_step_hz;
  const SweepResult res = sweep_select(series, grid);

  write_sweep_csv(res, dir / "sweep.csv", detail::stamp_comment(ctx));
  nlohmann::json sel = detail::stage_stamp(ctx, "sweep");
  sel["method"] = to_string(res.best_method);
  sel["fs_hz"] = res.best_fs_hz;
  sel["mean_correlation"] = res.best_mean_correlation;
  sel["n_series"] = series.size();
  detail::write_json_atomic(dir / "selection.json", sel);
  ctx.say("sweep: selected " + std::string(to_string(res.best_method)) + " at " +
          format_double(res.best_fs_hz) + " Hz");
}

// ---------------------------------------------------------------------------
// cwt: pick the mother wavelet by cross-class scalogram correlation.
// ---------------------------------------------------------------------------

namespace detail {

inline UniformSeries resample_per_selection(const IrregularSeries& s,
                                            const nlohmann::json& selection) {
  const InterpMethod m =
      interp_method_from_string(selection.at("method").get<std::string>());
  const double fs = selection.at("fs_hz").get<double>();
  return resample_uniform(s, fs, m);
}

inline Matrix scalogram_plane(const UniformSeries& u, WaveletKind kind,
                              const PipelineContext& ctx) {
  const Scalogram sg = cwt(u, make_wavelet(kind),
                           ctx.cfg.wavelet.voices_per_octave,
                           ctx.cfg.wavelet.min_cycles);
  RenderOptions opt;
  opt.out_h = ctx.cfg.image.height;
  opt.out_w = ctx.cfg.image.width;
  opt.log_compress = ctx.cfg.image.log_compress;
  return render_plane(psd_map(sg).power, opt);
}

inline nlohmann::json score_json(const WaveletScore& s) {
  return {{"pooled_mean", s.pooled_mean},
          {"pooled_variance", s.pooled_variance},
          {"n_values", s.n_values},
          {"n_pairs", s.n_pairs}};
}

}  // namespace detail

inline void run_cwt(const PipelineContext& ctx) {
  const std::filesystem::path in_dir = ctx.stage_dir("clean");
  const nlohmann::json clean_m =
      detail::require_json(in_dir / "manifest.json", "clean");
  const nlohmann::json selection = detail::require_json(
      ctx.stage_dir("sweep") / "selection.json", "sweep");
  const std::filesystem::path dir = ctx.stage_dir("cwt");
  std::filesystem::create_directories(dir);

  const std::size_t per_class = ctx.cfg.wavelet.selection_patients_per_class;
  std::vector<Matrix> morse_s, morse_f, morlet_s, morlet_f;
  std::size_t used_s = 0, used_f = 0;
  for (const auto& mp : detail::manifest_patients(clean_m)) {
    const bool is_success = mp.class_label == 0;
    const bool is_failure = mp.class_label == 1;
    if (is_success && used_s >= per_class) continue;
    if (is_failure && used_f >= per_class) continue;
    if (!is_success && !is_failure) continue;
    for (const std::string& file : mp.files) {
      const UniformSeries u = detail::resample_per_selection(
          read_series_csv(in_dir / file), selection);
      (is_success ? morse_s : morse_f)
          .push_back(detail::scalogram_plane(u, WaveletKind::kMorse, ctx));
      (is_success ? morlet_s : morlet_f)
          .push_back(detail::scalogram_plane(u, WaveletKind::kMorlet, ctx));
    }
    (is_success ? used_s : used_f) += 1;
    if (used_s >= per_class && used_f >= per_class) break;
  }
  if (morse_s.empty() || morse_f.empty())
    throw MissingUpstreamArtifact(
        "wavelet selection needs at least one patient of each trained class");

  const WaveletChoice choice =
      select_wavelet(morse_s, morse_f, morlet_s, morlet_f);
  nlohmann::json out = detail::stage_stamp(ctx, "cwt");
  out["wavelet"] = to_string(choice.chosen);
  out["morse"] = detail::score_json(choice.morse_score);
  out["morlet"] = detail::score_json(choice.morlet_score);
  out["planes_per_class"] = {{"success", morse_s.size()},
                             {"failure", morse_f.size()}};
  detail::write_json_atomic(dir / "wavelet_choice.json", out);
  ctx.say("cwt: selected " + std::string(to_string(choice.chosen)));
}

// ---------------------------------------------------------------------------
// render: scalogram image tensors, one per patient.
// ---------------------------------------------------------------------------

inline void run_render(const PipelineContext& ctx) {
  const std::filesystem::path in_dir = ctx.stage_dir("clean");
  const nlohmann::json clean_m =
      detail::require_json(in_dir / "manifest.json", "clean");
  const nlohmann::json selection = detail::require_json(
      ctx.stage_dir("sweep") / "selection.json", "sweep");
  const nlohmann::json choice = detail::require_json(
      ctx.stage_dir("cwt") / "wavelet_choice.json", "cwt");
  const WaveletKind kind =
      wavelet_kind_from_string(choice.at("wavelet").get<std::string>());
  const std::filesystem::path dir = ctx.stage_dir("render");
  std::filesystem::create_directories(dir);

  nlohmann::json images = nlohmann::json::array();
  for (const auto& mp : detail::manifest_patients(clean_m)) {
    std::vector<Matrix> planes;
    planes.reserve(mp.files.size());
    for (const std::string& file : mp.files) {
      const UniformSeries u = detail::resample_per_selection(
          read_series_csv(in_dir / file), selection);
      planes.push_back(detail::scalogram_plane(u, kind, ctx));
    }
    LabeledImage li;
    li.image = stack_channels(planes);
    li.patient_id = mp.patient_id;
    li.class_label = mp.class_label;
    save_tensor(li, dir / mp.patient_id);
    if (ctx.cfg.image.export_png)
      for (std::size_t ch = 0; ch < planes.size(); ++ch)
        export_image(planes[ch],
                     dir / (mp.patient_id + "_" +
                            std::string(to_string(kChannelOrder[ch])) + ".png"),
                     ImageFormat::kPng);
    images.push_back({{"patient_id", mp.patient_id},
                      {"class_label", mp.class_label},
                      {"base", mp.patient_id}});
  }

  nlohmann::json manifest = detail::stage_stamp(ctx, "render");
  manifest["images"] = images;
  manifest["height"] = ctx.cfg.image.height;
  manifest["width"] = ctx.cfg.image.width;
  manifest["channels"] = kChannelOrder.size();
  manifest["wavelet"] = choice.at("wavelet");
  manifest["method"] = selection.at("method");
  manifest["fs_hz"] = selection.at("fs_hz");
  detail::write_json_atomic(dir / "manifest.json", manifest);
  ctx.say("render: wrote " + std::to_string(images.size()) + " tensors");
}

// ---------------------------------------------------------------------------
// Split + dataset assembly shared by train / tune / eval.
// ---------------------------------------------------------------------------

struct SplitIds {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> heldout_ids;  // the never-trained outcome class
};

// Stratified split over the two trained classes. Depends only on the master
// seed, the validation fraction and the manifest order, so every stage that
// recomputes it sees the same partition.
inline SplitIds stratified_split(const std::vector<detail::ManifestPatient>& ps,
                                 double val_fraction, std::uint64_t seed) {
  SplitIds out;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (ps[i].class_label == cls) idx.push_back(i);
    if (idx.size() < 2)
      throw ConfigInvalid("class " + std::to_string(cls) +
                          " needs at least 2 patients to split");
    Rng rng(derive_seed(seed, kSeedSplit, static_cast<std::uint64_t>(cls)));
    rng.shuffle(idx);
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(idx.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
    for (std::size_t k = 0; k < idx.size(); ++k)
      (k < n_val ? out.val_ids : out.train_ids)
          .push_back(ps[idx[k]].patient_id);
  }
  for (const auto& p : ps)
    if (p.class_label == 2) out.heldout_ids.push_back(p.patient_id);
  return out;
}

namespace detail {

struct RenderedSet {
  std::vector<ManifestPatient> patients;
  std::filesystem::path dir;
  std::size_t height = 0, width = 0;

  LabeledImage load(const std::string& patient_id) const {
    return load_tensor(dir / patient_id);
  }
};

inline RenderedSet open_rendered(const PipelineContext& ctx) {
  RenderedSet rs;
  rs.dir = ctx.stage_dir("render");
  const nlohmann::json m = require_json(rs.dir / "manifest.json", "render");
  for (const auto& im : m.at("images")) {
    ManifestPatient mp;
    mp.patient_id = im.at("patient_id").get<std::string>();
    mp.class_label = im.at("class_label").get<int>();
    rs.patients.push_back(std::move(mp));
  }
  rs.height = m.at("height").get<std::size_t>();
  rs.width = m.at("width").get<std::size_t>();
  return rs;
}

inline Dataset make_dataset(const RenderedSet& rs,
                            const std::vector<std::string>& ids,
                            int channel = -1) {
  Dataset d;
  d.reserve(ids.size());
  for (const std::string& id : ids) {
    LabeledImage li = rs.load(id);
    Sample s;
    s.x = channel < 0 ? std::move(li.image)
                      : select_channel(li.image, static_cast<std::size_t>(channel));
    s.label = li.class_label;
    d.push_back(std::move(s));
  }
  return d;
}

inline OptimizerKind optimizer_kind(const std::string& name) {
  return optimizer_from_string(name);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train: fit the classifier (plus per-channel models in ensemble mode).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_history_csv(const std::vector<EpochStats>& hist,
                              const std::filesystem::path& path,
                              const std::string& comment) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path.string());
  if (!comment.empty()) f << "# " << comment << '\n';
  f << "epoch,train_loss,val_loss,val_accuracy\n";
  for (const EpochStats& e : hist)
    f << e.epoch << ',' << format_double(e.train_loss) << ','
      << format_double(e.val_loss) << ',' << format_double(e.val_accuracy)
      << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

inline nlohmann::json train_result_json(const TrainResult& r) {
  return {{"best_epoch", r.best_epoch},
          {"best_val_loss", r.best_val_loss},
          {"stopped_early", r.stopped_early},
          {"reached_accuracy_goal", r.reached_accuracy_goal},
          {"epochs_run", r.history.size()},
          {"final_val_accuracy",
           r.history.empty() ? 0.0 : r.history.back().val_accuracy},
          {"param_count", r.model.total_params()}};
}

}  // namespace detail

inline void run_train(const PipelineContext& ctx) {
  const detail::RenderedSet rs = detail::open_rendered(ctx);
  const SplitIds split =
      stratified_split(rs.patients, ctx.cfg.train.val_fraction, ctx.cfg.seed);
  const std::filesystem::path dir = ctx.stage_dir("train");
  std::filesystem::create_directories(dir);

  const Dataset train_set = detail::make_dataset(rs, split.train_ids);
  const Dataset val_set = detail::make_dataset(rs, split.val_ids);

  TrainConfig tc;
  tc.lr = ctx.cfg.train.lr;
  tc.batch_size = ctx.cfg.train.batch;
  tc.optimizer = detail::optimizer_kind(ctx.cfg.train.optimizer);
  tc.max_epochs = ctx.cfg.train.max_epochs;
  tc.patience = ctx.cfg.train.patience;
  tc.min_delta = ctx.cfg.train.min_delta;
  tc.stop_at_val_accuracy = ctx.cfg.train.stop_at_val_accuracy;
  tc.seed = derive_seed(ctx.cfg.seed, kSeedTrain, 0);

  const std::size_t n_ch = kChannelOrder.size();
  const ModelSpec spec = stacked_cnn_spec(rs.height, rs.width, n_ch);
  ctx.say("train: fitting " + std::to_string(param_count(spec)) +
          " parameters on " + std::to_string(train_set.size()) + " patients");
  const TrainResult res = train_early_stop(spec, train_set, val_set, tc);

  nlohmann::json extra = detail::stage_stamp(ctx, "train");
  save_model(res.model, dir / "model.wwm", extra);
  detail::write_history_csv(res.history, dir / "history.csv",
                            detail::stamp_comment(ctx));

  nlohmann::json summary = detail::stage_stamp(ctx, "train");
  summary["result"] = detail::train_result_json(res);
  summary["split"] = {{"train", split.train_ids},
                      {"val", split.val_ids},
                      {"heldout", split.heldout_ids}};
  summary["ensemble"] = ctx.cfg.ensemble.enabled;

  if (ctx.cfg.ensemble.enabled) {
    nlohmann::json members = nlohmann::json::array();
    for (std::size_t ch = 0; ch < n_ch; ++ch) {
      const Dataset tr_ch = detail::make_dataset(rs, split.train_ids,
                                                 static_cast<int>(ch));
      const Dataset va_ch = detail::make_dataset(rs, split.val_ids,
                                                 static_cast<int>(ch));
      TrainConfig tcc = tc;
      tcc.seed = derive_seed(ctx.cfg.seed, kSeedTrain, ch + 1);
      const ModelSpec ch_spec = stacked_cnn_spec(rs.height, rs.width, 1);
      const TrainResult ch_res = train_early_stop(ch_spec, tr_ch, va_ch, tcc);
      const std::string token = to_string(kChannelOrder[ch]);
      save_model(ch_res.model, dir / ("model_" + token + ".wwm"), extra);
      nlohmann::json m = detail::train_result_json(ch_res);
      m["channel"] = token;
      members.push_back(m);
      ctx.say("train: channel " + token + " done (best epoch " +
              std::to_string(ch_res.best_epoch) + ")");
    }
    summary["members"] = members;
  }
  detail::write_json_atomic(dir / "summary.json", summary);
  ctx.say("train: best epoch " + std::to_string(res.best_epoch) +
          ", final val accuracy " +
          format_double(res.history.empty()
                            ? 0.0
                            : res.history.back().val_accuracy));
}

// ---------------------------------------------------------------------------
// tune: Bayesian search over architecture/optimizer settings. The objective
// is validation specificity (true-negative rate): the cost of resuming
// ventilation on a patient flagged healthy is the asymmetry that matters.
// ---------------------------------------------------------------------------

namespace detail {

inline ModelSpec scratch_cnn_from_config(const nlohmann::json& cfg,
                                         std::size_t h, std::size_t w,
                                         std::size_t c) {
  const auto n_conv = cfg.at("n_conv").get<std::size_t>();
  const auto filters =
      static_cast<std::size_t>(std::stoul(cfg.at("conv_filters").get<std::string>()));
  const auto n_fc = cfg.at("n_fc").get<std::size_t>();
  const auto units =
      static_cast<std::size_t>(std::stoul(cfg.at("fc_units").get<std::string>()));
  ModelSpec s;
  s.input = TensorShape::spatial(h, w, c);
  for (std::size_t i = 0; i < n_conv; ++i) {
    s.layers.push_back(LayerSpec::conv(filters));
    s.layers.push_back(LayerSpec::maxpool());
  }
  s.layers.push_back(LayerSpec::dropout(0.5));
  s.layers.push_back(LayerSpec::relu());
  s.layers.push_back(LayerSpec::flatten());
  for (std::size_t i = 0; i < n_fc; ++i)
    s.layers.push_back(LayerSpec::dense(units));
  s.layers.push_back(LayerSpec::dense(2));
  s.layers.push_back(LayerSpec::softmax());
  return s;
}

inline ModelSpec channel_head_from_config(const nlohmann::json& cfg,
                                          std::size_t h, std::size_t w,
                                          std::size_t c) {
  const auto units = cfg.at("fc_units").get<std::size_t>();
  ModelSpec s;
  s.input = TensorShape::spatial(h, w, c);
  s.layers = {LayerSpec::conv(32),     LayerSpec::maxpool(),
              LayerSpec::conv(32),     LayerSpec::maxpool(),
              LayerSpec::dropout(0.5), LayerSpec::relu(),
              LayerSpec::flatten(),    LayerSpec::dense(units),
              LayerSpec::dense(2),     LayerSpec::softmax()};
  return s;
}

}  // namespace detail

inline void run_tune(const PipelineContext& ctx) {
  const detail::RenderedSet rs = detail::open_rendered(ctx);
  const SplitIds split =
      stratified_split(rs.patients, ctx.cfg.train.val_fraction, ctx.cfg.seed);
  const std::filesystem::path dir = ctx.stage_dir("tune");
  std::filesystem::create_directories(dir);

  const Dataset train_set = detail::make_dataset(rs, split.train_ids);
  const Dataset val_set = detail::make_dataset(rs, split.val_ids);
  const bool scratch = ctx.cfg.hpo.space == "scratch_cnn";
  const SearchSpace space = scratch ? scratch_cnn_space() : channel_head_space();

  const TrialObjective objective = [&](const nlohmann::json& cfg,
                                       Trial& tr) -> double {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelSpec spec =
        scratch
            ? detail::scratch_cnn_from_config(cfg, rs.height, rs.width,
                                              kChannelOrder.size())
            : detail::channel_head_from_config(cfg, rs.height, rs.width,
                                               kChannelOrder.size());
    TrainConfig tc;
    tc.lr = scratch ? cfg.at("lr").get<double>() : ctx.cfg.train.lr;
    tc.batch_size = scratch ? cfg.at("batch").get<std::size_t>()
                            : ctx.cfg.train.batch;
    tc.optimizer = scratch ? OptimizerKind::kAdam
                           : detail::optimizer_kind(
                                 cfg.at("optimizer").get<std::string>());
    tc.max_epochs = ctx.cfg.hpo.max_epochs;
    tc.patience = ctx.cfg.hpo.max_epochs;  // no early stop inside short trials
    tc.stop_at_val_accuracy = -1.0;
    tc.seed = derive_seed(ctx.cfg.seed, kSeedTrial, tr.index);

    const TrainResult res = train_early_stop(spec, train_set, val_set, tc);
    const EvalResult ev = evaluate(res.model, val_set);
    std::vector<int> labels;
    labels.reserve(val_set.size());
    for (const Sample& s : val_set) labels.push_back(s.label);
    const MetricSet m = classification_metrics(ev.predicted, labels);
    tr.epochs = res.history.size();
    tr.seconds = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
    return m.tnr;
  };

  const std::uint64_t tune_seed = derive_seed(ctx.cfg.seed, kSeedTune);
  const BoResult res = bo_run(space, objective, ctx.cfg.hpo.budget, tune_seed);

  write_trials_csv(res.trials, tune_seed, dir / "trials.csv",
                   detail::stamp_comment(ctx));
  nlohmann::json best = detail::stage_stamp(ctx, "tune");
  best["space"] = space.name;
  best["best_config"] = res.best_config;
  best["best_objective_tnr"] = res.best_objective;
  best["best_trial"] = res.best_trial;
  best["budget"] = ctx.cfg.hpo.budget;
  detail::write_json_atomic(dir / "best.json", best);
  ctx.say("tune: best TNR " + format_double(res.best_objective) + " at trial " +
          std::to_string(res.best_trial));
}

// ---------------------------------------------------------------------------
// eval: validation metrics for the trained model (and the ensemble when
// enabled), plus the held-out reintubated group.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json metric_set_json(const MetricSet& m) {
  return {{"tp", m.tp},
          {"tn", m.tn},
          {"fp", m.fp},
          {"fn", m.fn},
          {"accuracy", m.accuracy},
          {"recall", m.recall},
          {"precision", m.precision},
          {"f1", m.f1},
          {"tnr", m.tnr},
          {"recall_degenerate", m.recall_degenerate},
          {"precision_degenerate", m.precision_degenerate},
          {"f1_degenerate", m.f1_degenerate},
          {"tnr_degenerate", m.tnr_degenerate}};
}

inline void write_roc_csv(const RocCurve& rc, const std::filesystem::path& path,
                          const std::string& comment) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path.string());
  if (!comment.empty()) f << "# " << comment << '\n';
  f << "threshold,fpr,tpr\n";
  for (const RocPoint& p : rc.points)
    f << format_double(p.threshold) << ',' << format_double(p.fpr) << ','
      << format_double(p.tpr) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace detail

inline void run_eval(const PipelineContext& ctx) {
  const detail::RenderedSet rs = detail::open_rendered(ctx);
  const std::filesystem::path train_dir = ctx.stage_dir("train");
  const nlohmann::json summary =
      detail::require_json(train_dir / "summary.json", "train");
  detail::require_file(train_dir / "model.wwm", "train");
  const std::filesystem::path dir = ctx.stage_dir("eval");
  std::filesystem::create_directories(dir);

  const std::vector<std::string> val_ids =
      summary.at("split").at("val").get<std::vector<std::string>>();
  const std::vector<std::string> held_ids =
      summary.at("split").at("heldout").get<std::vector<std::string>>();
  const Dataset val_set = detail::make_dataset(rs, val_ids);
  std::vector<int> labels;
  labels.reserve(val_set.size());
  for (const Sample& s : val_set) labels.push_back(s.label);

  const LoadedModel lm = load_model(train_dir / "model.wwm");
  const EvalResult ev = evaluate(lm.model, val_set);
  std::vector<double> scores;
  scores.reserve(ev.probs.size());
  for (const auto& p : ev.probs) scores.push_back(p[1]);

  {
    std::ofstream f(dir / "predictions.csv");
    if (!f) throw IoError("cannot open for write: predictions.csv");
    f << "# " << detail::stamp_comment(ctx) << '\n';
    f << "patient_id,label,score_failure,predicted\n";
    for (std::size_t i = 0; i < val_ids.size(); ++i)
      f << val_ids[i] << ',' << labels[i] << ',' << format_double(scores[i])
        << ',' << ev.predicted[i] << '\n';
  }

  const MetricSet m = classification_metrics(ev.predicted, labels);
  const RocCurve rc = roc_curve(scores, labels);
  detail::write_roc_csv(rc, dir / "roc.csv", detail::stamp_comment(ctx));

  nlohmann::json out = detail::stage_stamp(ctx, "eval");
  out["n_val"] = val_set.size();
  out["metrics"] = detail::metric_set_json(m);
  out["auc"] = rc.auc;
  out["mean_val_loss"] = ev.mean_loss;

  std::vector<RunRow> rows{{"0", m.accuracy, m.recall, m.precision, m.f1}};

  if (ctx.cfg.ensemble.enabled) {
    std::vector<std::vector<std::vector<double>>> member_probs;  // [ch][i][k]
    std::vector<double> member_auc;
    for (std::size_t ch = 0; ch < kChannelOrder.size(); ++ch) {
      const std::string token = to_string(kChannelOrder[ch]);
      const std::filesystem::path mp = train_dir / ("model_" + token + ".wwm");
      detail::require_file(mp, "train (ensemble mode)");
      const LoadedModel cm = load_model(mp);
      const Dataset va_ch = detail::make_dataset(rs, val_ids,
                                                 static_cast<int>(ch));
      const EvalResult ce = evaluate(cm.model, va_ch);
      std::vector<double> ch_scores;
      ch_scores.reserve(ce.probs.size());
      for (const auto& p : ce.probs) ch_scores.push_back(p[1]);
      member_auc.push_back(roc_auc(ch_scores, labels));
      member_probs.push_back(ce.probs);
    }
    std::vector<int> ens_pred;
    std::vector<double> ens_scores;
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      std::vector<std::vector<double>> per_model;
      per_model.reserve(member_probs.size());
      for (const auto& mp : member_probs) per_model.push_back(mp[i]);
      const std::vector<double> blend = weighted_ensemble(per_model, member_auc);
      ens_pred.push_back(ensemble_predict(blend));
      ens_scores.push_back(blend[1]);
    }
    const MetricSet em = classification_metrics(ens_pred, labels);
    nlohmann::json ens = detail::metric_set_json(em);
    ens["auc"] = roc_auc(ens_scores, labels);
    nlohmann::json weights = nlohmann::json::array();
    for (std::size_t ch = 0; ch < member_auc.size(); ++ch)
      weights.push_back({{"channel", to_string(kChannelOrder[ch])},
                         {"auc", member_auc[ch]}});
    out["ensemble"] = {{"metrics", ens}, {"member_weights", weights}};
    rows.push_back({"ensemble", em.accuracy, em.recall, em.precision, em.f1});
  }

  if (!held_ids.empty()) {
    // The held-out group has no trained label, so score it directly rather
    // than through evaluate(), whose loss needs a valid class index.
    const Dataset held = detail::make_dataset(rs, held_ids);
    std::size_t flagged = 0;
    std::ofstream f(dir / "predictions_heldout.csv");
    if (!f) throw IoError("cannot open for write: predictions_heldout.csv");
    f << "# " << detail::stamp_comment(ctx) << '\n';
    f << "patient_id,score_failure,predicted\n";
    for (std::size_t i = 0; i < held_ids.size(); ++i) {
      const std::vector<double> p = lm.model.predict_proba(held[i].x);
      const int pred = p[1] > p[0] ? 1 : 0;  // ties keep the success class
      if (pred == 1) ++flagged;
      f << held_ids[i] << ',' << format_double(p[1]) << ',' << pred << '\n';
    }
    out["heldout"] = {{"n", held_ids.size()},
                      {"flagged_failure", flagged},
                      {"failure_fraction",
                       static_cast<double>(flagged) /
                           static_cast<double>(held_ids.size())}};
  }

  write_runs_csv(rows, dir / "runs.csv", detail::stamp_comment(ctx));
  const AggregateStats agg = run_aggregate(rows);
  out["aggregate"] = {{"n_runs", agg.n_runs},
                      {"mean_accuracy", agg.mean_accuracy},
                      {"std_accuracy", agg.std_accuracy},
                      {"mean_recall", agg.mean_recall},
                      {"std_recall", agg.std_recall},
                      {"mean_precision", agg.mean_precision},
                      {"std_precision", agg.std_precision},
                      {"mean_f1", agg.mean_f1},
                      {"std_f1", agg.std_f1},
                      {"std_degenerate", agg.std_degenerate}};
  detail::write_json_atomic(dir / "metrics.json", out);
  ctx.say("eval: accuracy " + format_double(m.accuracy) + ", auc " +
          format_double(rc.auc));
}

// ---------------------------------------------------------------------------
// occlude: window-occlusion sensitivity for one validation patient per class.
// ---------------------------------------------------------------------------

inline void run_occlude(const PipelineContext& ctx) {
  const detail::RenderedSet rs = detail::open_rendered(ctx);
  const std::filesystem::path train_dir = ctx.stage_dir("train");
  const nlohmann::json summary =
      detail::require_json(train_dir / "summary.json", "train");
  detail::require_file(train_dir / "model.wwm", "train");
  const std::filesystem::path dir = ctx.stage_dir("occlude");
  std::filesystem::create_directories(dir);

  const LoadedModel lm = load_model(train_dir / "model.wwm");
  OcclusionParams op;
  op.window = ctx.cfg.occlusion.window;
  op.stride = ctx.cfg.occlusion.stride;
  op.fill = ctx.cfg.occlusion.fill == "zero" ? OcclusionParams::Fill::kZero
                                             : OcclusionParams::Fill::kChannelMean;

  const std::vector<std::string> val_ids =
      summary.at("split").at("val").get<std::vector<std::string>>();
  std::map<int, std::string> target_per_class;
  for (const std::string& id : val_ids) {
    for (const auto& p : rs.patients)
      if (p.patient_id == id && !target_per_class.count(p.class_label))
        target_per_class[p.class_label] = id;
  }
  if (target_per_class.empty())
    throw MissingUpstreamArtifact("no validation patients to occlude");

  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [cls, id] : target_per_class) {
    const LabeledImage li = rs.load(id);
    const OcclusionMap om = occlusion_map(lm.model, li.image, cls, op);
    write_occlusion_csv(om, dir / ("occlusion_" + id + ".csv"),
                        detail::stamp_comment(ctx));
    entries.push_back({{"patient_id", id},
                       {"class_label", cls},
                       {"grid_rows", om.grids.empty() ? 0 : om.grids[0].rows},
                       {"grid_cols", om.grids.empty() ? 0 : om.grids[0].cols},
                       {"n_forward_passes", om.n_forward_passes},
                       {"window", op.window},
                       {"stride", op.stride}});
  }
  nlohmann::json out = detail::stage_stamp(ctx, "occlude");
  out["entries"] = entries;
  detail::write_json_atomic(dir / "summary.json", out);
  ctx.say("occlude: wrote " + std::to_string(entries.size()) + " maps");
}

// ---------------------------------------------------------------------------
// Stage dispatch.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& pipeline_stage_names() {
  static const std::vector<std::string> names = {
      "synth", "clean", "sweep",  "cwt",     "render",
      "train", "tune",  "eval",   "occlude", "all"};
  return names;
}

inline void run_stage(const PipelineContext& ctx, const std::string& stage) {
  ctx.cfg.validate();
  std::filesystem::create_directories(ctx.out);
  if (stage == "synth") return run_synth(ctx);
  if (stage == "clean") return run_clean(ctx);
  if (stage == "sweep") return run_sweep(ctx);
  if (stage == "cwt") return run_cwt(ctx);
  if (stage == "render") return run_render(ctx);
  if (stage == "train") return run_train(ctx);
  if (stage == "tune") return run_tune(ctx);
  if (stage == "eval") return run_eval(ctx);
  if (stage == "occlude") return run_occlude(ctx);
  if (stage == "all") {
    run_synth(ctx);
    run_clean(ctx);
    run_sweep(ctx);
    run_cwt(ctx);
    run_render(ctx);
    run_train(ctx);
    if (ctx.cfg.hpo.enabled) run_tune(ctx);
    run_eval(ctx);
    run_occlude(ctx);
    return;
  }
  throw ConfigInvalid("unknown stage '" + stage + "'");
}

// Exit-code mapping shared by every command-line entry point.
//   0 success, 1 unexpected, 2 bad configuration or usage, 3 missing
//   upstream artifact, 4 file I/O failure, 5 numeric or data failure,
//   6 artifact integrity mismatch.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigInvalid*>(&e) ||
      dynamic_cast<const InvalidArgument*>(&e))
    return 2;
  if (dynamic_cast<const MissingUpstreamArtifact*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const VersionMismatch*>(&e) ||
      dynamic_cast<const ChecksumMismatch*>(&e))
    return 6;
  if (dynamic_cast<const Error*>(&e)) return 5;
  return 1;
}

}  // namespace weanwave
