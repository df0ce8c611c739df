#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "weanwave/common.hpp"
#include "weanwave/series.hpp"
#include "weanwave/variables.hpp"

namespace weanwave {

// ---------------------------------------------------------------------------
// Synthetic cohort generator.
//
// Each record is an irregularly sampled per-breath statistic whose slow
// modulation frequency depends on the outcome class. Amplitudes and baselines
// are plausible per variable but carry no class information on purpose: the
// cleaning stage z-scores every segment, so only spectral structure survives
// into the scalograms. Records are corrupted with far-out spikes and with
// dropouts long enough to split them, so the cleaning stage has real work.
// ---------------------------------------------------------------------------

// Default modulation frequency of the dominant scalogram ridge per outcome
// class (success, failure, reintubated). Per-variable scaling keeps the eight
// channels distinct while the default class bands (<=0.083, 0.15..0.22,
// 0.095..0.14 Hz) never overlap.
inline constexpr std::array<double, 3> kClassRidgeHz = {0.055, 0.150, 0.095};

struct CohortSpec {
  std::size_t n_success = 12;
  std::size_t n_failure = 12;
  std::size_t n_reintubated = 4;
  std::array<double, 3> class_ridge_hz = kClassRidgeHz;
  double duration_seconds = 1800.0;
  double nominal_interval_seconds = 0.5;
  double interval_jitter = 0.3;  // dt factor drawn from [1-j, 1+j]
  std::size_t gaps_per_series = 2;
  double gap_min_seconds = 25.0;
  double gap_max_seconds = 40.0;
  double outlier_rate = 0.003;       // per-sample spike probability
  double outlier_sigma_lo = 10.0;    // spike magnitude range, in clean sigmas
  double outlier_sigma_hi = 14.0;
  double noise_fraction = 0.25;      // noise sigma as a fraction of amplitude
  std::uint64_t seed = 0x5EEDULL;

  std::size_t total_patients() const {
    return n_success + n_failure + n_reintubated;
  }
};

inline void to_json(nlohmann::json& j, const CohortSpec& s) {
  j = {{"n_success", s.n_success},
       {"n_failure", s.n_failure},
       {"n_reintubated", s.n_reintubated},
       {"class_ridge_hz", s.class_ridge_hz},
       {"duration_seconds", s.duration_seconds},
       {"nominal_interval_seconds", s.nominal_interval_seconds},
       {"interval_jitter", s.interval_jitter},
       {"gaps_per_series", s.gaps_per_series},
       {"gap_min_seconds", s.gap_min_seconds},
       {"gap_max_seconds", s.gap_max_seconds},
       {"outlier_rate", s.outlier_rate},
       {"outlier_sigma_lo", s.outlier_sigma_lo},
       {"outlier_sigma_hi", s.outlier_sigma_hi},
       {"noise_fraction", s.noise_fraction},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, CohortSpec& s) {
  CohortSpec d;
  s.n_success = j.value("n_success", d.n_success);
  s.n_failure = j.value("n_failure", d.n_failure);
  s.n_reintubated = j.value("n_reintubated", d.n_reintubated);
  s.class_ridge_hz = j.value("class_ridge_hz", d.class_ridge_hz);
  s.duration_seconds = j.value("duration_seconds", d.duration_seconds);
  s.nominal_interval_seconds =
      j.value("nominal_interval_seconds", d.nominal_interval_seconds);
  s.interval_jitter = j.value("interval_jitter", d.interval_jitter);
  s.gaps_per_series = j.value("gaps_per_series", d.gaps_per_series);
  s.gap_min_seconds = j.value("gap_min_seconds", d.gap_min_seconds);
  s.gap_max_seconds = j.value("gap_max_seconds", d.gap_max_seconds);
  s.outlier_rate = j.value("outlier_rate", d.outlier_rate);
  s.outlier_sigma_lo = j.value("outlier_sigma_lo", d.outlier_sigma_lo);
  s.outlier_sigma_hi = j.value("outlier_sigma_hi", d.outlier_sigma_hi);
  s.noise_fraction = j.value("noise_fraction", d.noise_fraction);
  s.seed = j.value("seed", d.seed);
}

inline double variable_ridge_scale(std::size_t channel) {
  return 1.0 + 0.06 * static_cast<double>(channel);
}

inline double synth_ridge_hz(const CohortSpec& spec, Outcome outcome,
                             std::size_t channel) {
  return spec.class_ridge_hz[static_cast<std::size_t>(outcome)] *
         variable_ridge_scale(channel);
}

// Ridge at the default class frequencies.
inline double synth_ridge_hz(Outcome outcome, std::size_t channel) {
  return synth_ridge_hz(CohortSpec{}, outcome, channel);
}

// Baseline level and modulation amplitude per variable, in natural units.
struct VariableProfile {
  double baseline;
  double amplitude;
};

inline VariableProfile variable_profile(VariableId id) {
  switch (id) {
    case VariableId::kFOverVt: return {45.0, 8.0};
    case VariableId::kVtOverTi: return {0.45, 0.08};
    case VariableId::kTTot: return {3.2, 0.5};
    case VariableId::kTiOverTTot: return {0.33, 0.05};
    case VariableId::kTi: return {1.1, 0.15};
    case VariableId::kTe: return {2.1, 0.35};
    case VariableId::kVt: return {0.45, 0.07};
    case VariableId::kRr: return {19.0, 3.5};
  }
  throw InvalidArgument("unknown variable id");
}

// Injected dropout, recorded by the last sample time before it and the first
// after it. The cleaning stage must split exactly between these two times.
struct InjectedGap {
  double last_before = 0.0;
  double first_after = 0.0;
};

struct SeriesProvenance {
  VariableId variable = VariableId::kFOverVt;
  double ridge_hz = 0.0;
  std::vector<double> outlier_times;
  std::vector<InjectedGap> gaps;
};

struct SynthPatient {
  std::string patient_id;
  Outcome outcome = Outcome::kSuccess;
  std::vector<IrregularSeries> series;          // channel order
  std::vector<SeriesProvenance> provenance;     // parallel to series
};

namespace detail {

inline std::string patient_identifier(Outcome outcome, std::size_t index_in_class) {
  const char prefix = outcome == Outcome::kSuccess
                          ? 's'
                          : outcome == Outcome::kFailure ? 'f' : 'r';
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%03zu", prefix, index_in_class);
  return buf;
}

}  // namespace detail

// Generates one record. Every (patient, channel) pair owns an independent
// random stream derived from the cohort seed, so records are reproducible
// in isolation and insensitive to generation order.
inline IrregularSeries synth_series(const CohortSpec& spec, Outcome outcome,
                                    std::size_t patient_global_index,
                                    std::size_t channel,
                                    SeriesProvenance* provenance = nullptr) {
  if (spec.duration_seconds <= 0.0 || spec.nominal_interval_seconds <= 0.0)
    throw InvalidArgument("cohort durations must be positive");
  if (!(spec.interval_jitter >= 0.0) || spec.interval_jitter >= 1.0)
    throw InvalidArgument("interval_jitter must lie in [0, 1)");
  for (double f : spec.class_ridge_hz)
    if (!(f > 0.0)) throw InvalidArgument("class ridge frequencies must be positive");

  const VariableId var = kChannelOrder[channel];
  const VariableProfile prof = variable_profile(var);
  const double f_mod = synth_ridge_hz(spec, outcome, channel);

  Rng rng(derive_seed(spec.seed, patient_global_index, channel));
  const double phi1 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double phi2 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);

  IrregularSeries s;
  s.patient_id = detail::patient_identifier(
      outcome, patient_global_index);  // refined by synth_patient
  s.variable_id = to_string(var);
  double t = 0.0;
  while (t <= spec.duration_seconds) {
    const double w = 2.0 * 3.14159265358979323846 * f_mod * t;
    const double clean = prof.baseline +
                         prof.amplitude * (std::sin(w + phi1) +
                                           0.4 * std::sin(2.0 * w + phi2)) +
                         spec.noise_fraction * prof.amplitude * rng.normal();
    s.t.push_back(t);
    s.x.push_back(clean);
    t += spec.nominal_interval_seconds *
         (1.0 + spec.interval_jitter * (2.0 * rng.uniform() - 1.0));
  }

  // Dropouts: delete every sample inside each window. Window centres sit at
  // even fractions of the record with a +-8% wobble so the surviving
  // segments have varied lengths.
  std::vector<InjectedGap> gaps;
  for (std::size_t g = 0; g < spec.gaps_per_series; ++g) {
    const double frac = static_cast<double>(g + 1) /
                        static_cast<double>(spec.gaps_per_series + 1);
    const double centre = spec.duration_seconds *
                          (frac + 0.08 * (2.0 * rng.uniform() - 1.0));
    const double len = rng.uniform(spec.gap_min_seconds, spec.gap_max_seconds);
    const double lo = centre - len / 2.0, hi = centre + len / 2.0;
    InjectedGap gap;
    bool saw_before = false, saw_after = false;
    std::vector<double> nt, nx;
    nt.reserve(s.t.size());
    nx.reserve(s.x.size());
    for (std::size_t i = 0; i < s.t.size(); ++i) {
      if (s.t[i] > lo && s.t[i] < hi) continue;
      if (s.t[i] <= lo) {
        gap.last_before = s.t[i];
        saw_before = true;
      } else if (!saw_after) {
        gap.first_after = s.t[i];
        saw_after = true;
      }
      nt.push_back(s.t[i]);
      nx.push_back(s.x[i]);
    }
    if (saw_before && saw_after && gap.first_after - gap.last_before > 0.0) {
      s.t = std::move(nt);
      s.x = std::move(nx);
      gaps.push_back(gap);
    }
  }

  // Spikes on the surviving samples, far beyond any plausible value. A spike
  // lands at 10..14 clean sigmas; even after the spikes inflate the series
  // statistics it stays several detection thresholds out.
  const double sigma_clean = s.x.size() > 1 ? sample_std(s.x) : 1.0;
  const double mu_clean = mean_of(s.x);
  std::vector<double> outlier_times;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    if (rng.uniform() >= spec.outlier_rate) continue;
    const double mag = rng.uniform(spec.outlier_sigma_lo, spec.outlier_sigma_hi);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    s.x[i] = mu_clean + sign * mag * sigma_clean;
    outlier_times.push_back(s.t[i]);
  }
  if (outlier_times.empty() && spec.outlier_rate > 0.0 && s.x.size() > 4) {
    const std::size_t mid = s.x.size() / 2;
    s.x[mid] = mu_clean + spec.outlier_sigma_hi * sigma_clean;
    outlier_times.push_back(s.t[mid]);
  }

  if (provenance) {
    provenance->variable = var;
    provenance->ridge_hz = f_mod;
    provenance->outlier_times = std::move(outlier_times);
    provenance->gaps = std::move(gaps);
  }
  return s;
}

inline SynthPatient synth_patient(const CohortSpec& spec, Outcome outcome,
                                  std::size_t index_in_class,
                                  std::size_t global_index) {
  SynthPatient p;
  p.patient_id = detail::patient_identifier(outcome, index_in_class);
  p.outcome = outcome;
  p.series.reserve(kChannelOrder.size());
  p.provenance.resize(kChannelOrder.size());
  for (std::size_t ch = 0; ch < kChannelOrder.size(); ++ch) {
    IrregularSeries s =
        synth_series(spec, outcome, global_index, ch, &p.provenance[ch]);
    s.patient_id = p.patient_id;
    p.series.push_back(std::move(s));
  }
  return p;
}

inline std::vector<SynthPatient> synth_cohort(const CohortSpec& spec) {
  std::vector<SynthPatient> cohort;
  cohort.reserve(spec.total_patients());
  std::size_t global = 0;
  const std::pair<Outcome, std::size_t> blocks[] = {
      {Outcome::kSuccess, spec.n_success},
      {Outcome::kFailure, spec.n_failure},
      {Outcome::kReintubated, spec.n_reintubated}};
  for (const auto& [outcome, count] : blocks)
    for (std::size_t i = 0; i < count; ++i, ++global)
      cohort.push_back(synth_patient(spec, outcome, i, global));
  return cohort;
}

// ---------------------------------------------------------------------------
// On-disk form: one CSV per record plus a manifest listing every patient.
// ---------------------------------------------------------------------------

inline nlohmann::json cohort_manifest(const std::vector<SynthPatient>& cohort,
                                      const CohortSpec& spec) {
  nlohmann::json patients = nlohmann::json::array();
  for (const SynthPatient& p : cohort) {
    nlohmann::json files = nlohmann::json::array();
    for (const IrregularSeries& s : p.series)
      files.push_back(series_filename(p.patient_id, s.variable_id));
    patients.push_back({{"patient_id", p.patient_id},
                        {"class_label", static_cast<int>(p.outcome)},
                        {"outcome", to_string(p.outcome)},
                        {"files", files}});
  }
  return {{"library_version", kLibraryVersion},
          {"spec", spec},
          {"patients", patients}};
}

inline nlohmann::json cohort_provenance_json(
    const std::vector<SynthPatient>& cohort) {
  nlohmann::json out = nlohmann::json::array();
  for (const SynthPatient& p : cohort) {
    nlohmann::json per_series = nlohmann::json::array();
    for (std::size_t ch = 0; ch < p.provenance.size(); ++ch) {
      const SeriesProvenance& pr = p.provenance[ch];
      nlohmann::json gaps = nlohmann::json::array();
      for (const InjectedGap& g : pr.gaps)
        gaps.push_back({{"last_before", g.last_before},
                        {"first_after", g.first_after}});
      per_series.push_back({{"variable", to_string(pr.variable)},
                            {"ridge_hz", pr.ridge_hz},
                            {"outlier_times", pr.outlier_times},
                            {"gaps", gaps}});
    }
    out.push_back({{"patient_id", p.patient_id},
                   {"class_label", static_cast<int>(p.outcome)},
                   {"series", per_series}});
  }
  return out;
}

inline void write_cohort(const std::vector<SynthPatient>& cohort,
                         const CohortSpec& spec,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const SynthPatient& p : cohort)
    for (const IrregularSeries& s : p.series)
      write_series_csv(s, dir / series_filename(p.patient_id, s.variable_id));
  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot write cohort manifest in " + dir.string());
  mf << cohort_manifest(cohort, spec).dump(2) << '\n';
  std::ofstream pf(dir / "provenance.json");
  if (!pf) throw IoError("cannot write cohort provenance in " + dir.string());
  pf << cohort_provenance_json(cohort).dump(2) << '\n';
}

}  // namespace weanwave
