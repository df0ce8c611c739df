#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weanwave/common.hpp"

namespace weanwave {

// ---------------------------------------------------------------------------
// Irregularly sampled scalar time series. Times are seconds, strictly
// increasing; t and x always have equal length.
// ---------------------------------------------------------------------------

struct IrregularSeries {
  std::string patient_id;
  std::string variable_id;
  std::vector<double> t;
  std::vector<double> x;

  std::size_t size() const { return t.size(); }
  double span_seconds() const { return t.empty() ? 0.0 : t.back() - t.front(); }
};

inline void validate_series(const IrregularSeries& s,
                            bool allow_empty = false) {
  if (s.t.size() != s.x.size())
    throw ShapeMismatch("series time/value length mismatch");
  if (!allow_empty && s.t.empty()) throw EmptySeries("series has no samples");
  for (std::size_t i = 1; i < s.t.size(); ++i)
    if (!(s.t[i] > s.t[i - 1]))
      throw NonMonotonicTime("timestamps must be strictly increasing at index " +
                             std::to_string(i));
}

// Inclusive index range into a series.
struct IndexRange {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t count() const { return last - first + 1; }
  bool operator==(const IndexRange&) const = default;
};

struct CleaningReport {
  std::size_t n_samples_in = 0;
  std::size_t n_samples_out = 0;
  std::size_t n_outliers_replaced = 0;
  double mean_used = 0.0;
  double std_used = 0.0;
  std::vector<IndexRange> segments_found;
  IndexRange chosen_segment;
};

// ---------------------------------------------------------------------------
// Cleaning operations.
// ---------------------------------------------------------------------------

// Replaces samples farther than k_sigma sample standard deviations from the
// mean by the mean of up to neighbor_window original values on each side.
// Detection is a single pass against the pre-replacement mean/std; replaced
// values never trigger or feed further replacements. A zero standard
// deviation (constant input) is a no-op.
inline IrregularSeries replace_outliers(const IrregularSeries& s,
                                        double k_sigma = 5.0,
                                        std::size_t neighbor_window = 3,
                                        CleaningReport* report = nullptr) {
  validate_series(s);
  if (k_sigma <= 0.0) throw InvalidArgument("k_sigma must be positive");
  if (neighbor_window == 0)
    throw InvalidArgument("neighbor_window must be positive");
  const std::size_t n = s.size();

  IrregularSeries out = s;
  CleaningReport rep;
  rep.n_samples_in = n;
  rep.n_samples_out = n;
  rep.segments_found = {{0, n - 1}};
  rep.chosen_segment = {0, n - 1};

  double mu = mean_of(s.x);
  double sigma = 0.0;
  if (n >= 2) {
    double ss = 0.0;
    for (double v : s.x) ss += (v - mu) * (v - mu);
    sigma = std::sqrt(ss / static_cast<double>(n - 1));
  }
  rep.mean_used = mu;
  rep.std_used = sigma;

  if (sigma > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(s.x[i] - mu) > k_sigma * sigma) {
        double acc = 0.0;
        std::size_t cnt = 0;
        const std::size_t lo = i >= neighbor_window ? i - neighbor_window : 0;
        const std::size_t hi = std::min(n - 1, i + neighbor_window);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          acc += s.x[j];  // original values; replacements do not cascade
          ++cnt;
        }
        if (cnt > 0) {
          out.x[i] = acc / static_cast<double>(cnt);
          ++rep.n_outliers_replaced;
        }
      }
    }
  }
  if (report) *report = rep;
  return out;
}

// Splits the series wherever the time gap exceeds max_gap_s and keeps the
// segment with the most samples; ties go to the earliest segment.
inline IrregularSeries segment_longest(const IrregularSeries& s,
                                       double max_gap_s = 20.0,
                                       CleaningReport* report = nullptr) {
  validate_series(s);
  if (max_gap_s <= 0.0) throw InvalidArgument("max_gap_s must be positive");
  const std::size_t n = s.size();

  CleaningReport rep;
  rep.n_samples_in = n;
  std::size_t start = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (s.t[i] - s.t[i - 1] > max_gap_s) {
      rep.segments_found.push_back({start, i - 1});
      start = i;
    }
  }
  rep.segments_found.push_back({start, n - 1});

  std::size_t best = 0;
  for (std::size_t k = 1; k < rep.segments_found.size(); ++k)
    if (rep.segments_found[k].count() > rep.segments_found[best].count())
      best = k;  // strict > keeps the earliest on ties
  rep.chosen_segment = rep.segments_found[best];
  rep.n_samples_out = rep.chosen_segment.count();

  IrregularSeries out;
  out.patient_id = s.patient_id;
  out.variable_id = s.variable_id;
  out.t.assign(s.t.begin() + static_cast<std::ptrdiff_t>(rep.chosen_segment.first),
               s.t.begin() + static_cast<std::ptrdiff_t>(rep.chosen_segment.last) + 1);
  out.x.assign(s.x.begin() + static_cast<std::ptrdiff_t>(rep.chosen_segment.first),
               s.x.begin() + static_cast<std::ptrdiff_t>(rep.chosen_segment.last) + 1);
  if (report) *report = rep;
  return out;
}

// Standardizes values to zero mean, unit sample (n-1) standard deviation.
inline IrregularSeries zscore(const IrregularSeries& s) {
  validate_series(s);
  const std::size_t n = s.size();
  if (n < 2) throw SigmaZero("zscore needs at least 2 samples");
  const double mu = mean_of(s.x);
  double ss = 0.0;
  for (double v : s.x) ss += (v - mu) * (v - mu);
  const double sigma = std::sqrt(ss / static_cast<double>(n - 1));
  if (sigma == 0.0) throw SigmaZero("zscore of constant series");
  IrregularSeries out = s;
  for (double& v : out.x) v = (v - mu) / sigma;
  return out;
}

// ---------------------------------------------------------------------------
// Persistence. Series CSVs carry exactly the two-column schema below; the
// file name convention is "<patient_id>__<variable_id>.csv".
// ---------------------------------------------------------------------------

inline std::string series_filename(const std::string& patient_id,
                                   const std::string& variable_id) {
  return patient_id + "__" + variable_id + ".csv";
}

inline void write_series_csv(const IrregularSeries& s,
                             const std::filesystem::path& path) {
  validate_series(s, /*allow_empty=*/true);
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f << "t_seconds,value\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    f << format_double(s.t[i]) << ',' << format_double(s.x[i]) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

// Reads a series CSV. patient_id/variable_id are recovered from the file name
// when it follows the naming convention, otherwise left empty.
inline IrregularSeries read_series_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for read: " + path.string());
  IrregularSeries s;
  const std::string stem = path.stem().string();
  if (const auto pos = stem.find("__"); pos != std::string::npos) {
    s.patient_id = stem.substr(0, pos);
    s.variable_id = stem.substr(pos + 2);
  }
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty csv: " + path.string());
  if (line.size() && line.back() == '\r') line.pop_back();
  if (line != "t_seconds,value")
    throw IoError("unexpected csv header '" + line + "' in " + path.string());
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError("missing comma at line " + std::to_string(lineno) + " of " +
                    path.string());
    try {
      std::size_t used = 0;
      const double tv = std::stod(line.substr(0, comma), &used);
      const double xv = std::stod(line.substr(comma + 1), &used);
      s.t.push_back(tv);
      s.x.push_back(xv);
    } catch (const std::exception&) {
      throw IoError("unparsable number at line " + std::to_string(lineno) +
                    " of " + path.string());
    }
  }
  validate_series(s, /*allow_empty=*/true);
  return s;
}

inline void to_json(nlohmann::json& j, const IndexRange& r) {
  j = nlohmann::json{r.first, r.last};
}

inline void from_json(const nlohmann::json& j, IndexRange& r) {
  r.first = j.at(0).get<std::size_t>();
  r.last = j.at(1).get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const CleaningReport& r) {
  j = nlohmann::json{{"n_samples_in", r.n_samples_in},
                     {"n_samples_out", r.n_samples_out},
                     {"n_outliers_replaced", r.n_outliers_replaced},
                     {"mean_used", r.mean_used},
                     {"std_used", r.std_used},
                     {"segments_found", r.segments_found},
                     {"chosen_segment", r.chosen_segment}};
}

inline void from_json(const nlohmann::json& j, CleaningReport& r) {
  j.at("n_samples_in").get_to(r.n_samples_in);
  j.at("n_samples_out").get_to(r.n_samples_out);
  j.at("n_outliers_replaced").get_to(r.n_outliers_replaced);
  j.at("mean_used").get_to(r.mean_used);
  j.at("std_used").get_to(r.std_used);
  j.at("segments_found").get_to(r.segments_found);
  j.at("chosen_segment").get_to(r.chosen_segment);
}

}  // namespace weanwave
