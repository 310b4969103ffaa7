#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace loglab::metrics {

/// Positives are anomalies (label 1).
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  /// True when any score had a 0/0 denominator and was reported as 0.
  bool degenerate = false;
};

/// Throws DataError on a length mismatch or empty input.
ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& labels);

Scores scores(const ConfusionCounts& c);

/// Shorthand for scores(confusion(predictions, labels)).f1.
double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels);

/// The report.json object: tp, fp, tn, fn, precision, recall, specificity, f1, degenerate.
nlohmann::json report_json(const ConfusionCounts& c, const Scores& s);

/// Aligned two-column text rendering of a report.
std::string render_report(const ConfusionCounts& c, const Scores& s);

}  // namespace loglab::metrics
