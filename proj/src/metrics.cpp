#include "loglab/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "loglab/error.hpp"

namespace loglab::metrics {

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw DataError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw DataError("confusion: no predictions");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = predictions[i] != 0;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Scores scores(const ConfusionCounts& c) {
  Scores s;
  auto ratio = [&s](std::size_t num, std::size_t den) {
    if (den == 0) {
      s.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  s.precision = ratio(c.tp, c.tp + c.fp);
  s.recall = ratio(c.tp, c.tp + c.fn);
  s.specificity = ratio(c.tn, c.tn + c.fp);
  s.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return s;
}

double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels) {
  return scores(confusion(predictions, labels)).f1;
}

nlohmann::json report_json(const ConfusionCounts& c, const Scores& s) {
  return nlohmann::json{{"tp", c.tp},
                        {"fp", c.fp},
                        {"tn", c.tn},
                        {"fn", c.fn},
                        {"precision", s.precision},
                        {"recall", s.recall},
                        {"specificity", s.specificity},
                        {"f1", s.f1},
                        {"degenerate", s.degenerate}};
}

std::string render_report(const ConfusionCounts& c, const Scores& s) {
  std::ostringstream os;
  auto line = [&os](const std::string& key, const std::string& value) {
    os << std::left << std::setw(12) << key << std::right << std::setw(10) << value << '\n';
  };
  auto fixed = [](double v) {
    std::ostringstream f;
    f << std::fixed << std::setprecision(4) << v;
    return f.str();
  };
  line("TP", std::to_string(c.tp));
  line("FP", std::to_string(c.fp));
  line("TN", std::to_string(c.tn));
  line("FN", std::to_string(c.fn));
  line("Precision", fixed(s.precision));
  line("Recall", fixed(s.recall));
  line("Specificity", fixed(s.specificity));
  line("F1", fixed(s.f1));
  if (s.degenerate) line("degenerate", "yes");
  return os.str();
}

}  // namespace loglab::metrics
