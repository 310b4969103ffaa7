#pragma once

// Synthetic log corpora with ground-truth anomalies expressed through exactly
// one information channel: which events occur, the order of an unchanged event
// multiset, or the inter-arrival gaps of an unchanged event sequence.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "loglab/parser.hpp"
#include "loglab/rng.hpp"

namespace loglab::synthgen {

enum class AnomalyKind { none, occurrence, order, timing };

std::string to_string(AnomalyKind kind);
AnomalyKind kind_from_string(const std::string& name);

/// Inter-arrival gap in seconds: base + uniform integer in [0, jitter].
struct GapModel {
  std::int64_t base = 1;
  std::int64_t jitter = 2;
};

struct CorpusSpec {
  std::vector<std::string> normal_templates;  // background events
  std::vector<std::string> error_templates;   // inserted by occurrence anomalies
  std::vector<std::string> motif;             // contiguous, in order, in every normal session
  std::size_t n_sequences = 2000;
  std::size_t length_lo = 16;
  std::size_t length_hi = 64;
  double anomaly_ratio = 0.5;
  AnomalyKind anomaly_kind = AnomalyKind::occurrence;
  GapModel gap;
  double timing_factor = 10.0;
  /// Fraction of a session's gaps inflated by a timing anomaly.
  double timing_span_fraction = 0.5;
  std::int64_t base_epoch = 1700000000;
  std::uint64_t seed = 7;

  /// Default template vocabulary with the given kind and seed.
  static CorpusSpec with_defaults(AnomalyKind kind, std::uint64_t seed = 7);

  /// Throws ConfigError when the spec cannot be generated.
  void validate() const;
};

nlohmann::json to_json(const CorpusSpec& spec);
/// Missing keys take the with_defaults() values for the given anomaly_kind.
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);

/// One generated session. `events` index into Corpus::catalog.
struct Session {
  std::string key;
  std::vector<int> events;
  std::vector<std::int64_t> timestamps;
  std::size_t motif_start = 0;
  int label = 0;
  AnomalyKind kind = AnomalyKind::none;
  /// Perturbed range [first, last): events for order, gaps for timing.
  std::optional<std::pair<std::size_t, std::size_t>> span;
  /// Order anomalies: index of the normal session with the same event multiset.
  std::optional<std::size_t> counterpart;
};

struct Corpus {
  std::vector<std::string> catalog;  // normal, then motif, then error templates
  std::vector<Session> sessions;
  std::vector<parser::RawLogLine> lines;  // chronological stream with session keys and labels
};

Corpus generate_corpus(const CorpusSpec& spec);

/// Permutes events [first, first + length) by a non-identity permutation that
/// changes the event order. Throws DataError if length < 2 or the span holds a
/// single repeated template.
void inject_order(Session& session, std::size_t first, std::size_t length, Rng& rng);

/// Multiplies the gaps g_i = t_{i+1} - t_i for i in [first, last) by factor and
/// re-accumulates timestamps. Throws DataError on an empty span, ConfigError if factor <= 1.
void inject_timing(Session& session, std::size_t first, std::size_t last, double factor);

/// Inserts 1-3 events drawn from error_ids at seeded positions; each inserted
/// event gets a gap drawn from the gap model and later timestamps shift by it.
/// Returns the number of inserted events.
std::size_t inject_occurrence(Session& session, const std::vector<int>& error_ids, const GapModel& gap, Rng& rng);

/// Writes `<epoch> <session_key> <text>` lines and the truth JSONL file.
void write_corpus(const Corpus& corpus, const std::filesystem::path& log_path,
                  const std::filesystem::path& truth_path);

/// Truth JSONL row: {"session_key", "label", "kind", "span", "counterpart"}.
nlohmann::json truth_json(const Corpus& corpus, const Session& session);

}  // namespace loglab::synthgen
