#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace loglab::assembler {

/// One parsed log line: the row format of events.jsonl.
struct Event {
  std::size_t line_no = 0;
  std::int64_t timestamp = 0;
  int template_id = 0;
  std::optional<int> label;
  std::optional<std::string> session_key;
};

struct LabeledSequence {
  std::vector<int> events;
  std::vector<std::int64_t> elapsed;
  int label = 0;
  /// Timestamp of the first event; orders sequences chronologically. Not serialized.
  std::int64_t start_time = 0;
};

struct WindowSpec {
  std::size_t min_len = 128;
  std::size_t max_len = 512;
  std::size_t step = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class SplitMode { chronological, shuffled_sessions };

struct SplitSpec {
  double train_fraction = 0.8;
  SplitMode mode = SplitMode::chronological;
  std::uint64_t seed = 0;
};

/// Offsets from the first timestamp. Timestamps that go backwards are clamped
/// to the running maximum (a warning is emitted). Throws DataError on empty input.
std::vector<std::int64_t> compute_elapsed(const std::vector<std::int64_t>& timestamps);

/// 1 iff any event is anomalous. Throws DataError if an event is unlabeled.
int label_sequence(const std::vector<std::optional<int>>& labels);

/// One sequence per distinct session key, ordered by first appearance; events
/// keep input order. Labels come from `session_labels` when it has the key,
/// otherwise from the per-event labels.
std::vector<LabeledSequence> group_by_session(const std::vector<Event>& events,
                                              const std::map<std::string, int>& session_labels = {});

/// Variable-length windows at starts 0, step, 2*step, ... while start + min_len
/// fits; each length is drawn uniformly from [min_len, max_len] by a generator
/// seeded from (seed, start) and clipped to the stream end.
std::vector<LabeledSequence> make_variable_windows(const std::vector<Event>& events, const WindowSpec& spec);

/// Fixed windows [start, start+size) at starts 0, step, ...; stops after the
/// first window that reaches the end of the stream (keeping a partial tail).
std::vector<LabeledSequence> make_fixed_windows(const std::vector<Event>& events, std::size_t size,
                                                std::size_t step);

/// Partitions sequences into (train, test). Chronological mode keeps input
/// order (callers pass sequences sorted by start time); the train side gets
/// ceil(train_fraction * N) items, capped at N - 1. Throws DataError if N < 2.
std::pair<std::vector<LabeledSequence>, std::vector<LabeledSequence>> split_train_test(
    const std::vector<LabeledSequence>& sequences, const SplitSpec& spec);

/// Index form of split_train_test, useful for keeping side tables aligned.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t count, const SplitSpec& spec);

}  // namespace loglab::assembler
