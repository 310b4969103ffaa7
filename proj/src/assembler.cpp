#include "loglab/assembler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "loglab/error.hpp"
#include "loglab/log.hpp"
#include "loglab/rng.hpp"

namespace loglab::assembler {

void WindowSpec::validate() const {
  if (min_len == 0 || min_len > max_len)
    throw ConfigError("window spec requires 0 < min_len <= max_len (got " + std::to_string(min_len) + ", " +
                      std::to_string(max_len) + ")");
  if (step == 0) throw ConfigError("window step must be >= 1");
}

std::vector<std::int64_t> compute_elapsed(const std::vector<std::int64_t>& timestamps) {
  if (timestamps.empty()) throw DataError("compute_elapsed: empty timestamp list");
  std::vector<std::int64_t> out;
  out.reserve(timestamps.size());
  std::int64_t running = timestamps.front();
  std::size_t clamped = 0;
  for (const auto t : timestamps) {
    if (t < running) {
      ++clamped;
    } else {
      running = t;
    }
    out.push_back(running - timestamps.front());
  }
  if (clamped > 0) warn("compute_elapsed: clamped " + std::to_string(clamped) + " out-of-order timestamp(s)");
  return out;
}

int label_sequence(const std::vector<std::optional<int>>& labels) {
  int label = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) throw DataError("label_sequence: event " + std::to_string(i) + " is unlabeled");
    if (*labels[i] != 0) label = 1;
  }
  return label;
}

namespace {

LabeledSequence build(const std::vector<Event>& events, std::size_t begin, std::size_t end,
                      std::optional<int> label = std::nullopt) {
  LabeledSequence seq;
  std::vector<std::int64_t> stamps;
  std::vector<std::optional<int>> labels;
  stamps.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    seq.events.push_back(events[i].template_id);
    stamps.push_back(events[i].timestamp);
    labels.push_back(events[i].label);
  }
  seq.elapsed = compute_elapsed(stamps);
  seq.start_time = stamps.front();
  seq.label = label ? *label : label_sequence(labels);
  return seq;
}

}  // namespace

std::vector<LabeledSequence> group_by_session(const std::vector<Event>& events,
                                              const std::map<std::string, int>& session_labels) {
  std::map<std::string, std::size_t> slot;
  std::vector<std::string> keys;
  std::vector<std::vector<Event>> members;
  for (const auto& e : events) {
    if (!e.session_key)
      throw DataError("group_by_session: event at line " + std::to_string(e.line_no) + " has no session key");
    auto [it, inserted] = slot.try_emplace(*e.session_key, keys.size());
    if (inserted) {
      keys.push_back(*e.session_key);
      members.emplace_back();
    }
    members[it->second].push_back(e);
  }
  std::vector<LabeledSequence> out;
  out.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::optional<int> label;
    if (auto found = session_labels.find(keys[i]); found != session_labels.end()) label = found->second;
    out.push_back(build(members[i], 0, members[i].size(), label));
  }
  return out;
}

std::vector<LabeledSequence> make_variable_windows(const std::vector<Event>& events, const WindowSpec& spec) {
  spec.validate();
  std::vector<LabeledSequence> out;
  if (events.size() < spec.min_len) {
    warn("make_variable_windows: stream of " + std::to_string(events.size()) + " events is shorter than min_len " +
         std::to_string(spec.min_len) + "; no windows produced");
    return out;
  }
  for (std::size_t start = 0; start + spec.min_len <= events.size(); start += spec.step) {
    Rng rng(derive_seed(spec.seed, start));
    const auto drawn = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.min_len), static_cast<std::int64_t>(spec.max_len)));
    const std::size_t length = std::min(drawn, events.size() - start);
    if (length < spec.min_len) continue;
    out.push_back(build(events, start, start + length));
  }
  return out;
}

std::vector<LabeledSequence> make_fixed_windows(const std::vector<Event>& events, std::size_t size,
                                                std::size_t step) {
  if (size == 0 || step == 0) throw ConfigError("fixed windows require size >= 1 and step >= 1");
  std::vector<LabeledSequence> out;
  for (std::size_t start = 0; start < events.size(); start += step) {
    const std::size_t end = std::min(start + size, events.size());
    out.push_back(build(events, start, end));
    if (end == events.size()) break;
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t count,
                                                                            const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0,1)");
  if (count < 2) throw DataError("split_train_test needs at least 2 sequences, got " + std::to_string(count));
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (spec.mode == SplitMode::shuffled_sessions) {
    Rng rng(spec.seed);
    rng.shuffle(order);
  }
  // The epsilon keeps products like 0.8 * 5 from rounding up to 5.
  auto n_train = static_cast<std::size_t>(std::ceil(spec.train_fraction * static_cast<double>(count) - 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, count - 1);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {std::move(train), std::move(test)};
}

std::pair<std::vector<LabeledSequence>, std::vector<LabeledSequence>> split_train_test(
    const std::vector<LabeledSequence>& sequences, const SplitSpec& spec) {
  auto [train_idx, test_idx] = split_indices(sequences.size(), spec);
  std::vector<LabeledSequence> train;
  std::vector<LabeledSequence> test;
  train.reserve(train_idx.size());
  test.reserve(test_idx.size());
  for (auto i : train_idx) train.push_back(sequences[i]);
  for (auto i : test_idx) test.push_back(sequences[i]);
  return {std::move(train), std::move(test)};
}

}  // namespace loglab::assembler
