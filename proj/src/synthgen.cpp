#include "loglab/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <tuple>

#include "loglab/error.hpp"

namespace loglab::synthgen {

using nlohmann::json;

std::string to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::none: return "none";
    case AnomalyKind::occurrence: return "occurrence";
    case AnomalyKind::order: return "order";
    case AnomalyKind::timing: return "timing";
  }
  return "?";
}

AnomalyKind kind_from_string(const std::string& name) {
  if (name == "none") return AnomalyKind::none;
  if (name == "occurrence") return AnomalyKind::occurrence;
  if (name == "order") return AnomalyKind::order;
  if (name == "timing") return AnomalyKind::timing;
  throw ConfigError("unknown anomaly kind '" + name + "' (expected occurrence|order|timing)");
}

CorpusSpec CorpusSpec::with_defaults(AnomalyKind kind, std::uint64_t seed) {
  CorpusSpec s;
  s.normal_templates = {
      "Receiving block <*> src <*> dest <*>",
      "PacketResponder <*> for block <*> terminating",
      "Verification succeeded for <*>",
      "Served block <*> to <*>",
      "Deleting block <*> file <*>",
      "NameSystem.addStoredBlock blockMap updated <*> is added to <*> size <*>",
      "Starting thread to transfer block <*> to <*>",
      "Received block <*> of size <*> from <*>",
      "session opened for user <*> by uid <*>",
      "Connection established to <*> port <*>",
      "Cache hit ratio <*> for region <*>",
      "Heartbeat sent from datanode <*>",
  };
  s.motif = {
      "Job <*> scheduled on node <*>",
      "Worker <*> acquired lease <*>",
      "Checkpoint written for job <*> at offset <*>",
      "Commit acknowledged by coordinator <*>",
  };
  s.error_templates = {
      "ERROR Exception in receiveBlock for block <*>",
      "FATAL Disk failure detected on volume <*>",
      "WARN Lost connection to peer <*> unexpectedly",
  };
  s.anomaly_kind = kind;
  s.seed = seed;
  return s;
}

void CorpusSpec::validate() const {
  if (normal_templates.empty()) throw ConfigError("corpus spec: normal_templates is empty");
  if (n_sequences == 0) throw ConfigError("corpus spec: n_sequences must be positive");
  if (length_lo > length_hi) throw ConfigError("corpus spec: length_range lo > hi");
  if (length_lo < motif.size() + 2)
    throw ConfigError("corpus spec: length_range lo " + std::to_string(length_lo) + " < motif length + 2 (" +
                      std::to_string(motif.size() + 2) + ")");
  if (!(anomaly_ratio > 0.0 && anomaly_ratio < 1.0)) throw ConfigError("corpus spec: anomaly_ratio must lie in (0,1)");
  if (gap.base < 0 || gap.jitter < 0) throw ConfigError("corpus spec: gap model must be non-negative");
  switch (anomaly_kind) {
    case AnomalyKind::order:
      if (motif.size() < 3) throw ConfigError("corpus spec: order anomalies need a motif of length >= 3");
      break;
    case AnomalyKind::timing:
      if (!(timing_factor > 1.0)) throw ConfigError("corpus spec: timing_factor must be > 1");
      if (gap.base < 1) throw ConfigError("corpus spec: timing anomalies need gap.base >= 1");
      if (!(timing_span_fraction > 0.0 && timing_span_fraction <= 1.0))
        throw ConfigError("corpus spec: timing_span_fraction must lie in (0,1]");
      break;
    case AnomalyKind::occurrence:
      if (error_templates.empty()) throw ConfigError("corpus spec: occurrence anomalies need error_templates");
      break;
    case AnomalyKind::none:
      throw ConfigError("corpus spec: anomaly_kind must be occurrence, order or timing");
  }
}

json to_json(const CorpusSpec& s) {
  return json{{"normal_templates", s.normal_templates},
              {"error_templates", s.error_templates},
              {"motif", s.motif},
              {"n_sequences", s.n_sequences},
              {"length_range", {s.length_lo, s.length_hi}},
              {"anomaly_ratio", s.anomaly_ratio},
              {"anomaly_kind", to_string(s.anomaly_kind)},
              {"gap_model", {{"base", s.gap.base}, {"jitter", s.gap.jitter}}},
              {"timing_factor", s.timing_factor},
              {"timing_span_fraction", s.timing_span_fraction},
              {"base_epoch", s.base_epoch},
              {"seed", s.seed}};
}

CorpusSpec corpus_spec_from_json(const json& j) {
  try {
    const AnomalyKind kind = kind_from_string(j.value("anomaly_kind", std::string("occurrence")));
    CorpusSpec s = CorpusSpec::with_defaults(kind, j.value("seed", std::uint64_t{7}));
    if (j.contains("normal_templates")) s.normal_templates = j.at("normal_templates").get<std::vector<std::string>>();
    if (j.contains("error_templates")) s.error_templates = j.at("error_templates").get<std::vector<std::string>>();
    if (j.contains("motif")) s.motif = j.at("motif").get<std::vector<std::string>>();
    s.n_sequences = j.value("n_sequences", s.n_sequences);
    if (j.contains("length_range")) {
      const auto r = j.at("length_range").get<std::vector<std::size_t>>();
      if (r.size() != 2) throw ConfigError("corpus spec: length_range must be [lo, hi]");
      s.length_lo = r[0];
      s.length_hi = r[1];
    }
    s.anomaly_ratio = j.value("anomaly_ratio", s.anomaly_ratio);
    if (j.contains("gap_model")) {
      s.gap.base = j.at("gap_model").value("base", s.gap.base);
      s.gap.jitter = j.at("gap_model").value("jitter", s.gap.jitter);
    }
    s.timing_factor = j.value("timing_factor", s.timing_factor);
    s.timing_span_fraction = j.value("timing_span_fraction", s.timing_span_fraction);
    s.base_epoch = j.value("base_epoch", s.base_epoch);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus spec: ") + e.what());
  }
}

namespace {

std::int64_t draw_gap(const GapModel& gap, Rng& rng) { return gap.base + rng.uniform_int(0, gap.jitter); }

void accumulate(Session& s, std::int64_t start, const std::vector<std::int64_t>& gaps) {
  s.timestamps.resize(gaps.size());
  std::int64_t t = start;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    t += gaps[i];
    s.timestamps[i] = t;
  }
}

std::vector<std::int64_t> gaps_of(const Session& s) {
  std::vector<std::int64_t> gaps(s.timestamps.size(), 0);
  for (std::size_t i = 1; i < s.timestamps.size(); ++i) gaps[i] = s.timestamps[i] - s.timestamps[i - 1];
  return gaps;
}

std::string fill_parameters(const std::string& text, Rng& rng) {
  std::string out;
  std::size_t at = 0;
  std::size_t slot = 0;
  char buf[64];
  while (true) {
    const std::size_t hit = text.find(parser::kWildcard, at);
    out.append(text, at, hit == std::string::npos ? std::string::npos : hit - at);
    if (hit == std::string::npos) break;
    switch ((slot + static_cast<std::size_t>(rng.uniform_int(0, 2))) % 3) {
      case 0:
        std::snprintf(buf, sizeof buf, "blk_%lld", static_cast<long long>(rng.uniform_int(1000000, 999999999)));
        break;
      case 1:
        std::snprintf(buf, sizeof buf, "10.%d.%d.%d:%d", static_cast<int>(rng.uniform_int(0, 255)),
                      static_cast<int>(rng.uniform_int(0, 255)), static_cast<int>(rng.uniform_int(1, 254)),
                      static_cast<int>(rng.uniform_int(1024, 65535)));
        break;
      default:
        std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(rng.uniform_int(0, 99999)));
        break;
    }
    out += buf;
    at = hit + parser::kWildcard.size();
    ++slot;
  }
  return out;
}

}  // namespace

void inject_order(Session& session, std::size_t first, std::size_t length, Rng& rng) {
  if (length < 2) throw DataError("inject_order: motif length must be >= 2");
  if (first + length > session.events.size()) throw DataError("inject_order: span exceeds the session");
  const auto begin = session.events.begin() + static_cast<std::ptrdiff_t>(first);
  const std::vector<int> original(begin, begin + static_cast<std::ptrdiff_t>(length));
  if (std::all_of(original.begin(), original.end(), [&](int e) { return e == original.front(); }))
    throw DataError("inject_order: span holds a single repeated template");
  std::vector<int> permuted = original;
  while (permuted == original) rng.shuffle(permuted);
  std::copy(permuted.begin(), permuted.end(), begin);
}

void inject_timing(Session& session, std::size_t first, std::size_t last, double factor) {
  if (!(factor > 1.0)) throw ConfigError("inject_timing: factor must be > 1");
  if (first >= last) throw DataError("inject_timing: empty span");
  if (last >= session.timestamps.size()) throw DataError("inject_timing: span exceeds the session's gaps");
  std::vector<std::int64_t> gaps = gaps_of(session);
  for (std::size_t i = first; i < last; ++i)
    gaps[i + 1] = static_cast<std::int64_t>(std::llround(static_cast<double>(gaps[i + 1]) * factor));
  const std::int64_t start = session.timestamps.front();
  gaps[0] = 0;
  accumulate(session, start, gaps);
}

std::size_t inject_occurrence(Session& session, const std::vector<int>& error_ids, const GapModel& gap, Rng& rng) {
  if (error_ids.empty()) throw DataError("inject_occurrence: no error templates");
  const auto count = static_cast<std::size_t>(rng.uniform_int(1, 3));
  std::vector<std::int64_t> gaps = gaps_of(session);
  const std::int64_t start = session.timestamps.empty() ? 0 : session.timestamps.front();
  for (std::size_t k = 0; k < count; ++k) {
    const auto pos = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(session.events.size())));
    const int id = error_ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(error_ids.size()) - 1))];
    const std::int64_t g = draw_gap(gap, rng);
    session.events.insert(session.events.begin() + static_cast<std::ptrdiff_t>(pos), id);
    if (pos == 0) {
      gaps.insert(gaps.begin(), 0);
      if (gaps.size() > 1) gaps[1] = g;
    } else {
      gaps.insert(gaps.begin() + static_cast<std::ptrdiff_t>(pos), g);
    }
    if (pos <= session.motif_start && session.motif_start < session.events.size() - 1) ++session.motif_start;
  }
  accumulate(session, start, gaps);
  return count;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus corpus;
  corpus.catalog = spec.normal_templates;
  const int motif_base = static_cast<int>(corpus.catalog.size());
  corpus.catalog.insert(corpus.catalog.end(), spec.motif.begin(), spec.motif.end());
  const int error_base = static_cast<int>(corpus.catalog.size());
  corpus.catalog.insert(corpus.catalog.end(), spec.error_templates.begin(), spec.error_templates.end());
  std::vector<int> error_ids(spec.error_templates.size());
  std::iota(error_ids.begin(), error_ids.end(), error_base);

  const std::size_t n = spec.n_sequences;
  const auto n_anomalous = static_cast<std::size_t>(std::floor(spec.anomaly_ratio * static_cast<double>(n) + 1e-9));
  Rng master(spec.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  master.shuffle(order);
  std::vector<bool> anomalous(n, false);
  for (std::size_t i = 0; i < n_anomalous; ++i) anomalous[order[i]] = true;

  auto make_base = [&](std::size_t index, Rng& rng) {
    Session s;
    const auto length = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.length_lo), static_cast<std::int64_t>(spec.length_hi)));
    const std::size_t background = length - spec.motif.size();
    for (std::size_t i = 0; i < background; ++i)
      s.events.push_back(static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(spec.normal_templates.size()) - 1)));
    s.motif_start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(background)));
    std::vector<int> motif(spec.motif.size());
    std::iota(motif.begin(), motif.end(), motif_base);
    s.events.insert(s.events.begin() + static_cast<std::ptrdiff_t>(s.motif_start), motif.begin(), motif.end());
    std::vector<std::int64_t> gaps(length, 0);
    for (std::size_t i = 1; i < length; ++i) gaps[i] = draw_gap(spec.gap, rng);
    const std::int64_t start = spec.base_epoch + static_cast<std::int64_t>(index) * 40 + rng.uniform_int(0, 39);
    accumulate(s, start, gaps);
    return s;
  };

  corpus.sessions.resize(n);
  std::vector<std::size_t> normals;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(spec.seed, i));
    Session s = make_base(i, rng);
    char key[32];
    std::snprintf(key, sizeof key, "S%06zu", i);
    s.key = key;
    if (!anomalous[i]) normals.push_back(i);
    corpus.sessions[i] = std::move(s);
  }

  std::size_t anomaly_rank = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!anomalous[i]) continue;
    Session& s = corpus.sessions[i];
    Rng rng(derive_seed(spec.seed ^ 0xA5A5A5A5ULL, i));
    s.label = 1;
    s.kind = spec.anomaly_kind;
    switch (spec.anomaly_kind) {
      case AnomalyKind::order: {
        if (!normals.empty()) {
          // Copy a normal session so that both carry the same event multiset.
          const std::size_t source = normals[anomaly_rank % normals.size()];
          const Session& twin = corpus.sessions[source];
          const std::int64_t start = s.timestamps.front();
          s.events = twin.events;
          s.motif_start = twin.motif_start;
          std::vector<std::int64_t> gaps = gaps_of(twin);
          gaps[0] = 0;
          accumulate(s, start, gaps);
          s.counterpart = source;
        }
        inject_order(s, s.motif_start, spec.motif.size(), rng);
        s.span = std::make_pair(s.motif_start, s.motif_start + spec.motif.size());
        break;
      }
      case AnomalyKind::timing: {
        const std::size_t n_gaps = s.timestamps.size() - 1;
        const auto span_len = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(spec.timing_span_fraction * static_cast<double>(n_gaps))), 1, n_gaps);
        const auto first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_gaps - span_len)));
        inject_timing(s, first, first + span_len, spec.timing_factor);
        s.span = std::make_pair(first, first + span_len);
        break;
      }
      case AnomalyKind::occurrence:
        inject_occurrence(s, error_ids, spec.gap, rng);
        break;
      case AnomalyKind::none:
        break;
    }
    ++anomaly_rank;
  }

  // Render the chronological stream.
  struct Stamped {
    std::int64_t t;
    std::size_t session;
    std::size_t event;
  };
  std::vector<Stamped> stream;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = 0; e < corpus.sessions[i].events.size(); ++e)
      stream.push_back({corpus.sessions[i].timestamps[e], i, e});
  std::sort(stream.begin(), stream.end(), [](const Stamped& a, const Stamped& b) {
    return std::tie(a.t, a.session, a.event) < std::tie(b.t, b.session, b.event);
  });
  Rng text_rng(derive_seed(spec.seed, 0x7e47ULL));
  corpus.lines.reserve(stream.size());
  for (std::size_t k = 0; k < stream.size(); ++k) {
    const Session& s = corpus.sessions[stream[k].session];
    const std::size_t e = stream[k].event;
    int item_label = 0;
    if (s.label) {
      switch (s.kind) {
        case AnomalyKind::occurrence: item_label = s.events[e] >= error_base ? 1 : 0; break;
        case AnomalyKind::order: item_label = e >= s.span->first && e < s.span->second ? 1 : 0; break;
        case AnomalyKind::timing: item_label = e > s.span->first && e <= s.span->second ? 1 : 0; break;
        case AnomalyKind::none: break;
      }
    }
    parser::RawLogLine line;
    line.line_no = k;
    line.timestamp = stream[k].t;
    line.content = fill_parameters(corpus.catalog[static_cast<std::size_t>(s.events[e])], text_rng);
    line.label = item_label;
    line.session_key = s.key;
    corpus.lines.push_back(std::move(line));
  }
  return corpus;
}

json truth_json(const Corpus& corpus, const Session& s) {
  json row{{"session_key", s.key}, {"label", s.label}, {"kind", to_string(s.kind)}};
  row["span"] = s.span ? json::array({s.span->first, s.span->second}) : json(nullptr);
  row["counterpart"] = s.counterpart ? json(corpus.sessions[*s.counterpart].key) : json(nullptr);
  return row;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& log_path,
                  const std::filesystem::path& truth_path) {
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write " + log_path.string());
  for (const auto& line : corpus.lines) log << line.timestamp << ' ' << *line.session_key << ' ' << line.content << '\n';
  std::ofstream truth(truth_path);
  if (!truth) throw DataError("cannot write " + truth_path.string());
  for (const auto& s : corpus.sessions) truth << truth_json(corpus, s).dump() << '\n';
}

}  // namespace loglab::synthgen
