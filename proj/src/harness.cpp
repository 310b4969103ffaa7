#include "loglab/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cctype>
#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "loglab/error.hpp"
#include "loglab/log.hpp"

namespace loglab::harness {

// ------------------------------------------------------------------- adapters

std::string to_string(Format format) {
  switch (format) {
    case Format::hdfs: return "hdfs";
    case Format::bgl_like: return "bgl-like";
    case Format::generic: return "generic";
  }
  return "?";
}

Format format_from_string(const std::string& name) {
  if (name == "hdfs") return Format::hdfs;
  if (name == "bgl-like" || name == "bgl") return Format::bgl_like;
  if (name == "generic") return Format::generic;
  throw ConfigError("unknown dataset format '" + name + "' (expected hdfs|bgl-like|generic)");
}

namespace {

struct Field {
  std::string_view text;
  std::size_t offset;
};

std::vector<Field> split_fields(std::string_view line) {
  std::vector<Field> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    out.push_back({line.substr(start, i - start), start});
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::string rest_of_line(std::string_view line, const Field& from) {
  std::string_view rest = line.substr(from.offset);
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.back()))) rest.remove_suffix(1);
  return std::string(rest);
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

const std::regex& block_id_regex() {
  static const std::regex re("blk_-?\\d+");
  return re;
}

// "081109 203615 148 INFO dfs.DataNode$PacketResponder: <content>"
std::optional<parser::RawLogLine> adapt_hdfs(std::string_view line) {
  const auto fields = split_fields(line);
  if (fields.size() < 6 || fields[0].text.size() != 6 || fields[1].text.size() != 6) return std::nullopt;
  const auto date = parse_number<int>(fields[0].text);
  const auto time = parse_number<int>(fields[1].text);
  if (!date || !time) return std::nullopt;
  const int yy = *date / 10000, mm = *date / 100 % 100, dd = *date % 100;
  const int hh = *time / 10000, mi = *time / 100 % 100, ss = *time % 100;
  if (mm < 1 || mm > 12 || dd < 1 || dd > 31 || hh > 23 || mi > 59 || ss > 60) return std::nullopt;
  std::match_results<std::string_view::const_iterator> match;
  if (!std::regex_search(line.begin(), line.end(), match, block_id_regex())) return std::nullopt;
  parser::RawLogLine out;
  out.timestamp = days_from_civil(2000 + yy, static_cast<unsigned>(mm), static_cast<unsigned>(dd)) * 86400 +
                  hh * 3600 + mi * 60 + ss;
  out.content = rest_of_line(line, fields[5]);
  out.session_key = match.str();
  return out;
}

// "- 1117838570 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.50.675872 R02-M1-N0-C:J12-U11 RAS KERNEL INFO <content>"
std::optional<parser::RawLogLine> adapt_bgl(std::string_view line) {
  const auto fields = split_fields(line);
  if (fields.size() < 10) return std::nullopt;
  const auto epoch = parse_number<std::int64_t>(fields[1].text);
  if (!epoch) return std::nullopt;
  parser::RawLogLine out;
  out.timestamp = *epoch;
  out.label = fields[0].text == "-" ? 0 : 1;
  out.content = rest_of_line(line, fields[9]);
  return out;
}

std::optional<parser::RawLogLine> adapt_generic(std::string_view line, const ColumnMap& cols) {
  const auto fields = split_fields(line);
  std::size_t needed = std::max(cols.ts, cols.msg);
  if (cols.session) needed = std::max(needed, *cols.session);
  if (cols.label) needed = std::max(needed, *cols.label);
  if (fields.size() <= needed) return std::nullopt;
  const auto ts = parse_number<std::int64_t>(fields[cols.ts].text);
  if (!ts) return std::nullopt;
  parser::RawLogLine out;
  out.timestamp = *ts;
  out.content = rest_of_line(line, fields[cols.msg]);
  if (cols.session) out.session_key = std::string(fields[*cols.session].text);
  if (cols.label) {
    const auto label = parse_number<int>(fields[*cols.label].text);
    if (!label || (*label != 0 && *label != 1)) return std::nullopt;
    out.label = *label;
  }
  return out;
}

}  // namespace

std::map<std::string, int> load_session_labels(Format format, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file " + path.string());
  std::map<std::string, int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (format == Format::hdfs) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw DataError(where + ": expected BlockId,Label");
      const std::string key = line.substr(0, comma);
      const std::string value = line.substr(comma + 1);
      if (key == "BlockId") continue;
      if (value != "Normal" && value != "Anomaly") throw DataError(where + ": label must be Normal or Anomaly");
      labels[key] = value == "Anomaly" ? 1 : 0;
    } else {
      try {
        const json row = json::parse(line);
        labels[row.at("session_key").get<std::string>()] = row.at("label").get<int>() != 0 ? 1 : 0;
      } catch (const json::exception& e) {
        throw DataError(where + ": " + e.what());
      }
    }
  }
  return labels;
}

AdaptedStream adapt_stream(const AdapterConfig& config, std::istream& in) {
  AdaptedStream out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t total = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++total;
    std::optional<parser::RawLogLine> parsed;
    switch (config.format) {
      case Format::hdfs: parsed = adapt_hdfs(line); break;
      case Format::bgl_like: parsed = adapt_bgl(line); break;
      case Format::generic: parsed = adapt_generic(line, config.columns); break;
    }
    if (!parsed || parsed->content.empty()) {
      ++out.malformed;
      continue;
    }
    parsed->line_no = line_no;
    out.lines.push_back(std::move(*parsed));
  }
  if (total > 0 && static_cast<double>(out.malformed) > config.max_malformed_fraction * static_cast<double>(total))
    throw DataError(std::to_string(out.malformed) + " of " + std::to_string(total) +
                    " lines are malformed (limit " + std::to_string(config.max_malformed_fraction * 100.0) + "%)");
  if (out.malformed > 0) warn("skipped " + std::to_string(out.malformed) + " malformed lines");
  if (out.lines.empty()) throw DataError("no log lines in input");
  if (!config.labels_path.empty()) out.session_labels = load_session_labels(config.format, config.labels_path);
  return out;
}

AdaptedStream adapt_dataset(const AdapterConfig& config, const fs::path& raw_path) {
  std::ifstream in(raw_path);
  if (!in) throw DataError("cannot open " + raw_path.string());
  return adapt_stream(config, in);
}

// ---------------------------------------------------------------- artifact IO

namespace {

template <typename Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_templates(const fs::path& path, const std::vector<parser::Template>& templates) {
  auto out = open_out(path);
  for (const auto& t : templates) out << json{{"template_id", t.template_id}, {"tokens", t.tokens}}.dump() << '\n';
}

std::vector<parser::Template> read_templates(const fs::path& path) {
  std::vector<parser::Template> out;
  for_each_json_line(path, [&](const json& row) {
    parser::Template t;
    t.template_id = row.at("template_id").get<int>();
    t.tokens = row.at("tokens").get<std::vector<std::string>>();
    out.push_back(std::move(t));
  });
  return out;
}

void write_events(const fs::path& path, const std::vector<Event>& events) {
  auto out = open_out(path);
  for (const auto& e : events) {
    json row{{"line_no", e.line_no}, {"timestamp", e.timestamp}, {"template_id", e.template_id}};
    row["label"] = e.label ? json(*e.label) : json(nullptr);
    row["session_key"] = e.session_key ? json(*e.session_key) : json(nullptr);
    out << row.dump() << '\n';
  }
}

std::vector<Event> read_events(const fs::path& path) {
  std::vector<Event> out;
  for_each_json_line(path, [&](const json& row) {
    Event e;
    e.line_no = row.at("line_no").get<std::size_t>();
    e.timestamp = row.at("timestamp").get<std::int64_t>();
    e.template_id = row.at("template_id").get<int>();
    if (row.contains("label") && !row.at("label").is_null()) e.label = row.at("label").get<int>();
    if (row.contains("session_key") && !row.at("session_key").is_null())
      e.session_key = row.at("session_key").get<std::string>();
    out.push_back(std::move(e));
  });
  return out;
}

void write_sequences(const fs::path& path, const std::vector<LabeledSequence>& sequences) {
  auto out = open_out(path);
  for (const auto& s : sequences)
    out << json{{"events", s.events}, {"elapsed", s.elapsed}, {"label", s.label}}.dump() << '\n';
}

std::vector<LabeledSequence> read_sequences(const fs::path& path) {
  std::vector<LabeledSequence> out;
  for_each_json_line(path, [&](const json& row) {
    LabeledSequence s;
    s.events = row.at("events").get<std::vector<int>>();
    s.elapsed = row.at("elapsed").get<std::vector<std::int64_t>>();
    s.label = row.at("label").get<int>();
    if (s.events.empty()) throw DataError("empty sequence");
    if (s.events.size() != s.elapsed.size()) throw DataError("events and elapsed differ in length");
    if (s.label != 0 && s.label != 1) throw DataError("label must be 0 or 1");
    out.push_back(std::move(s));
  });
  return out;
}

void write_predictions(const fs::path& path, const std::vector<int>& labels, const std::vector<double>& probabilities) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    json row{{"index", i}};
    if (!probabilities.empty()) row["prob"] = probabilities[i];
    row["label"] = labels[i];
    out << row.dump() << '\n';
  }
}

std::vector<int> read_prediction_labels(const fs::path& path) {
  std::vector<int> out;
  for_each_json_line(path, [&](const json& row) {
    if (row.at("index").get<std::size_t>() != out.size()) throw DataError("prediction indices must be 0, 1, 2, ...");
    out.push_back(row.at("label").get<int>());
  });
  return out;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

namespace {

std::string hex_digest(const unsigned char* digest, unsigned int size) {
  std::ostringstream hex;
  for (unsigned int i = 0; i < size; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

struct DigestCtx {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  DigestCtx() {
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  }
  ~DigestCtx() { EVP_MD_CTX_free(ctx); }
  void update(const char* data, std::size_t size) { EVP_DigestUpdate(ctx, data, size); }
  std::string finish() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int size = 0;
    EVP_DigestFinal_ex(ctx, digest, &size);
    return hex_digest(digest, size);
  }
};

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  DigestCtx d;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    d.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return d.finish();
}

std::string sha256_text(const std::string& text) {
  DigestCtx d;
  d.update(text.data(), text.size());
  return d.finish();
}

// ------------------------------------------------------------- stage helpers

ParseResult parse_lines(const std::vector<parser::RawLogLine>& lines, const parser::ParserConfig& config) {
  parser::DrainParser drain(config);
  ParseResult out;
  out.events.reserve(lines.size());
  std::size_t dropped = 0;
  for (const auto& line : lines) {
    if (parser::tokenize(drain.preprocess(line.content)).empty()) {
      ++dropped;  // nothing left to template
      continue;
    }
    Event e;
    try {
      e.template_id = drain.parse(line.content).template_id;
    } catch (const DataError& err) {
      throw DataError("line " + std::to_string(line.line_no) + ": " + err.what());
    }
    e.line_no = line.line_no;
    e.timestamp = line.timestamp;
    e.label = line.label;
    e.session_key = line.session_key;
    out.events.push_back(std::move(e));
  }
  if (dropped > 0) warn("parse: dropped " + std::to_string(dropped) + " line(s) empty after masking");
  out.templates = drain.export_templates();
  return out;
}

std::pair<std::vector<LabeledSequence>, std::vector<LabeledSequence>> assemble_sequences(
    const std::vector<Event>& events, const std::map<std::string, int>& session_labels, const AssembleConfig& config) {
  std::vector<LabeledSequence> sequences;
  switch (config.grouping) {
    case Grouping::session: sequences = assembler::group_by_session(events, session_labels); break;
    case Grouping::variable: sequences = assembler::make_variable_windows(events, config.windows); break;
    case Grouping::fixed: sequences = assembler::make_fixed_windows(events, config.fixed_size, config.fixed_step); break;
  }
  if (config.split.mode == assembler::SplitMode::chronological)
    std::stable_sort(sequences.begin(), sequences.end(),
                     [](const LabeledSequence& a, const LabeledSequence& b) { return a.start_time < b.start_time; });
  return assembler::split_train_test(sequences, config.split);
}

std::pair<std::vector<LabeledSequence>, std::vector<LabeledSequence>> split_validation(
    const std::vector<LabeledSequence>& train, double valid_fraction, std::uint64_t seed) {
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw ConfigError("valid_fraction must lie in (0,1)");
  assembler::SplitSpec spec;
  spec.train_fraction = 1.0 - valid_fraction;
  spec.mode = assembler::SplitMode::shuffled_sessions;
  spec.seed = derive_seed(seed, 0x5a11d);
  return assembler::split_train_test(train, spec);
}

std::vector<int> labels_of(const std::vector<LabeledSequence>& sequences) {
  std::vector<int> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(s.label);
  return out;
}

// ------------------------------------------------------------------- pipeline

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string grouping_name(Grouping g) {
  switch (g) {
    case Grouping::session: return "session";
    case Grouping::variable: return "variable";
    case Grouping::fixed: return "fixed";
  }
  return "?";
}

json adapter_json(const AdapterConfig& a) {
  json cols{{"ts", a.columns.ts}, {"msg", a.columns.msg}};
  cols["session"] = a.columns.session ? json(*a.columns.session) : json(nullptr);
  cols["label"] = a.columns.label ? json(*a.columns.label) : json(nullptr);
  return json{{"format", to_string(a.format)},
              {"columns", cols},
              {"labels", a.labels_path.string()},
              {"max_malformed_fraction", a.max_malformed_fraction}};
}

json parser_json(const parser::ParserConfig& p) {
  json rules = json::array();
  for (const auto& r : p.masking_rules) rules.push_back({{"pattern", r.pattern}, {"replacement", r.replacement}});
  return json{{"depth", p.depth}, {"sim_threshold", p.sim_threshold}, {"max_children", p.max_children}, {"masking", rules}};
}

json assemble_json(const AssembleConfig& a) {
  return json{{"grouping", grouping_name(a.grouping)},
              {"windows",
               {{"min_len", a.windows.min_len},
                {"max_len", a.windows.max_len},
                {"step", a.windows.step},
                {"seed", a.windows.seed}}},
              {"fixed", {{"size", a.fixed_size}, {"step", a.fixed_step}}},
              {"split",
               {{"train_fraction", a.split.train_fraction},
                {"mode", a.split.mode == assembler::SplitMode::chronological ? "chrono" : "shuffle"},
                {"seed", a.split.seed}}}};
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  c.parser.masking_rules = parser::default_masking_rules();
  try {
    reject_unknown_keys(j, {"input", "output_dir", "adapter", "parser", "assemble", "model", "train", "valid_fraction", "force"},
                        "pipeline config");
    if (j.contains("input")) c.input = resolve(base_dir, j.at("input").get<std::string>());
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    if (j.contains("adapter")) {
      const auto& a = j.at("adapter");
      reject_unknown_keys(a, {"format", "columns", "labels", "max_malformed_fraction"}, "adapter");
      if (a.contains("format")) c.adapter.format = format_from_string(a.at("format").get<std::string>());
      if (a.contains("columns")) {
        const auto& m = a.at("columns");
        reject_unknown_keys(m, {"ts", "msg", "session", "label"}, "adapter.columns");
        c.adapter.columns.ts = m.value("ts", c.adapter.columns.ts);
        c.adapter.columns.msg = m.value("msg", c.adapter.columns.msg);
        if (m.contains("session") && !m.at("session").is_null()) c.adapter.columns.session = m.at("session").get<std::size_t>();
        if (m.contains("label") && !m.at("label").is_null()) c.adapter.columns.label = m.at("label").get<std::size_t>();
      }
      if (a.contains("labels") && !a.at("labels").get<std::string>().empty())
        c.adapter.labels_path = resolve(base_dir, a.at("labels").get<std::string>());
      c.adapter.max_malformed_fraction = a.value("max_malformed_fraction", c.adapter.max_malformed_fraction);
    }
    if (j.contains("parser")) {
      const auto& p = j.at("parser");
      reject_unknown_keys(p, {"depth", "sim_threshold", "max_children", "masking"}, "parser");
      c.parser.depth = p.value("depth", c.parser.depth);
      c.parser.sim_threshold = p.value("sim_threshold", c.parser.sim_threshold);
      c.parser.max_children = p.value("max_children", c.parser.max_children);
      if (p.contains("masking") && !(p.at("masking").is_string() && p.at("masking") == "default")) {
        c.parser.masking_rules.clear();
        for (const auto& r : p.at("masking"))
          c.parser.masking_rules.push_back(
              {r.at("pattern").get<std::string>(), r.value("replacement", std::string(parser::kWildcard))});
      }
    }
    if (j.contains("assemble")) {
      const auto& a = j.at("assemble");
      reject_unknown_keys(a, {"grouping", "windows", "fixed", "split"}, "assemble");
      if (a.contains("grouping")) {
        const auto g = a.at("grouping").get<std::string>();
        if (g == "session") c.assemble.grouping = Grouping::session;
        else if (g == "variable") c.assemble.grouping = Grouping::variable;
        else if (g == "fixed") c.assemble.grouping = Grouping::fixed;
        else throw ConfigError("assemble.grouping must be session|variable|fixed, got '" + g + "'");
      }
      if (a.contains("windows")) {
        const auto& w = a.at("windows");
        c.assemble.windows.min_len = w.value("min_len", c.assemble.windows.min_len);
        c.assemble.windows.max_len = w.value("max_len", c.assemble.windows.max_len);
        c.assemble.windows.step = w.value("step", c.assemble.windows.step);
        c.assemble.windows.seed = w.value("seed", c.assemble.windows.seed);
      }
      if (a.contains("fixed")) {
        c.assemble.fixed_size = a.at("fixed").value("size", c.assemble.fixed_size);
        c.assemble.fixed_step = a.at("fixed").value("step", c.assemble.fixed_step);
      }
      if (a.contains("split")) {
        const auto& s = a.at("split");
        c.assemble.split.train_fraction = s.value("train_fraction", c.assemble.split.train_fraction);
        const auto mode = s.value("mode", std::string("chrono"));
        if (mode == "chrono") c.assemble.split.mode = assembler::SplitMode::chronological;
        else if (mode == "shuffle") c.assemble.split.mode = assembler::SplitMode::shuffled_sessions;
        else throw ConfigError("assemble.split.mode must be chrono|shuffle, got '" + mode + "'");
        c.assemble.split.seed = s.value("seed", c.assemble.split.seed);
      }
    }
    if (j.contains("model")) {
      c.model = model::model_config_from_json(j.at("model"), c.model);
      if (!c.model.embedding.path.empty()) c.model.embedding.path = resolve(base_dir, c.model.embedding.path.string());
    }
    if (j.contains("train")) c.train = model::train_config_from_json(j.at("train"), c.train);
    c.valid_fraction = j.value("valid_fraction", c.valid_fraction);
    c.force = j.value("force", c.force);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.parser.validate();
  if (c.assemble.grouping == Grouping::variable) c.assemble.windows.validate();
  if (c.assemble.grouping == Grouping::fixed && (c.assemble.fixed_size == 0 || c.assemble.fixed_step == 0))
    throw ConfigError("assemble.fixed size and step must be positive");
  if (!(c.assemble.split.train_fraction > 0.0 && c.assemble.split.train_fraction < 1.0))
    throw ConfigError("assemble.split.train_fraction must lie in (0,1)");
  if (!(c.valid_fraction > 0.0 && c.valid_fraction < 1.0)) throw ConfigError("valid_fraction must lie in (0,1)");
  if (!(c.adapter.max_malformed_fraction >= 0.0 && c.adapter.max_malformed_fraction <= 1.0))
    throw ConfigError("adapter.max_malformed_fraction must lie in [0,1]");
  return c;
}

json to_json(const PipelineConfig& c) {
  return json{{"input", c.input.string()},
              {"output_dir", c.output_dir.string()},
              {"adapter", adapter_json(c.adapter)},
              {"parser", parser_json(c.parser)},
              {"assemble", assemble_json(c.assemble)},
              {"model", model::to_json(c.model)},
              {"train", model::to_json(c.train)},
              {"valid_fraction", c.valid_fraction},
              {"force", c.force}};
}

namespace {

constexpr const char* kStageLog = "stages.json";

json record_json(const StageRecord& r) { return json{{"name", r.name}, {"key", r.key}, {"outputs", r.outputs}}; }

std::map<std::string, StageRecord> load_stage_log(const fs::path& dir) {
  std::map<std::string, StageRecord> out;
  const fs::path path = dir / kStageLog;
  if (!fs::exists(path)) return out;
  json doc;
  try {
    doc = read_json_file(path);
    for (const auto& row : doc.at("stages")) {
      StageRecord r;
      r.name = row.at("name").get<std::string>();
      r.key = row.at("key").get<std::string>();
      r.outputs = row.at("outputs").get<std::map<std::string, std::string>>();
      out[r.name] = r;
    }
  } catch (const std::exception& e) {
    warn(std::string("ignoring unreadable stage log: ") + e.what());
    out.clear();
  }
  return out;
}

void save_stage_log(const fs::path& dir, const std::vector<StageRecord>& records) {
  json stages = json::array();
  for (const auto& r : records) stages.push_back(record_json(r));
  write_json_file(dir / kStageLog, json{{"stages", stages}});
}

std::string file_hash_or_empty(const fs::path& path) { return path.empty() ? std::string() : sha256_file(path); }

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  if (config.input.empty()) throw ConfigError("pipeline config: input is required");
  if (config.output_dir.empty()) throw ConfigError("pipeline config: output_dir is required");
  if (!fs::exists(config.input)) throw DataError("input file not found: " + config.input.string());
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);

  const auto logged = load_stage_log(dir);
  PipelineResult result;

  // Runs `body` unless the logged record for `name` has the same key and its
  // outputs are intact.
  auto stage = [&](const std::string& name, const json& section, const std::vector<fs::path>& inputs,
                   const std::vector<std::string>& outputs, const std::function<void()>& body) {
    StageRecord record;
    record.name = name;
    try {
      json key_doc{{"config", section}};
      for (const auto& in : inputs) key_doc["inputs"].push_back(file_hash_or_empty(in));
      record.key = sha256_text(key_doc.dump());
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    const auto prev = logged.find(name);
    if (!config.force && prev != logged.end() && prev->second.key == record.key) {
      bool present = true;
      for (const auto& out : outputs) present = present && fs::exists(dir / out);
      if (present) {
        for (const auto& out : outputs) {
          const auto it = prev->second.outputs.find(out);
          if (it == prev->second.outputs.end() || sha256_file(dir / out) != it->second)
            throw StageError(name, "output " + out + " does not match its logged hash (corrupted intermediate)");
        }
        record.outputs = prev->second.outputs;
        record.skipped = true;
        info("stage " + name + ": hash hit, skipped");
        result.stages.push_back(record);
        return;
      }
    }
    info("stage " + name + ": running");
    try {
      body();
    } catch (const ConfigError&) {
      throw;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    for (const auto& out : outputs) record.outputs[out] = sha256_file(dir / out);
    result.stages.push_back(record);
    std::vector<StageRecord> all = result.stages;
    for (const auto& [n, r] : logged)
      if (std::none_of(all.begin(), all.end(), [&](const StageRecord& x) { return x.name == n; })) all.push_back(r);
    save_stage_log(dir, all);
  };

  stage("parse", json{{"adapter", adapter_json(config.adapter)}, {"parser", parser_json(config.parser)}},
        {config.input, config.adapter.labels_path}, {"templates.jsonl", "events.jsonl"}, [&] {
          AdaptedStream stream = adapt_dataset(config.adapter, config.input);
          ParseResult parsed = parse_lines(stream.lines, config.parser);
          // Session labels from the annotation file fill unlabeled events.
          for (auto& e : parsed.events) {
            if (e.label || !e.session_key) continue;
            const auto it = stream.session_labels.find(*e.session_key);
            if (it != stream.session_labels.end()) e.label = it->second;
          }
          write_templates(dir / "templates.jsonl", parsed.templates);
          write_events(dir / "events.jsonl", parsed.events);
        });

  stage("assemble", assemble_json(config.assemble), {dir / "events.jsonl"}, {"train.jsonl", "test.jsonl"}, [&] {
    const auto events = read_events(dir / "events.jsonl");
    const auto [train, test] = assemble_sequences(events, {}, config.assemble);
    write_sequences(dir / "train.jsonl", train);
    write_sequences(dir / "test.jsonl", test);
  });

  const json train_section{{"model", model::to_json(config.model)},
                           {"train", model::to_json(config.train)},
                           {"valid_fraction", config.valid_fraction}};
  std::vector<fs::path> train_inputs{dir / "train.jsonl", dir / "templates.jsonl"};
  if (config.model.embedding.mode == embeddings::Mode::file) train_inputs.push_back(config.model.embedding.path);
  stage("train", train_section, train_inputs, {"model.ckpt.json", "history.json"}, [&] {
    const auto templates = read_templates(dir / "templates.jsonl");
    const auto sequences = read_sequences(dir / "train.jsonl");
    const auto [fit, valid] = split_validation(sequences, config.valid_fraction, config.train.seed);
    embeddings::Provider provider(config.model.embedding, templates);
    model::TransformerClassifier net(config.model, provider.dim());
    const auto history = model::train(net, provider, fit, valid, config.train);
    std::vector<int> vocabulary;
    for (const auto& t : templates) vocabulary.push_back(t.template_id);
    model::save_checkpoint(dir / "model.ckpt.json", net, provider, vocabulary);
    write_json_file(dir / "history.json", model::to_json(history));
  });

  stage("eval", json{{"threshold", config.model.threshold}}, {dir / "model.ckpt.json", dir / "test.jsonl"},
        {"preds.jsonl", "report.json"}, [&] {
          auto loaded = model::load_checkpoint(dir / "model.ckpt.json");
          embeddings::ProviderConfig pc = loaded.model.config().embedding;
          embeddings::Provider provider(pc, loaded.embeddings.rows);
          const auto test = read_sequences(dir / "test.jsonl");
          const auto probs = model::predict_proba(loaded.model, provider, test);
          const auto preds = model::apply_threshold(probs, loaded.model.config().threshold);
          write_predictions(dir / "preds.jsonl", preds, probs);
          const auto counts = metrics::confusion(preds, labels_of(test));
          write_json_file(dir / "report.json", metrics::report_json(counts, metrics::scores(counts)));
        });

  const json report = read_json_file(dir / "report.json");
  try {
    result.counts = {report.at("tp").get<std::size_t>(), report.at("fp").get<std::size_t>(),
                     report.at("tn").get<std::size_t>(), report.at("fn").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw StageError("eval", std::string("report.json: ") + e.what());
  }
  result.scores = metrics::scores(result.counts);
  return result;
}

// --------------------------------------------------------------------- matrix

std::vector<Cell> default_cells(const model::ModelConfig& base, const model::TrainConfig& train,
                                const std::vector<embeddings::Mode>& embedding_modes,
                                const baselines::GridSpec& grid) {
  using encodings::EncodingMode;
  const EncodingMode encodings[] = {EncodingMode::none, EncodingMode::positional, EncodingMode::rtee,
                                    EncodingMode::time2vec};
  std::vector<Cell> cells;
  for (const auto mode : embedding_modes) {
    for (const auto enc : encodings) {
      Cell c;
      c.name = embeddings::to_string(mode) + "+" + encodings::to_string(enc);
      c.model = base;
      c.model.embedding.mode = mode;
      c.model.encoding = enc;
      c.model.zero_event_embedding = false;
      c.train = train;
      cells.push_back(std::move(c));
    }
  }
  for (const auto enc : {EncodingMode::rtee, EncodingMode::time2vec}) {
    Cell c;
    c.name = "encoding-only+" + encodings::to_string(enc);
    c.model = base;
    c.model.encoding = enc;
    c.model.zero_event_embedding = true;
    c.train = train;
    cells.push_back(std::move(c));
  }
  for (const auto kind : {baselines::Kind::knn, baselines::Kind::dt, baselines::Kind::mlp}) {
    Cell c;
    c.name = "mcv+" + baselines::to_string(kind);
    c.is_baseline = true;
    c.baseline = kind;
    c.grid = grid;
    cells.push_back(std::move(c));
  }
  return cells;
}

void validate_cells(const std::vector<Cell>& cells) {
  std::set<std::string> names;
  for (const auto& c : cells) {
    if (c.name.empty()) throw ConfigError("matrix: cell with an empty name");
    if (!names.insert(c.name).second) throw ConfigError("matrix: duplicate cell name '" + c.name + "'");
    if (c.is_baseline) c.grid.validate(c.baseline);
    else c.model.validate();
  }
}

CellResult run_cell(const Cell& cell, const MatrixData& data) {
  CellResult result;
  result.name = cell.name;
  try {
    std::vector<int> predictions;
    if (cell.is_baseline) {
      const std::size_t vocab = data.templates.size();
      const auto train = baselines::make_dataset(data.train, vocab);
      const auto valid = baselines::make_dataset(data.valid, vocab);
      const auto test = baselines::make_dataset(data.test, vocab);
      const auto grid = baselines::grid_search(cell.baseline, cell.grid, train, valid);
      json table = json::array();
      for (const auto& p : grid.table) table.push_back({{"hyperparameters", p.hyperparameters}, {"valid_f1", p.valid_f1}});
      const json& best = grid.table.at(grid.best).hyperparameters;
      result.details = {{"grid", table}, {"best", best}};
      baselines::FittedBaseline fitted(cell.baseline, best, train);
      predictions = fitted.predict(test.features);
    } else {
      embeddings::Provider provider(cell.model.embedding, data.templates);
      model::TransformerClassifier net(cell.model, provider.dim());
      const auto history = model::train(net, provider, data.train, data.valid, cell.train);
      result.details = model::to_json(history);
      predictions = model::predict(net, provider, data.test, cell.model.threshold);
    }
    const auto counts = metrics::confusion(predictions, labels_of(data.test));
    result.counts = counts;
    result.scores = metrics::scores(counts);
  } catch (const std::exception& e) {
    result.error = e.what();
    warn("cell " + cell.name + " failed: " + result.error);
  }
  return result;
}

std::vector<CellResult> run_matrix(const std::vector<Cell>& cells, const MatrixData& data, std::size_t jobs) {
  validate_cells(cells);
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto t0 = std::chrono::steady_clock::now();
      results[i] = run_cell(cells[i], data);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      info("cell " + cells[i].name + " done in " + std::to_string(secs) + " s");
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, cells.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return results;
}

json matrix_report(const std::vector<CellResult>& results) {
  std::vector<const CellResult*> order;
  for (const auto& r : results) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const CellResult* a, const CellResult* b) {
    if (a->scores.has_value() != b->scores.has_value()) return a->scores.has_value();
    if (a->scores && a->scores->f1 != b->scores->f1) return a->scores->f1 > b->scores->f1;
    return a->name < b->name;
  });
  json rows = json::array();
  for (const CellResult* r : order) {
    json row{{"cell", r->name}};
    if (r->scores) {
      row["precision"] = r->scores->precision;
      row["recall"] = r->scores->recall;
      row["specificity"] = r->scores->specificity;
      row["f1"] = r->scores->f1;
      row["degenerate"] = r->scores->degenerate;
      row["tp"] = r->counts->tp;
      row["fp"] = r->counts->fp;
      row["tn"] = r->counts->tn;
      row["fn"] = r->counts->fn;
      row["error"] = nullptr;
    } else {
      row["error"] = r->error;
    }
    row["details"] = r->details.is_null() ? json::object() : r->details;
    rows.push_back(std::move(row));
  }
  return json{{"rows", rows}};
}

std::string render_matrix(const json& report) {
  std::ostringstream out;
  out << std::left << std::setw(28) << "cell" << std::right << std::setw(10) << "precision" << std::setw(10)
      << "recall" << std::setw(12) << "specificity" << std::setw(8) << "f1" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& row : report.at("rows")) {
    out << std::left << std::setw(28) << row.at("cell").get<std::string>() << std::right;
    if (row.at("error").is_null()) {
      out << std::setw(10) << row.at("precision").get<double>() << std::setw(10) << row.at("recall").get<double>()
          << std::setw(12) << row.at("specificity").get<double>() << std::setw(8) << row.at("f1").get<double>();
    } else {
      out << "  FAILED: " << row.at("error").get<std::string>();
    }
    out << '\n';
  }
  return out.str();
}

MatrixConfig matrix_config_from_json(const json& j, const fs::path& base_dir) {
  MatrixConfig m;
  try {
    reject_unknown_keys(j, {"data", "cells", "default_cells", "jobs"}, "matrix config");
    if (!j.contains("data")) throw ConfigError("matrix config: 'data' is required");
    m.data = pipeline_config_from_json(j.at("data"), base_dir);
    m.jobs = j.value("jobs", std::size_t{1});
    if (j.contains("default_cells")) {
      const auto& d = j.at("default_cells");
      reject_unknown_keys(d, {"embeddings", "grid"}, "default_cells");
      std::vector<embeddings::Mode> modes{embeddings::Mode::random, embeddings::Mode::hashed};
      if (d.contains("embeddings")) {
        modes.clear();
        for (const auto& name : d.at("embeddings")) modes.push_back(embeddings::mode_from_string(name.get<std::string>()));
      }
      const auto grid = d.contains("grid") ? baselines::grid_spec_from_json(d.at("grid")) : baselines::GridSpec{};
      m.cells = default_cells(m.data.model, m.data.train, modes, grid);
    }
    if (j.contains("cells")) {
      for (const auto& c : j.at("cells")) {
        reject_unknown_keys(c, {"name", "baseline", "grid", "model", "train"}, "matrix cell");
        Cell cell;
        cell.name = c.at("name").get<std::string>();
        if (c.contains("baseline")) {
          cell.is_baseline = true;
          cell.baseline = baselines::kind_from_string(c.at("baseline").get<std::string>());
          if (c.contains("grid")) cell.grid = baselines::grid_spec_from_json(c.at("grid"));
        } else {
          cell.model = c.contains("model") ? model::model_config_from_json(c.at("model"), m.data.model) : m.data.model;
          if (!cell.model.embedding.path.empty())
            cell.model.embedding.path = resolve(base_dir, cell.model.embedding.path.string());
          cell.train = c.contains("train") ? model::train_config_from_json(c.at("train"), m.data.train) : m.data.train;
        }
        m.cells.push_back(std::move(cell));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("matrix config: ") + e.what());
  }
  if (m.cells.empty()) throw ConfigError("matrix config: no cells (give 'cells' or 'default_cells')");
  if (m.jobs == 0) throw ConfigError("matrix config: jobs must be positive");
  validate_cells(m.cells);
  return m;
}

MatrixData prepare_matrix_data(const PipelineConfig& config) {
  if (config.input.empty()) throw ConfigError("matrix data: input is required");
  AdaptedStream stream = adapt_dataset(config.adapter, config.input);
  ParseResult parsed = parse_lines(stream.lines, config.parser);
  MatrixData data;
  data.templates = std::move(parsed.templates);
  auto [train, test] = assemble_sequences(parsed.events, stream.session_labels, config.assemble);
  auto [fit, valid] = split_validation(train, config.valid_fraction, config.train.seed);
  data.train = std::move(fit);
  data.valid = std::move(valid);
  data.test = std::move(test);
  return data;
}

}  // namespace loglab::harness
