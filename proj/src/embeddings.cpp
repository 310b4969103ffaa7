#include "loglab/embeddings.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "loglab/error.hpp"
#include "loglab/rng.hpp"

namespace loglab::embeddings {

using nlohmann::json;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::random: return "random";
    case Mode::hashed: return "hashed";
    case Mode::file: return "file";
  }
  return "?";
}

Mode mode_from_string(const std::string& name) {
  if (name == "random") return Mode::random;
  if (name == "hashed") return Mode::hashed;
  if (name == "file") return Mode::file;
  throw ConfigError("unknown embedding mode '" + name + "' (expected random|hashed|file)");
}

EmbeddingTable load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!row.is_object() || !row.contains("template_id") || !row["template_id"].is_number_integer() ||
        !row.contains("vector") || !row["vector"].is_array())
      fail("expected {\"template_id\": int, \"vector\": [float, ...]}");
    const int id = row["template_id"].get<int>();
    Vector v;
    v.reserve(row["vector"].size());
    for (const auto& x : row["vector"]) {
      if (!x.is_number()) fail("non-numeric vector entry");
      const double value = x.get<double>();
      if (!std::isfinite(value)) fail("non-finite vector entry");
      v.push_back(value);
    }
    if (v.empty()) fail("empty vector");
    if (table.dim && *table.dim != v.size())
      fail("ragged row: dimension " + std::to_string(v.size()) + " differs from " + std::to_string(*table.dim));
    if (table.rows.contains(id)) fail("duplicate template_id " + std::to_string(id));
    table.dim = v.size();
    table.rows.emplace(id, std::move(v));
  }
  return table;
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embedding file " + path.string());
  for (const auto& [id, v] : table.rows) out << json{{"template_id", id}, {"vector", v}}.dump() << '\n';
}

Vector random_vector(std::uint64_t seed, int template_id, std::size_t dim) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(template_id)));
  Vector v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Vector hashed_vector(const std::vector<std::string>& tokens, std::size_t dim) {
  Vector v(dim, 0.0);
  for (const auto& token : tokens) {
    const std::uint64_t h = fnv1a(token);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % dim] += sign;
  }
  double norm = 0.0;
  for (const double x : v) norm += x * x;
  if (norm == 0.0) {
    // Signed collisions cancelled out; fall back to a one-hot on the joined text.
    std::string joined;
    for (const auto& t : tokens) joined += t + ' ';
    v[fnv1a(joined) % dim] = 1.0;
    return v;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

Provider::Provider(ProviderConfig config, const std::vector<parser::Template>& templates)
    : config_(std::move(config)) {
  switch (config_.mode) {
    case Mode::random:
    case Mode::hashed:
      if (config_.dim < 4) throw ConfigError("embedding dim must be >= 4, got " + std::to_string(config_.dim));
      dim_ = config_.dim;
      for (const auto& t : templates) {
        table_[t.template_id] = config_.mode == Mode::random ? random_vector(config_.seed, t.template_id, dim_)
                                                             : hashed_vector(t.tokens, dim_);
      }
      break;
    case Mode::file: {
      if (config_.path.empty()) throw ConfigError("file embedding mode requires a path");
      EmbeddingTable table = load_embedding_file(config_.path);
      if (!table.dim) throw DataError("embedding file " + config_.path.string() + " has no rows");
      if (config_.dim != 0 && config_.dim != *table.dim)
        throw DataError("embedding file dimension " + std::to_string(*table.dim) + " does not match configured " +
                        std::to_string(config_.dim));
      dim_ = *table.dim;
      table_ = std::move(table.rows);
      break;
    }
  }
}

Provider::Provider(ProviderConfig config, std::map<int, Vector> table)
    : config_(std::move(config)), table_(std::move(table)) {
  dim_ = table_.empty() ? config_.dim : table_.begin()->second.size();
  if (dim_ == 0) throw ConfigError("embedding table is empty and no dimension is configured");
  for (const auto& [id, v] : table_)
    if (v.size() != dim_) throw DataError("embedding table row " + std::to_string(id) + " has the wrong dimension");
}

Vector Provider::get(int template_id) const {
  if (auto it = table_.find(template_id); it != table_.end()) return it->second;
  if (config_.mode == Mode::random && template_id >= 0) return random_vector(config_.seed, template_id, dim_);
  throw DataError("no " + to_string(config_.mode) + " embedding for template id " + std::to_string(template_id));
}

SpecialTokenSet make_special_tokens(std::uint64_t seed, std::size_t dim) {
  if (dim < 4) throw ConfigError("special tokens need dim >= 4, got " + std::to_string(dim));
  Rng rng(derive_seed(seed, 0x5eC1A1ULL));
  auto draw = [&] {
    Vector v(dim);
    for (auto& x : v) x = rng.normal();
    return v;
  };
  SpecialTokenSet s;
  s.agg_vec = draw();
  s.eos_vec = draw();
  s.pad_vec = draw();
  return s;
}

}  // namespace loglab::embeddings
