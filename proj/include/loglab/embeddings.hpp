#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loglab/parser.hpp"

namespace loglab::embeddings {

using Vector = std::vector<double>;

enum class Mode { random, hashed, file };

std::string to_string(Mode mode);
/// Throws ConfigError on an unknown name.
Mode mode_from_string(const std::string& name);

struct ProviderConfig {
  Mode mode = Mode::hashed;
  std::size_t dim = 32;
  std::uint64_t seed = 0;
  std::filesystem::path path;  // file mode only
};

/// Parsed embeddings.jsonl: {"template_id": int, "vector": [float, ...]} per line.
struct EmbeddingTable {
  std::optional<std::size_t> dim;  // unset until the first row
  std::map<int, Vector> rows;
};

/// Throws DataError (with the 1-based line number) on ragged rows, duplicate
/// ids, non-finite values or malformed JSON.
EmbeddingTable load_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const std::filesystem::path& path, const EmbeddingTable& table);

/// Per-template vectors. Immutable after construction.
class Provider {
 public:
  /// `templates` supplies token lists for hashed mode and the vocabulary that
  /// random mode materializes up front. Throws ConfigError / DataError.
  Provider(ProviderConfig config, const std::vector<parser::Template>& templates);
  /// Wraps a materialized table (e.g. restored from a checkpoint). Random mode
  /// still answers ids missing from the table.
  Provider(ProviderConfig config, std::map<int, Vector> table);

  std::size_t dim() const { return dim_; }
  Mode mode() const { return config_.mode; }

  /// Throws DataError for ids the provider cannot resolve.
  Vector get(int template_id) const;
  bool contains(int template_id) const { return table_.contains(template_id); }
  const std::map<int, Vector>& table() const { return table_; }

 private:
  ProviderConfig config_;
  std::size_t dim_ = 0;
  std::map<int, Vector> table_;
};

/// Standard-normal vector for one id, deterministic in (seed, id).
Vector random_vector(std::uint64_t seed, int template_id, std::size_t dim);

/// Signed feature hashing of the token multiset into dim buckets, L2-normalized.
Vector hashed_vector(const std::vector<std::string>& tokens, std::size_t dim);

inline constexpr int kAggId = -1;
inline constexpr int kEosId = -2;
inline constexpr int kPadId = -3;

struct SpecialTokenSet {
  Vector agg_vec;
  Vector eos_vec;
  Vector pad_vec;
  int agg_id = kAggId;
  int eos_id = kEosId;
  int pad_id = kPadId;
};

/// Three seeded standard-normal vectors. Throws ConfigError if dim < 4.
SpecialTokenSet make_special_tokens(std::uint64_t seed, std::size_t dim);

}  // namespace loglab::embeddings
