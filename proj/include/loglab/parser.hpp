#pragma once

// Drain-style template miner: regex masking, then a fixed-depth prefix tree
// keyed by token count and leading tokens, with similarity-based merging of
// the log groups stored at each leaf.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace loglab::parser {

inline constexpr std::string_view kWildcard = "<*>";

struct RawLogLine {
  std::size_t line_no = 0;
  std::int64_t timestamp = 0;
  std::string content;
  std::optional<int> label;  // 0 normal, 1 anomalous
  std::optional<std::string> session_key;
};

struct MaskingRule {
  std::string pattern;
  std::string replacement{kWildcard};
};

struct ParserConfig {
  int depth = 4;
  double sim_threshold = 0.4;
  int max_children = 100;
  std::vector<MaskingRule> masking_rules;

  /// Throws ConfigError on out-of-range values or an invalid regex.
  void validate() const;
};

/// Rules for IPv4 addresses, HDFS block ids, hex literals and bare numbers.
std::vector<MaskingRule> default_masking_rules();

/// Masking rules compiled once; an invalid pattern throws ConfigError here,
/// not per line.
class Masker {
 public:
  explicit Masker(const std::vector<MaskingRule>& rules);
  /// Applies the rules in order and re-joins the result with single spaces.
  std::string apply(std::string_view content) const;

 private:
  std::vector<std::pair<std::regex, std::string>> rules_;
};

std::string preprocess_line(std::string_view content, const std::vector<MaskingRule>& rules);

std::vector<std::string> tokenize(std::string_view text);

struct Template {
  int template_id = 0;
  std::vector<std::string> tokens;

  std::string text() const;
};

struct ParseOutcome {
  int template_id = 0;
  std::vector<std::string> parameters;
};

class DrainParser {
 public:
  explicit DrainParser(ParserConfig config = {});

  /// Masks then parses. Throws DataError on content that is empty after masking.
  ParseOutcome parse(std::string_view raw_content);
  /// Parses content that has already been masked.
  ParseOutcome parse_preprocessed(std::string_view content);

  std::string preprocess(std::string_view raw_content) const { return masker_.apply(raw_content); }

  /// Templates sorted by id; ids are dense from 0 in first-seen order.
  std::vector<Template> export_templates() const { return templates_; }
  std::size_t template_count() const { return templates_.size(); }
  const Template& get(int template_id) const { return templates_.at(static_cast<std::size_t>(template_id)); }
  const ParserConfig& config() const { return config_; }

 private:
  struct Node {
    std::map<std::string, std::unique_ptr<Node>> children;
    std::vector<int> groups;  // template ids stored at a leaf
  };

  Node& descend(const std::vector<std::string>& tokens);
  // Fraction of positions where the template holds the same concrete token.
  static double similarity(const std::vector<std::string>& tmpl, const std::vector<std::string>& tokens,
                           int* wildcards);

  ParserConfig config_;
  Masker masker_;
  Node root_;
  std::vector<Template> templates_;
};

}  // namespace loglab::parser
