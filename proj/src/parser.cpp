#include "loglab/parser.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "loglab/error.hpp"

namespace loglab::parser {

void ParserConfig::validate() const {
  if (depth < 3) throw ConfigError("parser depth must be >= 3, got " + std::to_string(depth));
  if (!(sim_threshold > 0.0 && sim_threshold <= 1.0))
    throw ConfigError("parser sim_threshold must lie in (0,1], got " + std::to_string(sim_threshold));
  if (max_children < 1) throw ConfigError("parser max_children must be >= 1");
  Masker{masking_rules};
}

std::vector<MaskingRule> default_masking_rules() {
  return {
      {R"(\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}(:\d+)?)", std::string(kWildcard)},
      {R"(blk_-?\d+)", std::string(kWildcard)},
      {R"(0x[0-9a-fA-F]+)", std::string(kWildcard)},
      {R"((^|\s)-?\d+(\.\d+)?(?=\s|$))", "$1" + std::string(kWildcard)},
  };
}

Masker::Masker(const std::vector<MaskingRule>& rules) {
  rules_.reserve(rules.size());
  for (const auto& r : rules) {
    try {
      rules_.emplace_back(std::regex(r.pattern, std::regex::ECMAScript | std::regex::optimize), r.replacement);
    } catch (const std::regex_error& e) {
      throw ConfigError("invalid masking rule '" + r.pattern + "': " + e.what());
    }
  }
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

bool has_digit(std::string_view token) {
  return std::any_of(token.begin(), token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

}  // namespace

std::string Masker::apply(std::string_view content) const {
  std::string text(content);
  for (const auto& [re, replacement] : rules_) text = std::regex_replace(text, re, replacement);
  return join(tokenize(text));
}

std::string preprocess_line(std::string_view content, const std::vector<MaskingRule>& rules) {
  return Masker(rules).apply(content);
}

std::string Template::text() const { return join(tokens); }

DrainParser::DrainParser(ParserConfig config) : config_(std::move(config)), masker_(config_.masking_rules) {
  config_.validate();
}

ParseOutcome DrainParser::parse(std::string_view raw_content) { return parse_preprocessed(preprocess(raw_content)); }

DrainParser::Node& DrainParser::descend(const std::vector<std::string>& tokens) {
  const auto max_children = static_cast<std::size_t>(config_.max_children);
  auto child = [](Node& n, const std::string& key) -> Node& {
    auto& slot = n.children[key];
    if (!slot) slot = std::make_unique<Node>();
    return *slot;
  };

  Node* node = &child(root_, std::to_string(tokens.size()));
  const std::size_t prefix = std::min(static_cast<std::size_t>(config_.depth - 2), tokens.size());
  const std::string wildcard(kWildcard);
  for (std::size_t i = 0; i < prefix; ++i) {
    const std::string key = has_digit(tokens[i]) ? wildcard : tokens[i];
    if (node->children.contains(key)) {
      node = node->children[key].get();
      continue;
    }
    if (key == wildcard) {
      node = &child(*node, wildcard);
      continue;
    }
    const bool has_wild_child = node->children.contains(wildcard);
    const std::size_t size = node->children.size();
    if (has_wild_child) {
      node = size < max_children ? &child(*node, key) : &child(*node, wildcard);
    } else if (size + 1 < max_children) {
      node = &child(*node, key);
    } else {
      // The last free slot is reserved for the overflow child.
      node = &child(*node, wildcard);
    }
  }
  return *node;
}

double DrainParser::similarity(const std::vector<std::string>& tmpl, const std::vector<std::string>& tokens,
                               int* wildcards) {
  int same = 0;
  int wild = 0;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == kWildcard) {
      ++wild;
    } else if (tmpl[i] == tokens[i]) {
      ++same;
    }
  }
  if (wildcards) *wildcards = wild;
  return static_cast<double>(same) / static_cast<double>(tmpl.size());
}

ParseOutcome DrainParser::parse_preprocessed(std::string_view content) {
  const std::vector<std::string> tokens = tokenize(content);
  if (tokens.empty()) throw DataError("parse error: empty log content");

  Node& leaf = descend(tokens);
  int best_id = -1;
  double best_sim = -1.0;
  int best_wild = -1;
  for (const int id : leaf.groups) {
    int wild = 0;
    const double sim = similarity(templates_[static_cast<std::size_t>(id)].tokens, tokens, &wild);
    if (sim > best_sim || (sim == best_sim && wild > best_wild)) {
      best_id = id;
      best_sim = sim;
      best_wild = wild;
    }
  }

  // A full leaf folds the line into its closest group instead of growing.
  const bool full = leaf.groups.size() >= static_cast<std::size_t>(config_.max_children);
  if (best_id < 0 || (best_sim < config_.sim_threshold && !full)) {
    best_id = static_cast<int>(templates_.size());
    templates_.push_back(Template{best_id, tokens});
    leaf.groups.push_back(best_id);
  }

  auto& tmpl = templates_[static_cast<std::size_t>(best_id)].tokens;
  ParseOutcome outcome{best_id, {}};
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != tokens[i]) tmpl[i] = std::string(kWildcard);
    if (tmpl[i] == kWildcard) outcome.parameters.push_back(tokens[i]);
  }
  return outcome;
}

}  // namespace loglab::parser
