#pragma once

// Dataset adapters, JSONL artifact IO, the cached parse -> assemble -> train ->
// eval pipeline, and the ablation matrix runner.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "loglab/assembler.hpp"
#include "loglab/baselines.hpp"
#include "loglab/metrics.hpp"
#include "loglab/model.hpp"
#include "loglab/parser.hpp"

namespace loglab::harness {

namespace fs = std::filesystem;
using assembler::Event;
using assembler::LabeledSequence;
using nlohmann::json;

// ------------------------------------------------------------------- adapters

enum class Format { hdfs, bgl_like, generic };

std::string to_string(Format format);
Format format_from_string(const std::string& name);

/// Whitespace-separated field indices for the generic format. The message is
/// field `msg` through the end of the line.
struct ColumnMap {
  std::size_t ts = 0;
  std::size_t msg = 1;
  std::optional<std::size_t> session;
  std::optional<std::size_t> label;
};

struct AdapterConfig {
  Format format = Format::generic;
  ColumnMap columns;
  /// hdfs: anomaly_label.csv ("BlockId,Label" with Normal/Anomaly).
  /// generic: truth JSONL with {"session_key", "label"} rows.
  fs::path labels_path;
  double max_malformed_fraction = 0.01;
};

struct AdaptedStream {
  std::vector<parser::RawLogLine> lines;
  std::map<std::string, int> session_labels;
  std::size_t malformed = 0;
};

/// Throws DataError if more than max_malformed_fraction of the lines are malformed.
AdaptedStream adapt_stream(const AdapterConfig& config, std::istream& in);
AdaptedStream adapt_dataset(const AdapterConfig& config, const fs::path& raw_path);

/// Session labels from an HDFS anomaly_label.csv or a truth JSONL file.
std::map<std::string, int> load_session_labels(Format format, const fs::path& path);

// ---------------------------------------------------------------- artifact IO

void write_templates(const fs::path& path, const std::vector<parser::Template>& templates);
std::vector<parser::Template> read_templates(const fs::path& path);

void write_events(const fs::path& path, const std::vector<Event>& events);
std::vector<Event> read_events(const fs::path& path);

/// {"events": [...], "elapsed": [...], "label": 0|1} per line.
void write_sequences(const fs::path& path, const std::vector<LabeledSequence>& sequences);
std::vector<LabeledSequence> read_sequences(const fs::path& path);

/// {"index", "prob", "label"} per line; prob is omitted for baselines.
void write_predictions(const fs::path& path, const std::vector<int>& labels,
                       const std::vector<double>& probabilities = {});
std::vector<int> read_prediction_labels(const fs::path& path);

json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const json& doc);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);
std::string sha256_text(const std::string& text);

// ------------------------------------------------------------- stage helpers

struct ParseResult {
  std::vector<parser::Template> templates;
  std::vector<Event> events;
};

ParseResult parse_lines(const std::vector<parser::RawLogLine>& lines, const parser::ParserConfig& config);

enum class Grouping { session, variable, fixed };

struct AssembleConfig {
  Grouping grouping = Grouping::session;
  assembler::WindowSpec windows;
  std::size_t fixed_size = 20;
  std::size_t fixed_step = 20;
  assembler::SplitSpec split;
};

/// Groups events into labeled sequences and splits them into (train, test).
std::pair<std::vector<LabeledSequence>, std::vector<LabeledSequence>> assemble_sequences(
    const std::vector<Event>& events, const std::map<std::string, int>& session_labels, const AssembleConfig& config);

/// Holds out a seeded shuffled validation fraction of a training set.
std::pair<std::vector<LabeledSequence>, std::vector<LabeledSequence>> split_validation(
    const std::vector<LabeledSequence>& train, double valid_fraction, std::uint64_t seed);

std::vector<int> labels_of(const std::vector<LabeledSequence>& sequences);

// ------------------------------------------------------------------- pipeline

struct PipelineConfig {
  fs::path input;
  fs::path output_dir;
  AdapterConfig adapter;
  parser::ParserConfig parser;
  AssembleConfig assemble;
  model::ModelConfig model = model::ModelConfig::desk_preset();
  model::TrainConfig train;
  double valid_fraction = 0.2;
  /// Rerun every stage even on a hash hit.
  bool force = false;
};

/// Throws ConfigError on unknown keys or invalid values. Relative paths
/// resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir = {});
json to_json(const PipelineConfig& config);

struct StageRecord {
  std::string name;
  std::string key;  // hash of the stage's config section and input hashes
  std::map<std::string, std::string> outputs;  // file name -> hash
  bool skipped = false;
};

struct PipelineResult {
  std::vector<StageRecord> stages;
  metrics::ConfusionCounts counts;
  metrics::Scores scores;
};

/// Runs the stages in order, writing templates.jsonl, events.jsonl,
/// train.jsonl, test.jsonl, model.ckpt.json, history.json, preds.jsonl and
/// report.json under output_dir, plus the stages.json hash log. A stage whose
/// key and outputs match the log is skipped. A logged output whose bytes no
/// longer match its hash aborts with StageError naming that stage.
PipelineResult run_pipeline(const PipelineConfig& config);

// --------------------------------------------------------------------- matrix

struct Cell {
  std::string name;
  bool is_baseline = false;
  model::ModelConfig model;  // transformer cells
  model::TrainConfig train;
  baselines::Kind baseline = baselines::Kind::dt;  // baseline cells
  baselines::GridSpec grid;
};

/// Pre-split data shared by every cell.
struct MatrixData {
  std::vector<parser::Template> templates;
  std::vector<LabeledSequence> train;
  std::vector<LabeledSequence> valid;
  std::vector<LabeledSequence> test;
};

struct CellResult {
  std::string name;
  std::optional<metrics::ConfusionCounts> counts;
  std::optional<metrics::Scores> scores;
  std::string error;  // non-empty iff the cell failed
  json details;       // training history or grid table
};

/// Transformer cells over embedding x encoding, the two encoding-only cells
/// and the three baseline cells. Every cell shares `base` and `train`.
std::vector<Cell> default_cells(const model::ModelConfig& base, const model::TrainConfig& train,
                                const std::vector<embeddings::Mode>& embedding_modes,
                                const baselines::GridSpec& grid);

/// Throws ConfigError on duplicate or empty cell names.
void validate_cells(const std::vector<Cell>& cells);

/// Trains and tests one cell. Failures are captured in CellResult::error.
CellResult run_cell(const Cell& cell, const MatrixData& data);

/// Runs every cell with up to `jobs` in parallel. Results keep cell order.
std::vector<CellResult> run_matrix(const std::vector<Cell>& cells, const MatrixData& data, std::size_t jobs = 1);

/// {"rows": [...]} sorted by F1 descending (failures last, then by name).
json matrix_report(const std::vector<CellResult>& results);
std::string render_matrix(const json& report);

/// Matrix document: {"data": pipeline-style data keys, "cells": [...] or
/// "default_cells": {...}, "jobs": n}. See docs/config.md.
struct MatrixConfig {
  PipelineConfig data;
  std::vector<Cell> cells;
  std::size_t jobs = 1;
};

MatrixConfig matrix_config_from_json(const json& j, const fs::path& base_dir = {});

/// Parses and assembles the data section of a matrix config in memory.
MatrixData prepare_matrix_data(const PipelineConfig& config);

}  // namespace loglab::harness
