// loglab command-line interface.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 stage failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "loglab/baselines.hpp"
#include "loglab/error.hpp"
#include "loglab/harness.hpp"
#include "loglab/log.hpp"
#include "loglab/metrics.hpp"
#include "loglab/model.hpp"
#include "loglab/synthgen.hpp"

namespace fs = std::filesystem;
using namespace loglab;
using nlohmann::json;

namespace {

fs::path parent_of(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

// A config document that cannot be opened or parsed is a config error, not a data error.
json read_config_file(const std::string& path) {
  try {
    return harness::read_json_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

harness::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return harness::pipeline_config_from_json(json::object());
  return harness::pipeline_config_from_json(read_config_file(path), parent_of(path));
}

void print_scores(const metrics::ConfusionCounts& c) { std::cout << metrics::render_report(c, metrics::scores(c)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loglab: log anomaly detection with transformer sequence classifiers"};
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");
  app.add_flag("-v,--verbose", verbose, "Print progress");

  // parse
  auto* parse = app.add_subcommand("parse", "Mine templates from a raw log file");
  std::string parse_input, parse_format = "generic", parse_labels, parse_config, templates_out = "templates.jsonl",
                           events_out = "events.jsonl";
  std::size_t col_ts = 0, col_msg = 1;
  std::optional<std::size_t> col_session, col_label;
  parse->add_option("--input", parse_input, "Raw log file")->required();
  parse->add_option("--format", parse_format, "hdfs | bgl-like | generic");
  parse->add_option("--labels", parse_labels, "Session label file (anomaly_label.csv or truth JSONL)");
  parse->add_option("--config", parse_config, "Pipeline config supplying adapter/parser sections");
  parse->add_option("--ts-col", col_ts, "generic: timestamp field");
  parse->add_option("--msg-col", col_msg, "generic: first message field");
  parse->add_option("--session-col", col_session, "generic: session key field");
  parse->add_option("--label-col", col_label, "generic: 0/1 label field");
  parse->add_option("--templates", templates_out, "Output templates.jsonl");
  parse->add_option("--events", events_out, "Output events.jsonl");

  // assemble
  auto* assemble = app.add_subcommand("assemble", "Group events into labeled sequences and split them");
  std::string events_in, train_out = "train.jsonl", test_out = "test.jsonl", split_mode = "chrono", grouping = "session";
  harness::AssembleConfig acfg;
  std::optional<std::size_t> fixed_size;
  assemble->add_option("--events", events_in, "events.jsonl")->required();
  assemble->add_option("--grouping", grouping, "session | variable | fixed");
  assemble->add_option("--min-len", acfg.windows.min_len, "Variable windows: minimum length");
  assemble->add_option("--max-len", acfg.windows.max_len, "Variable windows: maximum length");
  assemble->add_option("--step", acfg.windows.step, "Window step");
  assemble->add_option("--fixed-size", fixed_size, "Fixed windows of this size (implies --grouping fixed)");
  assemble->add_option("--split", split_mode, "chrono | shuffle");
  assemble->add_option("--train-fraction", acfg.split.train_fraction, "Train share of sequences");
  assemble->add_option("--seed", acfg.split.seed, "Seed for windows and shuffled splits");
  assemble->add_option("--train-out", train_out, "Output train sequences");
  assemble->add_option("--test-out", test_out, "Output test sequences");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth");
  std::string synth_spec, synth_out, synth_truth;
  synth->add_option("--spec", synth_spec, "Corpus spec JSON")->required();
  synth->add_option("--out", synth_out, "Output log file")->required();
  synth->add_option("--truth", synth_truth, "Output truth JSONL")->required();

  // train
  auto* trainc = app.add_subcommand("train", "Train the transformer classifier");
  std::string train_config, train_in, train_templates, model_out = "model.ckpt.json", history_out;
  trainc->add_option("--config", train_config, "Config JSON with model/train/valid_fraction");
  trainc->add_option("--train", train_in, "Training sequences.jsonl")->required();
  trainc->add_option("--templates", train_templates, "templates.jsonl (needed by hashed embeddings)");
  trainc->add_option("--out", model_out, "Output checkpoint");
  trainc->add_option("--history", history_out, "Output training history JSON");

  // predict
  auto* predict = app.add_subcommand("predict", "Score sequences with a checkpoint");
  std::string predict_model, predict_in, predict_out = "preds.jsonl";
  predict->add_option("--model", predict_model, "Checkpoint")->required();
  predict->add_option("--in", predict_in, "sequences.jsonl")->required();
  predict->add_option("--out", predict_out, "Output preds.jsonl");

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against labeled sequences");
  std::string eval_preds, eval_truth, eval_report;
  eval->add_option("--preds", eval_preds, "preds.jsonl")->required();
  eval->add_option("--truth", eval_truth, "Labeled sequences.jsonl")->required();
  eval->add_option("--report", eval_report, "Output report.json");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Grid-search and test an MCV baseline");
  std::string base_kind, base_grid, base_train, base_test, base_report, base_preds;
  baseline->add_option("--model", base_kind, "knn | dt | mlp")->required();
  baseline->add_option("--grid", base_grid, "Grid JSON");
  baseline->add_option("--train", base_train, "Training sequences.jsonl")->required();
  baseline->add_option("--test", base_test, "Test sequences.jsonl")->required();
  baseline->add_option("--report", base_report, "Output report.json");
  baseline->add_option("--preds", base_preds, "Output preds.jsonl");

  // matrix
  auto* matrix = app.add_subcommand("matrix", "Run an ablation matrix");
  std::string matrix_config, matrix_out;
  std::optional<std::size_t> jobs;
  matrix->add_option("--config", matrix_config, "Matrix config JSON")->required();
  matrix->add_option("--out", matrix_out, "Output matrix report JSON");
  matrix->add_option("--jobs", jobs, "Cells run in parallel");

  // report
  auto* report = app.add_subcommand("report", "Render a report.json or matrix report as text");
  std::string report_in;
  report->add_option("--in", report_in, "report.json or matrix JSON")->required();

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run parse -> assemble -> train -> eval with stage caching");
  std::string pipeline_config;
  bool force = false;
  pipeline->add_option("--config", pipeline_config, "Pipeline config JSON")->required();
  pipeline->add_flag("--force", force, "Rerun every stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  set_verbosity(quiet ? Verbosity::quiet : verbose ? Verbosity::info : Verbosity::warn);

  try {
    if (*parse) {
      harness::PipelineConfig cfg = load_config(parse_config);
      if (parse_config.empty()) {
        cfg.adapter.format = harness::format_from_string(parse_format);
        cfg.adapter.columns = {col_ts, col_msg, col_session, col_label};
      }
      if (!parse_labels.empty()) cfg.adapter.labels_path = parse_labels;
      auto stream = harness::adapt_dataset(cfg.adapter, parse_input);
      auto parsed = harness::parse_lines(stream.lines, cfg.parser);
      for (auto& e : parsed.events) {
        if (e.label || !e.session_key) continue;
        const auto it = stream.session_labels.find(*e.session_key);
        if (it != stream.session_labels.end()) e.label = it->second;
      }
      harness::write_templates(templates_out, parsed.templates);
      harness::write_events(events_out, parsed.events);
      std::cout << parsed.events.size() << " events, " << parsed.templates.size() << " templates, "
                << stream.malformed << " malformed lines skipped\n";
    } else if (*assemble) {
      if (grouping == "session") acfg.grouping = harness::Grouping::session;
      else if (grouping == "variable") acfg.grouping = harness::Grouping::variable;
      else if (grouping == "fixed") acfg.grouping = harness::Grouping::fixed;
      else throw ConfigError("--grouping must be session|variable|fixed");
      if (fixed_size) {
        acfg.grouping = harness::Grouping::fixed;
        acfg.fixed_size = *fixed_size;
        acfg.fixed_step = acfg.windows.step;
      }
      if (split_mode == "chrono") acfg.split.mode = assembler::SplitMode::chronological;
      else if (split_mode == "shuffle") acfg.split.mode = assembler::SplitMode::shuffled_sessions;
      else throw ConfigError("--split must be chrono|shuffle");
      acfg.windows.seed = acfg.split.seed;
      if (acfg.grouping == harness::Grouping::variable) acfg.windows.validate();
      if (acfg.grouping == harness::Grouping::fixed && (acfg.fixed_size == 0 || acfg.fixed_step == 0))
        throw ConfigError("--fixed-size and --step must be positive");
      const auto events = harness::read_events(events_in);
      const auto [train, test] = harness::assemble_sequences(events, {}, acfg);
      harness::write_sequences(train_out, train);
      harness::write_sequences(test_out, test);
      std::cout << train.size() << " train, " << test.size() << " test sequences\n";
    } else if (*synth) {
      const auto spec = synthgen::corpus_spec_from_json(read_config_file(synth_spec));
      const auto corpus = synthgen::generate_corpus(spec);
      synthgen::write_corpus(corpus, synth_out, synth_truth);
      std::cout << corpus.sessions.size() << " sessions, " << corpus.lines.size() << " lines\n";
    } else if (*trainc) {
      const auto cfg = load_config(train_config);
      const auto sequences = harness::read_sequences(train_in);
      const auto templates = train_templates.empty() ? std::vector<parser::Template>{}
                                                     : harness::read_templates(train_templates);
      const auto [fit, valid] = harness::split_validation(sequences, cfg.valid_fraction, cfg.train.seed);
      std::vector<parser::Template> vocab = templates;
      if (vocab.empty()) {
        // Random and file embeddings only need the ids seen in training.
        std::set<int> ids;
        for (const auto& s : sequences) ids.insert(s.events.begin(), s.events.end());
        for (const int id : ids) vocab.push_back({id, {}});
      }
      embeddings::Provider provider(cfg.model.embedding, vocab);
      model::TransformerClassifier net(cfg.model, provider.dim());
      const auto history = model::train(net, provider, fit, valid, cfg.train);
      std::vector<int> ids;
      for (const auto& t : vocab) ids.push_back(t.template_id);
      model::save_checkpoint(model_out, net, provider, ids);
      if (!history_out.empty()) harness::write_json_file(history_out, model::to_json(history));
      std::cout << "best epoch " << history.best_epoch << ", valid F1 "
                << history.epochs.at(history.best_epoch).valid_f1 << "\n";
    } else if (*predict) {
      auto loaded = model::load_checkpoint(predict_model);
      embeddings::Provider provider(loaded.model.config().embedding, loaded.embeddings.rows);
      const auto sequences = harness::read_sequences(predict_in);
      const auto probs = model::predict_proba(loaded.model, provider, sequences);
      harness::write_predictions(predict_out, model::apply_threshold(probs, loaded.model.config().threshold), probs);
    } else if (*eval) {
      const auto preds = harness::read_prediction_labels(eval_preds);
      const auto truth = harness::read_sequences(eval_truth);
      const auto counts = metrics::confusion(preds, harness::labels_of(truth));
      if (!eval_report.empty())
        harness::write_json_file(eval_report, metrics::report_json(counts, metrics::scores(counts)));
      print_scores(counts);
    } else if (*baseline) {
      const auto kind = baselines::kind_from_string(base_kind);
      const auto grid = base_grid.empty() ? baselines::GridSpec{}
                                          : baselines::grid_spec_from_json(read_config_file(base_grid));
      grid.validate(kind);
      const auto train = harness::read_sequences(base_train);
      const auto test = harness::read_sequences(base_test);
      const auto [fit, valid] = harness::split_validation(train, grid.valid_fraction, grid.seed);
      const std::size_t vocab = baselines::vocabulary_size(train);
      const auto result = baselines::grid_search(kind, grid, baselines::make_dataset(fit, vocab),
                                                 baselines::make_dataset(valid, vocab));
      const json& best = result.table.at(result.best).hyperparameters;
      baselines::FittedBaseline fitted(kind, best, baselines::make_dataset(train, vocab));
      const auto preds = fitted.predict(baselines::make_dataset(test, vocab).features);
      const auto counts = metrics::confusion(preds, harness::labels_of(test));
      if (!base_report.empty()) {
        json doc = metrics::report_json(counts, metrics::scores(counts));
        doc["model"] = baselines::to_string(kind);
        doc["hyperparameters"] = best;
        harness::write_json_file(base_report, doc);
      }
      if (!base_preds.empty()) harness::write_predictions(base_preds, preds);
      std::cout << "best " << best.dump() << "\n";
      print_scores(counts);
    } else if (*matrix) {
      auto cfg = harness::matrix_config_from_json(read_config_file(matrix_config), parent_of(matrix_config));
      if (jobs) cfg.jobs = *jobs;
      if (cfg.jobs == 0) throw ConfigError("--jobs must be positive");
      const auto data = harness::prepare_matrix_data(cfg.data);
      const auto results = harness::run_matrix(cfg.cells, data, cfg.jobs);
      const json doc = harness::matrix_report(results);
      if (!matrix_out.empty()) harness::write_json_file(matrix_out, doc);
      std::cout << harness::render_matrix(doc);
    } else if (*report) {
      const json doc = harness::read_json_file(report_in);
      if (doc.contains("rows")) {
        std::cout << harness::render_matrix(doc);
      } else {
        try {
          print_scores({doc.at("tp").get<std::size_t>(), doc.at("fp").get<std::size_t>(),
                        doc.at("tn").get<std::size_t>(), doc.at("fn").get<std::size_t>()});
        } catch (const json::exception& e) {
          throw DataError(report_in + ": not a report (" + e.what() + ")");
        }
      }
    } else if (*pipeline) {
      auto cfg = load_config(pipeline_config);
      cfg.force = cfg.force || force;
      const auto result = harness::run_pipeline(cfg);
      for (const auto& s : result.stages) std::cout << s.name << (s.skipped ? ": skipped (hash hit)\n" : ": ran\n");
      print_scores(result.counts);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
