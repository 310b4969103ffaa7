#include <fstream>
#include <sstream>

#include "doctest.h"
#include "loglab/error.hpp"
#include "loglab/harness.hpp"
#include "loglab/synthgen.hpp"
#include "test_support.hpp"

using namespace loglab;
using namespace loglab::harness;

namespace {

AdaptedStream adapt_text(const AdapterConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  return adapt_stream(cfg, in);
}

std::string file_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small synthetic occurrence corpus plus a pipeline config over it.
PipelineConfig small_pipeline(const fs::path& dir) {
  auto spec = synthgen::CorpusSpec::with_defaults(synthgen::AnomalyKind::occurrence, 5);
  spec.n_sequences = 120;
  synthgen::write_corpus(synthgen::generate_corpus(spec), dir / "corpus.log", dir / "truth.jsonl");
  const auto doc = json::parse(R"({
    "input": "corpus.log", "output_dir": "out",
    "adapter": {"format": "generic", "columns": {"ts": 0, "session": 1, "msg": 2}, "labels": "truth.jsonl"},
    "model": {"preset": "desk", "d_model": 16, "n_heads": 2, "ffn_dim": 16, "embedding": {"mode": "hashed", "dim": 16}},
    "train": {"epochs": 2, "batch_size": 16}
  })");
  return pipeline_config_from_json(doc, dir);
}

}  // namespace

TEST_CASE("bgl-like adapter: label from the first field, timestamp from the second") {
  AdapterConfig cfg;
  cfg.format = Format::bgl_like;
  const auto s = adapt_text(cfg,
                            "- 1117838570 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.50.675872 "
                            "R02-M1-N0-C:J12-U11 RAS KERNEL INFO instruction cache parity error corrected\n"
                            "APPREAD 1117838573 2005.06.03 R27-M1-N4-I:J18-U11 2005-06-03-15.42.53.276129 "
                            "R27-M1-N4-I:J18-U11 RAS APP FATAL ciod: failed to read message prefix on control stream\n");
  REQUIRE(s.lines.size() == 2);
  CHECK(s.lines[0].label == 0);
  CHECK(s.lines[0].timestamp == 1117838570);
  CHECK(s.lines[0].content == "instruction cache parity error corrected");
  CHECK(s.lines[1].label == 1);
  CHECK(s.lines[1].timestamp == 1117838573);
}

TEST_CASE("generic adapter with a column map") {
  AdapterConfig cfg;
  cfg.columns = {0, 2, std::nullopt, std::nullopt};
  const auto s = adapt_text(cfg, "9 X hello\n");
  REQUIRE(s.lines.size() == 1);
  CHECK(s.lines[0].timestamp == 9);
  CHECK(s.lines[0].content == "hello");
  cfg.columns = {0, 3, 1, 2};
  const auto t = adapt_text(cfg, "12 sessA 1 disk  failed  now\n");
  CHECK(t.lines[0].session_key == "sessA");
  CHECK(t.lines[0].label == 1);
  CHECK(t.lines[0].content == "disk  failed  now");
}

TEST_CASE("hdfs adapter extracts block ids and joins annotation labels") {
  const auto dir = test_support::scratch_dir("hdfs");
  std::ofstream(dir / "anomaly_label.csv") << "BlockId,Label\nblk_-1608999687919862906,Normal\nblk_7503483334202473044,Anomaly\n";
  AdapterConfig cfg;
  cfg.format = Format::hdfs;
  cfg.labels_path = dir / "anomaly_label.csv";
  const auto s = adapt_text(cfg,
                            "081109 203615 148 INFO dfs.DataNode$PacketResponder: PacketResponder 1 for block "
                            "blk_-1608999687919862906 terminating\n"
                            "081109 203807 222 INFO dfs.DataNode$PacketResponder: Received block "
                            "blk_7503483334202473044 of size 233217 from /10.251.215.16\n");
  REQUIRE(s.lines.size() == 2);
  CHECK(s.lines[0].session_key == "blk_-1608999687919862906");
  CHECK(s.lines[0].timestamp == 1226262975);  // 2008-11-09 20:36:15 UTC
  CHECK(s.lines[1].timestamp - s.lines[0].timestamp == 112);
  CHECK(s.session_labels.at("blk_7503483334202473044") == 1);
  CHECK(s.session_labels.at("blk_-1608999687919862906") == 0);
}

TEST_CASE("malformed lines are counted; more than 1% aborts") {
  AdapterConfig cfg;
  cfg.columns = {0, 1, std::nullopt, std::nullopt};
  std::string ok;
  for (int i = 0; i < 200; ++i) ok += std::to_string(i) + " fine line\n";
  const auto s = adapt_text(cfg, ok + "notanumber oops\n");
  CHECK(s.malformed == 1);
  CHECK(s.lines.size() == 200);
  CHECK_THROWS_AS(adapt_text(cfg, ok + "x a\ny b\nz c\n"), DataError);
}

TEST_CASE("artifact files round-trip") {
  const auto dir = test_support::scratch_dir("io");
  const std::vector<parser::Template> templates{{0, {"a", "<*>"}}, {1, {"b"}}};
  write_templates(dir / "t.jsonl", templates);
  const auto t = read_templates(dir / "t.jsonl");
  CHECK(t[0].tokens == templates[0].tokens);
  const std::vector<Event> events{{1, 10, 0, 1, "k"}, {2, 11, 1, std::nullopt, std::nullopt}};
  write_events(dir / "e.jsonl", events);
  const auto e = read_events(dir / "e.jsonl");
  CHECK(e[0].session_key == "k");
  CHECK_FALSE(e[1].label.has_value());
  const std::vector<LabeledSequence> seqs{{{0, 1}, {0, 3}, 1, 0}};
  write_sequences(dir / "s.jsonl", seqs);
  CHECK(read_sequences(dir / "s.jsonl")[0].elapsed == seqs[0].elapsed);
  std::ofstream(dir / "bad.jsonl") << "{\"events\":[1],\"elapsed\":[0,1],\"label\":0}\n";
  CHECK_THROWS_WITH_AS(read_sequences(dir / "bad.jsonl"), doctest::Contains("bad.jsonl:1"), DataError);
  write_predictions(dir / "p.jsonl", {1, 0}, {0.9, 0.1});
  CHECK(read_prediction_labels(dir / "p.jsonl") == std::vector<int>{1, 0});
  const auto row = json::parse(file_text(dir / "p.jsonl").substr(0, file_text(dir / "p.jsonl").find('\n')));
  CHECK(row == json{{"index", 0}, {"prob", 0.9}, {"label", 1}});
  CHECK(sha256_text("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("pipeline config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(pipeline_config_from_json(json::parse(R"({"inptu": "x"})")), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(json::parse(R"({"assemble": {"grouping": "hourly"}})")), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(json::parse(R"({"valid_fraction": 1.5})")), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json(json::parse(R"({"model": {"n_heads": 3}})")), ConfigError);
}

TEST_CASE("pipeline: end to end, cached rerun, corrupted intermediate") {
  const auto dir = test_support::scratch_dir("pipeline");
  const auto cfg = small_pipeline(dir);
  const auto first = run_pipeline(cfg);
  REQUIRE(first.stages.size() == 4);
  for (const auto& s : first.stages) CHECK_FALSE(s.skipped);
  const auto report = read_json_file(dir / "out" / "report.json");
  for (const char* k : {"precision", "recall", "specificity", "f1"}) CHECK(report.contains(k));
  for (const char* f : {"templates.jsonl", "events.jsonl", "train.jsonl", "test.jsonl", "model.ckpt.json",
                        "history.json", "preds.jsonl", "stages.json"})
    CHECK(fs::exists(dir / "out" / f));

  const auto second = run_pipeline(cfg);
  for (const auto& s : second.stages) CHECK(s.skipped);

  std::ofstream(dir / "out" / "events.jsonl", std::ios::app) << "garbage\n";
  try {
    run_pipeline(cfg);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "parse");
  }

  auto forced = cfg;
  forced.force = true;
  const auto third = run_pipeline(forced);
  for (const auto& s : third.stages) CHECK_FALSE(s.skipped);
  CHECK(file_text(dir / "out" / "report.json") == report.dump(2) + "\n");
}

TEST_CASE("pipeline: a stage failure names the stage") {
  const auto dir = test_support::scratch_dir("pipeline_fail");
  auto cfg = small_pipeline(dir);
  cfg.model.embedding.mode = embeddings::Mode::file;
  cfg.model.embedding.path = dir / "missing.jsonl";
  std::ofstream(dir / "missing.jsonl") << "";
  try {
    run_pipeline(cfg);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "train");
  }
}

TEST_CASE("matrix: one row per attempted cell, failures carry an error") {
  const auto dir = test_support::scratch_dir("matrix");
  const auto cfg = small_pipeline(dir);
  const auto data = prepare_matrix_data(cfg);
  std::vector<Cell> cells;
  for (auto enc : {encodings::EncodingMode::none, encodings::EncodingMode::positional, encodings::EncodingMode::rtee,
                   encodings::EncodingMode::time2vec}) {
    Cell c;
    c.name = "hashed+" + encodings::to_string(enc);
    c.model = cfg.model;
    c.model.encoding = enc;
    c.train = cfg.train;
    c.train.epochs = 1;
    cells.push_back(c);
  }
  Cell broken = cells[0];
  broken.name = "broken";
  broken.model.embedding.mode = embeddings::Mode::file;
  broken.model.embedding.path = dir / "nope.jsonl";
  cells.push_back(broken);
  Cell dt;
  dt.name = "mcv+dt";
  dt.is_baseline = true;
  dt.baseline = baselines::Kind::dt;
  cells.push_back(dt);

  const auto results = run_matrix(cells, data, 2);
  const auto report = matrix_report(results);
  REQUIRE(report.at("rows").size() == cells.size());
  CHECK(report.at("rows").back().at("cell") == "broken");
  CHECK_FALSE(report.at("rows").back().at("error").get<std::string>().empty());
  double prev = 2.0;
  for (const auto& row : report.at("rows")) {
    if (!row.at("error").is_null()) continue;
    CHECK(row.at("f1").get<double>() <= prev);
    prev = row.at("f1").get<double>();
  }
  CHECK(render_matrix(report).find("FAILED") != std::string::npos);

  cells.push_back(cells[0]);
  CHECK_THROWS_AS(validate_cells(cells), ConfigError);
}

TEST_CASE("default cells cover the ablation design") {
  const auto cells = default_cells(model::ModelConfig::desk_preset(), {}, {embeddings::Mode::random, embeddings::Mode::hashed}, {});
  CHECK(cells.size() == 2 * 4 + 2 + 3);
  validate_cells(cells);
}

TEST_CASE("parse stage drops lines that are empty after masking") {
  std::vector<parser::RawLogLine> lines(3);
  lines[0].line_no = 1;
  lines[0].content = "disk ok";
  lines[1].line_no = 2;
  lines[1].content = "   ";
  lines[2].line_no = 3;
  lines[2].content = "disk ok";
  const auto r = parse_lines(lines, parser::ParserConfig{});
  REQUIRE(r.events.size() == 2);
  CHECK(r.events[1].line_no == 3);
  CHECK(r.templates.size() == 1);
}
