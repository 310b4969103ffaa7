#include "loglab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "loglab/error.hpp"
#include "loglab/log.hpp"
#include "loglab/metrics.hpp"

namespace loglab::model {

using nlohmann::json;
using nn::Matrix;
using nn::Tape;
using nn::Var;

// --------------------------------------------------------------------- config

ModelConfig ModelConfig::full_preset() { return ModelConfig{}; }

ModelConfig ModelConfig::desk_preset() {
  ModelConfig c;
  c.d_model = 32;
  c.n_heads = 4;
  c.ffn_dim = 64;
  c.n_layers = 2;
  return c;
}

void ModelConfig::validate() const {
  if (d_model == 0 || d_model % 2 != 0) throw ConfigError("d_model must be a positive even number");
  if (n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be positive");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0,1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
}

json to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},
              {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},
              {"ffn_dim", c.ffn_dim},
              {"max_seq_len", c.max_seq_len},
              {"embedding",
               {{"mode", embeddings::to_string(c.embedding.mode)},
                {"dim", c.embedding.dim},
                {"seed", c.embedding.seed},
                {"path", c.embedding.path.string()}}},
              {"encoding", encodings::to_string(c.encoding)},
              {"threshold", c.threshold},
              {"dropout", c.dropout},
              {"trainable_special", c.trainable_special},
              {"log1p_elapsed", c.log1p_elapsed},
              {"zero_event_embedding", c.zero_event_embedding},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j, const ModelConfig& base) {
  ModelConfig c = base;
  try {
    if (j.contains("preset")) {
      const auto preset = j.at("preset").get<std::string>();
      if (preset == "full") c = ModelConfig::full_preset();
      else if (preset == "desk") c = ModelConfig::desk_preset();
      else throw ConfigError("unknown model preset '" + preset + "' (expected full|desk)");
      c.embedding = base.embedding;
      c.encoding = base.encoding;
      c.seed = base.seed;
    }
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    if (j.contains("embedding")) {
      const auto& e = j.at("embedding");
      if (e.contains("mode")) c.embedding.mode = embeddings::mode_from_string(e.at("mode").get<std::string>());
      c.embedding.dim = e.value("dim", c.embedding.dim);
      c.embedding.seed = e.value("seed", c.embedding.seed);
      if (e.contains("path") && e.at("path").is_string()) c.embedding.path = e.at("path").get<std::string>();
    }
    if (j.contains("encoding")) c.encoding = encodings::mode_from_string(j.at("encoding").get<std::string>());
    c.threshold = j.value("threshold", c.threshold);
    c.dropout = j.value("dropout", c.dropout);
    c.trainable_special = j.value("trainable_special", c.trainable_special);
    c.log1p_elapsed = j.value("log1p_elapsed", c.log1p_elapsed);
    c.zero_event_embedding = j.value("zero_event_embedding", c.zero_event_embedding);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"max_lr", c.max_lr},
              {"beta1", c.adamw.beta1},
              {"beta2", c.adamw.beta2},
              {"eps", c.adamw.eps},
              {"weight_decay", c.adamw.weight_decay},
              {"pct_start", c.pct_start},
              {"div_factor", c.div_factor},
              {"final_div_factor", c.final_div_factor}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  TrainConfig c = base;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.max_lr = j.value("max_lr", j.value("lr", c.max_lr));
    c.adamw.beta1 = j.value("beta1", c.adamw.beta1);
    c.adamw.beta2 = j.value("beta2", c.adamw.beta2);
    c.adamw.eps = j.value("eps", c.adamw.eps);
    c.adamw.weight_decay = j.value("weight_decay", c.adamw.weight_decay);
    c.pct_start = j.value("pct_start", c.pct_start);
    c.div_factor = j.value("div_factor", c.div_factor);
    c.final_div_factor = j.value("final_div_factor", c.final_div_factor);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (c.epochs == 0 || c.batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
  return c;
}

json to_json(const TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs)
    epochs.push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_loss", e.valid_loss}, {"valid_f1", e.valid_f1}});
  return json{{"epochs", epochs}, {"best_epoch", h.best_epoch}};
}

// ---------------------------------------------------------------------- model

namespace {

Matrix xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

Matrix zeros_row(std::size_t n) { return Matrix::Zero(1, static_cast<Eigen::Index>(n)); }
Matrix ones_row(std::size_t n) { return Matrix::Ones(1, static_cast<Eigen::Index>(n)); }

std::string layer_name(std::size_t layer, const std::string& leaf) {
  return "enc" + std::to_string(layer) + "." + leaf;
}

}  // namespace

TransformerClassifier::TransformerClassifier(ModelConfig config, std::size_t embedding_dim)
    : config_(std::move(config)), d_emb_(embedding_dim) {
  config_.validate();
  if (d_emb_ < 4) throw ConfigError("embedding dim must be >= 4, got " + std::to_string(d_emb_));
  special_ = embeddings::make_special_tokens(config_.seed, d_emb_);
  special_rows_ = Matrix(3, static_cast<Eigen::Index>(d_emb_));
  for (std::size_t i = 0; i < d_emb_; ++i) {
    special_rows_(0, static_cast<Eigen::Index>(i)) = special_.agg_vec[i];
    special_rows_(1, static_cast<Eigen::Index>(i)) = special_.eos_vec[i];
    special_rows_(2, static_cast<Eigen::Index>(i)) = special_.pad_vec[i];
  }

  Rng rng(derive_seed(config_.seed, 1));
  const std::size_t d = config_.d_model;
  params_.add("fc.weight", xavier(d_emb_, d, rng));
  params_.add("fc.bias", zeros_row(d));
  if (config_.trainable_special) params_.add("special.tokens", special_rows_);
  if (config_.encoding == EncodingMode::time2vec) {
    Rng t2v_rng(derive_seed(config_.seed, 2));
    auto t2v = encodings::init_time2vec(d, 1.0, t2v_rng);
    params_.add("t2v.omega", std::move(t2v.omega));
    params_.add("t2v.phi", std::move(t2v.phi));
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    params_.add(layer_name(l, "ln1.gamma"), ones_row(d));
    params_.add(layer_name(l, "ln1.beta"), zeros_row(d));
    for (const char* proj : {"q", "k", "v", "o"}) {
      params_.add(layer_name(l, std::string("attn.w") + proj), xavier(d, d, rng));
      params_.add(layer_name(l, std::string("attn.b") + proj), zeros_row(d));
    }
    params_.add(layer_name(l, "ln2.gamma"), ones_row(d));
    params_.add(layer_name(l, "ln2.beta"), zeros_row(d));
    params_.add(layer_name(l, "ffn.w1"), xavier(d, config_.ffn_dim, rng));
    params_.add(layer_name(l, "ffn.b1"), zeros_row(config_.ffn_dim));
    params_.add(layer_name(l, "ffn.w2"), xavier(config_.ffn_dim, d, rng));
    params_.add(layer_name(l, "ffn.b2"), zeros_row(d));
  }
  params_.add("final_ln.gamma", ones_row(d));
  params_.add("final_ln.beta", zeros_row(d));
  params_.add("head.weight", xavier(d, 1, rng));
  params_.add("head.bias", zeros_row(1));
}

void TransformerClassifier::zero_head() {
  params_.at("head.weight").value.setZero();
  params_.at("head.bias").value.setZero();
}

void TransformerClassifier::init_time2vec(const std::vector<LabeledSequence>& train) {
  if (config_.encoding != EncodingMode::time2vec) return;
  std::vector<std::int64_t> all;
  for (const auto& s : train) all.insert(all.end(), s.elapsed.begin(), s.elapsed.end());
  double median = encodings::median_positive(all);
  if (config_.log1p_elapsed) median = std::log1p(median);
  Rng rng(derive_seed(config_.seed, 2));
  auto t2v = encodings::init_time2vec(config_.d_model, median, rng);
  params_.at("t2v.omega").value = std::move(t2v.omega);
  params_.at("t2v.phi").value = std::move(t2v.phi);
}

AssembledBatch TransformerClassifier::assemble(const std::vector<LabeledSequence>& sequences,
                                               const embeddings::Provider& provider) const {
  if (provider.dim() != d_emb_)
    throw DataError("provider dimension " + std::to_string(provider.dim()) + " does not match model input " +
                    std::to_string(d_emb_));
  AssembledBatch batch;
  std::size_t longest = 0;
  for (const auto& s : sequences) {
    if (s.events.size() > config_.max_seq_len)
      throw DataError("sequence of " + std::to_string(s.events.size()) + " events exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len) + "; re-window the input with a smaller max length");
    if (s.events.size() != s.elapsed.size()) throw DataError("sequence events/elapsed length mismatch");
    longest = std::max(longest, s.events.size());
  }
  batch.length = longest + 2;
  const auto L = static_cast<Eigen::Index>(batch.length);
  for (const auto& s : sequences) {
    Matrix rows = Matrix::Zero(L, static_cast<Eigen::Index>(d_emb_));
    std::vector<double> times(batch.length, -1.0);
    std::vector<bool> attend(batch.length, false);
    attend[0] = true;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i + 1);
      if (!config_.zero_event_embedding) {
        const auto v = provider.get(s.events[i]);
        rows.row(r) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      } else if (!provider.contains(s.events[i]) && provider.mode() != embeddings::Mode::random) {
        throw DataError("unknown template id " + std::to_string(s.events[i]));
      }
      const auto e = static_cast<double>(s.elapsed[i]);
      times[i + 1] = config_.log1p_elapsed ? std::log1p(e) : e;
      attend[i + 1] = true;
    }
    attend[s.events.size() + 1] = true;  // <EOS>
    batch.event_rows.push_back(std::move(rows));
    batch.times.push_back(std::move(times));
    batch.attend.push_back(std::move(attend));
    batch.n_events.push_back(s.events.size());
    batch.labels.push_back(s.label);
  }
  return batch;
}

struct TransformerClassifier::Bound {
  struct Layer {
    Var ln1_g, ln1_b, ln2_g, ln2_b, w1, b1, w2, b2;
    nn::AttentionWeights attn;
  };
  Var fc_w, fc_b, specials, omega, phi, final_g, final_b, head_w, head_b;
  std::vector<Layer> layers;
};

TransformerClassifier::Bound TransformerClassifier::bind(Tape& tape) {
  Bound w;
  auto p = [&](const std::string& name) { return tape.param(params_.at(name)); };
  w.fc_w = p("fc.weight");
  w.fc_b = p("fc.bias");
  w.specials = config_.trainable_special ? p("special.tokens") : tape.constant(special_rows_);
  if (config_.encoding == EncodingMode::time2vec) {
    w.omega = p("t2v.omega");
    w.phi = p("t2v.phi");
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    Bound::Layer layer;
    layer.ln1_g = p(layer_name(l, "ln1.gamma"));
    layer.ln1_b = p(layer_name(l, "ln1.beta"));
    layer.attn = {p(layer_name(l, "attn.wq")), p(layer_name(l, "attn.bq")), p(layer_name(l, "attn.wk")),
                  p(layer_name(l, "attn.bk")), p(layer_name(l, "attn.wv")), p(layer_name(l, "attn.bv")),
                  p(layer_name(l, "attn.wo")), p(layer_name(l, "attn.bo"))};
    layer.ln2_g = p(layer_name(l, "ln2.gamma"));
    layer.ln2_b = p(layer_name(l, "ln2.beta"));
    layer.w1 = p(layer_name(l, "ffn.w1"));
    layer.b1 = p(layer_name(l, "ffn.b1"));
    layer.w2 = p(layer_name(l, "ffn.w2"));
    layer.b2 = p(layer_name(l, "ffn.b2"));
    w.layers.push_back(layer);
  }
  w.final_g = p("final_ln.gamma");
  w.final_b = p("final_ln.beta");
  w.head_w = p("head.weight");
  w.head_b = p("head.bias");
  return w;
}

Var TransformerClassifier::embed_row(Tape& tape, const Bound& w, const AssembledBatch& batch,
                                     std::size_t row) const {
  const auto L = static_cast<Eigen::Index>(batch.length);
  const std::size_t n = batch.n_events[row];
  // Selection matrix placing <AGG>, <EOS> and <PAD> rows of the special table.
  Matrix select = Matrix::Zero(L, 3);
  select(0, 0) = 1.0;
  select(static_cast<Eigen::Index>(n + 1), 1) = 1.0;
  for (auto r = static_cast<Eigen::Index>(n + 2); r < L; ++r) select(r, 2) = 1.0;
  const Var raw = tape.add(tape.constant(batch.event_rows[row]), tape.matmul(tape.constant(std::move(select)), w.specials));
  Var x = tape.linear(raw, w.fc_w, w.fc_b);

  const auto& times = batch.times[row];
  switch (config_.encoding) {
    case EncodingMode::none:
      break;
    case EncodingMode::positional: {
      std::vector<double> positions(batch.length);
      std::iota(positions.begin(), positions.end(), 0.0);
      x = tape.add(x, tape.constant(encodings::sinusoidal_encode(positions, config_.d_model)));
      break;
    }
    case EncodingMode::rtee:
      x = tape.add(x, tape.constant(encodings::rtee_encode(times, config_.d_model)));
      break;
    case EncodingMode::time2vec: {
      Matrix tau(L, 1);
      for (Eigen::Index r = 0; r < L; ++r) tau(r, 0) = times[static_cast<std::size_t>(r)];
      x = tape.add(x, tape.time2vec(tape.constant(std::move(tau)), w.omega, w.phi));
      break;
    }
  }
  return x;
}

Var TransformerClassifier::row_logit(Tape& tape, const Bound& w, const AssembledBatch& batch, std::size_t row,
                                     Rng* dropout_rng) const {
  const auto& attend = batch.attend[row];
  Var x = embed_row(tape, w, batch, row);
  const double rate = dropout_rng ? config_.dropout : 0.0;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& layer = w.layers[l];
    Var attn = nn::multi_head_attention(tape, tape.layer_norm(x, layer.ln1_g, layer.ln1_b), attend,
                                        config_.n_heads, layer.attn);
    if (rate > 0.0) attn = tape.dropout(attn, rate, *dropout_rng);
    x = tape.add(x, attn);
    Var hidden = tape.relu(tape.linear(tape.layer_norm(x, layer.ln2_g, layer.ln2_b), layer.w1, layer.b1));
    Var ffn = tape.linear(hidden, layer.w2, layer.b2);
    if (rate > 0.0) ffn = tape.dropout(ffn, rate, *dropout_rng);
    x = tape.add(x, ffn);
    if (!tape.value(x).allFinite())
      throw NumericError("non-finite activation after encoder layer " + std::to_string(l));
  }
  const Var agg = tape.layer_norm(tape.row(x, 0), w.final_g, w.final_b);
  return tape.linear(agg, w.head_w, w.head_b);
}

std::vector<Matrix> TransformerClassifier::token_matrix(const AssembledBatch& batch) {
  Tape tape;
  const Bound w = bind(tape);
  std::vector<Matrix> out;
  for (std::size_t b = 0; b < batch.size(); ++b) out.push_back(tape.value(embed_row(tape, w, batch, b)));
  return out;
}

std::vector<double> TransformerClassifier::forward(const AssembledBatch& batch) {
  std::vector<double> logits;
  logits.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Tape tape;
    const Bound w = bind(tape);
    logits.push_back(tape.value(row_logit(tape, w, batch, b, nullptr))(0, 0));
  }
  return logits;
}

double TransformerClassifier::loss(const AssembledBatch& batch, bool accumulate, Rng* dropout_rng) {
  if (batch.size() == 0) throw DataError("loss on an empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  // One tape per row keeps memory flat; gradients are flushed in row order.
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Tape tape;
    const Bound w = bind(tape);
    const Var logit = row_logit(tape, w, batch, b, dropout_rng);
    const Var l = tape.bce_with_logits(logit, static_cast<double>(batch.labels[b]));
    total += tape.value(l)(0, 0);
    if (accumulate) {
      tape.backward(l, inv);
      tape.flush_param_grads();
    }
  }
  return total * inv;
}

// ------------------------------------------------------------------- training

std::vector<int> apply_threshold(const std::vector<double>& probabilities, double threshold) {
  std::vector<int> labels;
  labels.reserve(probabilities.size());
  for (const double p : probabilities) labels.push_back(p >= threshold ? 1 : 0);
  return labels;
}

std::vector<double> predict_proba(TransformerClassifier& model, const embeddings::Provider& provider,
                                  const std::vector<LabeledSequence>& sequences, std::size_t batch_size) {
  std::vector<double> probs;
  probs.reserve(sequences.size());
  for (std::size_t start = 0; start < sequences.size(); start += batch_size) {
    const std::size_t end = std::min(sequences.size(), start + batch_size);
    const std::vector<LabeledSequence> chunk(sequences.begin() + static_cast<std::ptrdiff_t>(start),
                                             sequences.begin() + static_cast<std::ptrdiff_t>(end));
    for (const double z : model.forward(model.assemble(chunk, provider))) probs.push_back(nn::sigmoid(z));
  }
  return probs;
}

std::vector<int> predict(TransformerClassifier& model, const embeddings::Provider& provider,
                         const std::vector<LabeledSequence>& sequences, double threshold) {
  return apply_threshold(predict_proba(model, provider, sequences), threshold);
}

TrainHistory train(TransformerClassifier& model, const embeddings::Provider& provider,
                   const std::vector<LabeledSequence>& train_set, const std::vector<LabeledSequence>& valid_set,
                   const TrainConfig& config) {
  if (train_set.empty() || valid_set.empty()) throw DataError("train: both train and validation sets must be non-empty");
  const auto positives = std::count_if(train_set.begin(), train_set.end(), [](const auto& s) { return s.label != 0; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(train_set.size()))
    throw DataError("train: training set contains a single class");
  if (config.epochs == 0 || config.batch_size == 0) throw ConfigError("train: epochs and batch_size must be positive");

  model.init_time2vec(train_set);
  const std::size_t batches_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
  nn::OneCycleSchedule schedule{config.max_lr, static_cast<long>(std::max<std::size_t>(2, config.epochs * batches_per_epoch)),
                                config.pct_start, config.div_factor, config.final_div_factor};
  schedule.validate();

  std::vector<int> valid_labels;
  for (const auto& s : valid_set) valid_labels.push_back(s.label);

  Rng order_rng(derive_seed(config.seed, 11));
  Rng dropout_rng(derive_seed(config.seed, 12));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  nn::ParamStore best = model.params();
  double best_f1 = -1.0;
  long step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<LabeledSequence> chunk;
      for (std::size_t i = start; i < end; ++i) chunk.push_back(train_set[order[i]]);
      const AssembledBatch batch = model.assemble(chunk, provider);
      model.params().zero_grad();
      const double batch_loss = model.loss(batch, true, model.config().dropout > 0.0 ? &dropout_rng : nullptr);
      loss_sum += batch_loss * static_cast<double>(batch.size());
      nn::adamw_step(model.params(), nn::onecycle_lr(schedule, step), config.adamw);
      ++step;
    }

    const auto probs = predict_proba(model, provider, valid_set);
    double valid_loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const double p = std::clamp(probs[i], 1e-15, 1.0 - 1e-15);
      valid_loss -= valid_labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    record.valid_loss = valid_loss / static_cast<double>(probs.size());
    record.valid_f1 = metrics::f1_score(apply_threshold(probs, model.config().threshold), valid_labels);
    history.epochs.push_back(record);
    info("epoch " + std::to_string(epoch) + " loss " + std::to_string(record.train_loss) + " valid_f1 " +
         std::to_string(record.valid_f1));
    if (record.valid_f1 > best_f1) {
      best_f1 = record.valid_f1;
      history.best_epoch = epoch;
      best = model.params();
    }
  }
  model.params() = best;
  model.params().zero_grad();
  return history;
}

// ----------------------------------------------------------------- checkpoint

void save_checkpoint(const std::filesystem::path& path, const TransformerClassifier& model,
                     const embeddings::Provider& provider, const std::vector<int>& vocabulary) {
  json params = json::object();
  for (const auto& p : model.params().params()) {
    std::vector<double> data(p.value.data(), p.value.data() + p.value.size());
    params[p.name] = {{"shape", p.shape}, {"data", data}};
  }
  json table = json::array();
  for (const int id : vocabulary) table.push_back({{"template_id", id}, {"vector", provider.get(id)}});
  const json doc{{"config", to_json(model.config())},
                 {"embedding_dim", model.embedding_dim()},
                 {"params", params},
                 {"embeddings", table}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  try {
    const ModelConfig config = model_config_from_json(doc.at("config"), ModelConfig::desk_preset());
    TransformerClassifier model(config, doc.at("embedding_dim").get<std::size_t>());
    for (auto& p : model.params().params()) {
      const auto& entry = doc.at("params").at(p.name);
      const auto data = entry.at("data").get<std::vector<double>>();
      if (data.size() != static_cast<std::size_t>(p.value.size()))
        throw DataError("checkpoint parameter " + p.name + " has " + std::to_string(data.size()) + " values, expected " +
                        std::to_string(p.value.size()));
      std::copy(data.begin(), data.end(), p.value.data());
    }
    embeddings::EmbeddingTable table;
    for (const auto& row : doc.at("embeddings")) {
      auto v = row.at("vector").get<embeddings::Vector>();
      table.dim = v.size();
      table.rows.emplace(row.at("template_id").get<int>(), std::move(v));
    }
    return LoadedModel{std::move(model), std::move(table)};
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace loglab::model
