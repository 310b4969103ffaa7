#pragma once

// Transformer-encoder sequence classifier.
//
// Each sequence becomes the token rows [<AGG>, e_1 .. e_n, <EOS>, <PAD>...].
// Raw d_emb rows pass through a shared fully-connected layer to d_model, the
// selected positional/temporal encoding is added, and a stack of pre-norm
// encoder blocks runs with <PAD> keys masked out. Only the <AGG> output feeds
// the binary head.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "json.hpp"
#include "loglab/assembler.hpp"
#include "loglab/embeddings.hpp"
#include "loglab/encodings.hpp"
#include "loglab/optim.hpp"
#include "loglab/tensor.hpp"

namespace loglab::model {

using assembler::LabeledSequence;
using encodings::EncodingMode;

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 8;
  std::size_t ffn_dim = 2048;
  std::size_t max_seq_len = 512;
  embeddings::ProviderConfig embedding;
  EncodingMode encoding = EncodingMode::rtee;
  double threshold = 0.5;
  double dropout = 0.0;
  bool trainable_special = false;
  /// Feed log1p(elapsed) instead of raw seconds to rtee/time2vec.
  bool log1p_elapsed = false;
  /// Replace every event embedding by one shared zero vector (encoding-only input).
  bool zero_event_embedding = false;
  std::uint64_t seed = 0;

  /// d_model 64, 2 layers, 8 heads, ffn 2048.
  static ModelConfig full_preset();
  /// d_model 32, 2 layers, 4 heads, ffn 64.
  static ModelConfig desk_preset();

  /// Throws ConfigError on inconsistent values (e.g. d_model % n_heads != 0).
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep the values of `base`. Throws ConfigError on bad values.
ModelConfig model_config_from_json(const nlohmann::json& j, const ModelConfig& base = ModelConfig::desk_preset());

/// Model input for one batch, before the trainable projection.
struct AssembledBatch {
  std::size_t length = 0;                  // L = longest sequence in the batch + 2
  std::vector<nn::Matrix> event_rows;      // per row: L x d_emb, zero on special rows
  std::vector<std::vector<double>> times;  // per row: elapsed, -1 on special rows
  std::vector<std::vector<bool>> attend;   // per row: false exactly on <PAD>
  std::vector<std::size_t> n_events;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

class TransformerClassifier {
 public:
  /// Initializes parameters from config.seed. `embedding_dim` is the width of
  /// the provider's vectors. Throws ConfigError on an invalid config.
  TransformerClassifier(ModelConfig config, std::size_t embedding_dim);

  const ModelConfig& config() const { return config_; }
  std::size_t embedding_dim() const { return d_emb_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const embeddings::SpecialTokenSet& special_tokens() const { return special_; }

  /// Re-draws the Time2Vec parameters for the given training sequences
  /// (frequency scale from their median positive elapsed time).
  void init_time2vec(const std::vector<LabeledSequence>& train);

  /// Throws DataError on unknown template ids or over-long sequences.
  AssembledBatch assemble(const std::vector<LabeledSequence>& sequences,
                          const embeddings::Provider& provider) const;

  /// Token matrices after projection and encoding, one L x d_model per row.
  std::vector<nn::Matrix> token_matrix(const AssembledBatch& batch);

  /// One logit per row.
  std::vector<double> forward(const AssembledBatch& batch);

  /// Mean BCE over the batch; when accumulate is true its gradient is added
  /// into params().  A non-null rng enables dropout.
  double loss(const AssembledBatch& batch, bool accumulate, Rng* dropout_rng = nullptr);

  /// Zeroes the binary head so every logit is exactly 0.
  void zero_head();

 private:
  struct Bound;
  Bound bind(nn::Tape& tape);
  nn::Var embed_row(nn::Tape& tape, const Bound& w, const AssembledBatch& batch, std::size_t row) const;
  nn::Var row_logit(nn::Tape& tape, const Bound& w, const AssembledBatch& batch, std::size_t row,
                    Rng* dropout_rng) const;

  ModelConfig config_;
  std::size_t d_emb_;
  embeddings::SpecialTokenSet special_;
  nn::Matrix special_rows_;  // 3 x d_emb: agg, eos, pad (used when frozen)
  nn::ParamStore params_;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double max_lr = 5e-4;
  nn::AdamWConfig adamw;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_f1 = 0.0;
  double valid_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
};

nlohmann::json to_json(const TrainHistory& history);

/// Mini-batch AdamW + one-cycle training on mean BCE. Keeps the parameters of
/// the epoch with the best validation F1 (see select_best_epoch). Throws
/// DataError on an empty split or a single-class training set.
TrainHistory train(TransformerClassifier& model, const embeddings::Provider& provider,
                   const std::vector<LabeledSequence>& train_set, const std::vector<LabeledSequence>& valid_set,
                   const TrainConfig& config);

/// Probabilities sigma(logit) for every sequence, evaluated in batches.
std::vector<double> predict_proba(TransformerClassifier& model, const embeddings::Provider& provider,
                                  const std::vector<LabeledSequence>& sequences, std::size_t batch_size = 64);

/// label = 1 iff probability >= threshold.
std::vector<int> predict(TransformerClassifier& model, const embeddings::Provider& provider,
                         const std::vector<LabeledSequence>& sequences, double threshold);
std::vector<int> apply_threshold(const std::vector<double>& probabilities, double threshold);

/// Checkpoint: {"config", "params": {name: {"shape", "data"}}, "embeddings", ...}.
void save_checkpoint(const std::filesystem::path& path, const TransformerClassifier& model,
                     const embeddings::Provider& provider, const std::vector<int>& vocabulary);

struct LoadedModel {
  TransformerClassifier model;
  embeddings::EmbeddingTable embeddings;  // table stored in the checkpoint
};

LoadedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace loglab::model
