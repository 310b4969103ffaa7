#pragma once

// Count-vector baselines: message count vectors fed to KNN, a CART decision
// tree and a small MLP, plus exhaustive grid search on validation F1.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "loglab/assembler.hpp"
#include "loglab/tensor.hpp"

namespace loglab::baselines {

using assembler::LabeledSequence;

/// counts[t] for t < vocab_size, plus one overflow bucket at index vocab_size.
using Mcv = std::vector<std::int64_t>;

/// Template ids outside [0, vocab_size) land in the overflow bucket.
Mcv build_mcv(const std::vector<int>& events, std::size_t vocab_size);

struct Dataset {
  std::vector<Mcv> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

Dataset make_dataset(const std::vector<LabeledSequence>& sequences, std::size_t vocab_size);

/// Vocabulary size = 1 + the largest template id seen in the sequences.
std::size_t vocabulary_size(const std::vector<LabeledSequence>& sequences);

// ------------------------------------------------------------------------ KNN

/// Majority vote among the k nearest (Euclidean) training points. Distance ties
/// go to the lower sample index; vote ties go to label 1. Throws DataError on
/// an empty training set, ConfigError if k is 0 or exceeds the training size.
int knn_classify(const Dataset& train, const Mcv& query, std::size_t k);

// ---------------------------------------------------------------------- CART

struct TreeNode {
  int prediction = 0;
  double impurity = 0.0;  // Gini of the training samples reaching the node
  std::size_t samples = 0;
  std::size_t feature = 0;
  std::int64_t threshold = 0;  // go left iff x[feature] <= threshold
  std::unique_ptr<TreeNode> left;
  std::unique_ptr<TreeNode> right;

  bool is_leaf() const { return !left; }
};

struct DecisionTree {
  std::unique_ptr<TreeNode> root;
  std::size_t depth() const;
};

/// Greedy Gini CART. max_depth = nullopt means unbounded. Split ties resolve to
/// the lowest feature index, then the lowest threshold; a leaf predicts its
/// majority label with ties going to label 1.
DecisionTree dt_fit(const Dataset& train, std::optional<std::size_t> max_depth, std::size_t min_leaf);
int dt_predict(const DecisionTree& tree, const Mcv& query);

// ------------------------------------------------------------------------ MLP

struct MlpModel {
  std::vector<std::size_t> hidden;
  nn::ParamStore params;
};

struct MlpConfig {
  std::vector<std::size_t> hidden{64};
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// ReLU network with a sigmoid output trained on BCE with AdamW (constant lr).
/// Throws DataError on a single-class training set.
MlpModel mlp_train(const Dataset& train, const MlpConfig& config);
double mlp_logit(const MlpModel& model, const Mcv& query);
int mlp_predict(const MlpModel& model, const Mcv& query);

// ---------------------------------------------------------------- grid search

enum class Kind { knn, dt, mlp };

std::string to_string(Kind kind);
Kind kind_from_string(const std::string& name);

/// Per-model value lists. JSON: {"knn": {"k": [...]}, "dt": {"max_depth": [4, null],
/// "min_leaf": [...]}, "mlp": {"hidden": [[64], [128, 64]], "lr": [...], "epochs": [...]},
/// "valid_fraction": 0.2, "seed": 0}.
struct GridSpec {
  std::vector<std::size_t> knn_k{1, 3, 5, 9};
  std::vector<std::optional<std::size_t>> dt_max_depth{4, 8, 16, std::nullopt};
  std::vector<std::size_t> dt_min_leaf{1, 5};
  std::vector<std::vector<std::size_t>> mlp_hidden{{64}, {128, 64}};
  std::vector<double> mlp_lr{1e-3, 5e-4};
  std::vector<std::size_t> mlp_epochs{50};
  double valid_fraction = 0.2;
  std::uint64_t seed = 0;

  /// Throws ConfigError if the grids for `kind` are empty.
  void validate(Kind kind) const;
};

GridSpec grid_spec_from_json(const nlohmann::json& j);

struct GridPoint {
  nlohmann::json hyperparameters;
  double valid_f1 = 0.0;
};

struct GridResult {
  Kind kind = Kind::knn;
  std::vector<GridPoint> table;  // grid order
  std::size_t best = 0;          // first point with the maximal F1
};

/// Evaluates every grid point on the validation set.
GridResult grid_search(Kind kind, const GridSpec& grid, const Dataset& train, const Dataset& valid);

/// A fitted baseline, refit on a training set with chosen hyperparameters.
class FittedBaseline {
 public:
  FittedBaseline(Kind kind, const nlohmann::json& hyperparameters, Dataset train);
  int predict(const Mcv& query) const;
  std::vector<int> predict(const std::vector<Mcv>& queries) const;

 private:
  Kind kind_;
  Dataset train_;
  std::size_t k_ = 1;
  DecisionTree tree_;
  MlpModel mlp_;
};

}  // namespace loglab::baselines
