#include "loglab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "loglab/error.hpp"
#include "loglab/metrics.hpp"
#include "loglab/optim.hpp"
#include "loglab/rng.hpp"

namespace loglab::baselines {

using nlohmann::json;

Mcv build_mcv(const std::vector<int>& events, std::size_t vocab_size) {
  Mcv counts(vocab_size + 1, 0);
  for (const int t : events) {
    const bool in_vocab = t >= 0 && static_cast<std::size_t>(t) < vocab_size;
    counts[in_vocab ? static_cast<std::size_t>(t) : vocab_size] += 1;
  }
  return counts;
}

std::size_t vocabulary_size(const std::vector<LabeledSequence>& sequences) {
  int top = -1;
  for (const auto& s : sequences)
    for (const int t : s.events) top = std::max(top, t);
  return static_cast<std::size_t>(top + 1);
}

Dataset make_dataset(const std::vector<LabeledSequence>& sequences, std::size_t vocab_size) {
  Dataset d;
  d.features.reserve(sequences.size());
  for (const auto& s : sequences) {
    d.features.push_back(build_mcv(s.events, vocab_size));
    d.labels.push_back(s.label);
  }
  return d;
}

namespace {

std::int64_t squared_distance(const Mcv& a, const Mcv& b) {
  if (a.size() != b.size()) throw DataError("MCV width mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  std::int64_t total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::int64_t d = a[i] - b[i];
    total += d * d;
  }
  return total;
}

}  // namespace

int knn_classify(const Dataset& train, const Mcv& query, std::size_t k) {
  if (train.size() == 0) throw DataError("knn: empty training set");
  if (k == 0 || k > train.size())
    throw ConfigError("knn: k=" + std::to_string(k) + " must lie in [1, " + std::to_string(train.size()) + "]");
  std::vector<std::pair<std::int64_t, std::size_t>> dist;
  dist.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) dist.emplace_back(squared_distance(train.features[i], query), i);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::size_t votes = 0;
  for (std::size_t i = 0; i < k; ++i) votes += train.labels[dist[i].second] != 0 ? 1 : 0;
  return 2 * votes >= k ? 1 : 0;
}

// ---------------------------------------------------------------------- CART

namespace {

double gini(std::size_t positives, std::size_t total) {
  if (total == 0) return 0.0;
  const double p = static_cast<double>(positives) / static_cast<double>(total);
  return 2.0 * p * (1.0 - p);
}

struct TreeBuilder {
  const Dataset& data;
  std::optional<std::size_t> max_depth;
  std::size_t min_leaf;

  std::unique_ptr<TreeNode> build(std::vector<std::size_t>& idx, std::size_t depth) const {
    auto node = std::make_unique<TreeNode>();
    std::size_t positives = 0;
    for (auto i : idx) positives += data.labels[i] != 0 ? 1 : 0;
    node->samples = idx.size();
    node->impurity = gini(positives, idx.size());
    node->prediction = 2 * positives >= idx.size() ? 1 : 0;
    if (positives == 0 || positives == idx.size()) return node;
    if (max_depth && depth >= *max_depth) return node;
    if (idx.size() < 2 * min_leaf) return node;

    const std::size_t n_features = data.features[idx.front()].size();
    const double parent = node->impurity * static_cast<double>(idx.size());
    double best_cost = parent - 1e-12;
    bool found = false;
    std::size_t best_feature = 0;
    std::int64_t best_threshold = 0;
    std::vector<std::pair<std::int64_t, int>> column(idx.size());
    for (std::size_t f = 0; f < n_features; ++f) {
      for (std::size_t j = 0; j < idx.size(); ++j) column[j] = {data.features[idx[j]][f], data.labels[idx[j]] != 0};
      std::sort(column.begin(), column.end());
      std::size_t left_n = 0;
      std::size_t left_pos = 0;
      for (std::size_t j = 0; j + 1 < column.size(); ++j) {
        ++left_n;
        left_pos += static_cast<std::size_t>(column[j].second);
        if (column[j].first == column[j + 1].first) continue;
        const std::size_t right_n = idx.size() - left_n;
        if (left_n < min_leaf || right_n < min_leaf) continue;
        const double cost = gini(left_pos, left_n) * static_cast<double>(left_n) +
                            gini(positives - left_pos, right_n) * static_cast<double>(right_n);
        if (cost < best_cost) {
          best_cost = cost - 1e-12;
          found = true;
          best_feature = f;
          best_threshold = column[j].first;
        }
      }
    }
    if (!found) return node;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto i : idx) (data.features[i][best_feature] <= best_threshold ? left : right).push_back(i);
    node->feature = best_feature;
    node->threshold = best_threshold;
    node->left = build(left, depth + 1);
    node->right = build(right, depth + 1);
    return node;
  }
};

std::size_t node_depth(const TreeNode* n) {
  if (!n || n->is_leaf()) return 0;
  return 1 + std::max(node_depth(n->left.get()), node_depth(n->right.get()));
}

}  // namespace

std::size_t DecisionTree::depth() const { return node_depth(root.get()); }

DecisionTree dt_fit(const Dataset& train, std::optional<std::size_t> max_depth, std::size_t min_leaf) {
  if (train.size() == 0) throw DataError("dt_fit: empty training set");
  if (min_leaf == 0) throw ConfigError("dt_fit: min_leaf must be >= 1");
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  TreeBuilder builder{train, max_depth, min_leaf};
  return DecisionTree{builder.build(idx, 0)};
}

int dt_predict(const DecisionTree& tree, const Mcv& query) {
  const TreeNode* n = tree.root.get();
  if (!n) throw DataError("dt_predict: tree is empty");
  while (!n->is_leaf()) n = query.at(n->feature) <= n->threshold ? n->left.get() : n->right.get();
  return n->prediction;
}

// ------------------------------------------------------------------------ MLP

namespace {

std::string mlp_layer(std::size_t i, const char* what) { return "mlp" + std::to_string(i) + "." + what; }

nn::Matrix to_matrix(const std::vector<Mcv>& rows, const std::vector<std::size_t>& pick) {
  nn::Matrix m(static_cast<Eigen::Index>(pick.size()), static_cast<Eigen::Index>(rows[pick.front()].size()));
  for (std::size_t r = 0; r < pick.size(); ++r)
    for (std::size_t c = 0; c < rows[pick[r]].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<double>(rows[pick[r]][c]);
  return m;
}

nn::Var mlp_forward(nn::Tape& tape, MlpModel& model, nn::Var x) {
  const std::size_t layers = model.hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    x = tape.linear(x, tape.param(model.params.at(mlp_layer(i, "weight"))),
                    tape.param(model.params.at(mlp_layer(i, "bias"))));
    if (i + 1 < layers) x = tape.relu(x);
  }
  return x;
}

}  // namespace

MlpModel mlp_train(const Dataset& train, const MlpConfig& config) {
  if (train.size() == 0) throw DataError("mlp_train: empty training set");
  const auto positives = std::count_if(train.labels.begin(), train.labels.end(), [](int l) { return l != 0; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(train.size()))
    throw DataError("mlp_train: training set contains a single class");
  if (config.batch_size == 0) throw ConfigError("mlp_train: batch_size must be positive");

  MlpModel model;
  model.hidden = config.hidden;
  Rng rng(derive_seed(config.seed, 21));
  std::size_t fan_in = train.features.front().size();
  std::vector<std::size_t> widths = config.hidden;
  widths.push_back(1);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    // He-uniform for the ReLU layers.
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    nn::Matrix w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(widths[i]));
    for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = rng.uniform(-limit, limit);
    model.params.add(mlp_layer(i, "weight"), std::move(w));
    model.params.add(mlp_layer(i, "bias"), nn::Matrix::Zero(1, static_cast<Eigen::Index>(widths[i])));
    fan_in = widths[i];
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::vector<std::size_t> pick(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + config.batch_size)));
      nn::Tape tape;
      const nn::Var logits = mlp_forward(tape, model, tape.constant(to_matrix(train.features, pick)));
      nn::Var total = tape.bce_with_logits(tape.row(logits, 0), train.labels[pick[0]]);
      for (std::size_t r = 1; r < pick.size(); ++r)
        total = tape.add(total, tape.bce_with_logits(tape.row(logits, r), train.labels[pick[r]]));
      model.params.zero_grad();
      tape.backward(total, 1.0 / static_cast<double>(pick.size()));
      tape.flush_param_grads();
      nn::adamw_step(model.params, config.lr, nn::AdamWConfig{});
    }
  }
  model.params.zero_grad();
  return model;
}

double mlp_logit(const MlpModel& model, const Mcv& query) {
  nn::Matrix x(1, static_cast<Eigen::Index>(query.size()));
  for (std::size_t i = 0; i < query.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = static_cast<double>(query[i]);
  const std::size_t layers = model.hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    x = x * model.params.at(mlp_layer(i, "weight")).value;
    x.row(0) += model.params.at(mlp_layer(i, "bias")).value.row(0);
    if (i + 1 < layers) x = x.cwiseMax(0.0);
  }
  return x(0, 0);
}

int mlp_predict(const MlpModel& model, const Mcv& query) { return nn::sigmoid(mlp_logit(model, query)) >= 0.5 ? 1 : 0; }

// ---------------------------------------------------------------- grid search

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::knn: return "knn";
    case Kind::dt: return "dt";
    case Kind::mlp: return "mlp";
  }
  return "?";
}

Kind kind_from_string(const std::string& name) {
  if (name == "knn") return Kind::knn;
  if (name == "dt") return Kind::dt;
  if (name == "mlp") return Kind::mlp;
  throw ConfigError("unknown baseline model '" + name + "' (expected knn|dt|mlp)");
}

void GridSpec::validate(Kind kind) const {
  const bool empty = (kind == Kind::knn && knn_k.empty()) ||
                     (kind == Kind::dt && (dt_max_depth.empty() || dt_min_leaf.empty())) ||
                     (kind == Kind::mlp && (mlp_hidden.empty() || mlp_lr.empty() || mlp_epochs.empty()));
  if (empty) throw ConfigError("grid for " + to_string(kind) + " has an empty value list");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw ConfigError("grid valid_fraction must lie in (0,1)");
}

GridSpec grid_spec_from_json(const json& j) {
  GridSpec g;
  try {
    if (j.contains("knn")) g.knn_k = j.at("knn").at("k").get<std::vector<std::size_t>>();
    if (j.contains("dt")) {
      const auto& dt = j.at("dt");
      if (dt.contains("max_depth")) {
        g.dt_max_depth.clear();
        for (const auto& v : dt.at("max_depth"))
          g.dt_max_depth.push_back(v.is_null() ? std::nullopt : std::optional<std::size_t>(v.get<std::size_t>()));
      }
      if (dt.contains("min_leaf")) g.dt_min_leaf = dt.at("min_leaf").get<std::vector<std::size_t>>();
    }
    if (j.contains("mlp")) {
      const auto& mlp = j.at("mlp");
      if (mlp.contains("hidden")) g.mlp_hidden = mlp.at("hidden").get<std::vector<std::vector<std::size_t>>>();
      if (mlp.contains("lr")) g.mlp_lr = mlp.at("lr").get<std::vector<double>>();
      if (mlp.contains("epochs")) g.mlp_epochs = mlp.at("epochs").get<std::vector<std::size_t>>();
    }
    g.valid_fraction = j.value("valid_fraction", g.valid_fraction);
    g.seed = j.value("seed", g.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid spec: ") + e.what());
  }
  return g;
}

namespace {

std::vector<json> expand(Kind kind, const GridSpec& g) {
  std::vector<json> points;
  switch (kind) {
    case Kind::knn:
      for (auto k : g.knn_k) points.push_back({{"k", k}});
      break;
    case Kind::dt:
      for (const auto& d : g.dt_max_depth)
        for (auto m : g.dt_min_leaf) points.push_back({{"max_depth", d ? json(*d) : json(nullptr)}, {"min_leaf", m}});
      break;
    case Kind::mlp:
      for (const auto& h : g.mlp_hidden)
        for (auto lr : g.mlp_lr)
          for (auto e : g.mlp_epochs) points.push_back({{"hidden", h}, {"lr", lr}, {"epochs", e}, {"seed", g.seed}});
      break;
  }
  return points;
}

}  // namespace

FittedBaseline::FittedBaseline(Kind kind, const json& hp, Dataset train) : kind_(kind), train_(std::move(train)) {
  try {
    switch (kind_) {
      case Kind::knn:
        k_ = std::min(hp.at("k").get<std::size_t>(), train_.size());
        if (k_ == 0) throw ConfigError("knn: k must be >= 1");
        break;
      case Kind::dt: {
        const auto& d = hp.at("max_depth");
        tree_ = dt_fit(train_, d.is_null() ? std::nullopt : std::optional<std::size_t>(d.get<std::size_t>()),
                       hp.at("min_leaf").get<std::size_t>());
        break;
      }
      case Kind::mlp: {
        MlpConfig c;
        c.hidden = hp.at("hidden").get<std::vector<std::size_t>>();
        c.lr = hp.at("lr").get<double>();
        c.epochs = hp.value("epochs", c.epochs);
        c.seed = hp.value("seed", c.seed);
        mlp_ = mlp_train(train_, c);
        break;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("baseline hyperparameters: ") + e.what());
  }
}

int FittedBaseline::predict(const Mcv& query) const {
  switch (kind_) {
    case Kind::knn: return knn_classify(train_, query, k_);
    case Kind::dt: return dt_predict(tree_, query);
    case Kind::mlp: return mlp_predict(mlp_, query);
  }
  return 0;
}

std::vector<int> FittedBaseline::predict(const std::vector<Mcv>& queries) const {
  std::vector<int> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(predict(q));
  return out;
}

GridResult grid_search(Kind kind, const GridSpec& grid, const Dataset& train, const Dataset& valid) {
  grid.validate(kind);
  GridResult result;
  result.kind = kind;
  double best_f1 = -1.0;
  for (auto& hp : expand(kind, grid)) {
    const FittedBaseline fitted(kind, hp, train);
    const double f1 = metrics::f1_score(fitted.predict(valid.features), valid.labels);
    if (f1 > best_f1) {
      best_f1 = f1;
      result.best = result.table.size();
    }
    result.table.push_back(GridPoint{std::move(hp), f1});
  }
  return result;
}

}  // namespace loglab::baselines
