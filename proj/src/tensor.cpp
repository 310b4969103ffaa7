#include "loglab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "loglab/error.hpp"

namespace loglab::nn {

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

// ---------------------------------------------------------------- ParamStore

Param& ParamStore::add(const std::string& name, Matrix value, Shape shape) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  if (shape.empty()) {
    shape = value.rows() == 1 ? Shape{static_cast<std::size_t>(value.cols())}
                              : Shape{static_cast<std::size_t>(value.rows()),
                                      static_cast<std::size_t>(value.cols())};
  }
  Param p;
  p.name = name;
  p.shape = std::move(shape);
  p.first_moment = Matrix::Zero(value.rows(), value.cols());
  p.second_moment = Matrix::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("unknown parameter: " + name);
}

const Param& ParamStore::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Param& p) { return p.name == name; });
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

// ---------------------------------------------------------------------- Tape

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, const Node&)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::view(const Matrix& value) {
  Node n;
  n.external = &value;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::param(Param& p) {
  const Var v = view(p.value);
  param_leaves_.emplace_back(v.id, &p);
  return v;
}

const Matrix& Tape::value(Var v) const { return val(v.id); }

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(val(v.id).rows(), val(v.id).cols());
  return n.grad;
}

Matrix& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(val(id).rows(), val(id).cols());
  return n.grad;
}

void Tape::backward(Var root, double seed) {
  const Matrix& r = val(root.id);
  if (r.rows() != 1 || r.cols() != 1)
    throw NumericError("backward root must be 1x1, got " + shape_string(r));
  grad_ref(root.id)(0, 0) += seed;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n);
  }
}

void Tape::flush_param_grads() {
  for (auto& [id, p] : param_leaves_) {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (p->grad.size() == 0) p->grad = Matrix::Zero(p->value.rows(), p->value.cols());
    p->grad += n.grad;
  }
}

namespace {

// The message is built only on failure; shape strings are costly in hot loops.
template <class Message>
void require(bool ok, Message&& what) {
  if (!ok) throw NumericError(what());
}

}  // namespace

Var Tape::matmul(Var a, Var b) {
  const Matrix& A = val(a.id);
  const Matrix& B = val(b.id);
  require(A.cols() == B.rows(),
          [&] { return "matmul shape mismatch: " + shape_string(A) + " * " + shape_string(B); });
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(A * B, rg, [a, b](Tape& t, const Node& self) {
    if (t.requires_grad(a)) t.grad_ref(a.id).noalias() += self.grad * t.val(b.id).transpose();
    if (t.requires_grad(b)) t.grad_ref(b.id).noalias() += t.val(a.id).transpose() * self.grad;
  });
}

Var Tape::matmul_transposed(Var a, Var b) {
  const Matrix& A = val(a.id);
  const Matrix& B = val(b.id);
  require(A.cols() == B.cols(),
          [&] { return "matmul_transposed shape mismatch: " + shape_string(A) + " * " + shape_string(B) + "^T"; });
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(A * B.transpose(), rg, [a, b](Tape& t, const Node& self) {
    if (t.requires_grad(a)) t.grad_ref(a.id).noalias() += self.grad * t.val(b.id);
    if (t.requires_grad(b)) t.grad_ref(b.id).noalias() += self.grad.transpose() * t.val(a.id);
  });
}

Var Tape::linear(Var x, Var weight, Var bias) {
  const Matrix& X = val(x.id);
  const Matrix& W = val(weight.id);
  const Matrix& b = val(bias.id);
  require(X.cols() == W.rows(),
          [&] { return "linear shape mismatch: x " + shape_string(X) + " vs W " + shape_string(W); });
  require(b.rows() == 1 && b.cols() == W.cols(),
          [&] { return "linear shape mismatch: W " + shape_string(W) + " vs bias " + shape_string(b); });
  Matrix out = X * W;
  out.rowwise() += b.row(0);
  const bool rg = requires_grad(x) || requires_grad(weight) || requires_grad(bias);
  return push(std::move(out), rg, [x, weight, bias](Tape& t, const Node& self) {
    if (t.requires_grad(x)) t.grad_ref(x.id).noalias() += self.grad * t.val(weight.id).transpose();
    if (t.requires_grad(weight)) t.grad_ref(weight.id).noalias() += t.val(x.id).transpose() * self.grad;
    if (t.requires_grad(bias)) t.grad_ref(bias.id) += self.grad.colwise().sum();
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& A = val(a.id);
  const Matrix& B = val(b.id);
  require(A.rows() == B.rows() && A.cols() == B.cols(),
          [&] { return "add shape mismatch: " + shape_string(A) + " + " + shape_string(B); });
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(A + B, rg, [a, b](Tape& t, const Node& self) {
    if (t.requires_grad(a)) t.grad_ref(a.id) += self.grad;
    if (t.requires_grad(b)) t.grad_ref(b.id) += self.grad;
  });
}

Var Tape::scale(Var a, double factor) {
  return push(val(a.id) * factor, requires_grad(a), [a, factor](Tape& t, const Node& self) {
    t.grad_ref(a.id) += self.grad * factor;
  });
}

Var Tape::relu(Var a) {
  return push(val(a.id).cwiseMax(0.0), requires_grad(a), [a](Tape& t, const Node& self) {
    t.grad_ref(a.id) += (t.val(a.id).array() > 0.0).select(self.grad, 0.0);
  });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& X = val(x.id);
  const Matrix& G = val(gamma.id);
  const Matrix& B = val(beta.id);
  require(G.rows() == 1 && G.cols() == X.cols() && B.rows() == 1 && B.cols() == X.cols(), [&] {
    return "layer_norm shape mismatch: x " + shape_string(X) + " gamma " + shape_string(G) + " beta " + shape_string(B);
  });
  const auto d = static_cast<double>(X.cols());
  Matrix normalized(X.rows(), X.cols());
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mean = X.row(r).mean();
    const double var = (X.row(r).array() - mean).square().sum() / d;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = (X.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = normalized.array().rowwise() * G.row(0).array();
  out.rowwise() += B.row(0);
  const bool rg = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
  return push(std::move(out), rg,
              [x, gamma, beta, normalized = std::move(normalized), inv_std = std::move(inv_std), d](
                  Tape& t, const Node& self) {
                if (t.requires_grad(gamma))
                  t.grad_ref(gamma.id) += (self.grad.array() * normalized.array()).colwise().sum().matrix();
                if (t.requires_grad(beta)) t.grad_ref(beta.id) += self.grad.colwise().sum();
                if (!t.requires_grad(x)) return;
                const Matrix dnorm = self.grad.array().rowwise() * t.val(gamma.id).row(0).array();
                Matrix& gx = t.grad_ref(x.id);
                for (Eigen::Index r = 0; r < dnorm.rows(); ++r) {
                  const double sum_d = dnorm.row(r).sum();
                  const double sum_dn = dnorm.row(r).dot(normalized.row(r));
                  gx.row(r).array() += inv_std(r) / d *
                                       (d * dnorm.row(r).array() - sum_d - normalized.row(r).array() * sum_dn);
                }
              });
}

Matrix masked_softmax(const Matrix& scores, const std::vector<bool>& attendable) {
  require(static_cast<Eigen::Index>(attendable.size()) == scores.cols(), [&] {
    return "masked_softmax: mask length " + std::to_string(attendable.size()) + " vs scores " + shape_string(scores);
  });
  if (std::none_of(attendable.begin(), attendable.end(), [](bool b) { return b; }))
    throw NumericError("masked_softmax: every key is masked");
  Matrix out = Matrix::Zero(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < scores.cols(); ++c)
      if (attendable[c]) peak = std::max(peak, scores(r, c));
    double total = 0.0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      if (!attendable[c]) continue;
      out(r, c) = std::exp(scores(r, c) - peak);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

Var Tape::masked_softmax(Var scores, const std::vector<bool>& attendable) {
  Matrix out = nn::masked_softmax(val(scores.id), attendable);
  return push(std::move(out), requires_grad(scores), [scores](Tape& t, const Node& self) {
    const Matrix& y = self.value;
    const Eigen::VectorXd dots = (self.grad.array() * y.array()).rowwise().sum();
    Matrix gx = y.array() * (self.grad.colwise() - dots).array();
    t.grad_ref(scores.id) += gx;
  });
}

Var Tape::slice_cols(Var x, std::size_t start, std::size_t count) {
  const Matrix& X = val(x.id);
  require(start + count <= static_cast<std::size_t>(X.cols()),
          [&] { return "slice_cols out of range on " + shape_string(X); });
  const auto s = static_cast<Eigen::Index>(start);
  const auto c = static_cast<Eigen::Index>(count);
  return push(X.middleCols(s, c), requires_grad(x), [x, s, c](Tape& t, const Node& self) {
    t.grad_ref(x.id).middleCols(s, c) += self.grad;
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), [&] { return "concat_cols of nothing"; });
  const Eigen::Index rows = val(parts[0].id).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    require(val(p.id).rows() == rows, [&] { return "concat_cols row mismatch: " + shape_string(val(p.id)); });
    cols += val(p.id).cols();
    rg = rg || requires_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, val(p.id).cols()) = val(p.id);
    at += val(p.id).cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return push(std::move(out), rg, [saved = std::move(saved)](Tape& t, const Node& self) {
    Eigen::Index offset = 0;
    for (const Var& p : saved) {
      const Eigen::Index w = t.val(p.id).cols();
      if (t.requires_grad(p)) t.grad_ref(p.id) += self.grad.middleCols(offset, w);
      offset += w;
    }
  });
}

Var Tape::row(Var x, std::size_t r) {
  const Matrix& X = val(x.id);
  require(r < static_cast<std::size_t>(X.rows()), [&] { return "row index out of range on " + shape_string(X); });
  const auto ri = static_cast<Eigen::Index>(r);
  return push(X.row(ri), requires_grad(x), [x, ri](Tape& t, const Node& self) {
    t.grad_ref(x.id).row(ri) += self.grad.row(0);
  });
}

Var Tape::sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = val(x.id).sum();
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Node& self) {
    t.grad_ref(x.id).array() += self.grad(0, 0);
  });
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logits(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

Var Tape::bce_with_logits(Var logit, double target) {
  const Matrix& z = val(logit.id);
  require(z.rows() == 1 && z.cols() == 1,
          [&] { return "bce_with_logits expects a 1x1 logit, got " + shape_string(z); });
  Matrix out(1, 1);
  out(0, 0) = nn::bce_with_logits(z(0, 0), target);
  return push(std::move(out), requires_grad(logit), [logit, target](Tape& t, const Node& self) {
    t.grad_ref(logit.id)(0, 0) += self.grad(0, 0) * (sigmoid(t.val(logit.id)(0, 0)) - target);
  });
}

Var Tape::time2vec(Var tau, Var omega, Var phi) {
  const Matrix& T = val(tau.id);
  const Matrix& W = val(omega.id);
  const Matrix& P = val(phi.id);
  require(T.cols() == 1, [&] { return "time2vec tau must be n x 1, got " + shape_string(T); });
  require(W.rows() == 1 && P.rows() == 1 && W.cols() == P.cols() && W.cols() >= 1,
          [&] { return "time2vec omega " + shape_string(W) + " vs phi " + shape_string(P); });
  Matrix arg = T * W;
  arg.rowwise() += P.row(0);
  Matrix out = arg;
  out.rightCols(out.cols() - 1) = arg.rightCols(arg.cols() - 1).array().sin();
  const bool rg = requires_grad(tau) || requires_grad(omega) || requires_grad(phi);
  return push(std::move(out), rg, [tau, omega, phi, arg = std::move(arg)](Tape& t, const Node& self) {
    // d out / d arg: 1 for the linear column, cos(arg) for the periodic ones.
    Matrix darg = self.grad;
    darg.rightCols(darg.cols() - 1).array() *= arg.rightCols(arg.cols() - 1).array().cos();
    if (t.requires_grad(omega)) t.grad_ref(omega.id).noalias() += t.val(tau.id).transpose() * darg;
    if (t.requires_grad(phi)) t.grad_ref(phi.id) += darg.colwise().sum();
    if (t.requires_grad(tau)) t.grad_ref(tau.id).noalias() += darg * t.val(omega.id).transpose();
  });
}

Var Tape::dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  require(rate < 1.0, [&] { return "dropout rate must be < 1"; });
  const Matrix& X = val(x.id);
  Matrix keep(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
  Matrix out = X.cwiseProduct(keep);
  return push(std::move(out), requires_grad(x), [x, keep = std::move(keep)](Tape& t, const Node& self) {
    t.grad_ref(x.id) += self.grad.cwiseProduct(keep);
  });
}

// ----------------------------------------------------------------- attention

Var multi_head_attention(Tape& tape, Var x, const std::vector<bool>& attendable, std::size_t heads,
                         const AttentionWeights& w) {
  const auto d = static_cast<std::size_t>(tape.value(x).cols());
  if (heads == 0 || d % heads != 0)
    throw ConfigError("attention width " + std::to_string(d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  const std::size_t head_dim = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Var q = tape.linear(x, w.wq, w.bq);
  const Var k = tape.linear(x, w.wk, w.bk);
  const Var v = tape.linear(x, w.wv, w.bv);
  std::vector<Var> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Var qh = tape.slice_cols(q, h * head_dim, head_dim);
    const Var kh = tape.slice_cols(k, h * head_dim, head_dim);
    const Var vh = tape.slice_cols(v, h * head_dim, head_dim);
    const Var scores = tape.scale(tape.matmul_transposed(qh, kh), scale);
    const Var probs = tape.masked_softmax(scores, attendable);
    outputs.push_back(tape.matmul(probs, vh));
  }
  const Var merged = heads == 1 ? outputs.front() : tape.concat_cols(outputs);
  return tape.linear(merged, w.wo, w.bo);
}

// ---------------------------------------------------------------- grad check

GradCheckResult grad_check(ParamStore& store, const LossFn& loss, double probe) {
  store.zero_grad();
  const double base = loss(store, true);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
  std::vector<Matrix> analytic;
  analytic.reserve(store.params().size());
  for (const auto& p : store.params()) {
    if (!p.grad.allFinite()) throw NumericError("grad_check: non-finite gradient in " + p.name);
    analytic.push_back(p.grad);
  }
  GradCheckResult result;
  for (std::size_t pi = 0; pi < store.params().size(); ++pi) {
    Param& p = store.params()[pi];
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& slot = p.value.data()[i];
      const double saved = slot;
      slot = saved + probe;
      const double up = loss(store, false);
      slot = saved - probe;
      const double down = loss(store, false);
      slot = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("grad_check: non-finite loss while probing " + p.name);
      const double numeric = (up - down) / (2.0 * probe);
      const double a = analytic[pi].data()[i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = static_cast<std::size_t>(i);
      }
    }
  }
  store.zero_grad();
  return result;
}

}  // namespace loglab::nn
