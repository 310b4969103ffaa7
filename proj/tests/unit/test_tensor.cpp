#include <cmath>
#include <vector>

#include "doctest.h"
#include "loglab/error.hpp"
#include "loglab/tensor.hpp"
#include "test_support.hpp"

using namespace loglab;
using namespace loglab::nn;
using test_support::random_matrix;

namespace {

// sum(out * C) for a fixed random C, so every output coordinate matters.
Var weighted_sum(Tape& t, Var out, Rng& rng) {
  const Matrix& v = t.value(out);
  const Var c = t.constant(random_matrix(static_cast<std::size_t>(v.cols()), 1, rng));
  return t.sum(t.matmul(out, c));
}

double check(ParamStore& store, const std::function<Var(Tape&, ParamStore&, Rng&)>& build, std::uint64_t seed) {
  const LossFn fn = [&](ParamStore& s, bool accumulate) {
    Tape t;
    Rng rng(seed);
    const Var loss = build(t, s, rng);
    if (accumulate) {
      t.backward(loss);
      t.flush_param_grads();
    }
    return t.value(loss)(0, 0);
  };
  return grad_check(store, fn).max_rel_error;
}

}  // namespace

TEST_CASE("linear: identity weight and zero bias pass x through") {
  Tape t;
  Matrix x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  const Var out = t.linear(t.constant(x), t.constant(Matrix::Identity(3, 3)), t.constant(Matrix::Zero(1, 3)));
  CHECK((t.value(out) - x).norm() == 0.0);
}

TEST_CASE("linear: [[1,2]] * [[1],[1]] + 1 = [[4]]") {
  Tape t;
  Matrix x(1, 2), w(2, 1), b(1, 1);
  x << 1, 2;
  w << 1, 1;
  b << 1;
  CHECK(t.value(t.linear(t.constant(x), t.constant(w), t.constant(b)))(0, 0) == 4.0);
}

TEST_CASE("linear: gradient of sum(out) w.r.t. W is x^T * 1") {
  Rng rng(3);
  Tape t;
  const Matrix x = random_matrix(4, 3, rng);
  const Var w = t.leaf(random_matrix(3, 2, rng));
  const Var out = t.linear(t.constant(x), w, t.constant(Matrix::Zero(1, 2)));
  t.backward(t.sum(out));
  const Matrix expected = x.transpose() * Matrix::Ones(4, 2);
  CHECK((t.grad(w) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("linear: shape mismatch throws NumericError") {
  Tape t;
  CHECK_THROWS_AS(t.linear(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(2, 2)), t.constant(Matrix::Zero(1, 2))),
                  NumericError);
}

TEST_CASE("layer_norm: constant row gives beta") {
  Tape t;
  Matrix beta(1, 3);
  beta << 0.5, -1, 2;
  const Var out = t.layer_norm(t.constant(Matrix::Constant(1, 3, 7.0)), t.constant(Matrix::Ones(1, 3)), t.constant(beta));
  CHECK((t.value(out) - beta).norm() < 1e-12);
}

TEST_CASE("layer_norm: [1,-1] stays [1,-1] within 1e-3 at eps 1e-5") {
  Tape t;
  Matrix x(1, 2);
  x << 1, -1;
  const Var out = t.layer_norm(t.constant(x), t.constant(Matrix::Ones(1, 2)), t.constant(Matrix::Zero(1, 2)));
  CHECK(t.value(out)(0, 0) == doctest::Approx(0.999995).epsilon(1e-9));
  CHECK(std::abs(t.value(out)(0, 1) + 1.0) < 1e-3);
}

TEST_CASE("masked_softmax: [2,5,3] with index 1 hidden") {
  Matrix s(1, 3);
  s << 2, 5, 3;
  const Matrix p = masked_softmax(s, {true, false, true});
  CHECK(p(0, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(p(0, 1) == 0.0);
  CHECK(p(0, 2) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("masked_softmax: equal scores give a uniform row; rows sum to 1") {
  const Matrix p = masked_softmax(Matrix::Constant(2, 4, 0.3), {true, true, true, true});
  for (Eigen::Index j = 0; j < 4; ++j) CHECK(p(0, j) == doctest::Approx(0.25));
  Rng rng(1);
  const Matrix q = masked_softmax(random_matrix(5, 6, rng, 10.0), {true, false, true, true, false, true});
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs(q.row(i).sum() - 1.0) < 1e-9);
}

TEST_CASE("masked_softmax: all keys masked is an error") {
  CHECK_THROWS_AS(masked_softmax(Matrix::Zero(1, 2), {false, false}), NumericError);
}

TEST_CASE("bce_with_logits closed forms") {
  CHECK(bce_with_logits(0.0, 1.0) == doctest::Approx(0.6931471805599453).epsilon(1e-14));
  CHECK(bce_with_logits(30.0, 1.0) < 1e-12);
  CHECK(std::isfinite(bce_with_logits(-800.0, 1.0)));
  Tape t;
  const Var z = t.leaf(Matrix::Zero(1, 1));
  t.backward(t.bce_with_logits(z, 0.0));
  CHECK(t.grad(z)(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("attention: a single token returns out-projection of value-projection") {
  Rng rng(5);
  Tape t;
  const std::size_t d = 4;
  const Matrix x = random_matrix(1, d, rng);
  AttentionWeights w;
  Matrix wv = random_matrix(d, d, rng), bv = random_matrix(1, d, rng), wo = random_matrix(d, d, rng),
         bo = random_matrix(1, d, rng);
  w.wq = t.constant(random_matrix(d, d, rng));
  w.bq = t.constant(random_matrix(1, d, rng));
  w.wk = t.constant(random_matrix(d, d, rng));
  w.bk = t.constant(random_matrix(1, d, rng));
  w.wv = t.constant(wv);
  w.bv = t.constant(bv);
  w.wo = t.constant(wo);
  w.bo = t.constant(bo);
  const Var out = multi_head_attention(t, t.constant(x), {true}, 2, w);
  const Matrix expected = (x * wv + bv) * wo + bo;
  CHECK((t.value(out) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention: masked rows do not influence unmasked outputs") {
  Rng rng(9);
  const std::size_t d = 8;
  std::vector<Matrix> weights;
  for (int i = 0; i < 4; ++i) {
    weights.push_back(random_matrix(d, d, rng));
    weights.push_back(random_matrix(1, d, rng));
  }
  auto run = [&](const Matrix& x, const std::vector<bool>& mask) {
    Tape t;
    AttentionWeights w{t.constant(weights[0]), t.constant(weights[1]), t.constant(weights[2]), t.constant(weights[3]),
                       t.constant(weights[4]), t.constant(weights[5]), t.constant(weights[6]), t.constant(weights[7])};
    return Matrix(t.value(multi_head_attention(t, t.constant(x), mask, 2, w)));
  };
  Matrix x = random_matrix(4, d, rng);
  const Matrix a = run(x, {true, true, true, false});
  Matrix x2(5, d);
  x2.topRows(4) = x;
  x2.row(4) = x.row(3);
  x2.row(3) = random_matrix(1, d, rng);  // different masked content
  const Matrix b = run(x2, {true, true, true, false, false});
  CHECK((a.topRows(3) - b.topRows(3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention: heads must divide d_model") {
  Tape t;
  AttentionWeights w;
  CHECK_THROWS_AS(multi_head_attention(t, t.constant(Matrix::Zero(2, 6)), {true, true}, 4, w), ConfigError);
}

TEST_CASE("grad_check: f(theta) = theta^2 at 1 gives 2") {
  ParamStore store;
  store.add("theta", Matrix::Ones(1, 1));
  const LossFn fn = [](ParamStore& s, bool accumulate) {
    Tape t;
    const Var th = t.param(s.at("theta"));
    const Var loss = t.sum(t.matmul(th, th));
    if (accumulate) {
      t.backward(loss);
      t.flush_param_grads();
    }
    return t.value(loss)(0, 0);
  };
  store.zero_grad();
  fn(store, true);
  CHECK(store.at("theta").grad(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(grad_check(store, fn).max_rel_error < 1e-9);
}

TEST_CASE("every differentiable op passes a gradient check over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed + 100);
    ParamStore s;
    s.add("x", random_matrix(3, 8, rng));
    s.add("y", random_matrix(3, 8, rng));
    s.add("w", random_matrix(8, 4, rng));
    s.add("b", random_matrix(1, 4, rng));
    s.add("g", random_matrix(1, 8, rng));
    s.add("beta", random_matrix(1, 8, rng));
    s.add("omega", random_matrix(1, 5, rng));
    s.add("phi", random_matrix(1, 5, rng));
    s.add("z", random_matrix(1, 1, rng));
    for (int i = 0; i < 8; ++i) s.add("att" + std::to_string(i), random_matrix(i % 2 ? 1 : 8, 8, rng, 0.4));
    Matrix tau(3, 1);
    tau << 0.0, 1.5, 4.0;

    CHECK(check(s, [](Tape& t, ParamStore& p, Rng& r) {
      return weighted_sum(t, t.linear(t.param(p.at("x")), t.param(p.at("w")), t.param(p.at("b"))), r);
    }, seed) < 1e-4);
    CHECK(check(s, [](Tape& t, ParamStore& p, Rng& r) {
      return weighted_sum(t, t.matmul_transposed(t.param(p.at("x")), t.param(p.at("y"))), r);
    }, seed) < 1e-4);
    CHECK(check(s, [](Tape& t, ParamStore& p, Rng& r) {
      return weighted_sum(t, t.relu(t.add(t.param(p.at("x")), t.scale(t.param(p.at("y")), 0.7))), r);
    }, seed) < 1e-4);
    CHECK(check(s, [](Tape& t, ParamStore& p, Rng& r) {
      return weighted_sum(t, t.layer_norm(t.param(p.at("x")), t.param(p.at("g")), t.param(p.at("beta"))), r);
    }, seed) < 1e-4);
    CHECK(check(s, [](Tape& t, ParamStore& p, Rng& r) {
      const Var scores = t.matmul_transposed(t.param(p.at("x")), t.param(p.at("y")));
      return weighted_sum(t, t.masked_softmax(scores, {true, false, true}), r);
    }, seed) < 1e-4);
    CHECK(check(s, [](Tape& t, ParamStore& p, Rng& r) {
      const Var x = t.param(p.at("x"));
      const Var parts[] = {t.slice_cols(x, 2, 3), t.slice_cols(t.param(p.at("y")), 0, 2)};
      return t.add(weighted_sum(t, t.concat_cols(parts), r), weighted_sum(t, t.row(x, 2), r));
    }, seed) < 1e-4);
    CHECK(check(s, [&](Tape& t, ParamStore& p, Rng& r) {
      return weighted_sum(t, t.time2vec(t.constant(tau), t.param(p.at("omega")), t.param(p.at("phi"))), r);
    }, seed) < 1e-4);
    CHECK(check(s, [](Tape& t, ParamStore& p, Rng&) {
      return t.add(t.bce_with_logits(t.param(p.at("z")), 1.0), t.bce_with_logits(t.scale(t.param(p.at("z")), -2.0), 0.0));
    }, seed) < 1e-4);
    CHECK(check(s, [](Tape& t, ParamStore& p, Rng& r) {
      AttentionWeights w{t.param(p.at("att0")), t.param(p.at("att1")), t.param(p.at("att2")), t.param(p.at("att3")),
                         t.param(p.at("att4")), t.param(p.at("att5")), t.param(p.at("att6")), t.param(p.at("att7"))};
      return weighted_sum(t, multi_head_attention(t, t.param(p.at("x")), {true, true, false}, 2, w), r);
    }, seed) < 1e-4);
  }
}

TEST_CASE("dropout: rate 0 is the identity; rate > 0 keeps the expectation") {
  Rng rng(4);
  Tape t;
  const Matrix x = Matrix::Ones(200, 50);
  CHECK((t.value(t.dropout(t.constant(x), 0.0, rng)) - x).norm() == 0.0);
  const double mean = t.value(t.dropout(t.constant(x), 0.25, rng)).mean();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("backward requires a scalar root") {
  Tape t;
  const Var x = t.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(x), NumericError);
}

TEST_CASE("ParamStore rejects duplicate names") {
  ParamStore s;
  s.add("a", Matrix::Zero(1, 1));
  CHECK_THROWS_AS(s.add("a", Matrix::Zero(1, 1)), ConfigError);
}
