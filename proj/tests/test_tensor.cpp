/*
 * Copyright 2026 The AVTSL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <cstring>

#include "avtsl/grad_check.hpp"
#include "avtsl/nn.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace avtsl;
using test::Rng;
using M = Matrix<double>;

namespace {

M mat(Index rows, Index cols, std::initializer_list<double> vals)
{
  M m(rows, cols);
  Index i = 0;
  for (double v : vals) m.data()[i++] = v;
  return m;
}

} // namespace

TEST_SUITE("tensor")
{
  TEST_CASE("matmul examples")
  {
    Tape<double> tape;
    Rng rng(1);
    M b = rng.matrix(3, 5);
    auto y = matmul(tape.constant(M::Identity(3, 3)), tape.constant(b));
    CHECK(y.value() == b);

    auto z = matmul(tape.constant(mat(2, 2, {1, 2, 3, 4})), tape.constant(M::Zero(2, 1)));
    CHECK(z.value() == M::Zero(2, 1));

    M a = rng.matrix(4, 3), c = rng.matrix(3, 2);
    auto r = matmul(tape.constant(a), tape.constant(c));
    CHECK(test::max_abs_diff(r.value(), test::naive_matmul(a, c)) < 1e-6);

    CHECK_THROWS_AS(matmul(tape.constant(a), tape.constant(a)), DimensionError);
  }

  TEST_CASE("broadcast add and mul")
  {
    Tape<double> tape;
    auto a = tape.constant(mat(2, 3, {1, 2, 3, 4, 5, 6}));
    auto row = tape.constant(mat(1, 3, {10, 20, 30}));
    auto col = tape.constant(mat(2, 1, {100, 200}));
    CHECK(add(a, row).value() == mat(2, 3, {11, 22, 33, 14, 25, 36}));
    CHECK(add(a, col).value() == mat(2, 3, {101, 102, 103, 204, 205, 206}));
    CHECK(mul(a, row).value() == mat(2, 3, {10, 40, 90, 40, 100, 180}));
    CHECK_THROWS_AS(add(a, tape.constant(M::Zero(3, 2))), DimensionError);
  }

  TEST_CASE("softmax examples")
  {
    Tape<double> tape;
    auto u = softmax(tape.constant(M::Zero(2, 3)), Axis::Row);
    CHECK(test::max_abs_diff(u.value(), M::Constant(2, 3, 1.0 / 3.0)) < 1e-15);

    auto big = softmax(tape.constant(mat(1, 2, {1000, 1000})), Axis::Row);
    CHECK(big.value()(0, 0) == doctest::Approx(0.5));
    CHECK(big.value()(0, 1) == doctest::Approx(0.5));

    Rng rng(2);
    auto r = softmax(tape.constant(rng.matrix(3, 4, -5, 5)), Axis::Row);
    for (Index i = 0; i < 3; ++i) {
      double s = 0;
      for (Index j = 0; j < 4; ++j) s += r.value()(i, j);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }

  TEST_CASE("softmax is shift invariant per row and normalizes columns")
  {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      Index rows = rng.integer(1, 7), cols = rng.integer(1, 7);
      M x = rng.matrix(rows, cols, -10, 10);
      M shifted = x;
      for (Index i = 0; i < rows; ++i) shifted.row(i).array() += rng.uniform(-50, 50);
      Tape<double> tape;
      auto a = softmax(tape.constant(x), Axis::Row);
      auto b = softmax(tape.constant(shifted), Axis::Row);
      CHECK(test::max_abs_diff(a.value(), b.value()) < 1e-12);
      auto c = softmax(tape.constant(x), Axis::Col);
      for (Index j = 0; j < cols; ++j) CHECK(std::abs(c.value().col(j).sum() - 1.0) < 1e-6);
    }
  }

  TEST_CASE("cross_entropy_index examples")
  {
    Tape<double> tape;
    for (Index t = 0; t < 4; ++t)
      CHECK(cross_entropy_index(tape.constant(M::Zero(4, 1)), t).item() == doctest::Approx(std::log(4.0)));

    double peaked = cross_entropy_index(tape.constant(mat(2, 1, {10, -10})), 0).item();
    CHECK(peaked == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));
    CHECK(peaked == doctest::Approx(2.06e-9).epsilon(1e-2));

    Tape<double> g;
    auto logits = g.leaf(M::Zero(4, 1), true);
    g.backward(cross_entropy_index(logits, 2));
    CHECK(test::max_abs_diff(logits.grad(), mat(4, 1, {0.25, 0.25, -0.75, 0.25})) < 1e-15);

    CHECK_THROWS_AS(cross_entropy_index(tape.constant(M::Zero(4, 1)), 4), IndexError);
  }

  TEST_CASE("soft_cross_entropy examples")
  {
    Tape<double> tape;
    Rng rng(4);
    M logits = rng.matrix(5, 1, -3, 3);
    auto x = tape.constant(logits);

    M onehot = M::Zero(5, 1);
    onehot(3, 0) = 1.0;
    CHECK(soft_cross_entropy(x, onehot).item() == doctest::Approx(cross_entropy_index(x, 3).item()));

    M p = softmax(x, Axis::Col).value();
    double entropy = 0;
    for (Index i = 0; i < 5; ++i) entropy -= p(i, 0) * std::log(p(i, 0));
    CHECK(soft_cross_entropy(x, p).item() == doctest::Approx(entropy).epsilon(1e-12));

    CHECK(soft_cross_entropy(tape.constant(M::Zero(2, 1)), mat(2, 1, {0.5, 0.5})).item() ==
          doctest::Approx(std::log(2.0)));

    CHECK_THROWS_AS(soft_cross_entropy(x, M::Constant(5, 1, 0.5)), ValidationError);
  }

  TEST_CASE("conv1d examples")
  {
    Rng rng(5);
    Tape<double> tape;
    M x = rng.matrix(6, 3);
    CHECK(conv1d(tape.constant(x), tape.constant(M::Identity(3, 3)), 1).value() == x);
    CHECK(conv1d(tape.constant(x), tape.constant(M::Zero(9, 4)), 3).value() == M::Zero(6, 4));

    // sliding window with zero padding
    M xs = rng.matrix(5, 2);
    M k = rng.matrix(3 * 2, 4);
    M want = M::Zero(5, 4);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 3; ++j) {
        Index src = i + j - 1;
        if (src < 0 || src >= 5) continue;
        for (Index c = 0; c < 2; ++c)
          for (Index o = 0; o < 4; ++o) want(i, o) += xs(src, c) * k(j * 2 + c, o);
      }
    CHECK(test::max_abs_diff(conv1d(tape.constant(xs), tape.constant(k), 3).value(), want) < 1e-6);

    CHECK_THROWS_AS(conv1d(tape.constant(xs), tape.constant(M::Zero(4, 4)), 2), ConfigError);
  }

  TEST_CASE("max_pool_seq examples")
  {
    Tape<double> tape;
    Rng rng(6);
    M one = rng.matrix(1, 4);
    CHECK(max_pool_seq(tape.constant(one)).value() == one);
    CHECK(max_pool_seq(tape.constant(mat(2, 2, {1, 5, 3, 2}))).value() == mat(1, 2, {3, 5}));
    M row = rng.matrix(1, 3);
    CHECK(max_pool_seq(tape.constant(M(row.replicate(4, 1)))).value() == row);

    // ties send the gradient to the first maximal position
    Tape<double> g;
    auto x = g.leaf(mat(3, 1, {2, 2, 1}), true);
    g.backward(sum(max_pool_seq(x)));
    CHECK(x.grad() == mat(3, 1, {1, 0, 0}));
  }

  TEST_CASE("lstm examples")
  {
    Rng rng(7);
    ParameterStore<double> store;
    Initializer init(0);
    auto lstm = make_lstm(store, init, "lstm", 3, 2);

    SUBCASE("zero weights and biases give zero hidden states")
    {
      lstm.w_input->value.setZero();
      lstm.w_recurrent->value.setZero();
      lstm.bias->value.setZero();
      Tape<double> tape;
      CHECK(lstm_forward(tape.constant(rng.matrix(4, 3)), lstm).value() == M::Zero(4, 2));
    }
    SUBCASE("matches the scalar cell oracle")
    {
      lstm.bias->value = rng.matrix(1, 8);
      M x = rng.matrix(4, 3);
      Tape<double> tape;
      M got = lstm_forward(tape.constant(x), lstm).value();
      M want = test::lstm_oracle(x, lstm.w_input->value, lstm.w_recurrent->value, lstm.bias->value);
      CHECK(test::max_abs_diff(got, want) < 1e-5);

      // length 1 is a single cell step
      M first = lstm_forward(tape.constant(M(x.topRows(1))), lstm).value();
      CHECK(test::max_abs_diff(first, want.topRows(1)) < 1e-12);
    }
    SUBCASE("forget gate bias starts at one")
    {
      CHECK(lstm.bias->value.middleCols(2, 2) == M::Ones(1, 2));
      CHECK(lstm.bias->value.leftCols(2) == M::Zero(1, 2));
    }
  }

  TEST_CASE("attention examples")
  {
    Rng rng(8);
    ParameterStore<double> store;
    Initializer init(1);
    auto mha = make_attention(store, init, "mha", 4, 2);
    Tape<double> tape;

    SUBCASE("a single key returns its projected value for every query")
    {
      M kv = rng.matrix(1, 4);
      auto out = multi_head_attention(tape.constant(rng.matrix(3, 4)), tape.constant(kv), tape.constant(kv), mha);
      M row = kv * mha.w_value->value * mha.w_output->value;
      for (Index i = 0; i < 3; ++i) CHECK((out.value().row(i) - row).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("identical keys give uniform weights")
    {
      M keys = rng.matrix(1, 4).replicate(5, 1);
      std::vector<M> weights;
      multi_head_attention(tape.constant(rng.matrix(2, 4)), tape.constant(keys), tape.constant(rng.matrix(5, 4)), mha,
                           &weights);
      REQUIRE(weights.size() == 2);
      for (const auto& w : weights) CHECK(test::max_abs_diff(w, M::Constant(2, 5, 0.2)) < 1e-12);
    }
    SUBCASE("one head matches softmax(q k^T / sqrt d) v")
    {
      ParameterStore<double> s1;
      auto one = make_attention(s1, init, "one", 4, 1);
      M q = rng.matrix(3, 4), k = rng.matrix(5, 4), v = rng.matrix(5, 4);
      M qp = q * one.w_query->value, kp = k * one.w_key->value, vp = v * one.w_value->value;
      M scores = qp * kp.transpose() / 2.0;
      M w(3, 5);
      for (Index i = 0; i < 3; ++i) {
        double mx = scores.row(i).maxCoeff(), z = 0;
        for (Index j = 0; j < 5; ++j) z += std::exp(scores(i, j) - mx);
        for (Index j = 0; j < 5; ++j) w(i, j) = std::exp(scores(i, j) - mx) / z;
      }
      M want = w * vp * one.w_output->value;
      auto got = multi_head_attention(tape.constant(q), tape.constant(k), tape.constant(v), one);
      CHECK(test::max_abs_diff(got.value(), want) < 1e-5);
    }
    SUBCASE("heads must divide the dim")
    {
      ParameterStore<double> s2;
      CHECK_THROWS_AS(make_attention(s2, init, "bad", 6, 4), ConfigError);
    }
  }

  TEST_CASE("grad_check examples")
  {
    Rng rng(9);
    Parameter<double> a{"a", {3, 4}, rng.matrix(3, 4), M::Zero(3, 4)};
    Parameter<double> b{"b", {4, 2}, rng.matrix(4, 2), M::Zero(4, 2)};
    auto r = grad_check(
      "sum_matmul", [&](Tape<double>& t) { return sum(matmul(t.parameter(a), t.parameter(b))); }, {&a, &b});
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-6);

    Parameter<double> l{"l", {5, 1}, rng.matrix(5, 1), M::Zero(5, 1)};
    auto ce = grad_check("ce", [&](Tape<double>& t) { return cross_entropy_index(t.parameter(l), 2); }, {&l});
    CHECK(ce.passed);
    CHECK(ce.max_rel_error < 1e-6);

    // a deliberately wrong backward is caught
    auto wrong = grad_check(
      "wrong",
      [&](Tape<double>& t) {
        auto x = t.parameter(l);
        auto y = t.record("double_wrong", x.value() * 2.0, true,
                          [x](const M& g, Tape<double>& tp) { tp.accumulate(x, g * 3.0); });
        return sum(y);
      },
      {&l});
    CHECK_FALSE(wrong.passed);
  }

  TEST_CASE("backward is linear in the loss")
  {
    Rng rng(10);
    Parameter<double> w{"w", {4, 3}, rng.matrix(4, 3), M::Zero(4, 3)};
    M x = rng.matrix(5, 4);
    auto f1 = [&](Tape<double>& t) { return sum(tanh(matmul(t.constant(x), t.parameter(w)))); };
    auto f2 = [&](Tape<double>& t) { return cross_entropy_index(slice_cols(matmul(t.constant(x), t.parameter(w)), 1, 1), 3); };

    auto grad_of = [&](auto&& f) {
      w.zero_grad();
      Tape<double> t;
      t.backward(f(t));
      return M(w.grad);
    };
    M g1 = grad_of(f1), g2 = grad_of(f2);
    M both = grad_of([&](Tape<double>& t) { return add(f1(t), f2(t)); });
    CHECK(test::max_abs_diff(both, g1 + g2) < 1e-12);

    // parameter gradients accumulate across backward calls
    w.zero_grad();
    {
      Tape<double> t;
      t.backward(f1(t));
    }
    {
      Tape<double> t;
      t.backward(f2(t));
    }
    CHECK(test::max_abs_diff(w.grad, g1 + g2) < 1e-12);
  }

  TEST_CASE("forward and backward are bitwise deterministic")
  {
    auto run = [] {
      ParameterStore<float> store;
      Initializer init(42);
      auto mha = make_attention(store, init, "mha", 8, 2);
      auto lstm = make_lstm(store, init, "lstm", 8, 8);
      Rng rng(11);
      Matrix<float> x = rng.matrix<float>(6, 8);
      Tape<float> tape;
      auto in = tape.constant(x);
      auto y = lstm_forward(multi_head_attention(in, in, in, mha), lstm);
      tape.backward(sum(max_pool_seq(y)));
      std::vector<Matrix<float>> grads;
      for (std::size_t i = 0; i < store.size(); ++i) grads.push_back(store.at(i).grad);
      return grads;
    };
    auto a = run(), b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(std::memcmp(a[i].data(), b[i].data(), sizeof(float) * a[i].size()) == 0);
  }

  TEST_CASE("tape contracts")
  {
    Tape<double> t1, t2;
    auto a = t1.constant(M::Ones(2, 2));
    auto b = t2.constant(M::Ones(2, 2));
    CHECK_THROWS_AS(add(a, b), ContractError);
    CHECK_THROWS_AS(t1.backward(a), ContractError);
    CHECK_THROWS_AS(t1.backward(sum(b)), ContractError);
    CHECK_THROWS_AS(t1.constant(M::Constant(1, 1, std::nan(""))), NumericError);

    Tape<double> empty;
    Tape<double> other;
    CHECK_THROWS_AS(empty.backward(sum(other.constant(M::Ones(1, 1)))), ContractError);

    // a tape without gradients records no backward work
    Parameter<double> p{"p", {2, 2}, M::Ones(2, 2), M::Zero(2, 2)};
    Tape<double> off(false);
    auto y = sum(off.parameter(p));
    CHECK_FALSE(y.requires_grad());
    off.backward(y);
    CHECK(p.grad == M::Zero(2, 2));
  }

  TEST_CASE("detach blocks gradient")
  {
    Tape<double> t;
    auto x = t.leaf(M::Constant(2, 1, 3.0), true);
    auto y = add(mul(x, detach(x)), x);
    t.backward(sum(y));
    CHECK(x.grad() == M::Constant(2, 1, 4.0));
  }

  TEST_CASE("parameter store")
  {
    ParameterStore<double> s;
    auto& p = s.add("conv.kernel", {3, 4, 5});
    CHECK(p.value.rows() == 12);
    CHECK(p.value.cols() == 5);
    CHECK_THROWS_AS(s.add("conv.kernel", {1}), ConfigError);
    CHECK_THROWS_AS(s.add("bad name", {1}), ConfigError);
    CHECK_THROWS_AS(s.add("zero", {0, 2}), ConfigError);
    CHECK(s.find("conv.kernel") == &p);
    CHECK(s.find("missing") == nullptr);
    CHECK(s.scalar_count() == 60);
  }
}
