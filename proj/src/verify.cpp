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

#include "avtsl/verify.hpp"

#include <random>

#include "avtsl/loss.hpp"

namespace avtsl {

namespace {

using T = Tensor<double>;
using Inputs = std::vector<T>;
using Op = std::function<T(Tape<double>&, const Inputs&)>;

// One gradient check: random inputs and layers live in a private store; the
// op output is reduced to a scalar through a fixed random weighting.
class Case
{
public:
  Case(std::string name, std::mt19937_64& rng, double tolerance = kOpTolerance)
    : name_(std::move(name)), rng_(rng), init_(rng()), tolerance_(tolerance)
  {
  }

  Parameter<double>& input(Index rows, Index cols)
  {
    auto& p = store_.add("in" + std::to_string(n_inputs_++), {rows, cols});
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng_);
    return p;
  }

  ParameterStore<double>& store() { return store_; }
  Initializer& init() { return init_; }

  GradCheckResult run(const Op& op)
  {
    auto apply = [this, &op](Tape<double>& tape) {
      Inputs xs;
      for (std::size_t i = 0; i < store_.size(); ++i) xs.push_back(tape.parameter(store_.at(i)));
      return op(tape, xs);
    };
    Matrix<double> w;
    {
      Tape<double> probe(false);
      const auto& v = apply(probe).value();
      w.resize(v.rows(), v.cols());
    }
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng_);

    std::vector<Parameter<double>*> params;
    for (std::size_t i = 0; i < store_.size(); ++i) params.push_back(&store_.at(i));
    GradCheckOptions opt;
    opt.tolerance = tolerance_;
    return grad_check(name_, [&](Tape<double>& tape) { return sum(mul(apply(tape), tape.constant(w))); }, params,
                      opt);
  }

private:
  std::string name_;
  std::mt19937_64& rng_;
  Initializer init_;
  double tolerance_;
  ParameterStore<double> store_;
  int n_inputs_ = 0;
};

} // namespace

std::vector<GradCheckResult> grad_check_ops(std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  auto dim = [&rng](Index lo = 1) { return std::uniform_int_distribution<Index>(lo, 7)(rng); };
  std::vector<GradCheckResult> out;

  {
    Case c("matmul", rng);
    Index r = dim(), k = dim(), n = dim();
    c.input(r, k);
    c.input(k, n);
    out.push_back(c.run([](auto&, const Inputs& x) { return matmul(x[0], x[1]); }));
  }
  {
    Case c("transpose", rng);
    c.input(dim(), dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return transpose(x[0]); }));
  }
  {
    Case c("add", rng);
    Index r = dim(), n = dim();
    c.input(r, n);
    c.input(r, n);
    out.push_back(c.run([](auto&, const Inputs& x) { return add(x[0], x[1]); }));
  }
  {
    Case c("add/broadcast-row", rng);
    Index r = dim(2), n = dim();
    c.input(r, n);
    c.input(1, n);
    out.push_back(c.run([](auto&, const Inputs& x) { return add(x[0], x[1]); }));
  }
  {
    Case c("add/broadcast-col", rng);
    Index r = dim(), n = dim(2);
    c.input(r, 1);
    c.input(r, n);
    out.push_back(c.run([](auto&, const Inputs& x) { return add(x[0], x[1]); }));
  }
  {
    Case c("add/broadcast-scalar", rng);
    c.input(dim(), dim());
    c.input(1, 1);
    out.push_back(c.run([](auto&, const Inputs& x) { return add(x[0], x[1]); }));
  }
  {
    Case c("sub/broadcast", rng);
    Index r = dim(2), n = dim();
    c.input(r, n);
    c.input(1, n);
    out.push_back(c.run([](auto&, const Inputs& x) { return sub(x[0], x[1]); }));
  }
  {
    Case c("mul", rng);
    Index r = dim(), n = dim();
    c.input(r, n);
    c.input(r, n);
    out.push_back(c.run([](auto&, const Inputs& x) { return mul(x[0], x[1]); }));
  }
  {
    Case c("mul/broadcast", rng);
    Index r = dim(), n = dim(2);
    c.input(r, n);
    c.input(r, 1);
    out.push_back(c.run([](auto&, const Inputs& x) { return mul(x[0], x[1]); }));
  }
  {
    Case c("scale", rng);
    c.input(dim(), dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return scale(x[0], -1.7); }));
  }
  {
    Case c("relu", rng);
    c.input(dim(), dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return relu(x[0]); }));
  }
  {
    Case c("sigmoid", rng);
    c.input(dim(), dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return sigmoid(x[0]); }));
  }
  {
    Case c("tanh", rng);
    c.input(dim(), dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return tanh(x[0]); }));
  }
  {
    Case c("sum", rng);
    c.input(dim(), dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return sum(x[0]); }));
  }
  {
    Case c("slice_rows", rng);
    Index r = dim(2);
    c.input(r, dim());
    out.push_back(c.run([r](auto&, const Inputs& x) { return slice_rows(x[0], 1, r - 1); }));
  }
  {
    Case c("slice_cols", rng);
    Index n = dim(2);
    c.input(dim(), n);
    out.push_back(c.run([n](auto&, const Inputs& x) { return slice_cols(x[0], 0, n - 1); }));
  }
  {
    Case c("concat_rows", rng);
    Index n = dim();
    c.input(dim(), n);
    c.input(dim(), n);
    out.push_back(c.run([](auto&, const Inputs& x) { return concat_rows<double>({x[0], x[1]}); }));
  }
  {
    Case c("concat_cols", rng);
    Index r = dim();
    c.input(r, dim());
    c.input(r, dim());
    c.input(r, dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return concat_cols<double>({x[0], x[1], x[2]}); }));
  }
  {
    Case c("softmax/row", rng);
    c.input(dim(), dim(2));
    out.push_back(c.run([](auto&, const Inputs& x) { return softmax(x[0], Axis::Row); }));
  }
  {
    Case c("softmax/col", rng);
    c.input(dim(2), dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return softmax(x[0], Axis::Col); }));
  }
  {
    Case c("cross_entropy_index", rng);
    Index n = dim(2);
    Index target = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    c.input(n, 1);
    out.push_back(c.run([target](auto&, const Inputs& x) { return cross_entropy_index(x[0], target); }));
  }
  {
    Case c("soft_cross_entropy", rng);
    Index n = dim(2);
    Matrix<double> p(n, 1);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (Index i = 0; i < n; ++i) p(i, 0) = u(rng);
    p /= p.sum();
    c.input(n, 1);
    out.push_back(c.run([p](auto&, const Inputs& x) { return soft_cross_entropy(x[0], p); }));
  }
  for (Index k : {1, 3, 5}) {
    Case c("conv1d/k" + std::to_string(k), rng);
    Index len = dim(), c_in = dim(), c_out = dim();
    c.input(len, c_in);
    c.input(k * c_in, c_out);
    out.push_back(c.run([k](auto&, const Inputs& x) { return conv1d(x[0], x[1], k); }));
  }
  {
    Case c("max_pool_seq", rng);
    c.input(dim(2), dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return max_pool_seq(x[0]); }));
  }
  {
    Case c("linear", rng);
    Index in = dim(), o = dim();
    c.input(dim(), in);
    auto layer = make_linear(c.store(), c.init(), "fc", in, o);
    for (auto* p : {layer.bias}) p->value.setRandom();
    out.push_back(c.run([layer](auto&, const Inputs& x) { return linear(x[0], layer); }));
  }
  {
    Case c("feed_forward", rng);
    Index in = dim();
    c.input(dim(), in);
    auto ffn = make_feed_forward(c.store(), c.init(), "ffn", in, dim(), dim());
    ffn.hidden.bias->value.setRandom();
    out.push_back(c.run([ffn](auto&, const Inputs& x) { return feed_forward(x[0], ffn); }));
  }
  {
    Case c("lstm_forward", rng);
    Index in = dim();
    c.input(dim(), in);
    auto lstm = make_lstm(c.store(), c.init(), "lstm", in, dim());
    out.push_back(c.run([lstm](auto&, const Inputs& x) { return lstm_forward(x[0], lstm); }));
  }
  {
    Case c("attend", rng);
    Index dk = dim(), lk = dim();
    c.input(dim(), dk);
    c.input(lk, dk);
    c.input(lk, dim());
    out.push_back(c.run([](auto&, const Inputs& x) { return attend(x[0], x[1], x[2]); }));
  }
  {
    Case c("multi_head_attention", rng);
    Index heads = std::uniform_int_distribution<Index>(1, 3)(rng);
    Index d = heads * std::uniform_int_distribution<Index>(1, 2)(rng);
    Index lk = dim();
    c.input(dim(), d);
    c.input(lk, d);
    c.input(lk, d);
    auto mha = make_attention(c.store(), c.init(), "mha", d, heads);
    out.push_back(c.run([mha](auto&, const Inputs& x) { return multi_head_attention(x[0], x[1], x[2], mha); }));
  }
  return out;
}

std::vector<GradCheckResult> grad_check_model(std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> out;
  const Index d = 8, heads = 2, v_n = 4, t_n = 3;

  {
    Case c("cqa_forward", rng, kCompositeTolerance);
    c.input(v_n, d);
    c.input(t_n, d);
    auto p = make_cqa(c.store(), c.init(), "cqa", d, 3);
    out.push_back(c.run([p](auto&, const Inputs& x) { return cqa_forward(x[0], x[1], p); }));
  }
  {
    Case c("context_query_concat", rng, kCompositeTolerance);
    c.input(v_n, d);
    c.input(t_n, d);
    auto p = make_cqa(c.store(), c.init(), "cqa", d, 3);
    out.push_back(c.run([p](auto&, const Inputs& x) { return context_query_concat(x[0], x[1], p); }));
  }
  {
    Case c("tri_modal_fuse", rng, kCompositeTolerance);
    c.input(v_n, d);
    c.input(v_n, d);
    c.input(t_n, d);
    auto p = make_tri_modal(c.store(), c.init(), "tri", d, heads, true);
    out.push_back(c.run([p](auto&, const Inputs& x) {
      auto f = tri_modal_fuse(x[0], x[1], x[2], p);
      return concat_rows<double>({f.f_av, f.t_hat});
    }));
  }
  {
    Case c("av_predict", rng, kCompositeTolerance);
    c.input(v_n, d);
    auto h = make_recurrent_head(c.store(), c.init(), "head", d);
    out.push_back(c.run([h](auto&, const Inputs& x) {
      auto l = av_predict(x[0], h);
      return concat_rows<double>({l.start, l.end});
    }));
  }
  {
    Case c("t_predict", rng, kCompositeTolerance);
    c.input(t_n, d);
    auto h = make_token_head(c.store(), c.init(), "head", d);
    out.push_back(c.run([h](auto&, const Inputs& x) {
      auto l = t_predict(x[0], h);
      return concat_rows<double>({l.start, l.end});
    }));
  }

  // Full objective on a hand-built sample: one question token then two
  // subtitle tokens tiling [0, 2) s on a 0.5 s grid.
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_matrix = [&](Index r, Index n) {
    FeatureMatrix m(r, n);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(normal(rng));
    return m;
  };
  VideoSample video;
  video.video_id = "gradcheck";
  video.duration_s = 2.0;
  video.visual = {Modality::Visual, random_matrix(v_n, 5), 0.5};
  video.audio = {Modality::Audio, random_matrix(3, 3), 2.0 / 3.0};
  video.tsm = TimeSpanMap({{1, 0.0, 1.0}, {2, 1.0, 2.0}});
  QAInstance qa;
  qa.question_id = "q";
  qa.gt_start_s = 0.5;
  qa.gt_end_s = 1.5;
  qa.textual = {Modality::Textual, random_matrix(t_n, 4), 0.0};
  video.qa.push_back(qa);
  video.validate();

  for (bool use_audio : {true, false}) {
    ModelConfig mc;
    mc.visual_dim = 5;
    mc.audio_dim = 3;
    mc.text_dim = 4;
    mc.hidden_dim = d;
    mc.heads = heads;
    mc.conv_width = 3;
    mc.use_audio = use_audio;
    mc.seed = seed;
    AvtslModel<double> model(mc);
    auto input = make_input<double>(video, qa, use_audio);
    auto targets = make_targets(qa, video);
    auto ctx = span_context(video);
    PseudoLabels<double> labels;
    {
      Tape<double> tape(false);
      labels = pseudo_labels(model.forward(tape, input).logits, ctx);
    }
    std::vector<Parameter<double>*> params;
    for (std::size_t i = 0; i < model.parameters().size(); ++i) params.push_back(&model.parameters().at(i));
    GradCheckOptions opt;
    opt.tolerance = kCompositeTolerance;
    out.push_back(grad_check(use_audio ? "total_loss" : "total_loss/no-audio",
                             [&](Tape<double>& tape) {
                               auto o = model.forward(tape, input);
                               return total_loss(o.logits, targets, ctx, true, labels).total;
                             },
                             params, opt));
  }
  return out;
}

bool all_passed(const std::vector<GradCheckResult>& results)
{
  return std::all_of(results.begin(), results.end(), [](const GradCheckResult& r) { return r.passed; });
}

} // namespace avtsl
