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

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "avtsl/model.hpp"

namespace avtsl {

enum class Predictor { AV, V, T };

std::string to_string(Predictor p);
Predictor parse_predictor(const std::string& s);

// Ordered (source, target) pairs: the source's logits learn from the
// target's pseudo-label.
inline constexpr std::array<std::array<Predictor, 2>, 6> kLossPairs = {{
  {Predictor::AV, Predictor::T},
  {Predictor::AV, Predictor::V},
  {Predictor::V, Predictor::T},
  {Predictor::V, Predictor::AV},
  {Predictor::T, Predictor::AV},
  {Predictor::T, Predictor::V},
}};

inline SpanDomain domain_of(Predictor p)
{
  return p == Predictor::T ? SpanDomain::Token : SpanDomain::VideoGrid;
}

// Everything needed to move spans between the two index domains of a sample.
struct SpanContext
{
  const TimeSpanMap* tsm = nullptr;
  double grid_step = 1.0;
  Index grid_length = 0;

  bool has_tokens() const { return tsm && !tsm->empty(); }
};

SpanContext span_context(const VideoSample& video);

// Ground truth in both domains: grid indices from the annotation, token
// indices converted from the grid span. No token target without subtitles.
struct SpanTargets
{
  SpanPrediction grid;
  std::optional<SpanPrediction> token;
};

SpanTargets make_targets(const QAInstance& qa, const VideoSample& video);

struct PairWeight
{
  Predictor source = Predictor::AV;
  Predictor target = Predictor::V;
  double lambda = 0.0;
};

// IoU of the two spans, both already in the source's domain. Inclusive index
// intervals; carries no gradient.
PairWeight dynamic_weight(Predictor source, Predictor target, const SpanPrediction& source_span,
                          const SpanPrediction& target_span_converted);

// Plain-number copy of a breakdown, one per training step.
struct LossRecord
{
  struct Pair
  {
    Predictor source = Predictor::AV;
    Predictor target = Predictor::V;
    double lambda = 0.0;
    double loss = 0.0;
  };

  std::optional<double> l1_av;
  double l1_v = 0.0;
  std::optional<double> l1_t;
  std::vector<Pair> pairs;
  double l2 = 0.0; // sum of lambda * loss
  double total = 0.0;

  double l1_sum() const { return l1_av.value_or(0.0) + l1_v + l1_t.value_or(0.0); }
  std::string to_json() const;
};

///////////////////////////////////////////
// Loss terms
///////////////////////////////////////////

// Decoded span of a predictor. Token spans are restricted to the subtitle
// tokens, since only those have a place on the timeline.
template <typename Scalar>
SpanPrediction decode_in_context(const SpanLogits<Scalar>& logits, const SpanContext& ctx)
{
  if (logits.domain == SpanDomain::Token) {
    if (!ctx.has_tokens()) throw MappingError("decode: token predictor without subtitle tokens");
    return decode_span(logits, ctx.tsm->first_token(), ctx.tsm->last_token());
  }
  return decode_span(logits);
}

// CE(start, s) + CE(end, e).
template <typename Scalar>
Tensor<Scalar> span_cross_entropy(const SpanLogits<Scalar>& logits, const SpanPrediction& target)
{
  if (logits.domain != target.domain)
    throw ContractError("span loss: logits are in the " + to_string(logits.domain) + " domain, target in " +
                        to_string(target.domain));
  return add(cross_entropy_index(logits.start, target.start), cross_entropy_index(logits.end, target.end));
}

// Detached probabilities of another predictor's logits.
template <typename Scalar>
struct SoftTarget
{
  SpanDomain domain = SpanDomain::VideoGrid;
  Matrix<Scalar> start;
  Matrix<Scalar> end;
};

template <typename Scalar>
SoftTarget<Scalar> soft_target(const SpanLogits<Scalar>& logits)
{
  auto probs = [](const Matrix<Scalar>& v) -> Matrix<Scalar> {
    Matrix<Scalar> e = (v.array() - v.maxCoeff()).exp().matrix();
    return e / e.sum();
  };
  return {logits.domain, probs(logits.start.value()), probs(logits.end.value())};
}

// Soft regime: cross-entropy against detached probabilities.
template <typename Scalar>
Tensor<Scalar> pair_loss(const SpanLogits<Scalar>& source, const SoftTarget<Scalar>& target)
{
  if (source.domain != target.domain)
    throw ContractError("pair loss: source in the " + to_string(source.domain) + " domain, pseudo-label in " +
                        to_string(target.domain));
  return add(soft_cross_entropy(source.start, target.start), soft_cross_entropy(source.end, target.end));
}

// Hard regime: cross-entropy against a decoded, converted span.
template <typename Scalar>
Tensor<Scalar> pair_loss(const SpanLogits<Scalar>& source, const SpanPrediction& target)
{
  return span_cross_entropy(source, target);
}

template <typename Scalar>
struct PairTerm
{
  PairWeight weight;
  Tensor<Scalar> loss; // unweighted
};

template <typename Scalar>
struct LossBreakdown
{
  Tensor<Scalar> l1_av; // invalid without audio
  Tensor<Scalar> l1_v;
  Tensor<Scalar> l1_t;  // invalid without subtitle tokens
  std::vector<PairTerm<Scalar>> pairs;
  Tensor<Scalar> total;

  LossRecord record() const
  {
    LossRecord r;
    if (l1_av.valid()) r.l1_av = static_cast<double>(l1_av.item());
    r.l1_v = static_cast<double>(l1_v.item());
    if (l1_t.valid()) r.l1_t = static_cast<double>(l1_t.item());
    for (const auto& p : pairs) {
      double loss = p.loss.valid() ? static_cast<double>(p.loss.item()) : 0.0;
      r.pairs.push_back({p.weight.source, p.weight.target, p.weight.lambda, loss});
      r.l2 += p.weight.lambda * loss;
    }
    r.total = static_cast<double>(total.item());
    return r;
  }
};

// Everything the consistency terms take from the predictors, captured as
// plain values: each predictor's decoded span (in its own domain) and the
// probabilities of the grid predictors. Nothing here is on the tape.
template <typename Scalar>
struct PseudoLabels
{
  std::array<std::optional<SpanPrediction>, 3> decoded;
  std::array<std::optional<SoftTarget<Scalar>>, 3> soft;

  const SpanPrediction& span(Predictor p) const
  {
    const auto& d = decoded[static_cast<int>(p)];
    if (!d) throw ContractError("no decoded span for predictor " + to_string(p));
    return *d;
  }
};

// Pseudo-labels of every predictor present. The token predictor is left out
// when the sample has no subtitle tokens.
template <typename Scalar>
PseudoLabels<Scalar> pseudo_labels(const PredictorLogits<Scalar>& logits, const SpanContext& ctx)
{
  PseudoLabels<Scalar> out;
  auto grid = [&](Predictor p, const SpanLogits<Scalar>& l) {
    out.decoded[static_cast<int>(p)] = decode_in_context(l, ctx);
    out.soft[static_cast<int>(p)] = soft_target(l);
  };
  if (logits.av) grid(Predictor::AV, *logits.av);
  grid(Predictor::V, logits.v);
  if (ctx.has_tokens()) out.decoded[static_cast<int>(Predictor::T)] = decode_in_context(logits.t, ctx);
  return out;
}

// L = L1^AV + L1^V + L1^T + sum over ordered pairs of lambda * L2^{M-N}.
// Pairs whose predictors are absent (no audio, no subtitle tokens) are
// skipped. With use_dtl off the six pairs are listed with zero weight and no
// loss, and the total is the supervised sum. `labels` supplies the targets
// and weights of the pair terms; none of it carries gradient.
template <typename Scalar>
LossBreakdown<Scalar> total_loss(const PredictorLogits<Scalar>& logits, const SpanTargets& targets,
                                 const SpanContext& ctx, bool use_dtl, const PseudoLabels<Scalar>& labels)
{
  LossBreakdown<Scalar> out;
  const bool has_av = logits.av.has_value();
  const bool has_t = ctx.has_tokens() && targets.token.has_value();

  if (has_av) out.l1_av = span_cross_entropy(*logits.av, targets.grid);
  out.l1_v = span_cross_entropy(logits.v, targets.grid);
  if (has_t) out.l1_t = span_cross_entropy(logits.t, *targets.token);

  Tensor<Scalar> total = out.l1_v;
  if (has_av) total = add(out.l1_av, total);
  if (has_t) total = add(total, out.l1_t);

  if (!use_dtl) {
    for (const auto& [m, n] : kLossPairs)
      out.pairs.push_back({PairWeight{m, n, 0.0}, Tensor<Scalar>()});
    out.total = total;
    return out;
  }

  auto present = [&](Predictor p) { return p == Predictor::V || (p == Predictor::AV ? has_av : has_t); };
  auto logits_of = [&](Predictor p) -> const SpanLogits<Scalar>& {
    return p == Predictor::AV ? *logits.av : p == Predictor::V ? logits.v : logits.t;
  };

  for (const auto& [m, n] : kLossPairs) {
    if (!present(m) || !present(n)) continue;
    const auto& source = logits_of(m);
    SpanPrediction target_span = labels.span(n);
    if (domain_of(m) != domain_of(n))
      target_span = convert_span(target_span, *ctx.tsm, ctx.grid_step, ctx.grid_length, domain_of(m));

    PairTerm<Scalar> term;
    term.weight = dynamic_weight(m, n, labels.span(m), target_span);
    if (domain_of(m) == domain_of(n)) {
      const auto& soft = labels.soft[static_cast<int>(n)];
      if (!soft) throw ContractError("no soft pseudo-label for predictor " + to_string(n));
      term.loss = pair_loss(source, *soft);
    }
    else {
      term.loss = pair_loss(source, target_span);
    }
    total = add(total, scale(term.loss, static_cast<Scalar>(term.weight.lambda)));
    out.pairs.push_back(term);
  }
  out.total = total;
  return out;
}

template <typename Scalar>
LossBreakdown<Scalar> total_loss(const PredictorLogits<Scalar>& logits, const SpanTargets& targets,
                                 const SpanContext& ctx, bool use_dtl)
{
  if (!use_dtl) return total_loss(logits, targets, ctx, false, PseudoLabels<Scalar>{});
  return total_loss(logits, targets, ctx, true, pseudo_labels(logits, ctx));
}

} // namespace avtsl
