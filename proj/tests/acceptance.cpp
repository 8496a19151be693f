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

// Acceptance run: one PASS/FAIL line per criterion, exit status 2 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "avtsl/synth.hpp"
#include "avtsl/train.hpp"
#include "avtsl/verify.hpp"
#include "support.hpp"

using namespace avtsl;
using test::Rng;
using M = Matrix<double>;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

RunConfig small_run(int epochs)
{
  RunConfig c;
  c.hidden_dim = 32;
  c.heads = 2;
  c.learning_rate = 1e-3;
  c.epochs = epochs;
  c.seed = 0;
  return c;
}

///////////////////////////////////////////
// 1. gradient integrity
///////////////////////////////////////////

Outcome gradient_integrity()
{
  auto t0 = std::chrono::steady_clock::now();
  auto ops = grad_check_ops(1);
  auto model = grad_check_model(1);
  double secs = seconds_since(t0);

  double op_err = 0, model_err = 0;
  bool ok = true;
  for (const auto& r : ops) {
    op_err = std::max(op_err, r.max_rel_error);
    ok &= r.passed && r.tolerance <= 1e-5;
    if (!r.passed) std::printf("  op %s failed: max rel err %.3g\n", r.name.c_str(), r.max_rel_error);
  }
  for (const auto& r : model) {
    model_err = std::max(model_err, r.max_rel_error);
    ok &= r.passed && r.tolerance <= 1e-4;
    if (!r.passed) std::printf("  stage %s failed: max rel err %.3g\n", r.name.c_str(), r.max_rel_error);
  }
  ok &= secs < 120.0;
  return {ok, std::to_string(ops.size()) + " ops max rel err " + fmt("%.2e", op_err) + " (< 1e-5), " +
                  std::to_string(model.size()) + " composed checks max rel err " + fmt("%.2e", model_err) +
                  " (< 1e-4), " + fmt("%.1f", secs) + " s (< 120 s)"};
}

///////////////////////////////////////////
// 2. overfit
///////////////////////////////////////////

struct OverfitRun
{
  Dataset data;
  double ap = 0, vp = 0, tp = 0;
  long steps = 0;
  double secs = 0;
};

const OverfitRun& overfit_run()
{
  static std::optional<OverfitRun> cached;
  if (cached) return *cached;
  auto t0 = std::chrono::steady_clock::now();
  OverfitRun r;
  SynthConfig sc; // 8 videos, one question each, noise 0.1
  r.data = synth_generate(sc);
  auto cfg = small_run(62);
  cfg.max_steps = 500;
  Trainer<float> trainer(cfg, r.data);
  trainer.run();
  r.steps = trainer.global_step();
  r.ap = evaluate_model(trainer.model(), r.data, Predictor::AV).miou;
  r.vp = evaluate_model(trainer.model(), r.data, Predictor::V).miou;
  r.tp = evaluate_model(trainer.model(), r.data, Predictor::T).miou;
  r.secs = seconds_since(t0);
  cached = std::move(r);
  return *cached;
}

Outcome overfit()
{
  const auto& r = overfit_run();
  bool ok = r.steps <= 500 && r.tp >= 0.9 && r.ap >= 0.7 && r.vp >= 0.7 && r.tp >= 0.7 && r.secs < 300.0;
  return {ok, std::to_string(r.data.qa_count()) + " samples, " + std::to_string(r.steps) +
                  " steps: train mIoU TP " + fmt("%.3f", r.tp) + " (>= 0.9), AP " + fmt("%.3f", r.ap) + ", VP " +
                  fmt("%.3f", r.vp) + " (>= 0.7), " + fmt("%.1f", r.secs) + " s (< 300 s)"};
}

///////////////////////////////////////////
// 3. ablation ordering
///////////////////////////////////////////

Dataset gapped(std::uint64_t seed, Split split)
{
  SynthConfig sc;
  sc.n_videos = 64;
  sc.gap_fraction = 0.3;
  sc.seed = seed;
  sc.split = split;
  return synth_generate(sc);
}

// Best attainable token-domain mIoU: the ground truth itself, pushed through
// the token mapping and back.
double token_ceiling(const Dataset& data)
{
  double sum = 0;
  int n = 0;
  for (const auto& v : data.videos)
    for (const auto& q : v.qa) {
      auto t = make_targets(q, v);
      auto gt = grid_ground_truth(q, v);
      sum += t.token ? temporal_iou(span_seconds(*t.token, v.tsm, v.visual.time_step_seconds), gt) : 0.0;
      ++n;
    }
  return n ? sum / n : 0.0;
}

Outcome ablation()
{
  auto t0 = std::chrono::steady_clock::now();
  auto train = gapped(100, Split::Train);
  auto held = gapped(200, Split::Valid);

  auto fit = [&](bool dtl) {
    auto cfg = small_run(10);
    cfg.use_dtl = dtl;
    Trainer<float> t(cfg, train);
    t.run();
    return std::array<double, 3>{evaluate_model(t.model(), held, Predictor::AV).miou,
                                 evaluate_model(t.model(), held, Predictor::V).miou,
                                 evaluate_model(t.model(), held, Predictor::T).miou};
  };
  auto on = fit(true);
  auto off = fit(false);
  double secs = seconds_since(t0);

  double ap = on[0], vp = on[1], tp = on[2], gain = tp - off[2];
  std::printf("  held-out mIoU  DTL on: AP %.4f VP %.4f TP %.4f | DTL off: AP %.4f VP %.4f TP %.4f\n", ap, vp, tp,
              off[0], off[1], off[2]);
  std::printf("  token-domain ceiling on the held-out set: %.4f\n", token_ceiling(held));
  bool ordered = tp >= ap && ap >= vp;
  bool ok = ordered && gain >= 0.02 && secs < 900.0;
  return {ok, std::string("TP >= AP >= VP ") + (ordered ? "holds" : "violated") + ", TP gain from DTL " +
                  fmt("%+.4f", gain) + " (>= 0.02), " + fmt("%.1f", secs) + " s (< 900 s)"};
}

///////////////////////////////////////////
// 4. metrics
///////////////////////////////////////////

double cell_iou(long a0, long a1, long b0, long b1)
{
  long inter = 0, uni = 0;
  for (long c = std::min(a0, b0); c < std::max(a1, b1); ++c) {
    bool in_a = c >= a0 && c < a1, in_b = c >= b0 && c < b1;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  if (uni == 0) return a0 == b0 && a1 == b1 ? 1.0 : 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Outcome metrics()
{
  Rng rng(41);
  std::vector<std::string> ids;
  std::vector<SecondsSpan> pred, gt;
  std::vector<double> want;
  for (int i = 0; i < 1000; ++i) {
    long a0 = rng.integer(0, 60), a1 = rng.integer(a0, 60), b0 = rng.integer(0, 60), b1 = rng.integer(b0, 60);
    ids.push_back("q" + std::to_string(i));
    pred.push_back({double(a0), double(a1)});
    gt.push_back({double(b0), double(b1)});
    want.push_back(cell_iou(a0, a1, b0, b1));
  }
  auto report = evaluate(ids, pred, gt);
  int mismatches = 0;
  double total = 0;
  for (int i = 0; i < 1000; ++i) {
    mismatches += temporal_iou(pred[i], gt[i]) != want[i];
    total += want[i];
  }
  mismatches += report.miou != total / 1000.0;
  for (double m : kDefaultThresholds) {
    int hits = 0;
    for (double w : want) hits += w >= m;
    mismatches += report.r_at_1.at(m) != hits / 1000.0;
  }

  const auto& fit = overfit_run();
  double base = random_pick_baseline(fit.data, 0).miou;
  double gap = fit.tp - base;
  bool ok = mismatches == 0 && gap >= 0.4;
  return {ok, std::to_string(mismatches) + " mismatches against brute force on 1000 pairs, random pick mIoU " +
                  fmt("%.3f", base) + " vs trained TP " + fmt("%.3f", fit.tp) + " (gap " + fmt("%.3f", gap) +
                  " >= 0.4)"};
}

///////////////////////////////////////////
// 5. loss algebra
///////////////////////////////////////////

struct LossFixture
{
  TimeSpanMap tsm;
  SpanContext ctx;
  Index vn, tn;
  M as, ae, vs, ve, ts, te;

  LossFixture(Rng& rng, Index vn_, Index n_sub, double scale) : vn(vn_), tn(2 + n_sub)
  {
    std::vector<SubtitleToken> e;
    double t = 0;
    for (Index k = 0; k < n_sub; ++k) {
      if (k == n_sub / 2) t += 2.0;
      e.push_back({static_cast<int>(2 + k), t, t + 1.0});
      t += 1.0;
    }
    tsm = TimeSpanMap(e);
    ctx = SpanContext{&tsm, 1.0, vn};
    as = rng.matrix(vn, 1, -scale, scale);
    ae = rng.matrix(vn, 1, -scale, scale);
    vs = rng.matrix(vn, 1, -scale, scale);
    ve = rng.matrix(vn, 1, -scale, scale);
    ts = rng.matrix(tn, 1, -scale, scale);
    te = rng.matrix(tn, 1, -scale, scale);
  }

  PredictorLogits<double> on(Tape<double>& tape) const
  {
    PredictorLogits<double> l;
    l.av = SpanLogits<double>{SpanDomain::VideoGrid, tape.leaf(as, true), tape.leaf(ae, true)};
    l.v = {SpanDomain::VideoGrid, tape.leaf(vs, true), tape.leaf(ve, true)};
    l.t = {SpanDomain::Token, tape.leaf(ts, true), tape.leaf(te, true)};
    return l;
  }

  SpanTargets targets(Index s, Index e) const
  {
    SpanTargets t;
    t.grid = {SpanDomain::VideoGrid, s, e, 0.0};
    t.token = convert_span(t.grid, tsm, 1.0, vn, SpanDomain::Token);
    return t;
  }
};

const SpanLogits<double>& pick(const PredictorLogits<double>& l, Predictor p)
{
  return p == Predictor::AV ? *l.av : p == Predictor::V ? l.v : l.t;
}

bool zero_grad(const Tensor<double>& t) { return t.grad().size() == 0 || t.grad().isZero(0.0); }

Outcome loss_algebra()
{
  Rng rng(51);
  double worst = 0;
  int lambda_bad = 0, disjoint = 0, disjoint_bad = 0, pseudo_bad = 0, perturbed = 0, changed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    LossFixture f(rng, rng.integer(4, 30), rng.integer(2, 12), rng.uniform(0.5, 4.0));
    Index s = rng.integer(0, f.vn - 1), e = rng.integer(s, f.vn - 1);

    Tape<double> tape;
    auto br = total_loss(f.on(tape), f.targets(s, e), f.ctx, true);
    auto rec = br.record();
    double sum = rec.l1_sum();
    for (const auto& p : br.pairs) {
      lambda_bad += !(p.weight.lambda >= 0.0 && p.weight.lambda <= 1.0);
      sum += p.weight.lambda * p.loss.item();
    }
    worst = std::max(worst, std::abs(rec.total - sum));
    if (br.pairs.size() != 6) ++lambda_bad;

    for (std::size_t k = 0; k < br.pairs.size(); ++k) {
      const auto [m, n] = kLossPairs[k];
      Tape<double> t2;
      auto l = f.on(t2);
      auto b2 = total_loss(l, f.targets(s, e), f.ctx, true);
      const auto& term = b2.pairs[k];
      t2.backward(scale(term.loss, term.weight.lambda));
      // the target side is a pseudo-label: never any gradient
      pseudo_bad += !zero_grad(pick(l, n).start) || !zero_grad(pick(l, n).end);
      if (term.weight.lambda == 0.0) {
        ++disjoint;
        for (Predictor p : {Predictor::AV, Predictor::V, Predictor::T})
          disjoint_bad += !zero_grad(pick(l, p).start) || !zero_grad(pick(l, p).end);
      }

      // a different pseudo-label moves the pair's value
      LossFixture moved = f;
      M& ms = n == Predictor::AV ? moved.as : n == Predictor::V ? moved.vs : moved.ts;
      M& me = n == Predictor::AV ? moved.ae : n == Predictor::V ? moved.ve : moved.te;
      ms = rng.matrix(ms.rows(), 1, -8, 8);
      me = rng.matrix(me.rows(), 1, -8, 8);
      Tape<double> t3;
      auto b3 = total_loss(moved.on(t3), f.targets(s, e), f.ctx, true);
      changed += b3.pairs[k].loss.item() != term.loss.item();
      ++perturbed;
    }
  }
  bool ok = worst <= 1e-6 && lambda_bad == 0 && disjoint > 0 && disjoint_bad == 0 && pseudo_bad == 0 &&
            changed * 10 > perturbed * 8;
  return {ok, "breakdown max |total - sum| " + fmt("%.2e", worst) + " (<= 1e-6), " + std::to_string(lambda_bad) +
                  " lambdas outside [0, 1], " + std::to_string(disjoint_bad) + " nonzero gradients over " +
                  std::to_string(disjoint) + " disjoint pairs, " + std::to_string(pseudo_bad) +
                  " pseudo-label gradients, perturbation moved " + std::to_string(changed) + "/" +
                  std::to_string(perturbed) + " pair losses"};
}

///////////////////////////////////////////
// 6. time-span map
///////////////////////////////////////////

TimeSpanMap random_map(Rng& rng, int n, bool zero_width)
{
  std::vector<SubtitleToken> e;
  double t = rng.uniform(0.0, 2.0);
  int idx = static_cast<int>(rng.integer(0, 5));
  for (int i = 0; i < n; ++i) {
    double w = zero_width && rng.integer(0, 9) == 0 ? 0.0 : rng.uniform(0.05, 2.0);
    e.push_back({idx, t, t + w});
    t += w + (rng.integer(0, 2) == 0 ? rng.uniform(0.0, 3.0) : 0.0);
    idx += static_cast<int>(rng.integer(1, 3));
  }
  return TimeSpanMap(e);
}

Outcome tsm_contract()
{
  Rng rng(61);
  int tokens = 0, trip_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto tsm = random_map(rng, static_cast<int>(rng.integer(1, 40)), false);
    for (const auto& e : tsm.entries()) {
      ++tokens;
      for (Endpoint ep : {Endpoint::Start, Endpoint::End})
        trip_bad += tsm.time_to_token(tsm.token_to_time(e.token_index, ep), ep) != e.token_index;
    }
  }
  int sweeps = 0, mono_bad = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto tsm = random_map(rng, static_cast<int>(rng.integer(1, 40)), true);
    double lo = -1.0, hi = tsm.entries().back().end_s + 1.0;
    for (Endpoint ep : {Endpoint::Start, Endpoint::End}) {
      int prev = tsm.first_token();
      for (int k = 0; k < 1000; ++k) {
        int got = tsm.time_to_token(lo + (hi - lo) * k / 999.0, ep);
        mono_bad += got < prev;
        prev = got;
      }
      ++sweeps;
    }
  }
  bool ok = trip_bad == 0 && mono_bad == 0;
  return {ok, std::to_string(trip_bad) + " round-trip failures over " + std::to_string(tokens) +
                  " tokens on 100 maps, " + std::to_string(mono_bad) + " monotonicity violations over " +
                  std::to_string(sweeps) + " sweeps of 1000 timestamps"};
}

///////////////////////////////////////////
// 7. determinism and resume
///////////////////////////////////////////

Outcome determinism()
{
  test::ScratchDir dir("acceptance");
  SynthConfig sc;
  sc.gap_fraction = 0.3;
  auto data = synth_generate(sc);
  auto cfg = small_run(2);

  Trainer<float> a(cfg, data), b(cfg, data);
  int step_bad = 0;
  for (int i = 0; i < 5; ++i) step_bad += !same_bits(a.step().loss.total, b.step().loss.total);
  auto& pa = a.model().parameters();
  auto& pb = b.model().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    step_bad += std::memcmp(pa.at(i).value.data(), pb.at(i).value.data(), sizeof(float) * pa.at(i).size()) != 0;

  const long n = 12, cut = 5;
  Trainer<float> full(cfg, data);
  std::vector<double> want;
  for (long i = 0; i < n; ++i) want.push_back(full.step().loss.total);
  Trainer<float> first(cfg, data);
  for (long i = 0; i < cut; ++i) first.step();
  first.save_state(dir / "state.avts");
  Trainer<float> second(cfg, data);
  second.load_state(dir / "state.avts");
  int resume_bad = 0;
  for (long i = cut; i < n; ++i) resume_bad += !same_bits(second.step().loss.total, want[i]);

  bool ok = step_bad == 0 && resume_bad == 0;
  return {ok, std::to_string(step_bad) + " differences in 5 repeated steps, " + std::to_string(resume_bad) +
                  " differences in " + std::to_string(n - cut) + " steps after resuming at step " +
                  std::to_string(cut)};
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"AVTSL acceptance run"};
  std::vector<int> only;
  app.add_option("--only", only, "Run just these criteria (1-7)")->check(CLI::Range(1, 7));
  CLI11_PARSE(app, argc, argv);
  std::set<int> selected(only.begin(), only.end());

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity}, {"overfit convergence", overfit},
      {"ablation ordering", ablation},            {"metric oracle equivalence", metrics},
      {"loss algebra", loss_algebra},             {"time-span map contract", tsm_contract},
      {"determinism and resume", determinism}};

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    }
    catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d %s: %s  %s\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 2 : 0;
}
