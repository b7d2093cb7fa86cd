// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only
// when every criterion holds within its runtime budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "bsattn/banded.hpp"
#include "bsattn/bench.hpp"
#include "bsattn/dense.hpp"
#include "bsattn/experiments.hpp"
#include "bsattn/streaming.hpp"

using namespace bsattn;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

bool run(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) o.require(false, "runtime " + format_double(secs) + " s over budget");
  std::printf("%s criterion %d: %s (%.1f s, budget %.0f s)%s%s\n", o.pass ? "PASS" : "FAIL", id, title, secs, budget_s,
              o.detail.empty() ? "" : " -- ", o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

Outcome sa_maa_oracle() {
  Outcome o;
  const auto rows = sa_maa_grid(3, 0, false);
  double fwd = 0, bwd = 0;
  std::size_t bad = 0;
  for (const auto& r : rows) {
    fwd = std::max(fwd, r.forward_err);
    bwd = std::max(bwd, r.backward_err);
    bad += !(r.forward_err <= 1e-10 && r.backward_err <= 1e-8);
  }
  o.require(rows.size() == 4 * 3 * 4 * 4 * 3, "grid has " + std::to_string(rows.size()) + " cases");
  o.require(bad == 0, std::to_string(bad) + " cases out of tolerance");
  o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(rows.size()) + " cases, max forward " +
              format_double(fwd) + ", max backward " + format_double(bwd);
  return o;
}

Outcome gradient_oracle() {
  Outcome o;
  const auto rows = gradcheck_suite(20, 1);
  std::size_t sa = 0, llsa = 0;
  double worst = 0;
  for (const auto& r : rows) {
    if (r.kernel != "sa" && r.kernel != "llsa") continue;
    (r.kernel == "sa" ? sa : llsa) += 1;
    worst = std::max(worst, r.max_rel_err);
    o.require(r.max_rel_err <= 1e-5, r.kernel + " case " + std::to_string(r.case_index) + " at " + r.worst);
  }
  o.require(sa >= 20 && llsa >= 20, "too few instances");
  o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(sa) + " sa + " + std::to_string(llsa) +
              " llsa instances, worst relative error " + format_double(worst);
  return o;
}

Outcome duplication_oracle() {
  Outcome o;
  const auto rows = llsa_duplication_grid(0);
  double worst = 0;
  std::size_t max_a = 0, max_b = 0, max_n = 0;
  for (const auto& r : rows) {
    worst = std::max(worst, r.forward_err);
    max_a = std::max(max_a, r.look_ahead);
    max_b = std::max(max_b, r.look_back);
    max_n = std::max(max_n, r.n_frames);
    o.require(r.forward_err <= 1e-12, "channel " + std::to_string(r.channel) + " off by " + format_double(r.forward_err));
  }
  o.require(max_a == 4 && max_b == 4 && max_n == 32, "grid does not reach A = B = 4, N = 32");
  o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(rows.size()) + " channel checks, worst " +
              format_double(worst);
  return o;
}

// First output time that moves when frame p changes, with all earlier
// outputs required to be bit-identical.
std::optional<std::size_t> horizon(const EncoderStack& stack, const AttentionMode& mode, std::size_t n, std::size_t p) {
  FrameSequence x(n, stack.model_dim());
  Rng rng(p);
  rng.fill_normal(x.values(), 1.0);
  FrameSequence y = x;
  for (double& v : y.row(p)) v += 1e-3 * rng.normal();
  const auto a = stack_forward(stack, x, mode).output;
  const auto b = stack_forward(stack, y, mode).output;
  for (std::size_t t = 0; t < n; ++t)
    if (!std::ranges::equal(a.row(t), b.row(t))) return t;
  return std::nullopt;
}

Outcome latency_and_causality() {
  Outcome o;
  struct Row { AttentionKind kind; std::size_t a; const char* want; };
  for (const Row& r : {Row{AttentionKind::sa, 8, "1.92"}, Row{AttentionKind::llsa, 8, "0.16"},
                       Row{AttentionKind::sa, 16, "3.84"}, Row{AttentionKind::llsa, 16, "0.32"}}) {
    const auto rep = latency_report(r.kind, r.a, 12, 0.020);
    const std::string got = rep.seconds ? format_double(*rep.seconds) : "none";
    o.require(got == r.want, std::string(to_string(r.kind)) + " A=" + std::to_string(r.a) + " gives " + got);
  }
  const std::size_t layers = 4, n = 48, p = 40;
  for (std::size_t a : {1u, 2u, 3u}) {
    const auto stack = EncoderStack::random(layers, 8, 2, 16, 100 + a);
    const BandSpec band{4, a};
    const auto sa = horizon(stack, AttentionMode::streaming(band), n, p);
    o.require(sa && *sa == p - layers * a, "sa horizon for A=" + std::to_string(a));
    const auto ll = horizon(stack, AttentionMode::low_latency(band), n, p);
    o.require(ll && *ll == p - a, "llsa horizon for A=" + std::to_string(a));
    o.require(causality_probe(stack, AttentionMode::streaming(band), n, p) == p - layers * a, "sa probe");
    o.require(causality_probe(stack, AttentionMode::low_latency(band), n, p) == p - a, "llsa probe");
  }
  if (o.pass) o.detail = "1.92 / 0.16 / 3.84 / 0.32 s; horizons L*A and A on 4-layer stacks";
  return o;
}

Outcome memory_accounting() {
  Outcome o;
  const BandSpec w120 = split_window(120);
  o.require(sa_score_elements(6000, w120) == 720000, "banded elements for window 120");
  o.require(maa_score_elements(6000) == 36000000, "dense elements");
  MemoryGrid grid;
  grid.windows = default_windows();
  const auto recs = run_memory_grid(grid);
  for (std::size_t heads : grid.heads) {
    std::vector<double> x, y;
    for (const auto& r : recs) {
      if (r.repeat != "mean" || r.n_heads != heads) continue;
      o.require(r.peak_score_bytes == r.score_elements * 4, "measured bytes disagree at " + r.mode);
      if (r.mode == "sa") {
        x.push_back(static_cast<double>(r.window));
        y.push_back(static_cast<double>(r.peak_score_bytes));
      } else {
        o.require(r.peak_score_bytes == 1000u * 1000u * 4u, "maa not constant at N^2");
      }
    }
    const double r2 = linear_fit_r2(x, y);
    o.require(x.size() == 49 && r2 >= 0.999, "sa fit R^2 " + format_double(r2));
    o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(heads) + " heads: R^2 " + format_double(r2);
  }
  o.detail = "720000 vs 36000000; " + o.detail;
  return o;
}

Outcome streaming_equivalence() {
  Outcome o;
  double worst = 0;
  std::size_t cases = 0;
  for (auto kind : {AttentionKind::aa, AttentionKind::maa, AttentionKind::sa, AttentionKind::llsa})
    for (std::size_t layers : {1u, 2u, 3u})
      for (std::size_t a : {0u, 1u, 2u, 3u})
        for (std::size_t b : {0u, 1u, 4u})
          for (std::size_t n : {1u, 2u, 5u, 17u}) {
            if (kind == AttentionKind::aa && (a || b)) continue;
            const auto stack = EncoderStack::random(layers, 8, 2, 16, 7 * layers + a);
            const AttentionMode mode = kind == AttentionKind::aa ? AttentionMode::acausal() : AttentionMode{kind, BandSpec{b, a}};
            FrameSequence x(n, 8);
            Rng rng(n + 10 * b);
            rng.fill_normal(x.values(), 1.0);
            const auto offline = stack_forward(stack, x, mode).output;
            auto st = stream_init(stack, mode);
            std::vector<RealVector> got;
            for (std::size_t t = 0; t < n; ++t)
              if (auto y = st.push(x.row(t))) got.push_back(*y);
            for (auto& y : st.flush()) got.push_back(y);
            ++cases;
            if (got.size() != n) {
              o.require(false, mode.describe() + " emitted " + std::to_string(got.size()) + " of " + std::to_string(n));
              continue;
            }
            for (std::size_t t = 0; t < n; ++t)
              for (std::size_t i = 0; i < 8; ++i) worst = std::max(worst, std::abs(got[t][i] - offline(t, i)));
          }
  o.require(worst <= 1e-10, "max difference " + format_double(worst));
  o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(cases) + " configurations, max difference " +
              format_double(worst);
  return o;
}

Outcome schedule_trend() {
  Outcome o;
  const BenchConfig defaults;
  const std::size_t total = defaults.total_steps;
  std::vector<std::size_t> grid;
  for (std::size_t pct : defaults.llsa_grid) grid.push_back(total * pct / 100);
  const ToyModelConfig config;
  std::vector<AblationRow> rows;
  for (std::size_t s = 0; s < defaults.seeds; ++s) {
    SyntheticTask task;
    task.seed = s;
    const auto part = schedule_ablation(make_splits(task), config, grid, total, OptimizerConfig{}, s);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const auto sum = summarize_ablation(rows);
  const auto at = [&](std::size_t steps) {
    for (std::size_t i = 0; i < sum.llsa_steps.size(); ++i)
      if (sum.llsa_steps[i] == steps) return sum.median_llsa[i];
    return std::nan("");
  };
  const double sa_only = at(0), mixed = at(total / 4), llsa_only = at(total);
  o.require(defaults.seeds >= 3, "fewer than 3 seeds");
  o.require(llsa_only <= mixed && mixed <= sa_only, "ordering violated");
  o.require(sum.inversions <= 1, std::to_string(sum.inversions) + " inversions");
  std::string curve;
  for (std::size_t i = 0; i < sum.llsa_steps.size(); ++i)
    curve += (i ? ", " : "") + std::to_string(sum.llsa_steps[i]) + ":" + format_double(sum.median_llsa[i]);
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("median llsa-inference loss by llsa steps {") + curve + "}";
  return o;
}

}  // namespace

int main() {
  bool ok = true;
  ok &= run(1, "SA equals MAA", 30, sa_maa_oracle);
  ok &= run(2, "gradients match finite differences", 60, gradient_oracle);
  ok &= run(3, "LLSA duplication oracle", 10, duplication_oracle);
  ok &= run(4, "latency arithmetic and causality horizons", 30, latency_and_causality);
  ok &= run(5, "score memory accounting", 300, memory_accounting);
  ok &= run(6, "streaming equals offline", 60, streaming_equivalence);
  ok &= run(7, "schedule trend at toy scale", 900, schedule_trend);
  return ok ? 0 : 1;
}
