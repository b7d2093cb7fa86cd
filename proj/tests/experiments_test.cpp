#include <gtest/gtest.h>

#include <complex>
#include <numbers>
#include <set>
#include <sstream>

#include "bsattn/errors.hpp"
#include "bsattn/experiments.hpp"
#include "test_util.hpp"

using namespace bsattn;
using namespace bsattn::testing;

namespace {

SyntheticTask small_task(std::uint64_t seed = 3) {
  SyntheticTask t;
  t.seed = seed;
  t.n_sequences = 16;
  t.n_frames = 24;
  t.dim = 4;
  return t;
}

ToyModelConfig small_config() {
  ToyModelConfig c;
  c.feature_dim = 4;
  c.model_dim = 8;
  c.n_heads = 2;
  c.ffn_dim = 8;
  c.band = {3, 1};
  return c;
}

}  // namespace

TEST(SyntheticTask, NoMaskGivesZeroLoss) {
  auto task = small_task();
  task.mask_prob = 0.0;
  const auto ds = gen_synthetic_task(task);
  const auto model = ToyModel::init(small_config(), 1);
  for (const auto& s : ds.sequences) {
    EXPECT_EQ(s.n_masked(), 0u);
    const auto mode = small_config().mode(AttentionKind::sa);
    EXPECT_EQ(masked_loss(toy_forward(model, s, mode), s), 0.0);
    auto grad = ToyModel::zeros_like(model);
    EXPECT_EQ(toy_loss_and_grad(model, s, mode, &grad), 0.0);
  }
}

TEST(SyntheticTask, SameSeedIsBitIdentical) {
  const auto a = gen_synthetic_task(small_task(9));
  const auto b = gen_synthetic_task(small_task(9));
  const auto c = gen_synthetic_task(small_task(10));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::ranges::equal(a.sequences[i].noisy.values(), b.sequences[i].noisy.values()));
    EXPECT_EQ(a.sequences[i].masked, b.sequences[i].masked);
  }
  EXPECT_FALSE(std::ranges::equal(a.sequences[0].noisy.values(), c.sequences[0].noisy.values()));
}

// Independent DFT: the clean signal's spectrum is concentrated exactly at
// the seeded bins.
TEST(SyntheticTask, SpectrumPeaksAtSeededBins) {
  auto task = small_task(4);
  task.n_components = 3;
  task.max_bin = 10;
  const auto ds = gen_synthetic_task(task);
  const std::size_t n = task.n_frames;
  for (const auto& s : ds.sequences) {
    const std::set<std::size_t> seeded(s.bins.begin(), s.bins.end());
    for (std::size_t i = 0; i < task.dim; ++i) {
      for (std::size_t k = 0; k <= n / 2; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t t = 0; t < n; ++t)
          acc += s.clean(t, i) * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t) / double(n));
        const double mag = std::abs(acc);
        if (seeded.count(k)) {
          // Each component contributes n * amp / 2 with amp >= 0.5; same-bin
          // components can partly cancel, so only require "clearly present"
          // when the bin was drawn once.
          if (std::ranges::count(s.bins, k) == 1) { EXPECT_GE(mag, n * 0.5 / 2 - 1e-9); }
        } else {
          EXPECT_LT(mag, 1e-9) << "bin " << k;
        }
      }
    }
  }
}

TEST(SyntheticTask, MasksStayInBounds) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    SyntheticTask t;
    t.seed = trial;
    t.n_sequences = 4;
    t.n_frames = 4 + rng.below(40);
    t.max_bin = 1 + rng.below(t.n_frames / 2);
    t.mask_prob = rng.uniform();
    t.mask_span = 1 + rng.below(10);
    const auto ds = gen_synthetic_task(t);
    for (const auto& s : ds.sequences) {
      EXPECT_EQ(s.masked.size(), t.n_frames);
      EXPECT_EQ(s.noisy.n_frames(), t.n_frames);
      EXPECT_LE(s.n_masked(), t.n_frames);
    }
  }
}

TEST(SyntheticTask, Validation) {
  auto t = small_task();
  t.mask_prob = 1.5;
  EXPECT_THROW(gen_synthetic_task(t), ConfigError);
  t = small_task();
  t.max_bin = t.n_frames;
  EXPECT_THROW(gen_synthetic_task(t), ConfigError);
  t = small_task();
  t.dim = 0;
  EXPECT_THROW(gen_synthetic_task(t), ConfigError);
}

TEST(Schedule, ParseAndLabel) {
  const auto s = parse_schedule("sa:150,llsa:50");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].kind, AttentionKind::sa);
  EXPECT_EQ(s[1].steps, 50u);
  EXPECT_EQ(schedule_label(s), "sa150_llsa50");
  EXPECT_EQ(total_steps(s), 200u);
  EXPECT_THROW(parse_schedule(""), ConfigError);
  EXPECT_THROW(parse_schedule("sa"), ConfigError);
  EXPECT_THROW(parse_schedule("sa:-4"), ConfigError);
  EXPECT_THROW(parse_schedule("sa:4x"), ConfigError);
  EXPECT_THROW(parse_schedule("conv:4"), ConfigError);
}

TEST(Schedule, AblationSplits) {
  const auto s = ablation_schedule(50, 200);
  EXPECT_EQ(schedule_label(s), "sa150_llsa50");
  EXPECT_EQ(schedule_label(ablation_schedule(0, 200)), "sa200");
  EXPECT_EQ(schedule_label(ablation_schedule(200, 200)), "llsa200");
  EXPECT_THROW(ablation_schedule(201, 200), ConfigError);
}

TEST(Train, RejectsBadSchedules) {
  const auto ds = gen_synthetic_task(small_task());
  const auto m = ToyModel::init(small_config(), 1);
  const OptimizerConfig opt;
  EXPECT_THROW(train(ds, m, {}, opt, 1), ConfigError);
  EXPECT_THROW(train(ds, m, {{AttentionKind::sa, 0}}, opt, 1), ConfigError);
  EXPECT_THROW(train(ds, m, {{AttentionKind::aa, 3}}, opt, 1), ConfigError);
}

TEST(Train, DivergenceCarriesStep) {
  const auto ds = gen_synthetic_task(small_task());
  auto m = ToyModel::init(small_config(), 1);
  m.b_out[0] = 1e300;  // squared error overflows on the first step
  try {
    train(ds, m, {{AttentionKind::sa, 5}}, OptimizerConfig{}, 1);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 1u);
  }
}

TEST(Train, DeterministicPerSeed) {
  const auto ds = gen_synthetic_task(small_task());
  const auto m = ToyModel::init(small_config(), 2);
  const Schedule s{{AttentionKind::sa, 6}, {AttentionKind::llsa, 4}};
  const auto a = train(ds, m, s, OptimizerConfig{}, 7);
  const auto b = train(ds, m, s, OptimizerConfig{}, 7);
  ASSERT_EQ(a.report.losses.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.report.losses[i].loss, b.report.losses[i].loss);
    EXPECT_EQ(a.report.losses[i].step, i + 1);
    EXPECT_TRUE(std::isfinite(a.report.losses[i].loss));
  }
  EXPECT_EQ(a.report.losses[5].mode, AttentionKind::sa);
  EXPECT_EQ(a.report.losses[6].mode, AttentionKind::llsa);
  EXPECT_EQ(a.model.w_out.data, b.model.w_out.data);
}

TEST(ToyModel, GradientMatchesFiniteDifferences) {
  const auto ds = gen_synthetic_task(small_task());
  const auto& seq = *std::ranges::find_if(ds.sequences, [](const auto& s) { return s.n_masked() > 0; });
  for (auto kind : {AttentionKind::sa, AttentionKind::llsa}) {
    ToyModel m = ToyModel::init(small_config(), 3);
    const auto mode = m.config.mode(kind);
    ToyModel g = ToyModel::zeros_like(m);
    toy_loss_and_grad(m, seq, mode, &g);
    std::vector<std::span<double>> ps, gs;
    m.for_each_parameter([&](std::span<double> v) { ps.push_back(v); });
    g.for_each_parameter([&](std::span<double> v) { gs.push_back(v); });
    // Spot-check every tensor at a few coordinates.
    for (std::size_t k = 0; k < ps.size(); ++k)
      for (std::size_t i = 0; i < ps[k].size(); i += 1 + ps[k].size() / 3) {
        const double orig = ps[k][i], h = 1e-5;
        ps[k][i] = orig + h;
        const double up = masked_loss(toy_forward(m, seq, mode), seq);
        ps[k][i] = orig - h;
        const double down = masked_loss(toy_forward(m, seq, mode), seq);
        ps[k][i] = orig;
        EXPECT_NEAR(gs[k][i], (up - down) / (2 * h), 1e-6) << "tensor " << k << " index " << i;
      }
  }
}

TEST(ToyModel, TensorRoundTrip) {
  const auto m = ToyModel::init(small_config(), 4);
  const auto back = ToyModel::from_tensors(m.tensors());
  const auto ds = gen_synthetic_task(small_task());
  const auto mode = m.config.mode(AttentionKind::llsa);
  EXPECT_EQ(max_abs_diff(toy_forward(m, ds.sequences[0], mode), toy_forward(back, ds.sequences[0], mode)), 0.0);
}

TEST(Evaluate, ErrorsAndUntrainedAgreement) {
  const auto model = ToyModel::init(small_config(), 5);
  const auto ds = gen_synthetic_task(small_task());
  SyntheticDataset empty{small_task(), {}};
  EXPECT_THROW(evaluate(model, empty, model.config.mode(AttentionKind::sa)), ArgumentError);
  EXPECT_THROW(evaluate(model, ds, AttentionMode::low_latency({2, 2})), ConfigError);

  // One layer: LLSA's designated channel is exactly the SA window.
  auto one = small_config();
  one.n_layers = 1;
  const auto m1 = ToyModel::init(one, 6);
  EXPECT_NEAR(evaluate(m1, ds, one.mode(AttentionKind::sa)), evaluate(m1, ds, one.mode(AttentionKind::llsa)), 1e-12);
}

TEST(Ablation, SummaryCountsInversions) {
  std::vector<AblationRow> rows;
  const double losses[3][3] = {{1.0, 0.9, 0.95}, {1.1, 0.8, 0.7}, {0.9, 0.85, 0.9}};
  for (std::size_t seed = 0; seed < 3; ++seed)
    for (std::size_t g = 0; g < 3; ++g) rows.push_back({g * 10, "x", seed, losses[seed][g], 0.0});
  const auto s = summarize_ablation(rows);
  EXPECT_EQ(s.llsa_steps, (std::vector<std::size_t>{0, 10, 20}));
  EXPECT_EQ(s.median_llsa, (std::vector<double>{1.0, 0.85, 0.9}));
  EXPECT_EQ(s.inversions, 1u);
  EXPECT_EQ(median({3.0, 1.0, 2.0, 10.0}), 2.5);
}

TEST(Ablation, SinglePointSingleRowAndCsv) {
  auto task = small_task();
  const auto splits = make_splits(task, 4);
  const auto rows = schedule_ablation(splits, small_config(), {2}, 3, OptimizerConfig{}, 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].schedule, "sa1_llsa2");
  std::ostringstream csv;
  write_loss_csv_header(csv);
  write_ablation_csv(csv, rows, 3);
  EXPECT_EQ(csv.str().rfind("schedule,seed,step,mode,loss\nsa1_llsa2,1,3,eval_llsa,", 0), 0u);
  const auto again = schedule_ablation(splits, small_config(), {2}, 3, OptimizerConfig{}, 1);
  EXPECT_EQ(again[0].eval_llsa, rows[0].eval_llsa);
}
