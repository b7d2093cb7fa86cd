#include <gtest/gtest.h>

#include <sstream>

#include "bsattn/bench.hpp"
#include "bsattn/errors.hpp"

using namespace bsattn;

TEST(Bench, SplitWindow) {
  EXPECT_EQ(split_window(1), (BandSpec{0, 0}));
  EXPECT_EQ(split_window(10), (BandSpec{5, 4}));
  EXPECT_EQ(split_window(121), (BandSpec{60, 60}));
  for (std::size_t w = 1; w < 500; ++w) EXPECT_EQ(split_window(w).receptive_field(), w);
  EXPECT_THROW(split_window(0), ConfigError);
  const auto ws = default_windows();
  EXPECT_EQ(ws.size(), 49u);
  EXPECT_EQ(ws.front(), 10u);
  EXPECT_EQ(ws.back(), 490u);
}

TEST(Bench, LinearFit) {
  EXPECT_DOUBLE_EQ(linear_fit_r2({1, 2, 3, 4}, {3, 5, 7, 9}), 1.0);
  EXPECT_DOUBLE_EQ(linear_fit_r2({1, 2, 3}, {4, 4, 4}), 1.0);
  EXPECT_LT(linear_fit_r2({1, 2, 3, 4}, {1, -1, 1, -1}), 0.5);
  EXPECT_THROW(linear_fit_r2({1}, {1}), ArgumentError);
}

TEST(Bench, FormatDoubleIsShortest) {
  EXPECT_EQ(format_double(1.92), "1.92");
  EXPECT_EQ(format_double(96 * 0.02), "1.92");
  EXPECT_EQ(format_double(8 * 0.02), "0.16");
  EXPECT_EQ(format_double(0.0), "0");
}

TEST(Bench, EquivalenceGridPassesAndCatchesFault) {
  const auto rows = sa_maa_grid(1, 0, false);
  EXPECT_EQ(rows.size(), 4u * 3 * 4 * 4);
  for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.n_frames << " " << r.dim;
  const auto faulty = sa_maa_grid(1, 0, true);
  EXPECT_TRUE(std::ranges::any_of(faulty, [](const auto& r) { return !r.pass; }));
}

TEST(Bench, DuplicationGridPasses) {
  for (const auto& r : llsa_duplication_grid(0)) EXPECT_TRUE(r.pass);
}

TEST(Bench, SmallMemoryGrid) {
  MemoryGrid g;
  g.n_frames = 50;
  g.d_k = 4;
  g.heads = {2};
  g.windows = {5, 11, 21};
  g.repeats = 1;
  const auto recs = run_memory_grid(g);
  ASSERT_FALSE(recs.empty());
  for (const auto& r : recs) {
    const std::uint64_t want = r.mode == "sa" ? 50u * r.window : 2500u;
    EXPECT_EQ(r.score_elements, want);
    EXPECT_EQ(r.peak_score_bytes, want * 4) << r.mode << " " << r.window;
  }
}

TEST(Bench, LatencyCommandPrintsTable) {
  BenchConfig cfg;
  std::ostringstream csv, diag;
  EXPECT_EQ(cmd_latency(cfg, csv, diag), 0);
  const std::string s = csv.str();
  for (const char* v : {"1.92", "0.16", "3.84", "0.32"}) EXPECT_NE(s.find(v), std::string::npos) << v;
}

TEST(Bench, StreamDemoMatchesOffline) {
  for (const char* mode : {"sa", "llsa", "aa"}) {
    BenchConfig cfg;
    cfg.mode = mode;
    cfg.n_frames = 20;
    std::ostringstream csv, diag;
    EXPECT_EQ(cmd_stream_demo(cfg, csv, diag), 0) << mode << diag.str();
  }
}

TEST(Bench, GradcheckSuiteSmall) {
  const auto rows = gradcheck_suite(3, 500);
  EXPECT_EQ(rows.size(), 12u);
  for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.kernel << " " << r.worst << " " << r.max_rel_err;
}

TEST(Bench, EquivalenceWindowRow) {
  BenchConfig cfg;
  cfg.n_frames = 6000;
  cfg.window = 120;
  std::ostringstream csv, diag;
  EXPECT_EQ(cmd_equivalence(cfg, csv, diag), 0);
  EXPECT_NE(csv.str().find("720000,36000000"), std::string::npos) << csv.str();
}

TEST(Bench, TrainToyAndAblationRowCounts) {
  BenchConfig cfg;
  cfg.total_steps = 8;
  cfg.seeds = 2;
  cfg.schedule = "sa:3,llsa:2";
  std::ostringstream csv, diag;
  EXPECT_EQ(cmd_train_toy(cfg, csv, diag), 0);
  EXPECT_EQ(std::ranges::count(csv.str(), '\n'), 1 + 5);
  std::ostringstream csv2, diag2;
  EXPECT_EQ(cmd_ablation(cfg, csv2, diag2), 0);
  EXPECT_EQ(std::ranges::count(csv2.str(), '\n'), 1 + 4 * 2);
  std::ostringstream again, diag3;
  cmd_ablation(cfg, again, diag3);
  EXPECT_EQ(again.str(), csv2.str());
}
