#include <gtest/gtest.h>

#include <map>

#include "bsattn/experiments.hpp"

using namespace bsattn;

// Default-sized toy runs, 200 steps each. Shared across the tests below
// because every run costs several seconds.

namespace {

struct Runs {
  std::map<std::string, std::vector<TrainReport>> by_schedule;  // one per seed
};

const std::vector<std::uint64_t> kSeeds{0, 1, 2};

const Runs& runs() {
  static const Runs r = [] {
    Runs out;
    for (const char* text : {"sa:200", "sa:150,llsa:50", "llsa:200"}) {
      for (auto seed : kSeeds) {
        SyntheticTask task;
        task.seed = seed;
        const auto res = run_schedule(make_splits(task), ToyModelConfig{}, parse_schedule(text),
                                      OptimizerConfig{}, seed);
        out.by_schedule[text].push_back(res.report);
      }
    }
    return out;
  }();
  return r;
}

}  // namespace

TEST(TrainToy, SaTrainingAtLeastHalvesSaLoss) {
  for (const auto& r : runs().by_schedule.at("sa:200")) {
    EXPECT_LE(2.0 * r.eval_sa, r.eval_initial_sa) << "seed " << r.seed;
  }
}

TEST(TrainToy, EveryScheduleImprovesItsMatchedMode) {
  for (const auto& r : runs().by_schedule.at("sa:200")) EXPECT_LT(r.eval_sa, r.eval_initial_sa);
  for (const auto& r : runs().by_schedule.at("sa:150,llsa:50")) EXPECT_LT(r.eval_llsa, r.eval_initial_llsa);
  for (const auto& r : runs().by_schedule.at("llsa:200")) EXPECT_LT(r.eval_llsa, r.eval_initial_llsa);
}

TEST(TrainToy, LlsaFineTuneBeatsSaOnlyUnderLlsaInference) {
  const auto& sa = runs().by_schedule.at("sa:200");
  const auto& ft = runs().by_schedule.at("sa:150,llsa:50");
  std::size_t wins = 0;
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    if (ft[i].eval_llsa < sa[i].eval_llsa) ++wins;
  }
  EXPECT_GE(2 * wins, kSeeds.size() + 1) << wins << " of " << kSeeds.size();
}

// Per inference mode, the model trained in that mode does no worse than the
// one trained in the other mode.
TEST(Evaluate, MatchedModeBeatsMismatched) {
  const auto& sa = runs().by_schedule.at("sa:200");
  const auto& llsa = runs().by_schedule.at("llsa:200");
  std::size_t sa_wins = 0, llsa_wins = 0;
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    if (sa[i].eval_sa <= llsa[i].eval_sa) ++sa_wins;
    if (llsa[i].eval_llsa <= sa[i].eval_llsa) ++llsa_wins;
  }
  EXPECT_GE(2 * sa_wins, kSeeds.size() + 1) << "sa inference: " << sa_wins;
  EXPECT_GE(2 * llsa_wins, kSeeds.size() + 1) << "llsa inference: " << llsa_wins;
}
