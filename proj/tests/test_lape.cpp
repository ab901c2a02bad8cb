#include "fixtures.hpp"
#include "foxp2/lape.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace foxp2;

namespace {

// One layer, three units: Hindi-only, uniform, dead.
std::array<std::vector<Mat>, kNumLangs> toy_acts() {
  std::array<std::vector<Mat>, kNumLangs> acts;
  for (int k = 0; k < kNumLangs; ++k) {
    Mat A = Mat::Zero(4, 3);
    if (k == 1) A.col(0).setConstant(1.0);
    A.col(1).setConstant(0.5);
    acts[k].push_back(A);
  }
  return acts;
}

}  // namespace

TEST(Lape, EntropyExtremes) {
  auto units = lape_units(toy_acts());
  ASSERT_EQ(units.size(), 3u);
  EXPECT_DOUBLE_EQ(units[0].entropy, 0.0);
  EXPECT_EQ(units[0].argmax, 1);
  EXPECT_NEAR(units[1].entropy, std::log(3.0), 1e-12);
  EXPECT_FALSE(units[2].live);

  auto mask = lape_detect(units, Lang::Hi, 0.1, {});
  ASSERT_EQ(mask.size(), 1u);
  EXPECT_EQ(mask[0].unit, 0);
  for (double tau : {0.5, 1.0, 2.0}) {
    for (const auto& u : lape_detect(units, Lang::Hi, tau, {})) EXPECT_NE(u.unit, 1);
  }
}

TEST(Lape, CountMatchedTakesLowestEntropy) {
  std::array<std::vector<Mat>, kNumLangs> acts;
  for (int k = 0; k < kNumLangs; ++k) acts[k].push_back(Mat::Zero(10, 4));
  // unit u fires on all Hindi rows and on u English rows
  for (int u = 0; u < 4; ++u) {
    acts[1][0].col(u).setConstant(1.0);
    for (int r = 0; r < u; ++r) acts[0][0](r, u) = 1.0;
  }
  auto units = lape_units(acts);
  double tau = -1;
  auto two = lape_detect_count(units, Lang::Hi, 2, {}, &tau);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].unit, 0);
  EXPECT_EQ(two[1].unit, 1);
  EXPECT_DOUBLE_EQ(tau, units[1].entropy);
  EXPECT_TRUE(lape_detect_count(units, Lang::Hi, 2, {2}).empty());
}

TEST(Lape, ZeroEtaAndEqualMeansLeaveActivationsAlone) {
  const Model& m = fixtures::planted();
  std::vector<LapeUnit> mask(1);
  mask[0].layer = 4;
  mask[0].unit = 0;
  std::vector<Vec> zero_shift(m.L(), Vec::Zero(m.hidden()));
  std::vector<int> prompt = {1, 2, 3, 4};
  Vec base = m.forward(prompt, 1, nullptr);
  Hooks h0 = lape_hooks(mask, LapeShift::UnitPush, 0.0, zero_shift);
  Hooks h1 = lape_hooks(mask, LapeShift::MeanShift, 3.0, zero_shift);
  EXPECT_EQ(m.forward(prompt, 1, &h0), base);
  EXPECT_EQ(m.forward(prompt, 1, &h1), base);
}

TEST(Lape, CollectFfnSerialMatchesParallel) {
  const Model& m = fixtures::planted();
  std::vector<std::vector<int>> prompts;
  for (const auto& u : fixtures::corpus().units) {
    prompts.push_back(u.weak[1]);
    if (prompts.size() == 20) break;
  }
  auto s = collect_ffn(m, prompts, Exec::Serial);
  auto p = collect_ffn(m, prompts, Exec::Parallel);
  for (int l = 0; l < m.L(); ++l) EXPECT_EQ(s[l], p[l]);
}
