#include "foxp2/model.hpp"
#include "foxp2/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace foxp2;

namespace {

const Model& planted() {
  static const Model m = Model::planted(PlantedConfig{});
  return m;
}

std::vector<int> random_prompt(std::mt19937_64& rng, const Vocab& v, int len) {
  std::uniform_int_distribution<int> pick(0, v.shared_begin() + v.n_shared - 1);
  std::vector<int> p;
  for (int i = 0; i < len; ++i) p.push_back(pick(rng));
  return p;
}

double block_mass(const Vec& p, const Vocab& v, Lang l) {
  double s = 0;
  for (int t : v.block_tokens(l)) s += p[t];
  return s;
}

}  // namespace

TEST(Model, NullEditHooksLeaveLogitsUnchanged) {
  const Model& m = planted();
  std::mt19937_64 rng(1);
  Hooks h;
  h.residual = [](int, int, Vec& x) { x += Vec::Zero(x.size()); };
  h.ffn = [](int, int, Vec& a) { a += Vec::Zero(a.size()); };
  h.logits = [](int, Vec& z) { z += Vec::Zero(z.size()); };
  for (int i = 0; i < 20; ++i) {
    auto p = random_prompt(rng, m.vocab(), 6);
    EXPECT_LE((m.forward(p, 1, &h) - m.forward(p, 1, nullptr)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Model, SameSeedSameWeightsDifferentSeedDifferentEmbeddings) {
  PlantedConfig c;
  Model a = Model::planted(c), b = Model::planted(c);
  EXPECT_EQ(a.weights_sha256(), b.weights_sha256());
  c.seed = 8;
  Model d = Model::planted(c);
  EXPECT_GT((a.embedding() - d.embedding()).norm(), 0.0);
}

TEST(Model, ContextOverflowThrows) {
  const Model& m = planted();
  std::vector<int> p(m.config().max_context + 1, 0);
  EXPECT_THROW(m.forward(p, 1, nullptr), ContextOverflow);
  p.pop_back();
  EXPECT_NO_THROW(m.forward(p, 1, nullptr));
}

TEST(Model, TeacherForcedReturnsOneDistributionPerStep) {
  const Model& m = planted();
  std::vector<int> prompt = {1, 2, 3};
  std::vector<int> prefix = {4, 5, 6, 7, 8, 9, 10, 11};
  auto out = teacher_forced_logits(m, prompt, prefix, 8, nullptr);
  EXPECT_EQ(out.size(), 8u);
  auto one = teacher_forced_logits(m, prompt, prefix, 1, nullptr);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], m.forward(prompt, 1, nullptr));
  EXPECT_EQ(greedy_decode(m, prompt, 5, nullptr), greedy_decode(m, prompt, 5, nullptr));
}

TEST(Model, CuePromptFavoursTargetBlock) {
  const Model& m = planted();
  for (Lang l : {Lang::Hi, Lang::Es}) {
    Vec p = softmax(m.forward({m.vocab().directive(l)}, 1, nullptr));
    EXPECT_GT(block_mass(p, m.vocab(), l), block_mass(p, m.vocab(), Lang::En)) << lang_name(l);
  }
}

TEST(Model, ZeroCueGainDisablesTheCircuit) {
  PlantedConfig c;
  c.cue_gain = 0.0;
  Model m = Model::planted(c);
  const Vocab& v = m.vocab();
  std::vector<int> en = {v.word(Lang::En, 3), v.word(Lang::En, 17), v.word(Lang::En, 42)};
  std::vector<int> hi = {v.word(Lang::Hi, 3), v.word(Lang::Hi, 17), v.word(Lang::Hi, 42)};
  // with no cue, Hindi and English renderings embed identically
  EXPECT_LE((m.forward(en, 1, nullptr) - m.forward(hi, 1, nullptr)).cwiseAbs().maxCoeff(), 1e-12);
}

// Oracle: inject eps * v* after `layer` and read the change in a Hindi word logit.
TEST(Model, ChannelGainMatchesPropagation) {
  const Model& m = planted();
  const auto& gt = m.truth();
  const Vocab& v = m.vocab();
  std::vector<int> prompt = {v.word(Lang::En, 5), v.word(Lang::En, 6), v.word(Lang::En, 7)};
  std::vector<Vec> res;
  m.forward(prompt, 1, nullptr, &res);
  const int th = v.word(Lang::Hi, 5), te = v.word(Lang::En, 5);
  const double eps = 1e-3;
  for (int l = 1; l <= m.L(); ++l) {
    Vec base = m.forward_from(l, res[l], 1, nullptr);
    Vec up = m.forward_from(l, res[l] + eps * gt.hi.v_star, 1, nullptr);
    double d_hi = (up[th] - base[th]) / eps;
    double d_en = (up[te] - base[te]) / eps;
    double want = 0.0;
    if (l >= gt.window_lo && l <= gt.window_hi)
      want = gt.readout * gt.commit_gain * std::pow(gt.amp, gt.window_hi - l);
    else if (l > gt.window_hi)
      want = gt.readout;
    EXPECT_NEAR(d_hi, want, 1e-8) << "layer " << l;
    EXPECT_NEAR(gt.channel_gain(l), want, 1e-12);
    EXPECT_NEAR(d_en, 0.0, 1e-8);
  }
}

TEST(Model, PlantedChannelUnitsReadVStar) {
  const Model& m = planted();
  const auto& gt = m.truth();
  for (int l = gt.window_lo + 1; l <= gt.window_hi + 1; ++l) {
    const auto& units = gt.hi.channel_units[l - 1];
    ASSERT_FALSE(units.empty());
    EXPECT_NEAR(std::abs(m.layer(l).W_in.row(units[0]).dot(gt.hi.v_star.transpose())), 1.0, 1e-12);
  }
  EXPECT_TRUE(gt.hi.channel_units[0].empty());
}

TEST(Vocab, BlocksAreContiguous) {
  Vocab v;
  EXPECT_EQ(v.block_tokens(Lang::En).size(), 100u);
  EXPECT_EQ(v.block_tokens(Lang::Hi).front(), 100);
  EXPECT_EQ(v.shared_begin(), 200);
  EXPECT_EQ(v.block_of(249), Vocab::Block::Shared);
  EXPECT_EQ(v.word_index(v.word(Lang::Es, 12)), 12);
  EXPECT_EQ(v.word_index(v.entity(0)), -1);
  EXPECT_THROW(v.directive(Lang::En), ConfigError);
}
