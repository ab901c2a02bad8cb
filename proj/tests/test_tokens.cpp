#include "foxp2/corpus.hpp"
#include "foxp2/model.hpp"
#include "foxp2/tokens.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace foxp2;

namespace {

struct Toy {
  std::vector<std::string> strs;
  FreqTable freq;
  void add(const std::string& s, long en, long hi, long es) {
    strs.push_back(s);
    freq.push_back({en, hi, es});
  }
  int find(const std::string& s) const {
    return static_cast<int>(std::find(strs.begin(), strs.end(), s) - strs.begin());
  }
};

Toy toy() {
  Toy t;
  t.add("लेकिन", 0, 400, 0);
  t.add("द्वंद्व", 0, 120, 0);
  t.add("द्वंद्वa", 0, 300, 0);
  t.add("pero", 10, 0, 500);
  t.add("niño", 0, 0, 200);
  t.add("tion", 900, 0, 300);
  t.add("the", 1000, 5, 5);
  t.add("...", 300, 300, 300);
  t.add("।", 0, 800, 0);
  t.add("¿", 0, 0, 150);
  t.add("123", 100, 100, 100);
  t.add("edge", 50, 0, 0);
  t.add("rare", 49, 0, 0);
  return t;
}

bool in(const std::vector<int>& s, int u) { return std::binary_search(s.begin(), s.end(), u); }

const std::vector<int>& set(const Partition& p, Lang l) { return p.sets[static_cast<int>(l)]; }

}  // namespace

TEST(Partition, TokenRules) {
  Toy t = toy();
  Partition p = build_partition(t.strs, t.freq, PartitionConfig{});
  EXPECT_TRUE(in(set(p, Lang::Hi), t.find("लेकिन")));
  EXPECT_TRUE(in(set(p, Lang::Hi), t.find("द्वंद्व")));
  EXPECT_FALSE(in(set(p, Lang::Hi), t.find("द्वंद्वa")) && in(set(p, Lang::En), t.find("द्वंद्वa")));
  EXPECT_TRUE(in(set(p, Lang::Es), t.find("pero")));
  EXPECT_FALSE(in(set(p, Lang::Hi), t.find("pero")));
  EXPECT_TRUE(in(set(p, Lang::Es), t.find("niño")));
  EXPECT_FALSE(in(set(p, Lang::Es), t.find("tion")));
  EXPECT_TRUE(in(set(p, Lang::En), t.find("the")));
  EXPECT_TRUE(in(p.shared, t.find("...")));
  EXPECT_TRUE(in(p.shared, t.find("।")));
  EXPECT_TRUE(in(set(p, Lang::Es), t.find("¿")));
  EXPECT_TRUE(in(p.shared, t.find("123")));
  EXPECT_TRUE(in(set(p, Lang::En), t.find("edge")));  // f = f_min is kept
  EXPECT_TRUE(in(p.shared, t.find("rare")));
}

TEST(Partition, MixedScriptTokenIsNotHindi) {
  Toy t;
  t.add("कa", 0, 300, 0);  // half Devanagari, half Latin
  Partition p = build_partition(t.strs, t.freq, PartitionConfig{});
  EXPECT_TRUE(set(p, Lang::Hi).empty());
}

TEST(Partition, UnseenTokenIsDroppedForAnySpecificity) {
  Toy t;
  t.add("कि", 0, 0, 0);
  PartitionConfig c;
  c.f_min = 0;
  Partition p = build_partition(t.strs, t.freq, c);
  EXPECT_EQ(p.shared, std::vector<int>{0});
}

TEST(Partition, SetsAreDisjointAndCoverTheVocabulary) {
  Toy t = toy();
  Partition p = build_partition(t.strs, t.freq, PartitionConfig{});
  std::vector<int> all;
  for (const auto& s : p.sets) all.insert(all.end(), s.begin(), s.end());
  all.insert(all.end(), p.shared.begin(), p.shared.end());
  std::sort(all.begin(), all.end());
  std::vector<int> want(t.strs.size());
  std::iota(want.begin(), want.end(), 0);
  EXPECT_EQ(all, want);
}

TEST(Partition, IdempotentAndOrderInvariant) {
  Toy t = toy();
  PartitionConfig c;
  Partition a = build_partition(t.strs, t.freq, c);
  Partition b = build_partition(t.strs, t.freq, c);
  EXPECT_EQ(a.canonical(), b.canonical());

  std::vector<int> perm(t.strs.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Toy s;
    for (int u : perm) s.add(t.strs[u], t.freq[u][0], t.freq[u][1], t.freq[u][2]);
    Partition q = build_partition(s.strs, s.freq, c);
    for (int k = 0; k < kNumLangs; ++k) {
      std::vector<int> back;
      for (int u : q.sets[k]) back.push_back(perm[u]);
      std::sort(back.begin(), back.end());
      EXPECT_EQ(back, a.sets[k]);
    }
  }
}

TEST(Partition, SyntheticBlockTokenizer) {
  Vocab v;
  std::vector<std::vector<int>> docs;
  std::vector<Lang> langs;
  CorpusConfig cc;
  frequency_corpus(cc, v, docs, langs);
  FreqTable f = count_frequencies(docs, langs, v.size());
  std::vector<std::string> strs;
  for (int t = 0; t < v.size(); ++t) strs.push_back(v.str(t));
  PartitionConfig c;
  c.variant = PartitionVariant::ScriptOnly;
  Partition so = build_partition(strs, f, c);
  // script alone cannot tell romanized Hindi from English
  EXPECT_EQ(set(so, Lang::En).size(), 110u);
  for (int u : set(so, Lang::En)) {
    if (v.block_of(u) == Vocab::Block::Hi) EXPECT_TRUE(v.romanized_hi(v.word_index(u)));
    else EXPECT_EQ(v.block_of(u), Vocab::Block::En);
  }
  EXPECT_EQ(set(so, Lang::Hi).size(), 90u);
  for (int u : set(so, Lang::Es)) EXPECT_EQ(v.block_of(u), Vocab::Block::Es);
  for (int u = v.shared_begin(); u < v.shared_begin() + v.n_shared; ++u) EXPECT_TRUE(in(so.shared, u));

  // frequency filters keep every set inside its own block
  c.variant = PartitionVariant::TransliterationAware;
  Partition ta = build_partition(strs, f, c);
  for (int k = 0; k < kNumLangs; ++k)
    for (int u : ta.sets[k]) EXPECT_EQ(v.block_of(u), k == 0 ? Vocab::Block::En : k == 1 ? Vocab::Block::Hi : Vocab::Block::Es);

  c.variant = PartitionVariant::ScriptOnly;
  Partition again = build_partition(strs, f, c);
  EXPECT_EQ(so.canonical(), again.canonical());
}

TEST(Partition, WeightsAreZeroOnSharedUnderHardMode) {
  Toy t = toy();
  Partition p = build_partition(t.strs, t.freq, PartitionConfig{});
  Vec w = p.weights(Lang::Hi, static_cast<int>(t.strs.size()));
  for (int u : p.shared) EXPECT_EQ(w[u], 0.0);
  for (int u : set(p, Lang::Hi)) EXPECT_EQ(w[u], 1.0);
}

TEST(Dropout, SizesAndSeeds) {
  Partition p;
  for (int u = 0; u < 100; ++u) p.sets[1].push_back(u);
  FreqTable f(100, {0, 0, 0});
  for (int u = 0; u < 100; ++u) f[u][1] = u + 1;
  EXPECT_EQ(dropout(p, Lang::Hi, 0.0, DropoutMode::Uniform, f, 1).canonical(), p.canonical());
  Partition a = dropout(p, Lang::Hi, 0.1, DropoutMode::Uniform, f, 1);
  Partition b = dropout(p, Lang::Hi, 0.1, DropoutMode::Uniform, f, 2);
  EXPECT_EQ(a.sets[1].size(), 90u);
  EXPECT_EQ(b.sets[1].size(), 90u);
  EXPECT_NE(a.sets[1], b.sets[1]);
  EXPECT_EQ(a.shared.size(), 10u);
  Partition fw = dropout(p, Lang::Hi, 0.2, DropoutMode::FrequencyWeighted, f, 1);
  EXPECT_EQ(fw.sets[1].size(), 80u);
  EXPECT_THROW(dropout(p, Lang::Hi, 1.0, DropoutMode::Uniform, f, 1), ConfigError);
}

TEST(Dropout, LargerRateRemovesMore) {
  Partition p;
  for (int u = 0; u < 57; ++u) p.sets[2].push_back(u);
  FreqTable f(57, {0, 0, 3});
  std::size_t prev = p.sets[2].size();
  for (double r : {0.1, 0.2, 0.4, 0.8}) {
    auto n = dropout(p, Lang::Es, r, DropoutMode::FrequencyWeighted, f, 9).sets[2].size();
    EXPECT_LE(n, prev);
    prev = n;
  }
}
