#include "foxp2/corpus.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace foxp2;

TEST(Corpus, SplitSizesAreExact) {
  Vocab v;
  CorpusConfig c;
  c.n_units = 500;
  c.seed = 3;
  Corpus a = generate_corpus(c, v);
  ASSERT_EQ(a.units.size(), 500u);
  int n[3] = {0, 0, 0};
  for (const auto& u : a.units) ++n[static_cast<int>(u.split)];
  EXPECT_EQ(n[0], 300);
  EXPECT_EQ(n[1], 100);
  EXPECT_EQ(n[2], 100);

  std::set<int> train, test;
  for (const auto& u : a.units) (u.split == Split::Train ? train : test).insert(u.id);
  for (int id : train) EXPECT_EQ(test.count(id), 0u);

  Corpus b = generate_corpus(c, v);
  EXPECT_EQ(a.units_jsonl(), b.units_jsonl());
}

TEST(Corpus, RenderingsShareSlotsAndWrapper) {
  Vocab v;
  Corpus c = generate_corpus(CorpusConfig{}, v);
  for (const auto& u : c.units) {
    EXPECT_EQ(u.wrapper, u.id % 3);
    if (u.excluded) continue;
    for (int l = 0; l < kNumLangs; ++l) {
      ASSERT_EQ(u.body[l].size(), u.slots.size());
      for (std::size_t k = 0; k < u.slots.size(); ++k) {
        if (u.slots[k] < 0) EXPECT_TRUE(v.is_entity(u.body[l][k]));
        else EXPECT_EQ(v.word_index(u.body[l][k]), u.slots[k]);
      }
      EXPECT_EQ(u.weak[l], wrap(u.body[l], u.wrapper, v));
    }
  }
}

TEST(Corpus, WrapperVariantsDifferOnlyInWrapperTokens) {
  Vocab v;
  std::vector<int> words = {v.word(Lang::En, 1), v.word(Lang::En, 2)};
  for (int w = 0; w < 3; ++w) {
    auto t = wrap(words, w, v);
    std::vector<int> rest;
    for (int x : t)
      if (x < v.format_token(0) || x > v.format_token(9)) rest.push_back(x);
    EXPECT_EQ(rest, words);
  }
}

TEST(Corpus, DefectsAreExcluded) {
  Vocab v;
  CorpusConfig c;
  c.corruption_rate = 0.3;
  Corpus corp = generate_corpus(c, v);
  int excluded = 0;
  for (const auto& u : corp.units) {
    if (u.excluded) ++excluded;
    for (int t : u.weak[0])
      if (v.block_of(t) == Vocab::Block::Directive) EXPECT_TRUE(u.excluded.has_value());
  }
  EXPECT_GT(excluded, 0);
  for (const auto* u : corp.split(Split::Train)) EXPECT_FALSE(u->excluded.has_value());
}

TEST(Corpus, JsonlRoundTrip) {
  Vocab v;
  Corpus a = generate_corpus(CorpusConfig{}, v);
  Corpus b = corpus_from_jsonl(a.cfg, a.units_jsonl());
  EXPECT_EQ(a.units_jsonl(), b.units_jsonl());
}

TEST(Corpus, ExplicitPromptAppendsTheDirective) {
  Vocab v;
  Corpus c = generate_corpus(CorpusConfig{}, v);
  const auto& u = c.units.front();
  auto p = explicit_prompt(u, Lang::Es, v);
  EXPECT_EQ(p.back(), v.directive(Lang::Es));
  EXPECT_EQ(std::vector<int>(p.begin(), p.end() - 1), u.weak[0]);
}
