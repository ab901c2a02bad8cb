#pragma once

#include "foxp2/corpus.hpp"
#include "foxp2/eval.hpp"
#include "foxp2/model.hpp"
#include "foxp2/tokens.hpp"

#include <random>

namespace fixtures {

inline const foxp2::Model& planted() {
  static const foxp2::Model m = foxp2::Model::planted(foxp2::PlantedConfig{});
  return m;
}

inline const foxp2::FreqTable& freq() {
  static const foxp2::FreqTable f = [] {
    std::vector<std::vector<int>> docs;
    std::vector<foxp2::Lang> langs;
    foxp2::frequency_corpus(foxp2::CorpusConfig{}, planted().vocab(), docs, langs);
    return foxp2::count_frequencies(docs, langs, planted().vocab_size());
  }();
  return f;
}

inline const foxp2::Partition& partition() {
  static const foxp2::Partition p = [] {
    std::vector<std::string> strs;
    for (int t = 0; t < planted().vocab_size(); ++t) strs.push_back(planted().vocab().str(t));
    return foxp2::build_partition(strs, freq(), foxp2::PartitionConfig{});
  }();
  return p;
}

inline const foxp2::Corpus& corpus() {
  static const foxp2::Corpus c = foxp2::generate_corpus(foxp2::CorpusConfig{}, planted().vocab());
  return c;
}

// English weak prompts of the first n non-excluded units, with frozen baselines.
inline std::vector<foxp2::EvalPrompt> english_prompts(int n, int m = 8) {
  std::vector<std::vector<int>> toks;
  std::vector<int> ids, intents;
  for (const auto& u : corpus().units) {
    if (u.excluded) continue;
    toks.push_back(u.weak[0]);
    ids.push_back(u.id);
    intents.push_back(u.intent);
    if (static_cast<int>(toks.size()) == n) break;
  }
  return foxp2::make_eval_prompts(planted(), toks, ids, intents, m, foxp2::Exec::Serial);
}

inline foxp2::Mat gaussian(int n, int d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  foxp2::Mat X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = nd(rng);
  return X;
}

}  // namespace fixtures
