#pragma once

#include "foxp2/common.hpp"
#include "foxp2/model.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace foxp2 {

enum class Split { Train, Dev, Test };
std::string split_name(Split s);

struct CorpusConfig {
  int n_units = 500;
  int slots_min = 4;
  int slots_max = 6;
  double p_entity = 0.2;
  double corruption_rate = 0.03;  // per corruption type
  double frac_train = 0.6;
  double frac_dev = 0.2;
  int freq_docs = 4000;  // per language; sized so ordinary words clear f_min by a wide margin
  std::uint64_t seed = 11;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

// One meaning unit rendered in every language; wrapper = id mod 3 (plain, bullet, delimiter).
struct MeaningUnit {
  int id = 0;
  int intent = 0;
  int wrapper = 0;
  Split split = Split::Train;
  std::vector<int> slots;                         // word indices (-1 marks an entity slot)
  std::array<std::vector<int>, kNumLangs> weak;   // weak prompts, no directive
  std::array<std::vector<int>, kNumLangs> body;   // realized words without wrapper
  std::optional<std::string> excluded;            // exclusion reason
};

void to_json(nlohmann::json& j, const MeaningUnit& u);
void from_json(const nlohmann::json& j, MeaningUnit& u);

struct Corpus {
  CorpusConfig cfg;
  std::vector<MeaningUnit> units;

  std::vector<const MeaningUnit*> split(Split s) const;  // non-excluded units only
  std::string units_jsonl() const;
  nlohmann::json manifest(const std::string& units_sha) const;
};

std::vector<int> wrap(const std::vector<int>& words, int wrapper, const Vocab& v);
// English rendering of the unit with a target-language directive appended.
std::vector<int> explicit_prompt(const MeaningUnit& u, Lang target, const Vocab& v);

std::optional<std::string> exclusion_reason(const MeaningUnit& u, const Vocab& v);
Corpus generate_corpus(const CorpusConfig& cfg, const Vocab& v);
Corpus corpus_from_jsonl(const CorpusConfig& cfg, const std::string& jsonl);

struct PromptRef {
  int unit = 0;
  Lang lang = Lang::En;
  bool is_explicit = false;
  Lang directive = Lang::Hi;
  std::vector<int> tokens;
};

// Dictionary training mixture: weak and explicit prompts in equal numbers.
std::vector<PromptRef> mixture(const std::vector<const MeaningUnit*>& units, const Vocab& v);

// Per-language documents for token statistics.
void frequency_corpus(const CorpusConfig& cfg, const Vocab& v, std::vector<std::vector<int>>& docs,
                      std::vector<Lang>& langs);

}  // namespace foxp2
