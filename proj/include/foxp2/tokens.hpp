#pragma once

#include "foxp2/common.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <vector>

namespace foxp2 {

enum class PartitionVariant { ScriptOnly, Diagnostic, TransliterationAware };
enum class SharedWeight { Hard, Soft };
enum class DropoutMode { Uniform, FrequencyWeighted };

std::string variant_name(PartitionVariant v);
PartitionVariant variant_from_name(const std::string& s);

struct PartitionConfig {
  double purity = 0.6;
  double punct_dominance = 0.95;
  long f_min = 50;  // inclusive
  double spec_hi = 2.0;
  double spec_es = 1.5;
  double spec_en = 1.5;
  double tau_H_bits = 1.5;
  PartitionVariant variant = PartitionVariant::Diagnostic;
  SharedWeight shared_weight = SharedWeight::Hard;
};

void to_json(nlohmann::json& j, const PartitionConfig& c);
void from_json(const nlohmann::json& j, PartitionConfig& c);

using FreqTable = std::vector<std::array<long, kNumLangs>>;  // per token, per language corpus

struct Partition {
  PartitionVariant variant = PartitionVariant::Diagnostic;
  SharedWeight shared_weight = SharedWeight::Hard;
  std::array<std::vector<int>, kNumLangs> sets;  // sorted token ids
  std::vector<int> shared;                       // sorted
  std::vector<std::array<double, kNumLangs>> soft_q;  // per-token language shares, used for soft weights

  // w(u) for the mass of language l over a vocabulary of size V
  Vec weights(Lang l, int V) const;
  std::string canonical() const;  // byte-stable serialization
};

// Per-character classes used by the filters.
struct CharProfile {
  int total = 0;
  int devanagari = 0;
  int ascii_alpha = 0;
  int latin_alpha = 0;  // ASCII letters plus Latin-1 letters
  int punct = 0;
  int digit = 0;
  bool es_marker = false;
  bool danda = false;
  bool inverted_mark = false;  // the Spanish opening marks
};
CharProfile profile(const std::string& utf8);

FreqTable count_frequencies(const std::vector<std::vector<int>>& docs, const std::vector<Lang>& doc_lang,
                            int V);

Partition build_partition(const std::vector<std::string>& token_strings, const FreqTable& freq,
                          const PartitionConfig& cfg);

// Removes floor(rho*|V_l|) tokens from the set of language l.
Partition dropout(const Partition& p, Lang l, double rho, DropoutMode mode, const FreqTable& freq,
                  std::uint64_t seed);

}  // namespace foxp2
