#include "foxp2/tokens.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace foxp2 {

std::string variant_name(PartitionVariant v) {
  switch (v) {
    case PartitionVariant::ScriptOnly: return "script_only";
    case PartitionVariant::Diagnostic: return "diagnostic";
    case PartitionVariant::TransliterationAware: return "transliteration_aware";
  }
  return "?";
}

PartitionVariant variant_from_name(const std::string& s) {
  if (s == "script_only") return PartitionVariant::ScriptOnly;
  if (s == "diagnostic") return PartitionVariant::Diagnostic;
  if (s == "transliteration_aware") return PartitionVariant::TransliterationAware;
  throw ConfigError("unknown partition variant: " + s);
}

void to_json(nlohmann::json& j, const PartitionConfig& c) {
  j = {{"purity", c.purity},
       {"punct_dominance", c.punct_dominance},
       {"f_min", c.f_min},
       {"spec_hi", c.spec_hi},
       {"spec_es", c.spec_es},
       {"spec_en", c.spec_en},
       {"tau_H_bits", c.tau_H_bits},
       {"variant", variant_name(c.variant)},
       {"shared_weight", c.shared_weight == SharedWeight::Hard ? "hard" : "soft"}};
}

void from_json(const nlohmann::json& j, PartitionConfig& c) {
  c = PartitionConfig{};
  if (j.contains("purity")) j.at("purity").get_to(c.purity);
  if (j.contains("punct_dominance")) j.at("punct_dominance").get_to(c.punct_dominance);
  if (j.contains("f_min")) j.at("f_min").get_to(c.f_min);
  if (j.contains("spec_hi")) j.at("spec_hi").get_to(c.spec_hi);
  if (j.contains("spec_es")) j.at("spec_es").get_to(c.spec_es);
  if (j.contains("spec_en")) j.at("spec_en").get_to(c.spec_en);
  if (j.contains("tau_H_bits")) j.at("tau_H_bits").get_to(c.tau_H_bits);
  if (j.contains("variant")) c.variant = variant_from_name(j.at("variant").get<std::string>());
  if (j.contains("shared_weight")) {
    auto s = j.at("shared_weight").get<std::string>();
    if (s == "hard") c.shared_weight = SharedWeight::Hard;
    else if (s == "soft") c.shared_weight = SharedWeight::Soft;
    else throw ConfigError("shared_weight must be hard or soft");
  }
}

namespace {

std::vector<char32_t> decode_utf8(const std::string& s) {
  std::vector<char32_t> out;
  for (std::size_t i = 0; i < s.size();) {
    auto c = static_cast<unsigned char>(s[i]);
    char32_t cp;
    int n;
    if (c < 0x80) { cp = c; n = 1; }
    else if ((c >> 5) == 6) { cp = c & 0x1F; n = 2; }
    else if ((c >> 4) == 14) { cp = c & 0x0F; n = 3; }
    else { cp = c & 0x07; n = 4; }
    for (int k = 1; k < n && i + k < s.size(); ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += n;
  }
  return out;
}

}  // namespace

CharProfile profile(const std::string& utf8) {
  CharProfile p;
  for (char32_t cp : decode_utf8(utf8)) {
    if (cp == U' ') continue;
    ++p.total;
    bool ascii_alpha = (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
    bool latin1_alpha = cp >= 0xC0 && cp <= 0xFF && cp != 0xD7 && cp != 0xF7;
    if (cp == 0x0964 || cp == 0x0965) {
      p.danda = true;
      ++p.punct;
    } else if (cp >= 0x0966 && cp <= 0x096F) {
      ++p.digit;
      ++p.devanagari;
    } else if (cp >= 0x0900 && cp <= 0x097F) {
      ++p.devanagari;
    } else if (cp >= U'0' && cp <= U'9') {
      ++p.digit;
    } else if (ascii_alpha) {
      ++p.ascii_alpha;
      ++p.latin_alpha;
    } else if (latin1_alpha) {
      ++p.latin_alpha;
      p.es_marker = true;
    } else if (cp == 0xBF || cp == 0xA1) {
      p.inverted_mark = true;
      p.es_marker = true;
      ++p.punct;
    } else if (cp < 0x80 || (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0xA0 && cp <= 0xBF)) {
      ++p.punct;
    }
  }
  return p;
}

FreqTable count_frequencies(const std::vector<std::vector<int>>& docs, const std::vector<Lang>& doc_lang,
                            int V) {
  if (docs.size() != doc_lang.size()) throw ConfigError("docs and languages differ in length");
  FreqTable f(V, {0, 0, 0});
  for (std::size_t i = 0; i < docs.size(); ++i)
    for (int tok : docs[i]) f.at(tok)[static_cast<int>(doc_lang[i])] += 1;
  return f;
}

namespace {

double spec_ratio(long own, long comp) { return (double(own) + 1.0) / (double(comp) + 1.0); }

double entropy_bits(const std::array<long, kNumLangs>& f) {
  double tot = 0;
  for (long x : f) tot += double(x);
  if (tot <= 0) return 0.0;
  double h = 0;
  for (long x : f)
    if (x > 0) {
      double q = double(x) / tot;
      h -= q * std::log2(q);
    }
  return h;
}

}  // namespace

Partition build_partition(const std::vector<std::string>& strs, const FreqTable& freq,
                          const PartitionConfig& cfg) {
  if (strs.size() != freq.size()) throw ConfigError("token strings and frequency table differ");
  Partition out;
  out.variant = cfg.variant;
  out.shared_weight = cfg.shared_weight;
  const int V = static_cast<int>(strs.size());
  out.soft_q.assign(V, {0.0, 0.0, 0.0});
  const bool freq_filters = cfg.variant != PartitionVariant::ScriptOnly;

  for (int u = 0; u < V; ++u) {
    const auto& f = freq[u];
    long tot = f[0] + f[1] + f[2];
    for (int k = 0; k < kNumLangs; ++k) out.soft_q[u][k] = tot > 0 ? double(f[k]) / double(tot) : 0.0;

    CharProfile p = profile(strs[u]);
    if (p.total == 0 || p.danda || p.digit > 0) continue;
    double punct_frac = double(p.punct) / p.total;
    if (punct_frac > cfg.punct_dominance && !p.inverted_mark) continue;

    double dev = double(p.devanagari) / p.total;
    double ascii = double(p.ascii_alpha) / p.total;
    double latin = double(p.latin_alpha) / p.total;

    std::array<bool, kNumLangs> cand{};
    cand[0] = ascii >= cfg.purity && !p.es_marker;
    cand[1] = dev >= cfg.purity ||
              (cfg.variant == PartitionVariant::TransliterationAware && ascii >= cfg.purity && !p.es_marker);
    // unmarked Latin words are left to the frequency filters; script alone only trusts the markers
    cand[2] = (latin >= cfg.purity && (p.es_marker || freq_filters)) || p.inverted_mark;

    if (freq_filters) {
      double h = entropy_bits(f);
      long other_en = std::max(f[1], f[2]);
      if (cand[0] && !(f[0] >= cfg.f_min && spec_ratio(f[0], other_en) >= cfg.spec_en)) cand[0] = false;
      if (cand[1] && !(f[1] >= cfg.f_min && spec_ratio(f[1], f[0]) >= cfg.spec_hi)) cand[1] = false;
      if (cand[1] && dev < cfg.purity && spec_ratio(f[1], f[2]) < cfg.spec_hi) cand[1] = false;
      if (cand[2] && !(f[2] >= cfg.f_min && spec_ratio(f[2], f[0]) >= cfg.spec_es)) cand[2] = false;
      if (h > cfg.tau_H_bits) cand = {false, false, false};
    }
    // keep sets disjoint: highest own frequency wins, ties to the lower language index
    int best = -1;
    for (int k = 0; k < kNumLangs; ++k)
      if (cand[k] && (best < 0 || f[k] > f[best])) best = k;
    if (best >= 0) out.sets[best].push_back(u);
  }
  std::vector<char> taken(V, 0);
  for (const auto& s : out.sets)
    for (int u : s) taken[u] = 1;
  for (int u = 0; u < V; ++u)
    if (!taken[u]) out.shared.push_back(u);
  return out;
}

Vec Partition::weights(Lang l, int V) const {
  Vec w = Vec::Zero(V);
  for (int u : sets[static_cast<int>(l)]) w[u] = 1.0;
  if (shared_weight == SharedWeight::Soft)
    for (int u : shared)
      if (u < static_cast<int>(soft_q.size())) w[u] = soft_q[u][static_cast<int>(l)];
  return w;
}

std::string Partition::canonical() const {
  nlohmann::json j;
  j["variant"] = variant_name(variant);
  j["shared_weight"] = shared_weight == SharedWeight::Hard ? "hard" : "soft";
  j["en"] = sets[0];
  j["hi"] = sets[1];
  j["es"] = sets[2];
  j["shared"] = shared;
  return j.dump();
}

Partition dropout(const Partition& p, Lang l, double rho, DropoutMode mode, const FreqTable& freq,
                  std::uint64_t seed) {
  if (rho < 0.0 || rho >= 1.0) throw ConfigError("dropout rho must lie in [0,1)");
  Partition out = p;
  auto& set = out.sets[static_cast<int>(l)];
  const auto n_drop = static_cast<std::size_t>(std::floor(rho * double(set.size())));
  auto rng = make_rng(seed, "token_dropout", static_cast<std::uint64_t>(l));
  std::vector<int> pool = set;
  std::vector<int> dropped;
  for (std::size_t i = 0; i < n_drop && !pool.empty(); ++i) {
    std::vector<double> w(pool.size(), 1.0);
    if (mode == DropoutMode::FrequencyWeighted)
      for (std::size_t k = 0; k < pool.size(); ++k)
        w[k] = double(freq.at(pool[k])[static_cast<int>(l)]) + 1e-12;
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::size_t k = pick(rng);
    dropped.push_back(pool[k]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  set = pool;
  for (int u : dropped) out.shared.push_back(u);
  std::sort(out.shared.begin(), out.shared.end());
  return out;
}

}  // namespace foxp2
