#include "foxp2/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace foxp2 {

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

namespace {
Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split: " + s);
}
}  // namespace

void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = {{"n_units", c.n_units},     {"slots_min", c.slots_min},   {"slots_max", c.slots_max},
       {"p_entity", c.p_entity},   {"corruption_rate", c.corruption_rate},
       {"frac_train", c.frac_train}, {"frac_dev", c.frac_dev}, {"freq_docs", c.freq_docs},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, CorpusConfig& c) {
  c = CorpusConfig{};
  if (j.contains("n_units")) j.at("n_units").get_to(c.n_units);
  if (j.contains("slots_min")) j.at("slots_min").get_to(c.slots_min);
  if (j.contains("slots_max")) j.at("slots_max").get_to(c.slots_max);
  if (j.contains("p_entity")) j.at("p_entity").get_to(c.p_entity);
  if (j.contains("corruption_rate")) j.at("corruption_rate").get_to(c.corruption_rate);
  if (j.contains("frac_train")) j.at("frac_train").get_to(c.frac_train);
  if (j.contains("frac_dev")) j.at("frac_dev").get_to(c.frac_dev);
  if (j.contains("freq_docs")) j.at("freq_docs").get_to(c.freq_docs);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (c.n_units < 10) throw ConfigError("n_units must be >= 10");
  if (c.slots_min < 1 || c.slots_max < c.slots_min) throw ConfigError("bad slot range");
  if (c.frac_train <= 0 || c.frac_dev < 0 || c.frac_train + c.frac_dev >= 1.0)
    throw ConfigError("split fractions must leave a test share");
}

void to_json(nlohmann::json& j, const MeaningUnit& u) {
  j = {{"id", u.id},
       {"intent", u.intent},
       {"wrapper", u.wrapper},
       {"split", split_name(u.split)},
       {"slots", u.slots},
       {"weak", {{"en", u.weak[0]}, {"hi", u.weak[1]}, {"es", u.weak[2]}}},
       {"body", {{"en", u.body[0]}, {"hi", u.body[1]}, {"es", u.body[2]}}},
       {"excluded", u.excluded ? nlohmann::json(*u.excluded) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, MeaningUnit& u) {
  j.at("id").get_to(u.id);
  j.at("intent").get_to(u.intent);
  j.at("wrapper").get_to(u.wrapper);
  u.split = split_from_name(j.at("split").get<std::string>());
  j.at("slots").get_to(u.slots);
  for (Lang l : {Lang::En, Lang::Hi, Lang::Es}) {
    j.at("weak").at(lang_name(l)).get_to(u.weak[static_cast<int>(l)]);
    j.at("body").at(lang_name(l)).get_to(u.body[static_cast<int>(l)]);
  }
  if (j.at("excluded").is_null()) u.excluded.reset();
  else u.excluded = j.at("excluded").get<std::string>();
}

std::vector<int> wrap(const std::vector<int>& words, int wrapper, const Vocab& v) {
  std::vector<int> out;
  if (wrapper == 1) out.push_back(v.format_token(0));
  if (wrapper == 2) out.push_back(v.format_token(2));
  out.insert(out.end(), words.begin(), words.end());
  if (wrapper == 2) out.push_back(v.format_token(3));
  return out;
}

std::vector<int> explicit_prompt(const MeaningUnit& u, Lang target, const Vocab& v) {
  std::vector<int> p = u.weak[0];
  p.push_back(v.directive(target));
  return p;
}

std::optional<std::string> exclusion_reason(const MeaningUnit& u, const Vocab& v) {
  std::size_t lo = u.body[0].size(), hi = u.body[0].size();
  for (const auto& b : u.body) {
    lo = std::min(lo, b.size());
    hi = std::max(hi, b.size());
  }
  if (lo == 0 || double(hi) > 2.0 * double(lo)) return "length_asymmetry";
  // renderings must align position by position, entities included
  for (int l = 1; l < kNumLangs; ++l) {
    if (u.body[l].size() != u.body[0].size()) return "slot_mismatch";
    for (std::size_t k = 0; k < u.body[0].size(); ++k)
      if (v.word_index(u.body[l][k]) != v.word_index(u.body[0][k]) ||
          v.is_entity(u.body[l][k]) != v.is_entity(u.body[0][k]))
        return "slot_mismatch";
  }
  for (const auto& w : u.weak)
    for (int t : w)
      if (v.block_of(t) == Vocab::Block::Directive) return "directive_leak";
  const auto& en = u.body[0];
  auto ent = std::count_if(en.begin(), en.end(), [&](int t) { return v.is_entity(t); });
  if (!en.empty() && double(ent) / double(en.size()) > 0.5) return "entity_dominance";
  return std::nullopt;
}

Corpus generate_corpus(const CorpusConfig& cfg, const Vocab& v) {
  Corpus c;
  c.cfg = cfg;
  auto rng = make_rng(cfg.seed, "corpus_units");
  std::uniform_int_distribution<int> nslots(cfg.slots_min, cfg.slots_max);
  std::uniform_int_distribution<int> word(0, v.n_words - 1);
  std::uniform_int_distribution<int> ent(0, 9);
  std::uniform_int_distribution<int> intent(0, 2);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int id = 0; id < cfg.n_units; ++id) {
    MeaningUnit u;
    u.id = id;
    u.wrapper = id % 3;
    u.intent = intent(rng);
    int n = nslots(rng);
    std::vector<int> ents;
    for (int s = 0; s < n; ++s) {
      if (unif(rng) < cfg.p_entity) {
        u.slots.push_back(-1);
        ents.push_back(v.entity(ent(rng)));
      } else {
        u.slots.push_back(word(rng));
      }
    }
    for (Lang l : {Lang::En, Lang::Hi, Lang::Es}) {
      std::size_t e = 0;
      auto& b = u.body[static_cast<int>(l)];
      for (int s : u.slots) b.push_back(s < 0 ? ents[e++] : v.word(l, s));
    }
    // injected defects, one draw per type
    double r_slot = unif(rng), r_leak = unif(rng), r_ent = unif(rng), r_len = unif(rng);
    if (r_slot < cfg.corruption_rate && u.body[1].size() > 1) u.body[1].pop_back();
    if (r_ent < cfg.corruption_rate) {
      for (auto& b : u.body)
        for (std::size_t k = 0; k < b.size(); ++k)
          if (k % 4 != 0) b[k] = v.entity(static_cast<int>(k % 10));
      for (std::size_t k = 0; k < u.slots.size(); ++k)
        if (k % 4 != 0) u.slots[k] = -1;
    }
    if (r_len < cfg.corruption_rate) {
      auto b = u.body[1];
      for (int rep = 0; rep < 2; ++rep) u.body[1].insert(u.body[1].end(), b.begin(), b.end());
    }
    for (int l = 0; l < kNumLangs; ++l) u.weak[l] = wrap(u.body[l], u.wrapper, v);
    if (r_leak < cfg.corruption_rate) u.weak[0].push_back(v.directive(Lang::Hi));

    u.excluded = exclusion_reason(u, v);
    c.units.push_back(std::move(u));
  }
  // exact split sizes over a seeded permutation of the ids
  std::vector<int> order(c.units.size());
  std::iota(order.begin(), order.end(), 0);
  auto srng = make_rng(cfg.seed, "split");
  std::shuffle(order.begin(), order.end(), srng);
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.frac_train * n));
  const auto n_dev = static_cast<std::size_t>(std::llround((cfg.frac_train + cfg.frac_dev) * n)) - n_train;
  for (std::size_t r = 0; r < order.size(); ++r)
    c.units[order[r]].split = r < n_train ? Split::Train : (r < n_train + n_dev ? Split::Dev : Split::Test);
  return c;
}

std::vector<const MeaningUnit*> Corpus::split(Split s) const {
  std::vector<const MeaningUnit*> out;
  for (const auto& u : units)
    if (u.split == s && !u.excluded) out.push_back(&u);
  return out;
}

std::string Corpus::units_jsonl() const {
  std::ostringstream os;
  for (const auto& u : units) os << nlohmann::json(u).dump() << "\n";
  return os.str();
}

nlohmann::json Corpus::manifest(const std::string& units_sha) const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["config"] = cfg;
  std::map<std::string, int> reasons;
  std::map<std::string, int> counts;
  for (const auto& u : units) {
    if (u.excluded) reasons[*u.excluded] += 1;
    else counts[split_name(u.split)] += 1;
  }
  j["split_counts"] = counts;
  j["exclusions"] = reasons;
  j["units_sha256"] = units_sha;
  return j;
}

Corpus corpus_from_jsonl(const CorpusConfig& cfg, const std::string& jsonl) {
  Corpus c;
  c.cfg = cfg;
  std::istringstream is(jsonl);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    c.units.push_back(nlohmann::json::parse(line).get<MeaningUnit>());
  }
  return c;
}

std::vector<PromptRef> mixture(const std::vector<const MeaningUnit*>& units, const Vocab& v) {
  std::vector<PromptRef> out;
  for (const MeaningUnit* u : units) {
    for (int k = 0; k < 2; ++k) {
      Lang l = static_cast<Lang>((u->id + k) % kNumLangs);
      out.push_back({u->id, l, false, Lang::Hi, u->weak[static_cast<int>(l)]});
    }
    for (Lang t : {Lang::Hi, Lang::Es}) out.push_back({u->id, Lang::En, true, t, explicit_prompt(*u, t, v)});
  }
  return out;
}

void frequency_corpus(const CorpusConfig& cfg, const Vocab& v, std::vector<std::vector<int>>& docs,
                      std::vector<Lang>& langs) {
  auto rng = make_rng(cfg.seed, "frequency_corpus");
  std::uniform_int_distribution<int> word(0, v.n_words - 1);
  std::uniform_int_distribution<int> len(cfg.slots_min, cfg.slots_max);
  std::uniform_int_distribution<int> fill(0, 9);
  std::uniform_int_distribution<int> ent(0, 9);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Lang l : {Lang::En, Lang::Hi, Lang::Es}) {
    for (int i = 0; i < cfg.freq_docs; ++i) {
      std::vector<int> doc;
      int n = len(rng);
      for (int k = 0; k < n; ++k) {
        doc.push_back(unif(rng) < cfg.p_entity ? v.entity(ent(rng)) : v.word(l, word(rng)));
      }
      doc = wrap(doc, i % 3, v);
      doc.push_back(v.filler(fill(rng)));
      docs.push_back(std::move(doc));
      langs.push_back(l);
    }
  }
}

}  // namespace foxp2
