#include "foxp2/pipeline.hpp"

#include "foxp2/eval.hpp"
#include "foxp2/hash.hpp"
#include "foxp2/lape.hpp"
#include "foxp2/metrics.hpp"
#include "foxp2/tensor_io.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace foxp2 {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

void to_json(json& j, const Guardrails& g) {
  j = {{"eps_kl", g.eps_kl}, {"eps_es", g.eps_es}, {"eps_util", g.eps_util}, {"tau_sem", g.tau_sem}};
}

void from_json(const json& j, Guardrails& g) {
  g = Guardrails{};
  if (j.contains("eps_kl")) j.at("eps_kl").get_to(g.eps_kl);
  if (j.contains("eps_es")) j.at("eps_es").get_to(g.eps_es);
  if (j.contains("eps_util")) j.at("eps_util").get_to(g.eps_util);
  if (j.contains("tau_sem")) j.at("tau_sem").get_to(g.tau_sem);
}

void to_json(json& j, const SteerStageConfig& c) {
  j = {{"lambda0", c.lambda0},
       {"rhos", c.rhos},
       {"mode", c.mode},
       {"gamma", c.gamma},
       {"policy", c.policy},
       {"trust_tau", c.trust_tau},
       {"normalize_mu", c.normalize_mu},
       {"guardrails", c.guard},
       {"sufficiency_multipliers", c.sufficiency_multipliers},
       {"sufficiency_r_cap", c.sufficiency_r_cap},
       {"random_seeds", c.random_seeds},
       {"lape_eta", c.lape_eta},
       {"alpha_leak", c.alpha_leak},
       {"alpha_kl", c.alpha_kl},
       {"alpha_util", c.alpha_util},
       {"alpha_stab", c.alpha_stab}};
}

void from_json(const json& j, SteerStageConfig& c) {
  c = SteerStageConfig{};
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) j.at(k).get_to(v);
  };
  get("lambda0", c.lambda0);
  get("rhos", c.rhos);
  get("mode", c.mode);
  get("gamma", c.gamma);
  get("policy", c.policy);
  get("trust_tau", c.trust_tau);
  get("normalize_mu", c.normalize_mu);
  get("guardrails", c.guard);
  get("sufficiency_multipliers", c.sufficiency_multipliers);
  get("sufficiency_r_cap", c.sufficiency_r_cap);
  get("random_seeds", c.random_seeds);
  get("lape_eta", c.lape_eta);
  get("alpha_leak", c.alpha_leak);
  get("alpha_kl", c.alpha_kl);
  get("alpha_util", c.alpha_util);
  get("alpha_stab", c.alpha_stab);
  if (c.mode != "fixed_ratio" && c.mode != "kappa") throw ConfigError("unknown suppression mode: " + c.mode);
  if (c.policy != "all_steps" && c.policy != "prompt_only") throw ConfigError("unknown edit policy: " + c.policy);
  if (c.lambda0 <= 0.0 || c.rhos.empty()) throw ConfigError("invalid operating-point grid");
  if (c.random_seeds < 1 || c.sufficiency_r_cap < 1) throw ConfigError("invalid steer config");
}

void to_json(json& j, const EvalStageConfig& c) {
  j = {{"m", c.m},         {"lid_len", c.lid_len},     {"T", c.T},
       {"bootstrap", c.bootstrap}, {"dropout", c.dropout}, {"fd_prompts", c.fd_prompts}};
}

void from_json(const json& j, EvalStageConfig& c) {
  c = EvalStageConfig{};
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) j.at(k).get_to(v);
  };
  get("m", c.m);
  get("lid_len", c.lid_len);
  get("T", c.T);
  get("bootstrap", c.bootstrap);
  get("dropout", c.dropout);
  get("fd_prompts", c.fd_prompts);
  if (c.T.empty()) throw ConfigError("empty horizon T");
  for (int t : c.T)
    if (t < 1 || t > c.m) throw ConfigError("horizon step beyond the frozen prefix");
  if (c.lid_len < 1 || c.lid_len > c.m) throw ConfigError("LID prefix must fit in the frozen prefix");
}

void PipelineConfig::derive_seeds() {
  corpus.seed = derive_seed(seed, "corpus");
  sae.seed = derive_seed(seed, "dict");
  localize.seed = derive_seed(seed, "localize");
  geometry.seed = derive_seed(seed, "geometry");
}

void to_json(json& j, const PipelineConfig& c) {
  j = {{"seed", c.seed},           {"target", lang_name(c.target)}, {"planted", c.planted},
       {"partition", c.partition}, {"corpus", c.corpus},           {"sae", c.sae},
       {"dict_steps", c.dict_steps}, {"localize", c.localize},     {"geometry", c.geometry},
       {"steer", c.steer},         {"eval", c.eval}};
}

void from_json(const json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) j.at(k).get_to(v);
  };
  get("seed", c.seed);
  if (j.contains("target")) c.target = lang_from_name(j.at("target").get<std::string>());
  if (c.target == Lang::En) throw ConfigError("target language must differ from English");
  get("planted", c.planted);
  get("partition", c.partition);
  get("corpus", c.corpus);
  get("sae", c.sae);
  get("dict_steps", c.dict_steps);
  get("localize", c.localize);
  get("geometry", c.geometry);
  get("steer", c.steer);
  get("eval", c.eval);
  c.planted.validate();
  if (c.dict_steps < 1 || c.dict_steps > c.eval.m) throw ConfigError("dict_steps must lie in [1, m]");
}

PipelineConfig load_config(const fs::path& p) {
  try {
    json j = json::parse(read_file(p));
    return j.get<PipelineConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> s = {"partition", "corpus", "dict",  "localize",
                                             "geometry",  "steer",  "eval",  "report"};
  return s;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const PinError*>(&e)) return 2;
  if (dynamic_cast<const GuardrailInfeasible*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e)) return 4;
  if (dynamic_cast<const json::exception*>(&e)) return 4;
  return 1;
}

fs::path artifact_root(const std::optional<std::string>& cli_root) {
  if (cli_root) return *cli_root;
  if (const char* env = std::getenv("FOXP2_ARTIFACT_ROOT")) return env;
  return "foxp2_artifacts";
}

std::string tokenizer_sha256(const Vocab& v) {
  std::string s;
  for (int u = 0; u < v.size(); ++u) s += v.str(u) + "\n";
  return sha256_hex(s);
}

// ---------------------------------------------------------------- helpers

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

Lang nontarget_of(Lang t) { return t == Lang::Hi ? Lang::Es : Lang::Hi; }

struct Suite {
  std::vector<const MeaningUnit*> units;
  std::vector<EvalPrompt> prompts;
};

Suite weak_suite(const Model& model, const std::vector<const MeaningUnit*>& units, Lang l, int m, Exec exec) {
  Suite s;
  s.units = units;
  std::vector<std::vector<int>> toks;
  std::vector<int> ids, intents;
  for (const auto* u : units) {
    toks.push_back(u->weak[static_cast<int>(l)]);
    ids.push_back(u->id);
    intents.push_back(u->intent);
  }
  s.prompts = make_eval_prompts(model, toks, ids, intents, m, exec);
  return s;
}

// Same contexts as `base`, different prompt tokens.
std::vector<EvalPrompt> retokenized(const std::vector<EvalPrompt>& base, const std::vector<std::vector<int>>& toks) {
  std::vector<EvalPrompt> out = base;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].tokens = toks[i];
  return out;
}

std::vector<Mat> encode_layers(const std::vector<Dictionary>& dicts, const std::vector<Mat>& X) {
  std::vector<Mat> Z(X.size());
  for (std::size_t l = 0; l < X.size(); ++l) Z[l] = dicts[l].encode_rows(X[l]);
  return Z;
}

EvalConfig eval_config(const PipelineConfig& c, std::vector<int> T) {
  EvalConfig e;
  e.T = std::move(T);
  e.lid_len = c.eval.lid_len;
  e.target = c.target;
  e.nontarget = nontarget_of(c.target);
  return e;
}

std::vector<int> steps_upto(int n) {
  std::vector<int> t(n);
  std::iota(t.begin(), t.end(), 1);
  return t;
}

json point_json(const PointMetrics& p) {
  return {{"lambda", p.lambda},
          {"rho", p.rho},
          {"beta", p.beta},
          {"gain", p.gain},
          {"kl", p.kl},
          {"target_shift", p.target_shift},
          {"nontarget_shift", p.nontarget_shift},
          {"util", p.util},
          {"sem_max", p.sem_max},
          {"pass_kl", p.pass_kl},
          {"pass_leak", p.pass_leak},
          {"pass_util", p.pass_util},
          {"pass_sem", p.pass_sem},
          {"admissible", p.admissible()}};
}

std::string dicts_bin(const std::vector<Dictionary>& dicts) {
  std::vector<TensorRecord> recs;
  for (std::size_t l = 0; l < dicts.size(); ++l) {
    const auto layer = static_cast<std::int32_t>(l + 1);
    recs.push_back({TensorHeader{layer, 0, -1, 0, 0}, dicts[l].W});
    recs.push_back({TensorHeader{layer, 1, -1, 0, 0}, Mat(dicts[l].b.transpose())});
  }
  return encode_tensors(recs);
}

std::vector<Dictionary> dicts_from_bin(const std::string& bin, int L) {
  std::vector<Dictionary> out(L);
  for (const auto& r : decode_tensors(bin)) {
    if (r.header.layer < 1 || r.header.layer > L) throw PinError("dictionary record outside the layer range");
    if (r.header.step == 0) out[r.header.layer - 1].W = r.data;
    if (r.header.step == 1) out[r.header.layer - 1].b = r.data.row(0).transpose();
  }
  for (const auto& d : out)
    if (d.W.size() == 0 || d.b.size() != d.W.cols()) throw PinError("incomplete dictionary file");
  return out;
}

// Mean over several runs of the same prompts, field by field.
EvalSummary average_summaries(const std::vector<EvalSummary>& runs) {
  EvalSummary out = runs.at(0);
  const double k = double(runs.size());
  for (std::size_t i = 0; i < out.per_prompt.size(); ++i) {
    PromptEval acc{};
    acc.task_match = 0.0;
    for (const auto& r : runs) {
      const PromptEval& p = r.per_prompt[i];
      acc.gain += p.gain / k;
      for (int l = 0; l < kNumLangs; ++l) {
        acc.mass_base[l] += p.mass_base[l] / k;
        acc.mass_edit[l] += p.mass_edit[l] / k;
      }
      acc.kl += p.kl / k;
      acc.d_entropy += p.d_entropy / k;
      acc.d_nll += p.d_nll / k;
      acc.lid_base += p.lid_base / k;
      acc.lid_edit += p.lid_edit / k;
      acc.lid_nt_base += p.lid_nt_base / k;
      acc.lid_nt_edit += p.lid_nt_edit / k;
      acc.lid_abstain = acc.lid_abstain || p.lid_abstain;
      acc.task_match += p.task_match / k;
      acc.churn += p.churn / k;
      acc.rho += p.rho / k;
      acc.align += p.align / k;
      acc.shared_shift += p.shared_shift / k;
    }
    out.per_prompt[i] = acc;
  }
  return out;
}

struct RowStats {
  double default_score = 0.0;  // mean indicator
  double continuous = 0.0;
  double gain = 0.0;
  double d_lid = 0.0;
  double lid_base = 0.0, lid_edit = 0.0;
  double d_base = 0.0, d_edit = 0.0;  // M_target - M_en
  double leak = 0.0;                  // M_nontarget shift
  double nt_base = 0.0, nt_edit = 0.0;
  double kl = 0.0;
  double util = 0.0;
  double d_entropy = 0.0;
  double d_nll = 0.0;
  double rho = 0.0, align = 0.0, churn = 0.0;
};

RowStats row_stats(const EvalSummary& s, const Thresholds& thr, Lang target, Lang nt) {
  RowStats r;
  const double n = double(std::max<std::size_t>(1, s.per_prompt.size()));
  const int t = static_cast<int>(target), e = static_cast<int>(Lang::En), o = static_cast<int>(nt);
  for (const auto& p : s.per_prompt) {
    double dl = p.lid_edit - p.lid_base;
    r.default_score += default_indicator(p.gain, dl, thr) / n;
    r.continuous += default_continuous(p.gain, dl) / n;
    r.gain += p.gain / n;
    r.d_lid += dl / n;
    r.lid_base += p.lid_base / n;
    r.lid_edit += p.lid_edit / n;
    r.d_base += (p.mass_base[t] - p.mass_base[e]) / n;
    r.d_edit += (p.mass_edit[t] - p.mass_edit[e]) / n;
    r.leak += (p.mass_edit[o] - p.mass_base[o]) / n;
    r.nt_base += p.mass_base[o] / n;
    r.nt_edit += p.mass_edit[o] / n;
    r.kl += p.kl / n;
    r.util += p.task_match / n;
    r.d_entropy += p.d_entropy / n;
    r.d_nll += p.d_nll / n;
    r.rho += p.rho / n;
    r.align += p.align / n;
    r.churn += p.churn / n;
  }
  return r;
}

json row_json(const RowStats& r) {
  return {{"default_score", r.default_score}, {"continuous", r.continuous}, {"gain", r.gain},
          {"d_lid", r.d_lid},                 {"lid_base", r.lid_base},     {"lid_edit", r.lid_edit},
          {"d_base", r.d_base},               {"d_edit", r.d_edit},         {"leak", r.leak},
          {"nt_base", r.nt_base},             {"nt_edit", r.nt_edit},       {"kl", r.kl},
          {"util", r.util},                   {"d_entropy", r.d_entropy},   {"d_nll", r.d_nll},
          {"rho", r.rho},                     {"align", r.align},           {"churn", r.churn}};
}

void append_records(std::string& out, const std::string& row, const EvalSummary& s,
                    const std::vector<EvalPrompt>& prompts, const Thresholds& thr) {
  for (std::size_t i = 0; i < s.per_prompt.size(); ++i) {
    const auto& p = s.per_prompt[i];
    double dl = p.lid_edit - p.lid_base;
    json j = {{"row", row},
              {"prompt_id", prompts[i].id},
              {"intent", prompts[i].intent},
              {"gain", p.gain},
              {"mass_base", p.mass_base},
              {"mass_edit", p.mass_edit},
              {"kl", p.kl},
              {"d_entropy", p.d_entropy},
              {"d_nll", p.d_nll},
              {"lid_base", p.lid_base},
              {"lid_edit", p.lid_edit},
              {"lid_nt_base", p.lid_nt_base},
              {"lid_nt_edit", p.lid_nt_edit},
              {"lid_abstain", p.lid_abstain},
              {"task_match", p.task_match},
              {"churn", p.churn},
              {"rho", p.rho},
              {"align", p.align},
              {"shared_shift", p.shared_shift},
              {"indicator", default_indicator(p.gain, dl, thr)},
              {"continuous", default_continuous(p.gain, dl)}};
    out += j.dump() + "\n";
  }
}

}  // namespace

// ---------------------------------------------------------------- state

struct Pipeline::State {
  std::optional<Model> model;
  std::optional<Corpus> corpus;
  std::optional<FreqTable> freq;
  std::map<PartitionVariant, Partition> partitions;
  std::optional<std::vector<Dictionary>> dicts;
  std::optional<CodeData> codes;
  std::vector<int> code_wrappers;
  std::map<std::string, json> manifests;
};

Pipeline::Pipeline(PipelineConfig cfg, fs::path root, Exec exec)
    : cfg_(std::move(cfg)), root_(std::move(root)), exec_(exec), st_(std::make_unique<State>()) {
  cfg_.derive_seeds();
  Eigen::setNbThreads(1);
}

Pipeline::~Pipeline() = default;

void Pipeline::log(const std::string& line) {
  fs::create_directories(root_);
  std::ofstream f(root_ / "run.log", std::ios::app);
  f << line << "\n";
}

json Pipeline::verified_manifest(const std::string& stage) {
  auto it = st_->manifests.find(stage);
  if (it != st_->manifests.end()) return it->second;
  fs::path mp = root_ / stage / "manifest.json";
  if (!fs::exists(mp)) throw ConfigError("stage '" + stage + "' has no manifest under " + root_.string());
  json m;
  try {
    m = json::parse(read_file(mp));
  } catch (const json::exception& e) {
    throw PinError("unreadable manifest " + mp.string() + ": " + e.what());
  }
  for (const auto& [name, sha] : m.at("outputs").items()) read_pinned(root_ / stage / name, sha.get<std::string>());
  st_->manifests[stage] = m;
  return m;
}

void Pipeline::write_outputs(const std::string& stage, const std::vector<std::pair<std::string, std::string>>& files,
                             const json& extra) {
  json outputs = json::object();
  for (const auto& [name, bytes] : files) {
    write_file(root_ / stage / name, bytes);
    outputs[name] = sha256_hex(bytes);
  }
  json inputs = json::object();
  for (const auto& s : stage_names()) {
    if (s == stage) break;
    fs::path mp = root_ / s / "manifest.json";
    if (fs::exists(mp)) inputs[s] = sha256_hex(read_file(mp));
  }
  json m = {{"schema_version", 1}, {"stage", stage}, {"config", cfg_}, {"inputs", inputs}, {"outputs", outputs}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_file(root_ / stage / "manifest.json", m.dump(2) + "\n");
  st_->manifests.erase(stage);
}

json Pipeline::stage_json(const std::string& stage, const std::string& file) {
  json m = verified_manifest(stage);
  if (!m.at("outputs").contains(file)) throw ConfigError("stage '" + stage + "' has no output " + file);
  return json::parse(read_pinned(root_ / stage / file, m.at("outputs").at(file).get<std::string>()));
}

const Model& Pipeline::model() {
  if (!st_->model) {
    Model m = Model::planted(cfg_.planted);
    fs::path mp = root_ / "partition" / "manifest.json";
    if (fs::exists(mp)) {
      json man = verified_manifest("partition");
      if (man.at("model_sha256").get<std::string>() != m.weights_sha256())
        throw PinError("model: pinned " + man.at("model_sha256").get<std::string>() + " got " + m.weights_sha256());
      if (man.at("tokenizer_sha256").get<std::string>() != tokenizer_sha256(m.vocab()))
        throw PinError("tokenizer hash mismatch");
    }
    st_->model.emplace(std::move(m));
  }
  return *st_->model;
}

const FreqTable& Pipeline::frequencies() {
  if (!st_->freq) {
    const Vocab& v = model().vocab();
    std::vector<std::vector<int>> docs;
    std::vector<Lang> langs;
    frequency_corpus(cfg_.corpus, v, docs, langs);
    st_->freq = count_frequencies(docs, langs, v.size());
  }
  return *st_->freq;
}

const Partition& Pipeline::partition(PartitionVariant variant) {
  auto it = st_->partitions.find(variant);
  if (it != st_->partitions.end()) return it->second;
  const Vocab& v = model().vocab();
  std::vector<std::string> strs;
  for (int u = 0; u < v.size(); ++u) strs.push_back(v.str(u));
  PartitionConfig pc = cfg_.partition;
  pc.variant = variant;
  Partition p = build_partition(strs, frequencies(), pc);
  fs::path mp = root_ / "partition" / "manifest.json";
  if (fs::exists(mp)) {
    json man = verified_manifest("partition");
    std::string name = "partition_" + variant_name(variant) + ".json";
    if (man.at("outputs").contains(name) &&
        man.at("outputs").at(name).get<std::string>() != sha256_hex(p.canonical() + "\n"))
      throw PinError("partition " + name + " does not match its pin");
  }
  return st_->partitions.emplace(variant, std::move(p)).first->second;
}

const Corpus& Pipeline::corpus() {
  if (!st_->corpus) {
    json man = verified_manifest("corpus");
    std::string jsonl = read_pinned(root_ / "corpus" / "units.jsonl", man.at("outputs").at("units.jsonl"));
    st_->corpus = corpus_from_jsonl(cfg_.corpus, jsonl);
  }
  return *st_->corpus;
}

const std::vector<Dictionary>& Pipeline::dictionaries() {
  if (!st_->dicts) {
    json man = verified_manifest("dict");
    std::string bin = read_pinned(root_ / "dict" / "dicts.bin", man.at("outputs").at("dicts.bin"));
    st_->dicts = dicts_from_bin(bin, model().L());
  }
  return *st_->dicts;
}

const CodeData& Pipeline::codes() {
  if (!st_->codes) {
    const Model& m = model();
    auto train = corpus().split(Split::Train);
    const int steps = *std::max_element(cfg_.localize.T.begin(), cfg_.localize.T.end());
    Suite st = weak_suite(m, train, cfg_.target, steps, exec_);
    Suite se = weak_suite(m, train, Lang::En, steps, exec_);
    CodeData cd;
    cd.Z_target = encode_layers(dictionaries(), collect_residuals_tf(m, st.prompts, steps, exec_));
    cd.Z_en = encode_layers(dictionaries(), collect_residuals_tf(m, se.prompts, steps, exec_));
    cd.Z_weak = cd.Z_en;
    st_->code_wrappers.clear();
    for (const auto* u : train)
      for (int t = 0; t < steps; ++t) st_->code_wrappers.push_back(u->wrapper);
    st_->codes = std::move(cd);
  }
  return *st_->codes;
}

Support Pipeline::support() { return stage_json("localize", "support.json").get<Support>(); }

void Pipeline::run(const std::string& stage) {
  if (stage == "all") {
    fs::create_directories(root_);
    write_file(root_ / "run.log", "");
    for (const auto& s : stage_names()) run(s);
    return;
  }
  if (stage == "partition") stage_partition();
  else if (stage == "corpus") stage_corpus();
  else if (stage == "dict") stage_dict();
  else if (stage == "localize") stage_localize();
  else if (stage == "geometry") stage_geometry();
  else if (stage == "steer") stage_steer();
  else if (stage == "eval") stage_eval();
  else if (stage == "report") stage_report();
  else throw ConfigError("unknown stage: " + stage);
}

// ---------------------------------------------------------------- stages

void Pipeline::stage_partition() {
  st_->model.reset();
  st_->partitions.clear();
  st_->manifests.erase("partition");
  Model m = Model::planted(cfg_.planted);
  st_->model.emplace(m);
  std::vector<std::pair<std::string, std::string>> files;
  std::string line = "[partition]";
  for (PartitionVariant v : {PartitionVariant::ScriptOnly, PartitionVariant::Diagnostic,
                             PartitionVariant::TransliterationAware}) {
    const Partition& p = partition(v);
    files.emplace_back("partition_" + variant_name(v) + ".json", p.canonical() + "\n");
    if (v == PartitionVariant::Diagnostic)
      line += " en=" + std::to_string(p.sets[0].size()) + " hi=" + std::to_string(p.sets[1].size()) +
              " es=" + std::to_string(p.sets[2].size()) + " shared=" + std::to_string(p.shared.size());
  }
  json freq = json::array();
  for (const auto& f : frequencies()) freq.push_back(f);
  files.emplace_back("freq.json", freq.dump() + "\n");
  write_outputs("partition", files,
                {{"model_sha256", m.weights_sha256()}, {"tokenizer_sha256", tokenizer_sha256(m.vocab())}});
  log(line + " model=" + m.weights_sha256().substr(0, 16));
}

void Pipeline::stage_corpus() {
  const Vocab& v = model().vocab();
  verified_manifest("partition");
  Corpus c = generate_corpus(cfg_.corpus, v);
  std::string jsonl = c.units_jsonl();
  json man = c.manifest(sha256_hex(jsonl));
  write_outputs("corpus", {{"units.jsonl", jsonl}, {"corpus_manifest.json", man.dump(2) + "\n"}}, json::object());
  st_->corpus.reset();
  int excluded = 0;
  for (const auto& u : c.units) excluded += u.excluded ? 1 : 0;
  log("[corpus] units=" + std::to_string(c.units.size()) + " excluded=" + std::to_string(excluded) +
      " train=" + std::to_string(c.split(Split::Train).size()) + " dev=" + std::to_string(c.split(Split::Dev).size()) +
      " test=" + std::to_string(c.split(Split::Test).size()));
}

void Pipeline::stage_dict() {
  const Model& m = model();
  const Vocab& v = m.vocab();
  auto collect = [&](Split s) {
    std::vector<std::vector<int>> toks;
    for (const auto& p : mixture(corpus().split(s), v)) toks.push_back(p.tokens);
    auto prompts = make_eval_prompts(m, toks, {}, {}, cfg_.dict_steps, exec_);
    return collect_residuals_tf(m, prompts, cfg_.dict_steps, exec_);
  };
  std::vector<Mat> train = collect(Split::Train), held = collect(Split::Dev);
  std::vector<Dictionary> dicts = train_dictionaries(train, cfg_.sae, exec_);
  json health = json::array();
  std::string line = "[dict]";
  for (int l = 1; l <= m.L(); ++l) {
    DictHealth h = dictionary_health(dicts[l - 1], held[l - 1]);
    health.push_back({{"layer", l},
                      {"rel_recon", h.rel_recon},
                      {"dead_fraction", h.dead_fraction},
                      {"healthy", h.rel_recon <= cfg_.geometry.health_rel_recon},
                      {"sha256", dictionary_sha256(dicts[l - 1])}});
    line += " L" + std::to_string(l) + "=" + fmt(h.rel_recon);
  }
  write_outputs("dict", {{"dicts.bin", dicts_bin(dicts)}, {"health.json", health.dump(2) + "\n"}},
                {{"train_rows", train[0].rows()}, {"heldout_rows", held[0].rows()}});
  st_->dicts.reset();
  st_->codes.reset();
  log(line);
}

namespace {

LiftInputs lift_inputs(const Model& m, const std::vector<Dictionary>& dicts, const std::vector<EvalPrompt>& prompts,
                       const Partition& part, const PipelineConfig& cfg) {
  LiftInputs in;
  in.model = &m;
  in.dicts = &dicts;
  in.prompts = &prompts;
  in.T = cfg.localize.T;
  in.target = cfg.target;
  in.w_target = part.weights(cfg.target, m.vocab_size());
  in.w_en = part.weights(Lang::En, m.vocab_size());
  return in;
}

std::vector<EvalPrompt> lift_prompts(const Model& m, const Corpus& c, const PipelineConfig& cfg, Exec exec) {
  auto dev = c.split(Split::Dev);
  if (static_cast<int>(dev.size()) > cfg.localize.lift_prompts) dev.resize(cfg.localize.lift_prompts);
  return weak_suite(m, dev, Lang::En, cfg.eval.m, exec).prompts;
}

json scored_json(const std::vector<FeatureScore>& fs) {
  json a = json::array();
  for (const auto& f : fs)
    a.push_back({{"layer", f.layer},
                 {"feature", f.feature},
                 {"sel", f.sel},
                 {"sel_tilde", f.sel_tilde},
                 {"lift_slope", f.lift_slope},
                 {"score", f.score},
                 {"marginal", f.marginal},
                 {"sign_stability", f.sign_stability},
                 {"format_flag", f.format_flag},
                 {"lift", f.lift}});
  return a;
}

}  // namespace

void Pipeline::stage_localize() {
  const Model& m = model();
  const auto& dicts = dictionaries();
  const CodeData& cd = codes();
  LocalizeData data{cd.Z_target, cd.Z_en, st_->code_wrappers};
  auto lp = lift_prompts(m, corpus(), cfg_, exec_);
  LiftInputs in = lift_inputs(m, dicts, lp, partition(), cfg_);
  LocalizeResult res = localize(data, in, cfg_.localize, exec_);

  // LAPE baseline over MLP units: activation probabilities on weak prompts of each language
  auto train = corpus().split(Split::Train);
  std::array<std::vector<Mat>, kNumLangs> acts;
  for (int k = 0; k < kNumLangs; ++k) {
    std::vector<std::vector<int>> toks;
    for (const auto* u : train) toks.push_back(u->weak[k]);
    acts[k] = collect_ffn(m, toks, exec_);
  }
  auto units = lape_units(acts);
  double tau = 0.0;
  std::vector<int> all_layers = steps_upto(m.L());
  auto mask = lape_detect_count(units, cfg_.target, res.support.size(), all_layers, &tau);
  json lape_units_j = json::array();
  for (const auto& u : units)
    lape_units_j.push_back({{"layer", u.layer}, {"unit", u.unit}, {"p", u.p}, {"entropy", u.entropy},
                            {"argmax", u.argmax}, {"live", u.live}});
  json mask_j = json::array();
  for (const auto& u : mask) mask_j.push_back({u.layer, u.unit});

  json result = {{"alpha_scale", res.alpha_scale}, {"stab_N", res.stab_N}, {"K", res.support.size()}};
  json lape = {{"units", lape_units_j}, {"count_matched", mask_j}, {"tau_H", tau}};
  write_outputs("localize",
                {{"support.json", json(res.support).dump() + "\n"},
                 {"scores.json", scored_json(res.scored).dump() + "\n"},
                 {"result.json", result.dump(2) + "\n"},
                 {"lape.json", lape.dump() + "\n"}},
                json::object());
  std::string line = "[localize] K=" + std::to_string(res.support.size()) + " stab_N=" + fmt(res.stab_N) + " N=";
  for (auto [l, j] : res.support.items) line += std::to_string(l) + ":" + std::to_string(j) + ",";
  log(line);
}

namespace {

std::map<int, std::vector<int>> by_layer(const Support& N) {
  std::map<int, std::vector<int>> out;
  for (auto [l, j] : N.items) out[l].push_back(j);
  for (auto& [l, v] : out) std::sort(v.begin(), v.end());
  return out;
}

}  // namespace

void Pipeline::stage_geometry() {
  const Model& m = model();
  const auto& dicts = dictionaries();
  const CodeData& cd = codes();
  Support N = support();
  json loc = stage_json("localize", "result.json");
  auto alpha_scale = loc.at("alpha_scale").get<std::vector<double>>();
  json health = stage_json("dict", "health.json");
  auto lp = lift_prompts(m, corpus(), cfg_, exec_);
  LiftInputs in = lift_inputs(m, dicts, lp, partition(), cfg_);
  LiftCache cache = build_lift_cache(in, exec_);
  auto supports = by_layer(N);

  std::vector<LayerGeometry> geo(m.L());
  std::vector<TensorRecord> bases;
  json layers = json::array();
  for (int l = 1; l <= m.L(); ++l) {
    std::vector<int> s = supports.count(l) ? supports[l] : std::vector<int>{};
    Mat dZ = restrict_cols(cd.Z_target[l - 1] - cd.Z_en[l - 1], s);
    LayerGeometry g = layer_geometry(l, s, dZ, cfg_.geometry, exec_);
    g.healthy = health.at(l - 1).at("healthy").get<bool>();
    if (g.r > 0) {
      Vec dir = Vec::Zero(dicts[l - 1].m());
      for (std::size_t k = 0; k < s.size(); ++k) dir[s[k]] = g.basis(static_cast<Eigen::Index>(k), 0);
      g.gain = layer_gain(in, cache, l, dir, cfg_.geometry.gain_eta * alpha_scale[l - 1]);
    }
    bases.push_back({TensorHeader{l, 0, -1, 0, 0}, g.basis});
    std::vector<double> sig(g.sigma.data(), g.sigma.data() + g.sigma.size());
    layers.push_back({{"layer", l},
                      {"support", s},
                      {"sigma", sig},
                      {"r_eff", g.r_eff},
                      {"istar", g.istar},
                      {"rank", g.r},
                      {"ratio12", g.ratio12()},
                      {"mass", g.mass},
                      {"gain", g.gain},
                      {"stab", g.stab},
                      {"stab_ref", g.stab_ref},
                      {"healthy", g.healthy},
                      {"degenerate", g.degenerate},
                      {"dz_sha256", sha256_hex(encode_tensors({{TensorHeader{l, 0, -1, 0, 0}, dZ}}))}});
    geo[l - 1] = std::move(g);
  }

  std::function<double(int, int)> objective;
  if (cfg_.geometry.mode == "dev_objective") {
    auto dev = corpus().split(Split::Dev);
    auto suite = weak_suite(m, dev, Lang::En, cfg_.eval.m, exec_);
    EvalConfig ec = eval_config(cfg_, cfg_.eval.T);
    auto base = compute_baselines(m, suite.prompts, ec, exec_);
    EvalContext ctx{&m, &dicts, &suite.prompts, &base, &partition(), ec, exec_};
    objective = [&, suite](int lo, int hi) {
      std::map<int, std::vector<int>> s;
      double instab = 0.0;
      for (int l = lo; l <= hi; ++l) {
        if (supports.count(l)) s[l] = supports[l];
        instab += 1.0 - geo[l - 1].stab;
      }
      if (s.empty()) return -cfg_.steer.alpha_stab * instab;
      SteerArtifact a;
      a.target = cfg_.target;
      a.window_lo = lo;
      a.window_hi = hi;
      a.lambda = cfg_.steer.lambda0;
      a = artifact_for_supports(a, s, cd, cfg_.geometry.r_max);
      PointMetrics pm = point_metrics(ctx.run(steering_hooks(dicts, a)), suite.prompts, ec, cfg_.steer.guard);
      return pm.gain - cfg_.steer.alpha_leak * std::max(0.0, pm.nontarget_shift) - cfg_.steer.alpha_kl * pm.kl -
             cfg_.steer.alpha_util * std::abs(pm.util) - cfg_.steer.alpha_stab * instab;
    };
  }
  Window W = select_window(geo, cfg_.geometry, objective);

  // window sweep at the selected width across all depths
  std::string sweep = "lo,hi,center,mass_stab,gain\n";
  for (int lo = 1; lo + W.width() - 1 <= m.L(); ++lo) {
    int hi = lo + W.width() - 1;
    sweep += std::to_string(lo) + "," + std::to_string(hi) + "," + fmt(0.5 * (lo + hi)) + "," +
             fmt(window_score(geo, lo, hi)) + "," + fmt(window_gain(geo, lo, hi)) + "\n";
  }
  std::vector<int> unit_ids;
  for (const auto* u : corpus().split(Split::Train)) unit_ids.push_back(u->id);
  json out = {{"layers", layers},
              {"window", {W.lo, W.hi}},
              {"window_score", W.score},
              {"window_gain", W.gain},
              {"mode", cfg_.geometry.mode},
              {"band", {allowed_band(m.L(), cfg_.geometry).first, allowed_band(m.L(), cfg_.geometry).second}},
              {"unit_ids", unit_ids}};
  write_outputs("geometry",
                {{"geometry.json", out.dump(2) + "\n"}, {"bases.bin", encode_tensors(bases)},
                 {"window_sweep.csv", sweep}},
                json::object());
  std::string line = "[geometry] W=" + std::to_string(W.lo) + ".." + std::to_string(W.hi) + " score=" + fmt(W.score);
  for (const auto& g : geo)
    if (!g.degenerate)
      line += " L" + std::to_string(g.layer) + "(mass=" + fmt(g.mass) + ",stab=" + fmt(g.stab) + ",gain=" + fmt(g.gain) + ")";
  log(line);
}

namespace {

Pins current_pins(const Model& m, const std::vector<Dictionary>& dicts) {
  Pins p;
  p.model = m.weights_sha256();
  p.tokenizer = tokenizer_sha256(m.vocab());
  for (const auto& d : dicts) p.dicts.push_back(dictionary_sha256(d));
  return p;
}

}  // namespace

void Pipeline::stage_steer() {
  const Model& m = model();
  const auto& dicts = dictionaries();
  const CodeData& cd = codes();
  json geo = stage_json("geometry", "geometry.json");
  json man = verified_manifest("geometry");
  auto bases = decode_tensors(read_pinned(root_ / "geometry" / "bases.bin", man.at("outputs").at("bases.bin")));
  Support N = support();
  auto supports = by_layer(N);

  SteerArtifact a;
  a.target = cfg_.target;
  a.window_lo = geo.at("window")[0];
  a.window_hi = geo.at("window")[1];
  a.mode = cfg_.steer.mode == "kappa" ? SuppressionMode::Kappa : SuppressionMode::FixedRatio;
  a.gamma = 1.0;
  a.policy = cfg_.steer.policy == "prompt_only" ? EditPolicy::PromptOnly : EditPolicy::AllSteps;
  a.trust_tau = cfg_.steer.trust_tau;
  a.normalize_mu = cfg_.steer.normalize_mu;
  a.pins = current_pins(m, dicts);
  for (int l = a.window_lo; l <= a.window_hi; ++l) {
    if (!supports.count(l)) continue;
    Mat basis;
    for (const auto& r : bases)
      if (r.header.layer == l) basis = r.data;
    a.layers.push_back(build_layer_artifact(l, supports[l], cd, basis));
  }
  if (a.layers.empty()) throw GuardrailInfeasible("no support inside the selected window");

  auto dev = corpus().split(Split::Dev);
  auto suite = weak_suite(m, dev, Lang::En, cfg_.eval.m, exec_);
  EvalConfig ec = eval_config(cfg_, cfg_.eval.T);
  auto base = compute_baselines(m, suite.prompts, ec, exec_);
  EvalContext ctx{&m, &dicts, &suite.prompts, &base, &partition(), ec, exec_};
  const double l0 = cfg_.steer.lambda0;
  OperatingPoint op = select_operating_point(ctx, a, {0.0, l0, 2.0 * l0}, cfg_.steer.rhos, cfg_.steer.guard);
  json grid = json::array();
  for (const auto& p : op.grid) grid.push_back(point_json(p));
  const PointMetrics& chosen = op.point();
  a.lambda = chosen.lambda;
  a.rho = chosen.rho;
  KappaResult kr = choose_kappa(ctx, a, a.lambda, chosen.gain);
  if (a.mode == SuppressionMode::Kappa) a.kappa = kr.kappa;
  a.gamma = cfg_.steer.gamma;
  json opj = {{"grid", grid},
              {"chosen", point_json(chosen)},
              {"feasible", op.feasible},
              {"kappa", {{"kappa", kr.kappa}, {"gain", kr.gain}, {"kl", kr.kl}, {"feasible", kr.feasible},
                         {"gamma_gain", chosen.gain}}}};
  fs::create_directories(root_ / "steer");
  save_artifact(root_ / "steer", a);
  write_outputs("steer",
                {{"steer.json", read_file(root_ / "steer" / "steer.json")},
                 {"steer.bin", read_file(root_ / "steer" / "steer.bin")},
                 {"operating_point.json", opj.dump(2) + "\n"}},
                json::object());
  log("[steer] lambda=" + fmt(a.lambda) + " rho=" + fmt(a.rho) + " gain=" + fmt(chosen.gain) + " kl=" + fmt(chosen.kl) +
      " leak=" + fmt(chosen.nontarget_shift) + " feasible=" + (op.feasible ? "1" : "0"));
  if (!op.feasible) throw GuardrailInfeasible("no admissible operating point with lambda > 0");
}

void Pipeline::stage_eval() {
  const Model& m = model();
  const auto& dicts = dictionaries();
  const CodeData& cd = codes();
  const Vocab& v = m.vocab();
  verified_manifest("steer");
  SteerArtifact a = load_artifact(root_ / "steer");
  verify_pins(a, current_pins(m, dicts));
  a.gamma = cfg_.steer.gamma;
  const Lang tgt = cfg_.target, nt = nontarget_of(tgt);
  const Partition& part = partition();
  const Guardrails& guard = cfg_.steer.guard;
  Support N = support();
  json geo = stage_json("geometry", "geometry.json");
  json loc = stage_json("localize", "result.json");
  json scored = stage_json("localize", "scores.json");
  json opj = stage_json("steer", "operating_point.json");
  auto alpha_scale = loc.at("alpha_scale").get<std::vector<double>>();

  const int mlen = cfg_.eval.m;
  EvalConfig ec = eval_config(cfg_, cfg_.eval.T);
  EvalConfig ec_all = eval_config(cfg_, steps_upto(mlen));
  auto test_units = corpus().split(Split::Test);
  Suite test = weak_suite(m, test_units, Lang::En, mlen, exec_);
  auto base = compute_baselines(m, test.prompts, ec_all, exec_);
  EvalContext ctx{&m, &dicts, &test.prompts, &base, &part, ec, exec_};

  // thresholds from no-edit format-variant re-renderings on the dev split
  auto dev_units = corpus().split(Split::Dev);
  Suite dev = weak_suite(m, dev_units, Lang::En, mlen, exec_);
  auto dev_base = compute_baselines(m, dev.prompts, ec_all, exec_);
  std::vector<std::vector<int>> variant_toks;
  for (const auto* u : dev_units) variant_toks.push_back(wrap(u->body[0], (u->wrapper + 1) % 3, v));
  auto variant = evaluate(m, retokenized(dev.prompts, variant_toks), dev_base, part, nullptr, ec, exec_);
  std::vector<double> ms, ls;
  for (const auto& p : variant.per_prompt) {
    ms.push_back(p.gain);
    ls.push_back(p.lid_edit - p.lid_base);
  }
  Thresholds thr = calibrate_thresholds(ms, ls);

  std::string records;
  json rows = json::object();
  auto add_row = [&](const std::string& name, const EvalSummary& s) {
    append_records(records, name, s, test.prompts, thr);
    RowStats r = row_stats(s, thr, tgt, nt);
    rows[name] = row_json(r);
    return r;
  };

  HookFactory full = steering_hooks(dicts, a);
  EvalSummary s_none = ctx.run(nullptr);
  EvalSummary s_full = ctx.run(full);
  add_row("no-edit", s_none);

  std::vector<std::vector<int>> cue_toks;
  for (const auto* u : test_units) cue_toks.push_back(explicit_prompt(*u, tgt, v));
  add_row("prompt-cue", evaluate(m, retokenized(test.prompts, cue_toks), base, part, nullptr, ec, exec_));

  std::vector<EvalSummary> rand_runs;
  for (int s = 0; s < cfg_.steer.random_seeds; ++s) {
    SteerArtifact r = random_support_artifact(a, cd, dicts[0].m(), cfg_.geometry.r_max,
                                              derive_seed(cfg_.seed, "random_support", static_cast<std::uint64_t>(s)));
    rand_runs.push_back(ctx.run(steering_hooks(dicts, r)));
  }
  RowStats r_rand = add_row("random-N", average_summaries(rand_runs));

  // matched-width window disjoint from W, supports re-localized by Score at each layer
  const int width = a.window_hi - a.window_lo + 1;
  int off_lo = a.window_hi + 1 + width - 1 <= m.L() ? a.window_hi + 1 : std::max(1, a.window_lo - width);
  std::map<int, std::vector<int>> off;
  const int per_layer = std::max(1, static_cast<int>(std::lround(double(a.support_size()) / width)));
  {
    std::vector<FeatureScore> fs;
    for (const auto& e : scored) {
      FeatureScore f;
      f.layer = e.at("layer");
      f.feature = e.at("feature");
      f.score = e.at("score");
      f.lift_slope = e.at("lift_slope");
      f.sel_tilde = e.at("sel_tilde");
      fs.push_back(f);
    }
    std::sort(fs.begin(), fs.end(), ranks_before);
    for (const auto& f : fs)
      if (f.layer >= off_lo && f.layer < off_lo + width && static_cast<int>(off[f.layer].size()) < per_layer)
        off[f.layer].push_back(f.feature);
  }
  SteerArtifact a_off = a;
  a_off.window_lo = off_lo;
  a_off.window_hi = off_lo + width - 1;
  a_off = artifact_for_supports(a_off, off, cd, cfg_.geometry.r_max);
  add_row("not-W", ctx.run(steering_hooks(dicts, a_off)));

  add_row("N-only", ctx.run(steering_hooks(dicts, a, EditVariant::NoProjection)));
  int r_dense = 1;
  for (const auto& la : a.layers) r_dense = std::max<int>(r_dense, static_cast<int>(la.basis.cols()));
  std::map<int, std::vector<int>> dense;
  for (int l = a.window_lo; l <= a.window_hi; ++l) dense[l] = steps_upto(dicts[0].m()), std::for_each(dense[l].begin(), dense[l].end(), [](int& x) { --x; });
  add_row("S-only", ctx.run(steering_hooks(dicts, artifact_for_supports(a, dense, cd, cfg_.geometry.r_max, r_dense))));
  RowStats r_full = add_row("FOXP2-full", s_full);
  EvalSummary s_woN = ctx.run(steering_hooks(dicts, a, EditVariant::WithoutN));
  add_row("without-N", s_woN);
  RowStats r_woS = add_row("without-S", ctx.run(steering_hooks(dicts, a, EditVariant::WithoutS)));

  // LAPE: count-matched mask inside the same window, mean-shift steering, eta chosen under the guardrails on dev
  json lape = stage_json("localize", "lape.json");
  std::vector<LapeUnit> units;
  for (const auto& e : lape.at("units")) {
    LapeUnit u;
    u.layer = e.at("layer");
    u.unit = e.at("unit");
    u.p = e.at("p").get<std::array<double, kNumLangs>>();
    u.entropy = e.at("entropy");
    u.argmax = e.at("argmax");
    u.live = e.at("live");
    units.push_back(u);
  }
  std::vector<int> wl;
  for (int l = a.window_lo; l <= a.window_hi; ++l) wl.push_back(l);
  double lape_tau = 0.0;
  auto mask = lape_detect_count(units, tgt, a.support_size(), wl, &lape_tau);
  std::vector<Vec> shift(m.L());
  {
    auto train = corpus().split(Split::Train);
    std::vector<std::vector<int>> tt, te;
    for (const auto* u : train) {
      tt.push_back(u->weak[static_cast<int>(tgt)]);
      te.push_back(u->weak[0]);
    }
    auto at = collect_ffn(m, tt, exec_), ae = collect_ffn(m, te, exec_);
    for (int l = 0; l < m.L(); ++l) shift[l] = (at[l].colwise().mean() - ae[l].colwise().mean()).transpose();
  }
  EvalContext dctx{&m, &dicts, &dev.prompts, &dev_base, &part, ec, exec_};
  std::vector<PointMetrics> lape_grid;
  for (double eta : cfg_.steer.lape_eta) {
    Hooks h = lape_hooks(mask, LapeShift::MeanShift, eta, shift);
    PointMetrics pm = point_metrics(dctx.run([h](int, DiagSink*) { return h; }), dev.prompts, ec, guard);
    pm.lambda = eta;
    lape_grid.push_back(pm);
  }
  int li = choose_admissible(lape_grid);
  double lape_eta = li >= 0 ? lape_grid[li].lambda : 0.0;
  Hooks lh = lape_hooks(mask, LapeShift::MeanShift, lape_eta, shift);
  RowStats r_lape = add_row("LAPE", ctx.run([lh](int, DiagSink*) { return lh; }));

  // matched controls
  const int tmax = *std::max_element(ec.T.begin(), ec.T.end());
  StepDrift drift = measure_step_drift(ctx, full, tmax);
  std::vector<Baseline> base_T = base;
  for (auto& b : base_T) b.probs.resize(tmax);
  StepMatch tm = match_temperature(base_T, drift.d_entropy);
  StepMatch nm = match_noise_kl(base_T, test.prompts, drift.kl, derive_seed(cfg_.seed, "kl_control"));
  RowStats r_temp = add_row("entropy-matched", ctx.run(temperature_hooks(tm.param)));
  RowStats r_noise = add_row("KL-matched", ctx.run(noise_hooks(nm.param, test.prompts, m.vocab_size(),
                                                               derive_seed(cfg_.seed, "kl_control"))));
  StepDrift d_temp = measure_step_drift(ctx, temperature_hooks(tm.param), tmax);
  StepDrift d_noise = measure_step_drift(ctx, noise_hooks(nm.param, test.prompts, m.vocab_size(),
                                                          derive_seed(cfg_.seed, "kl_control")), tmax);

  // lambda grid on test at the chosen rho
  const double l0 = cfg_.steer.lambda0;
  json lambda_curve = json::array();
  for (double lam : {0.0, l0, 2.0 * l0}) {
    SteerArtifact c = a;
    c.lambda = lam;
    PointMetrics pm = point_metrics(ctx.run(steering_hooks(dicts, c)), test.prompts, ec, guard);
    pm.lambda = lam;
    pm.rho = c.rho;
    lambda_curve.push_back(point_json(pm));
  }

  // horizon sweep
  json horizon = json::array();
  for (int hmax : {3, 5, mlen}) {
    EvalContext hc = ctx;
    hc.cfg = eval_config(cfg_, steps_upto(hmax));
    RowStats r = row_stats(hc.run(full), thr, tgt, nt);
    horizon.push_back({{"T", hmax}, {"gain", r.gain}, {"d_lid", r.d_lid}, {"default_score", r.default_score},
                       {"kl", r.kl}});
  }

  // token-set variants, dropout, shared-token inflation
  json bands = json::array();
  for (PartitionVariant pv : {PartitionVariant::ScriptOnly, PartitionVariant::Diagnostic,
                              PartitionVariant::TransliterationAware}) {
    const Partition& p = partition(pv);
    EvalSummary s = evaluate(m, test.prompts, base, p, full, ec, exec_);
    bands.push_back({{"variant", variant_name(pv)}, {"shared", "hard"}, {"gain", s.mean_gain()}});
    Partition soft = p;
    soft.shared_weight = SharedWeight::Soft;
    EvalSummary ss = evaluate(m, test.prompts, base, soft, full, ec, exec_);
    bands.push_back({{"variant", variant_name(pv)}, {"shared", "soft"}, {"gain", ss.mean_gain()}});
  }
  json dropout_rows = json::array();
  {
    EvalSummary s0 = evaluate(m, test.prompts, base, part, full, ec, exec_);
    dropout_rows.push_back({{"rho", 0.0}, {"mode", "frequency_weighted"}, {"gain", s0.mean_gain()},
                            {"target_shift", s0.mean_mass_shift(tgt)}});
    for (DropoutMode dm : {DropoutMode::FrequencyWeighted, DropoutMode::Uniform})
      for (double rho : cfg_.eval.dropout) {
        Partition p = dropout(part, tgt, rho, dm, frequencies(), derive_seed(cfg_.seed, "dropout"));
        p = dropout(p, Lang::En, rho, dm, frequencies(), derive_seed(cfg_.seed, "dropout"));
        EvalSummary s = evaluate(m, test.prompts, base, p, full, ec, exec_);
        dropout_rows.push_back({{"rho", rho},
                                {"mode", dm == DropoutMode::FrequencyWeighted ? "frequency_weighted" : "uniform"},
                                {"gain", s.mean_gain()},
                                {"target_shift", s.mean_mass_shift(tgt)}});
      }
  }
  Partition sad = part;
  {
    auto& set = sad.sets[static_cast<int>(tgt)];
    set.insert(set.end(), part.shared.begin(), part.shared.end());
    std::sort(set.begin(), set.end());
    sad.shared.clear();
  }
  double g_diag = s_full.mean_gain();
  double g_sad = evaluate(m, test.prompts, base, sad, full, ec, exec_).mean_gain();
  double inflation = inflation_fraction(g_diag, g_sad);

  // necessity and sufficiency
  std::vector<double> woN;
  for (const auto& p : s_woN.per_prompt) woN.push_back(p.gain);
  Interval ci_woN = bootstrap_ci(woN, cfg_.eval.bootstrap, 0.05, derive_seed(cfg_.seed, "necessity_ci"));
  std::vector<double> full_g;
  for (const auto& p : s_full.per_prompt) full_g.push_back(p.gain);
  Interval ci_full = bootstrap_ci(full_g, cfg_.eval.bootstrap, 0.05, derive_seed(cfg_.seed, "full_ci"));

  std::vector<double> lambdas;
  for (double k : cfg_.steer.sufficiency_multipliers) lambdas.push_back(k * l0);
  const double dev_full_gain = opj.at("chosen").at("gain").get<double>();
  auto suff = sufficiency_sweep(dctx, a, N, cd, dicts[0].m(), lambdas, guard, dev_full_gain,
                                cfg_.steer.sufficiency_r_cap);
  json suff_j = json::array();
  for (const auto& r : suff)
    suff_j.push_back({{"setting", r.setting}, {"k", r.k}, {"r", r.r}, {"fraction", r.fraction},
                      {"point", point_json(r.best)}});

  // first-order linearity
  json lin = json::array();
  double lin_worst = 0.0;
  std::vector<double> agrid = cfg_.localize.alpha_grid;
  for (const auto& e : scored) {
    int l = e.at("layer"), j = e.at("feature");
    if (!N.contains(l, j)) continue;
    auto lift = e.at("lift").get<std::vector<double>>();
    std::vector<double> ratio;
    for (std::size_t k = 0; k < lift.size(); ++k) ratio.push_back(lift[k] / agrid[k]);
    double mean = std::accumulate(ratio.begin(), ratio.end(), 0.0) / double(ratio.size());
    double spread = (*std::max_element(ratio.begin(), ratio.end()) - *std::min_element(ratio.begin(), ratio.end())) /
                    std::max(std::abs(mean), 1e-300);
    lin_worst = std::max(lin_worst, spread);
    lin.push_back({{"layer", l}, {"feature", j}, {"ratio", ratio}, {"spread", spread}});
  }
  int fd_agree = 0, fd_total = 0;
  {
    const Vec wt = part.weights(tgt, m.vocab_size()), we = part.weights(Lang::En, m.vocab_size());
    auto D = [&](const Vec& p) { return mass(p, wt) - mass(p, we); };
    const int np = std::min<int>(cfg_.eval.fd_prompts, static_cast<int>(dev.prompts.size()));
    for (auto [l, j] : N.items) {
      Vec atom = dicts[l - 1].W.col(j);
      double small = agrid.front() * alpha_scale[l - 1];
      double eps = 1e-3 * small;
      for (int p = 0; p < np; ++p)
        for (int t : ec.T) {
          std::vector<int> ctxv = dev.prompts[p].tokens;
          for (int s = 1; s < t; ++s) ctxv.push_back(dev.prompts[p].prefix[s - 1]);
          std::vector<Vec> res;
          Vec p0 = softmax(m.forward(ctxv, t, nullptr, &res));
          const Vec& h = res[l];
          double plus = D(softmax(m.forward_from(l, h + eps * atom, t, nullptr)));
          double minus = D(softmax(m.forward_from(l, h - eps * atom, t, nullptr)));
          double pred = (plus - minus) / (2.0 * eps);
          double actual = D(softmax(m.forward_from(l, h + small * atom, t, nullptr))) - D(p0);
          bool agree = (pred > 0 && actual > 0) || (pred < 0 && actual < 0) || (pred == 0 && actual == 0);
          fd_agree += agree ? 1 : 0;
          ++fd_total;
        }
    }
  }

  // KL buckets
  std::string kl_csv = "bucket,kl_lo,kl_hi,n,gain\n";
  {
    std::vector<std::pair<double, double>> kv;
    for (const auto& p : s_full.per_prompt) kv.emplace_back(p.kl, p.gain);
    std::sort(kv.begin(), kv.end());
    const int nb = 4;
    for (int b = 0; b < nb; ++b) {
      std::size_t lo = kv.size() * b / nb, hi = kv.size() * (b + 1) / nb;
      if (hi <= lo) continue;
      double g = 0;
      for (std::size_t i = lo; i < hi; ++i) g += kv[i].second;
      kl_csv += std::to_string(b + 1) + "," + fmt(kv[lo].first) + "," + fmt(kv[hi - 1].first) + "," +
                std::to_string(hi - lo) + "," + fmt(g / double(hi - lo)) + "\n";
    }
  }

  PointMetrics op_test = point_metrics(s_full, test.prompts, ec, guard);
  op_test.lambda = a.lam();
  op_test.rho = a.rho;
  op_test.beta = a.beta();
  json summary = {
      {"thresholds", {{"tau_M", thr.tau_M}, {"tau_L", thr.tau_L}}},
      {"rows", rows},
      {"operating_point", {{"lambda", a.lambda}, {"rho", a.rho}, {"gamma", a.gamma}, {"test", point_json(op_test)},
                           {"dev", opj.at("chosen")}}},
      {"lambda_curve", lambda_curve},
      {"horizon", horizon},
      {"necessity", {{"without_N_ci", {ci_woN.lo, ci_woN.hi}}, {"without_N_mean", ci_woN.mean},
                     {"full_ci", {ci_full.lo, ci_full.hi}}, {"full_gain", r_full.gain},
                     {"random_gain", r_rand.gain}, {"without_S_gain", r_woS.gain},
                     {"random_fraction", r_full.gain != 0.0 ? r_rand.gain / r_full.gain : 0.0}}},
      {"sufficiency", {{"K", N.size()}, {"full_gain_dev", dev_full_gain}, {"rows", suff_j}}},
      {"controls", {{"temperature", tm.param}, {"temperature_feasible", tm.feasible},
                    {"sigma", nm.param}, {"sigma_feasible", nm.feasible},
                    {"target_d_entropy", drift.d_entropy}, {"achieved_d_entropy", d_temp.d_entropy},
                    {"target_kl", drift.kl}, {"achieved_kl", d_noise.kl},
                    {"foxp2_default_score", r_full.default_score},
                    {"entropy_default_score", r_temp.default_score},
                    {"kl_default_score", r_noise.default_score}}},
      {"lape", {{"eta", lape_eta}, {"tau_H", lape_tau}, {"units", mask.size()}, {"gain", r_lape.gain},
                {"grid", [&] {
                   json g = json::array();
                   for (const auto& p : lape_grid) g.push_back(point_json(p));
                   return g;
                 }()}}},
      {"token_sets", {{"bands", bands}, {"dropout", dropout_rows}, {"gain_diagnostic", g_diag},
                      {"gain_shared_as_diagnostic", g_sad}, {"inflation", inflation}}},
      {"linearity", {{"features", lin}, {"worst_spread", lin_worst}, {"fd_agree", fd_agree},
                     {"fd_total", fd_total}}},
      {"window", {a.window_lo, a.window_hi}},
      {"not_W_window", {a_off.window_lo, a_off.window_hi}}};

  std::string horizon_csv = "T,gain,d_lid,default_score,kl\n";
  for (const auto& h : horizon)
    horizon_csv += std::to_string(h.at("T").get<int>()) + "," + fmt(h.at("gain")) + "," + fmt(h.at("d_lid")) + "," +
                   fmt(h.at("default_score")) + "," + fmt(h.at("kl")) + "\n";
  std::string bands_csv = "variant,shared,gain\n";
  for (const auto& b : bands)
    bands_csv += b.at("variant").get<std::string>() + "," + b.at("shared").get<std::string>() + "," +
                 fmt(b.at("gain")) + "\n";
  std::string dropout_csv = "mode,rho,gain,target_shift\n";
  for (const auto& d : dropout_rows)
    dropout_csv += d.at("mode").get<std::string>() + "," + fmt(d.at("rho")) + "," + fmt(d.at("gain")) + "," +
                   fmt(d.at("target_shift")) + "\n";

  write_outputs("eval",
                {{"records.jsonl", records},
                 {"summary.json", summary.dump(2) + "\n"},
                 {"horizon.csv", horizon_csv},
                 {"token_bands.csv", bands_csv},
                 {"dropout.csv", dropout_csv},
                 {"kl_buckets.csv", kl_csv}},
                json::object());
  log("[eval] gain=" + fmt(r_full.gain) + " default=" + fmt(r_full.default_score) + " kl=" + fmt(r_full.kl) +
      " leak=" + fmt(r_full.leak) + " random=" + fmt(r_rand.gain) + " temp=" + fmt(r_temp.default_score) +
      " noise=" + fmt(r_noise.default_score) + " inflation=" + fmt(inflation));
}

void Pipeline::stage_report() {
  json man = verified_manifest("eval");
  std::string jsonl = read_pinned(root_ / "eval" / "records.jsonl", man.at("outputs").at("records.jsonl"));
  const Lang tgt = cfg_.target, nt = nontarget_of(tgt);
  const int t = static_cast<int>(tgt), e = 0, o = static_cast<int>(nt);
  struct Acc {
    int n = 0;
    double ind = 0, d_base = 0, d_edit = 0, lid_b = 0, lid_e = 0, nt_b = 0, nt_e = 0, kl = 0, util = 0;
  };
  std::map<std::string, Acc> acc;
  std::istringstream in(jsonl);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json r = json::parse(line);
    Acc& a = acc[r.at("row").get<std::string>()];
    auto mb = r.at("mass_base").get<std::vector<double>>(), me = r.at("mass_edit").get<std::vector<double>>();
    ++a.n;
    a.ind += r.at("indicator").get<int>();
    a.d_base += mb[t] - mb[e];
    a.d_edit += me[t] - me[e];
    a.lid_b += r.at("lid_base").get<double>();
    a.lid_e += r.at("lid_edit").get<double>();
    a.nt_b += mb[o];
    a.nt_e += me[o];
    a.kl += r.at("kl").get<double>();
    a.util += r.at("task_match").get<double>();
  }
  const std::vector<std::string> order = {"no-edit", "prompt-cue", "random-N", "not-W", "N-only", "S-only",
                                          "FOXP2-full", "LAPE", "entropy-matched", "KL-matched", "without-N",
                                          "without-S"};
  const std::string T = lang_name(tgt), NT = lang_name(nt);
  std::string md = "| Row | Default" + T + " | Δ_mass " + T + " | Δ_lid " + T + " | " + T + "→" + NT +
                   " | KL_T | ΔS |\n|---|---|---|---|---|---|---|\n";
  std::string csv = "row,default,d_mass_base,d_mass_edit,lid_base,lid_edit,leak_base,leak_edit,kl,delta_s\n";
  const std::string gap = "n/a";
  for (const auto& name : order) {
    auto it = acc.find(name);
    if (it == acc.end() || it->second.n == 0) {
      md += "| " + name + " | " + gap + " | " + gap + " | " + gap + " | " + gap + " | " + gap + " | " + gap + " |\n";
      csv += name + ",,,,,,,,,\n";
      continue;
    }
    const Acc& a = it->second;
    const double n = a.n;
    double ind = a.ind / n, db = a.d_base / n, de = a.d_edit / n, lb = a.lid_b / n, le = a.lid_e / n;
    double nb = a.nt_b / n, ne = a.nt_e / n, kl = a.kl / n, ds = a.util / n;
    md += "| " + name + " | " + format_cell(ind, 0.0, ind) + " | " + format_cell(de - db, db, de) + " | " +
          format_cell(le - lb, lb, le) + " | " + format_cell(ne - nb, nb, ne) + " | " + format_cell(kl, 0.0, kl) +
          " | " + format_signed(round_half_away(ds, 2)) + " |\n";
    csv += name + "," + fmt(ind) + "," + fmt(db) + "," + fmt(de) + "," + fmt(lb) + "," + fmt(le) + "," + fmt(nb) + "," +
           fmt(ne) + "," + fmt(kl) + "," + fmt(ds) + "\n";
  }
  json summary = stage_json("eval", "summary.json");
  std::string suff = "| Setting | k | r | fraction of full | λ | KL_T | " + T + "→" + NT + " |\n|---|---|---|---|---|---|---|\n";
  for (const auto& r : summary.at("sufficiency").at("rows")) {
    const auto& p = r.at("point");
    suff += "| " + r.at("setting").get<std::string>() + " | " + std::to_string(r.at("k").get<int>()) + " | " +
            std::to_string(r.at("r").get<int>()) + " | " + fmt(r.at("fraction")) + " | " + fmt(p.at("lambda")) +
            " | " + fmt(p.at("kl")) + " | " + fmt(p.at("nontarget_shift")) + " |\n";
  }
  write_outputs("report", {{"table.md", md}, {"table.csv", csv}, {"sufficiency.md", suff}}, json::object());
  log("[report] rows=" + std::to_string(acc.size()));
}

}  // namespace foxp2
