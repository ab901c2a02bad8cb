#pragma once

#include "foxp2/common.hpp"
#include "foxp2/corpus.hpp"
#include "foxp2/dictionary.hpp"
#include "foxp2/geometry.hpp"
#include "foxp2/localize.hpp"
#include "foxp2/model.hpp"
#include "foxp2/steer.hpp"
#include "foxp2/tokens.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace foxp2 {

struct SteerStageConfig {
  double lambda0 = 0.2;
  std::vector<double> rhos = {0.0, 0.5, 1.0};
  std::string mode = "fixed_ratio";  // or "kappa"
  double gamma = 1.0;
  std::string policy = "all_steps";
  double trust_tau = 0.0;
  bool normalize_mu = false;
  Guardrails guard;
  std::vector<double> sufficiency_multipliers = {0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0};
  int sufficiency_r_cap = 2;
  int random_seeds = 5;
  std::vector<double> lape_eta = {0.25, 0.5, 1.0, 2.0, 4.0};
  // dev-objective window penalties
  double alpha_leak = 1.0, alpha_kl = 1.0, alpha_util = 1.0, alpha_stab = 0.1;
};

struct EvalStageConfig {
  int m = 8;  // frozen teacher-forced prefix length
  int lid_len = 5;
  std::vector<int> T = {1, 2, 3};
  int bootstrap = 1000;
  std::vector<double> dropout = {0.1, 0.2};
  int fd_prompts = 20;
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  Lang target = Lang::Hi;
  PlantedConfig planted;
  PartitionConfig partition;
  CorpusConfig corpus;
  SaeConfig sae;
  int dict_steps = 3;  // teacher-forced steps per prompt collected for dictionary training
  LocalizeConfig localize;
  GeometryConfig geometry;
  SteerStageConfig steer;
  EvalStageConfig eval;

  // Child seeds derived from the master seed, stage by stage.
  void derive_seeds();
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);
PipelineConfig load_config(const std::filesystem::path& p);

const std::vector<std::string>& stage_names();

// Exit codes: 0 ok, 2 pin violation, 3 guardrail infeasibility, 4 config error.
int exit_code_for(const std::exception& e);

std::filesystem::path artifact_root(const std::optional<std::string>& cli_root);

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, std::filesystem::path root, Exec exec = Exec::Parallel);
  ~Pipeline();

  // One stage, or "all" to chain every stage in order.
  void run(const std::string& stage);

  const PipelineConfig& config() const { return cfg_; }
  const std::filesystem::path& root() const { return root_; }

  // Verified loaders for downstream consumers.
  const Model& model();
  const Corpus& corpus();
  const Partition& partition(PartitionVariant v = PartitionVariant::Diagnostic);
  const FreqTable& frequencies();
  const std::vector<Dictionary>& dictionaries();
  const CodeData& codes();
  Support support();
  nlohmann::json stage_json(const std::string& stage, const std::string& file);

 private:
  struct State;
  PipelineConfig cfg_;
  std::filesystem::path root_;
  Exec exec_;
  std::unique_ptr<State> st_;

  void stage_partition();
  void stage_corpus();
  void stage_dict();
  void stage_localize();
  void stage_geometry();
  void stage_steer();
  void stage_eval();
  void stage_report();

  nlohmann::json verified_manifest(const std::string& stage);
  void write_outputs(const std::string& stage, const std::vector<std::pair<std::string, std::string>>& files,
                     const nlohmann::json& extra);
  void log(const std::string& line);
};

std::string tokenizer_sha256(const Vocab& v);

}  // namespace foxp2
