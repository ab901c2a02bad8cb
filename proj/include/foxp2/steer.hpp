#pragma once

#include "foxp2/common.hpp"
#include "foxp2/dictionary.hpp"
#include "foxp2/eval.hpp"
#include "foxp2/geometry.hpp"
#include "foxp2/localize.hpp"
#include "foxp2/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace foxp2 {

enum class EditPolicy { AllSteps, PromptOnly };
enum class SuppressionMode { FixedRatio, Kappa };
// Full edit; support removed (complement mask); subspace removed (delta - P_S delta); no P_S projection.
enum class EditVariant { Full, WithoutN, WithoutS, NoProjection };

struct LayerArtifact {
  int layer = 0;
  std::vector<int> support;  // sorted feature ids
  Vec mu_target;             // E[z_target - z_en] on the support
  Vec mu_en;                 // E[z] over English weak prompts on the support
  Mat basis;                 // |N| x r, orthonormal columns
};

struct Pins {
  std::string model;
  std::string tokenizer;
  std::string hook = "residual_post";
  std::vector<std::string> dicts;
};

struct SteerArtifact {
  Lang target = Lang::Hi;
  int window_lo = 0;
  int window_hi = -1;
  std::vector<LayerArtifact> layers;
  SuppressionMode mode = SuppressionMode::FixedRatio;
  double lambda = 0.0;
  double rho = 0.0;    // beta = rho * lambda in fixed-ratio mode
  double kappa = 0.0;  // beta = kappa in drift-minimizing mode
  double gamma = 1.0;  // intensity, scales lambda and beta jointly
  EditPolicy policy = EditPolicy::AllSteps;
  double trust_tau = 0.0;  // 0 = off
  bool normalize_mu = false;
  Pins pins;

  const LayerArtifact* at(int layer) const;
  bool in_window(int layer) const { return layer >= window_lo && layer <= window_hi; }
  double lam() const { return gamma * lambda; }
  double beta() const { return gamma * (mode == SuppressionMode::Kappa ? kappa : rho * lambda); }
  int support_size() const;
};

Mat restrict_cols(const Mat& Z, const std::vector<int>& cols);

// Per-layer code matrices (full code space). Z_target/Z_en are row-paired renderings.
struct CodeData {
  std::vector<Mat> Z_target;
  std::vector<Mat> Z_en;
  std::vector<Mat> Z_weak;  // English weak prompts
};

// Throws ConfigError on an empty support.
LayerArtifact build_layer_artifact(int layer, const std::vector<int>& support, const CodeData& data,
                                   const Mat& basis);
// Basis from the SVD of the restricted shift matrix: rank by the spectral rule when r_fixed = 0.
LayerArtifact build_layer_artifact(int layer, const std::vector<int>& support, const CodeData& data,
                                   int r_max, int r_fixed = 0);

// Edit on the layer's support coordinates.
Vec edit_vector_local(const LayerArtifact& la, const Vec& z_local, double lambda, double beta, bool normalize,
                      EditVariant v = EditVariant::Full);
// Full code-space edit; zero outside the window.
Vec edit_vector(const SteerArtifact& a, int layer, const Vec& z, EditVariant v = EditVariant::Full);

HookFactory steering_hooks(const std::vector<Dictionary>& dicts, const SteerArtifact& a,
                           EditVariant v = EditVariant::Full);

void verify_pins(const SteerArtifact& a, const Pins& actual);

void to_json(nlohmann::json& j, const SteerArtifact& a);  // header only, tensors go to the binary file
void save_artifact(const std::filesystem::path& dir, const SteerArtifact& a);
SteerArtifact load_artifact(const std::filesystem::path& dir);

struct Guardrails {
  double eps_kl = 0.10;
  double eps_es = 0.20;
  double eps_util = 0.005;
  double tau_sem = 0.005;
};

struct EvalContext {
  const Model* model = nullptr;
  const std::vector<Dictionary>* dicts = nullptr;
  const std::vector<EvalPrompt>* prompts = nullptr;
  const std::vector<Baseline>* base = nullptr;
  const Partition* part = nullptr;
  EvalConfig cfg;
  Exec exec = Exec::Parallel;

  EvalSummary run(const HookFactory& f) const;
};

struct PointMetrics {
  double lambda = 0.0;
  double rho = 0.0;
  double beta = 0.0;
  double gain = 0.0;
  double kl = 0.0;
  double target_shift = 0.0;     // mean M_target shift
  double nontarget_shift = 0.0;  // mean M_nontarget shift (leakage)
  double util = 0.0;             // Delta S
  double sem_max = 0.0;          // worst per-intent |Delta s_j|
  bool pass_kl = true, pass_leak = true, pass_util = true, pass_sem = true;
  bool admissible() const { return pass_kl && pass_leak && pass_util && pass_sem; }
};

PointMetrics point_metrics(const EvalSummary& s, const std::vector<EvalPrompt>& prompts, const EvalConfig& cfg,
                           const Guardrails& g);

struct OperatingPoint {
  std::vector<PointMetrics> grid;
  int chosen = -1;
  bool feasible = false;  // an admissible point with lambda > 0 exists
  const PointMetrics& point() const { return grid.at(chosen); }
};

// Max Delta gain among admissible grid points; ties go to the largest lambda, then the smallest rho.
OperatingPoint select_operating_point(const EvalContext& ctx, const SteerArtifact& a,
                                      const std::vector<double>& lambdas, const std::vector<double>& rhos,
                                      const Guardrails& g, EditVariant v = EditVariant::Full);
int choose_admissible(const std::vector<PointMetrics>& grid);

struct KappaResult {
  double kappa = 0.0;
  double gain = 0.0;
  double kl = 0.0;
  bool feasible = false;
};
// Smallest kappa in [0, 10 lambda] whose gain reaches gamma_gain (monotone bisection, 1e-4 relative).
KappaResult choose_kappa(const EvalContext& ctx, SteerArtifact a, double lambda, double gamma_gain);

// |R_l| = |N_l| features drawn from the complement of N_l at each layer, prototypes recomputed on R.
SteerArtifact random_support_artifact(const SteerArtifact& a, const CodeData& data, int m, int r_max,
                                      std::uint64_t seed);
// Same settings, new per-layer supports.
SteerArtifact artifact_for_supports(const SteerArtifact& a, const std::map<int, std::vector<int>>& supports,
                                    const CodeData& data, int r_max, int r_fixed = 0);

// Per-step mean entropy shift and KL of an edit relative to the baselines, steps 1..tmax.
struct StepDrift {
  std::vector<double> d_entropy;
  std::vector<double> kl;
};
StepDrift measure_step_drift(const EvalContext& ctx, const HookFactory& f, int tmax);

struct StepMatch {
  std::vector<double> param;     // temperature or sigma per step
  std::vector<double> achieved;  // matched statistic per step
  std::vector<double> target;
  bool feasible = true;
};
StepMatch match_temperature(const std::vector<Baseline>& base, const std::vector<double>& target_dH,
                            double rel_tol = 0.01);
StepMatch match_noise_kl(const std::vector<Baseline>& base, const std::vector<EvalPrompt>& prompts,
                         const std::vector<double>& target_kl, std::uint64_t seed, double rel_tol = 0.01);
// Steps past the matched horizon reuse the last per-step parameter.
HookFactory temperature_hooks(const std::vector<double>& T_by_step);
HookFactory noise_hooks(const std::vector<double>& sigma_by_step, const std::vector<EvalPrompt>& prompts,
                        int vocab, std::uint64_t seed);
Vec logit_noise(int vocab, std::uint64_t seed, int prompt_id, int step);

struct SufficiencyRow {
  std::string setting;  // "sparse", "rank", "sparse_rank"
  int k = 0;
  int r = 0;
  PointMetrics best;  // best admissible lambda
  double fraction = 0.0;
};

// Sweeps top-k support prefixes and ranks r; each configuration picks its own admissible lambda.
std::vector<SufficiencyRow> sufficiency_sweep(const EvalContext& ctx, const SteerArtifact& full,
                                              const Support& N, const CodeData& data, int m,
                                              const std::vector<double>& lambdas, const Guardrails& g,
                                              double full_gain, int r_cap);

}  // namespace foxp2
