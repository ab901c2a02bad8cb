#pragma once

#include "foxp2/common.hpp"
#include "foxp2/dictionary.hpp"
#include "foxp2/eval.hpp"
#include "foxp2/model.hpp"

#include <json.hpp>

#include <utility>
#include <vector>

namespace foxp2 {

struct LocalizeConfig {
  std::vector<double> alpha_grid = {0.01, 0.02, 0.04};  // multiples of the layer's median code magnitude
  std::vector<int> T = {1, 2, 3};
  int K_max = 16;
  double plateau_tol = 0.02;
  int plateau_patience = 3;
  double sign_gate = 0.9;
  int bootstrap = 200;
  double format_ratio = 1.0;
  int lift_prompts = 100;
  std::uint64_t seed = 5;

  int per_layer_cap() const { return (K_max + 1) / 2; }
};

void to_json(nlohmann::json& j, const LocalizeConfig& c);
void from_json(const nlohmann::json& j, LocalizeConfig& c);

struct SelStats {
  Vec sel;        // E[z_target] - E[z_en]
  Vec sel_tilde;  // sel / (std_t + std_en + 1e-8)
  Vec std_t;
  Vec std_en;
};
SelStats selectivity(const Mat& Z_target, const Mat& Z_en);

double lift_slope(const std::vector<double>& lifts, const std::vector<double>& alphas);
double feature_score(double sel_tilde, double lift_slope);

struct FeatureScore {
  int layer = 0;
  int feature = 0;
  double sel = 0.0;
  double sel_tilde = 0.0;
  double lift_slope = 0.0;
  double score = 0.0;
  double marginal = 0.0;  // Lift at the middle alpha
  double sign_stability = 0.0;
  bool format_flag = false;
  std::vector<double> lift;  // per alpha
};

// Score desc, then LiftSlope desc, then Sel~ desc, then (layer, feature) asc.
bool ranks_before(const FeatureScore& a, const FeatureScore& b);

struct Support {
  std::vector<std::pair<int, int>> items;  // (layer, feature) in selection order
  std::vector<int> layer(int l) const;     // sorted feature ids at layer l
  std::vector<int> layers() const;
  int size() const { return static_cast<int>(items.size()); }
  bool contains(int l, int j) const;
};

// Greedy descending-score selection; stops after `patience` consecutive adds whose marginal gain is
// below tol of the cumulative gain and drops those adds.
Support greedy_select(std::vector<FeatureScore> cands, int K_max, int per_layer_cap, double tol, int patience);

double support_jaccard(const Support& a, const Support& b);
// Fraction of bootstrap resamples in which Sel_j keeps the sign of the full-sample Sel_j.
Vec sign_stability(const Mat& Z_target, const Mat& Z_en, int B, std::uint64_t seed);
bool format_sensitive(const std::vector<double>& sel_per_wrapper, double ratio);

// Per-prompt lift of pushing feature j at `layer` by alpha, averaged over steps T.
struct LiftInputs {
  const Model* model = nullptr;
  const std::vector<Dictionary>* dicts = nullptr;
  const std::vector<EvalPrompt>* prompts = nullptr;  // English weak prompts
  std::vector<int> T;
  Lang target = Lang::Hi;
  Vec w_target, w_en;  // token weights
};

struct LiftCache {
  // residual[p][t-1][l] post-block states of the baseline run; base_D[p][t-1] baseline M_target - M_en
  std::vector<std::vector<std::vector<Vec>>> residual;
  std::vector<std::vector<double>> base_D;
};
LiftCache build_lift_cache(const LiftInputs& in, Exec exec);
// result[alpha][prompt]
std::vector<std::vector<double>> feature_lifts(const LiftInputs& in, const LiftCache& cache, int layer, int j,
                                               const std::vector<double>& alphas);

struct LocalizeData {
  std::vector<Mat> Z_target;  // per layer, paired rows: target rendering
  std::vector<Mat> Z_en;      // per layer, paired rows: English rendering
  std::vector<int> wrapper;   // per pair
};

struct LocalizeResult {
  std::vector<FeatureScore> scored;  // every feature with Sel~ > 0
  std::vector<double> alpha_scale;   // per layer
  Support support;
  double stab_N = 0.0;
};

LocalizeResult localize(const LocalizeData& data, const LiftInputs& lift_in, const LocalizeConfig& cfg, Exec exec);

void to_json(nlohmann::json& j, const Support& s);
void from_json(const nlohmann::json& j, Support& s);

}  // namespace foxp2
