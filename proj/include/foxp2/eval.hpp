#pragma once

#include "foxp2/common.hpp"
#include "foxp2/model.hpp"
#include "foxp2/tokens.hpp"

#include <functional>
#include <vector>

namespace foxp2 {

struct EvalPrompt {
  int id = 0;
  int intent = 0;
  std::vector<int> tokens;
  std::vector<int> prefix;  // frozen greedy baseline continuation, length m
};

// Builds prompts with their frozen baseline prefixes (m teacher-forced steps).
std::vector<EvalPrompt> make_eval_prompts(const Model& model, const std::vector<std::vector<int>>& prompts,
                                          const std::vector<int>& ids, const std::vector<int>& intents,
                                          int m, Exec exec);

struct EvalConfig {
  std::vector<int> T = {1, 2, 3};
  int lid_len = 5;
  Lang target = Lang::Hi;
  Lang nontarget = Lang::Es;
};

struct Baseline {
  std::vector<Vec> probs;     // steps 1..max(T)
  std::vector<int> greedy;    // lid_len tokens
};

// Argmax of the distribution pooled over the language renderings of each word.
int meaning_argmax(const Vec& p, const Vocab& v);

std::vector<Baseline> compute_baselines(const Model& model, const std::vector<EvalPrompt>& prompts,
                                        const EvalConfig& cfg, Exec exec);

// Side channel that edit hooks can use to report hidden-state diagnostics.
struct DiagSink {
  double rho_sum = 0.0;
  double align_sum = 0.0;
  int count = 0;
};

using HookFactory = std::function<Hooks(int prompt_index, DiagSink* sink)>;

struct PromptEval {
  double gain = 0.0;                           // mean over T of the change in M_target - M_en
  std::array<double, kNumLangs> mass_base{};   // mean over T
  std::array<double, kNumLangs> mass_edit{};
  double kl = 0.0;
  double d_entropy = 0.0;
  double d_nll = 0.0;
  double lid_base = 0.0, lid_edit = 0.0;       // target language
  double lid_nt_base = 0.0, lid_nt_edit = 0.0; // non-target language
  bool lid_abstain = false;
  double task_match = 0.0;                     // change in language-agnostic word agreement with the baseline
  double churn = 0.0;
  double rho = 0.0;
  double align = 0.0;
  double shared_shift = 0.0;                   // mass shift on shared tokens

  double mass_shift(Lang l) const { return mass_edit[static_cast<int>(l)] - mass_base[static_cast<int>(l)]; }
};

struct EvalSummary {
  std::vector<PromptEval> per_prompt;
  double mean(double PromptEval::*field) const;
  double mean_mass_shift(Lang l) const;
  double mean_gain() const { return mean(&PromptEval::gain); }
};

EvalSummary evaluate(const Model& model, const std::vector<EvalPrompt>& prompts,
                     const std::vector<Baseline>& base, const Partition& part, const HookFactory& hooks,
                     const EvalConfig& cfg, Exec exec);

// Post-block residuals at the last prompt position (step 1) for each prompt: result[l-1] is n x d.
std::vector<Mat> collect_residuals(const Model& model, const std::vector<std::vector<int>>& prompts, Exec exec);
// Residuals at every teacher-forced step of each prompt's frozen prefix, stacked per layer.
std::vector<Mat> collect_residuals_tf(const Model& model, const std::vector<EvalPrompt>& prompts, int m,
                                      Exec exec);

}  // namespace foxp2
