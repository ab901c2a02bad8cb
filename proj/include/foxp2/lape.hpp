#pragma once

#include "foxp2/common.hpp"
#include "foxp2/model.hpp"

#include <array>
#include <vector>

namespace foxp2 {

// Activation-probability entropy baseline over MLP hidden units.
struct LapeUnit {
  int layer = 0;
  int unit = 0;
  std::array<double, kNumLangs> p{};  // Pr[a > 0] per language corpus
  double entropy = 0.0;               // of q = p / sum(p), natural log
  int argmax = 0;
  bool live = false;                  // sum(p) > 0
};

// acts[lang][layer-1] is (n_lang x H) post-ReLU activations
std::vector<LapeUnit> lape_units(const std::array<std::vector<Mat>, kNumLangs>& acts);

// mask iff live, H <= tau_H and argmax q = target
std::vector<LapeUnit> lape_detect(const std::vector<LapeUnit>& units, Lang target, double tau_H,
                                  const std::vector<int>& layers);
// count-matched: the `count` lowest-entropy target units in `layers`; ties by q_target desc, then position
std::vector<LapeUnit> lape_detect_count(const std::vector<LapeUnit>& units, Lang target, int count,
                                        const std::vector<int>& layers, double* tau_H_out = nullptr);

enum class LapeShift { MeanShift, UnitPush };

// a <- a + eta * (m ⊙ s) at the masked units; shift holds (mu_target - mu_en) per layer when MeanShift.
Hooks lape_hooks(const std::vector<LapeUnit>& mask, LapeShift mode, double eta,
                 const std::vector<Vec>& mean_shift);

std::vector<Mat> collect_ffn(const Model& model, const std::vector<std::vector<int>>& prompts, Exec exec);

}  // namespace foxp2
