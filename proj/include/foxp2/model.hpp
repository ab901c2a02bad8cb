#pragma once

#include "foxp2/common.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace foxp2 {

// Block tokenizer: en [0,n), hi [n,2n), shared [2n,2n+s), es [2n+s,3n+s), then two directive tokens.
struct Vocab {
  int n_words = 100;
  int n_shared = 50;

  enum class Block { En, Hi, Shared, Es, Directive };

  int size() const { return 3 * n_words + n_shared + 2; }
  int shared_begin() const { return 2 * n_words; }
  int word(Lang l, int k) const;
  int directive(Lang target) const;
  int entity(int i) const { return shared_begin() + i; }       // 10 entity names
  int format_token(int i) const { return shared_begin() + 10 + i; }  // 10 wrapper marks
  int filler(int i) const { return shared_begin() + 20 + i; }  // punctuation, digits, dandas
  int n_fillers() const { return n_shared - 20; }

  Block block_of(int tok) const;
  std::optional<Lang> lang_of(int tok) const;
  int word_index(int tok) const;  // -1 for non-word tokens
  bool is_entity(int tok) const;
  bool romanized_hi(int k) const { return k % 10 == 9; }
  std::string str(int tok) const;
  std::vector<int> block_tokens(Lang l) const;
};

struct PlantedConfig {
  int d = 32;
  int L = 8;
  int d_ff = 16;  // generic content units per layer
  int n_words = 100;
  int n_shared = 50;
  int window_lo = 3;  // planted window W*, 1-based hook layers, inclusive
  int window_hi = 5;
  double decay = 0.8;
  int max_context = 96;
  double emb_scale = 6.0;
  double content_mix = 0.25;
  double cue_gain = 1.0;
  double directive_gain = 3.0;
  double detector_kappa = 1.0;
  double detector_theta = 0.5;
  double detector_cap = 3.0;
  double amp = 1.5;          // per-layer v* amplification inside W*
  double commit_gain = 16.0;  // v* -> o* transfer after W*
  double readout = 0.08;      // unembedding weight on v* and o*
  double content_readout = 1.5;
  double topic_pref = 0.7;
  double bias_en = 2.0;
  double bias_es = -1.0;
  double bias_shared = -1.5;
  std::uint64_t seed = 7;

  int content_dims() const { return d - 20; }
  void validate() const;
};

void to_json(nlohmann::json& j, const PlantedConfig& c);
void from_json(const nlohmann::json& j, PlantedConfig& c);

// Ground truth of the planted circuit for one target language.
struct ChannelTruth {
  Lang lang = Lang::Hi;
  std::vector<int> v_coords;  // N*
  std::vector<int> cue_coords;
  std::vector<int> out_coords;
  Vec v_star;
  Vec o_star;
  std::vector<std::vector<int>> channel_units;  // per layer (index 0 = layer 1): hidden units writing onto v*
};

struct GroundTruth {
  int window_lo = 0;
  int window_hi = 0;
  ChannelTruth hi;
  ChannelTruth es;
  double amp = 1.0;
  double commit_gain = 1.0;
  double readout = 0.0;

  const ChannelTruth& channel(Lang l) const;
  bool in_window(int layer) const { return layer >= window_lo && layer <= window_hi; }
  // Target-block logit change per unit of v* injected at the post-block residual of `layer`.
  double channel_gain(int layer) const;
};

struct Hooks {
  // post-block residual at the last position; layer is 1-based, step is 1-based
  std::function<void(int layer, int step, Vec& h)> residual;
  // post-ReLU hidden activations of the layer's MLP
  std::function<void(int layer, int step, Vec& a)> ffn;
  std::function<void(int step, Vec& logits)> logits;
};

struct LayerWeights {
  Mat W_in;  // H x d
  Vec b_in;  // H
  Mat W_out;  // d x H
};

class Model {
 public:
  static Model planted(const PlantedConfig& cfg);

  int d() const { return cfg_.d; }
  int L() const { return cfg_.L; }
  int hidden() const { return static_cast<int>(layers_[0].b_in.size()); }
  int vocab_size() const { return vocab_.size(); }
  const Vocab& vocab() const { return vocab_; }
  const PlantedConfig& config() const { return cfg_; }
  const GroundTruth& truth() const { return truth_; }
  const Mat& embedding() const { return E_; }
  const Mat& unembedding() const { return U_; }
  const Vec& logit_bias() const { return bias_; }
  const LayerWeights& layer(int l) const { return layers_.at(l - 1); }

  // Decayed mean of token embeddings; throws ContextOverflow past max_context.
  Vec embed_context(const std::vector<int>& ctx) const;
  // Runs block `layer` in place and fires its hooks.
  void block(int layer, Vec& h, int step, const Hooks* hooks) const;
  Vec logits(const Vec& h_final, int step, const Hooks* hooks) const;

  // Full forward at the last position; residuals[l] holds the post-block state of layer l (0 = input).
  Vec forward(const std::vector<int>& ctx, int step, const Hooks* hooks,
              std::vector<Vec>* residuals = nullptr) const;
  // Continue from the post-block residual of `layer` through layers layer+1..L.
  Vec forward_from(int layer, Vec h, int step, const Hooks* hooks) const;

  std::string weights_sha256() const;

 private:
  PlantedConfig cfg_;
  Vocab vocab_;
  GroundTruth truth_;
  Mat E_;  // V x d
  std::vector<LayerWeights> layers_;
  Mat U_;  // V x d
  Vec bias_;
};

// Teacher-forced next-token logits for steps 1..n_steps; step t conditions on prompt + prefix[0..t-2].
std::vector<Vec> teacher_forced_logits(const Model& m, const std::vector<int>& prompt,
                                       const std::vector<int>& prefix, int n_steps,
                                       const Hooks* hooks);
std::vector<int> greedy_decode(const Model& m, const std::vector<int>& prompt, int n_steps,
                               const Hooks* hooks);

Vec softmax(const Vec& logits);
int argmax(const Vec& v);

}  // namespace foxp2
