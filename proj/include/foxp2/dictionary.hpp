#pragma once

#include "foxp2/common.hpp"

#include <json.hpp>

#include <vector>

namespace foxp2 {

struct SaeConfig {
  int m = 64;
  double lr = 1e-3;
  int steps = 20000;
  int batch = 128;
  double clip = 1.0;
  double l1 = 1e-3;
  std::uint64_t seed = 3;
};

void to_json(nlohmann::json& j, const SaeConfig& c);
void from_json(const nlohmann::json& j, SaeConfig& c);

// Tied-weight ReLU dictionary: z = ReLU(W^T h + b), h_hat = W z.
struct Dictionary {
  Mat W;  // d x m
  Vec b;  // m

  int d() const { return static_cast<int>(W.rows()); }
  int m() const { return static_cast<int>(W.cols()); }
  Vec encode(const Vec& h) const { return (W.transpose() * h + b).cwiseMax(0.0); }
  Vec decode(const Vec& z) const { return W * z; }
  Mat encode_rows(const Mat& X) const;  // X: n x d, returns n x m
};

struct SaeGrad {
  double loss = 0.0;
  Mat gW;
  Vec gb;
};

// Batch-mean loss ||h - Wz||^2 + l1 * ||z||_1 and its analytic gradient.
SaeGrad sae_loss_grad(const Dictionary& D, const Mat& X, double l1);
double sae_loss(const Dictionary& D, const Mat& X, double l1);

Dictionary init_dictionary(int d, int m, std::uint64_t seed);
Dictionary train_dictionary(const Mat& X, const SaeConfig& cfg, std::uint64_t seed,
                            std::vector<double>* loss_trace = nullptr);

struct DictHealth {
  double rel_recon = 0.0;
  double dead_fraction = 0.0;
};
DictHealth dictionary_health(const Dictionary& D, const Mat& X);

// One dictionary per layer; the layers are independent so Parallel splits them across threads.
std::vector<Dictionary> train_dictionaries(const std::vector<Mat>& per_layer, const SaeConfig& cfg,
                                           Exec exec);

}  // namespace foxp2
