#pragma once

#include "foxp2/common.hpp"
#include "foxp2/localize.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace foxp2 {

struct SvdResult {
  Vec sigma;  // descending
  Mat V;      // right singular vectors as columns, oriented toward the row mean
};
SvdResult thin_svd(const Mat& dZ);

double effective_rank(const Vec& sigma);  // exp(-sum p log p), p = sigma^2 / sum sigma^2
int gap_index(const Vec& sigma, int r_max);  // 1-based argmax sigma_i / sigma_{i+1}
int choose_rank(const Vec& sigma, int r_max);
double captured_mass(const Vec& sigma, int r);
// tr(P_A P_B) / r for orthonormal bases A, B with r columns
double subspace_overlap(const Mat& A, const Mat& B);
// median over bootstrap pairs b != b' of the overlap of the top-r subspaces
double stability_median(const Mat& dZ, int r, int B, std::uint64_t seed, Exec exec);
// 1 - mean over bootstrap draws of sin(largest principal angle) to the full-sample subspace
double stability_reference(const Mat& dZ, int r, int B, std::uint64_t seed, Exec exec);

struct GeometryConfig {
  int r_max = 8;
  int bootstrap = 200;
  double gain_eta = 0.02;  // multiple of the layer's median code magnitude
  int window_width = 3;    // 0 = free width
  std::string mode = "mass_stab";  // or "dev_objective"
  int band_lo = 0;  // 0 = middle half of the layers
  int band_hi = 0;
  double health_rel_recon = 0.05;
  std::uint64_t seed = 9;
};

void to_json(nlohmann::json& j, const GeometryConfig& c);
void from_json(const nlohmann::json& j, GeometryConfig& c);

struct LayerGeometry {
  int layer = 0;
  std::vector<int> support;
  Vec sigma;
  double r_eff = 0.0;
  int istar = 0;
  int r = 0;
  double mass = 0.0;
  double stab = 0.0;
  double stab_ref = 0.0;
  double gain = 0.0;
  bool healthy = true;
  bool degenerate = false;  // empty support or all-zero shift matrix
  Mat basis;  // |N| x r
  double ratio12() const;
  double score() const { return mass * stab; }
};

// dZ rows are paired code differences restricted to the layer's support.
LayerGeometry layer_geometry(int layer, const std::vector<int>& support, const Mat& dZ, const GeometryConfig& cfg,
                             Exec exec);

// Gain of pushing eta along `direction` (full code space) at `layer`, per unit eta.
double layer_gain(const LiftInputs& in, const LiftCache& cache, int layer, const Vec& direction, double eta);

struct Window {
  int lo = 0;
  int hi = 0;
  double score = 0.0;
  double gain = 0.0;
  int width() const { return hi - lo + 1; }
};

std::pair<int, int> allowed_band(int L, const GeometryConfig& cfg);
double window_score(const std::vector<LayerGeometry>& g, int lo, int hi);
double window_gain(const std::vector<LayerGeometry>& g, int lo, int hi);
// mass_stab mode: max sum of Mass*Stab over healthy contiguous windows inside the band, then larger Gain,
// then narrower, then earlier. dev_objective mode maximizes the supplied J(W) instead.
Window select_window(const std::vector<LayerGeometry>& g, const GeometryConfig& cfg,
                     const std::function<double(int, int)>& objective = {});

}  // namespace foxp2
