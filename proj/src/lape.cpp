#include "foxp2/lape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace foxp2 {

std::vector<LapeUnit> lape_units(const std::array<std::vector<Mat>, kNumLangs>& acts) {
  std::vector<LapeUnit> out;
  const int L = static_cast<int>(acts[0].size());
  for (int l = 1; l <= L; ++l) {
    const int H = static_cast<int>(acts[0][l - 1].cols());
    for (int u = 0; u < H; ++u) {
      LapeUnit x;
      x.layer = l;
      x.unit = u;
      double tot = 0;
      for (int k = 0; k < kNumLangs; ++k) {
        const Mat& A = acts[k][l - 1];
        x.p[k] = A.rows() ? double((A.col(u).array() > 0.0).count()) / double(A.rows()) : 0.0;
        tot += x.p[k];
      }
      x.live = tot > 0.0;
      if (x.live) {
        int best = 0;
        for (int k = 0; k < kNumLangs; ++k) {
          double q = x.p[k] / tot;
          if (q > 0) x.entropy -= q * std::log(q);
          if (x.p[k] > x.p[best]) best = k;
        }
        x.argmax = best;
      }
      out.push_back(x);
    }
  }
  return out;
}

namespace {

bool in_layers(int l, const std::vector<int>& layers) {
  return layers.empty() || std::find(layers.begin(), layers.end(), l) != layers.end();
}

}  // namespace

std::vector<LapeUnit> lape_detect(const std::vector<LapeUnit>& units, Lang target, double tau_H,
                                  const std::vector<int>& layers) {
  std::vector<LapeUnit> out;
  for (const auto& u : units)
    if (u.live && in_layers(u.layer, layers) && u.entropy <= tau_H && u.argmax == static_cast<int>(target))
      out.push_back(u);
  return out;
}

std::vector<LapeUnit> lape_detect_count(const std::vector<LapeUnit>& units, Lang target, int count,
                                        const std::vector<int>& layers, double* tau_H_out) {
  std::vector<LapeUnit> pool;
  for (const auto& u : units)
    if (u.live && in_layers(u.layer, layers) && u.argmax == static_cast<int>(target)) pool.push_back(u);
  const int t = static_cast<int>(target);
  std::stable_sort(pool.begin(), pool.end(), [t](const LapeUnit& a, const LapeUnit& b) {
    if (a.entropy != b.entropy) return a.entropy < b.entropy;
    double qa = a.p[t] / (a.p[0] + a.p[1] + a.p[2]), qb = b.p[t] / (b.p[0] + b.p[1] + b.p[2]);
    if (qa != qb) return qa > qb;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.unit < b.unit;
  });
  if (static_cast<int>(pool.size()) > count) pool.resize(std::max(count, 0));
  if (tau_H_out) *tau_H_out = pool.empty() ? 0.0 : pool.back().entropy;
  return pool;
}

Hooks lape_hooks(const std::vector<LapeUnit>& mask, LapeShift mode, double eta,
                 const std::vector<Vec>& mean_shift) {
  auto m = std::make_shared<std::vector<LapeUnit>>(mask);
  auto shift = std::make_shared<std::vector<Vec>>(mean_shift);
  Hooks h;
  h.ffn = [m, shift, mode, eta](int layer, int, Vec& a) {
    for (const auto& u : *m) {
      if (u.layer != layer) continue;
      double s = mode == LapeShift::UnitPush ? 1.0 : (*shift)[layer - 1][u.unit];
      a[u.unit] += eta * s;
    }
  };
  return h;
}

std::vector<Mat> collect_ffn(const Model& model, const std::vector<std::vector<int>>& prompts, Exec exec) {
  const int n = static_cast<int>(prompts.size()), L = model.L(), H = model.hidden();
  std::vector<Mat> out(L, Mat(n, H));
  auto one = [&](int i) {
    Hooks hk;
    hk.ffn = [&](int layer, int, Vec& a) { out[layer - 1].row(i) = a.transpose(); };
    model.forward(prompts[i], 1, &hk);
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) one(i);
  } else {
    for (int i = 0; i < n; ++i) one(i);
  }
  return out;
}

}  // namespace foxp2
