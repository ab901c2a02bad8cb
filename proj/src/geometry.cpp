#include "foxp2/geometry.hpp"

#include "foxp2/metrics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace foxp2 {

void to_json(nlohmann::json& j, const GeometryConfig& c) {
  j = {{"r_max", c.r_max},       {"bootstrap", c.bootstrap}, {"gain_eta", c.gain_eta},
       {"window_width", c.window_width}, {"mode", c.mode}, {"band_lo", c.band_lo},
       {"band_hi", c.band_hi},   {"health_rel_recon", c.health_rel_recon}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GeometryConfig& c) {
  c = GeometryConfig{};
  if (j.contains("r_max")) j.at("r_max").get_to(c.r_max);
  if (j.contains("bootstrap")) j.at("bootstrap").get_to(c.bootstrap);
  if (j.contains("gain_eta")) j.at("gain_eta").get_to(c.gain_eta);
  if (j.contains("window_width")) j.at("window_width").get_to(c.window_width);
  if (j.contains("mode")) j.at("mode").get_to(c.mode);
  if (j.contains("band_lo")) j.at("band_lo").get_to(c.band_lo);
  if (j.contains("band_hi")) j.at("band_hi").get_to(c.band_hi);
  if (j.contains("health_rel_recon")) j.at("health_rel_recon").get_to(c.health_rel_recon);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (c.r_max < 1 || c.bootstrap < 2 || c.window_width < 0) throw ConfigError("invalid geometry config");
  if (c.mode != "mass_stab" && c.mode != "dev_objective") throw ConfigError("unknown window mode: " + c.mode);
}

SvdResult thin_svd(const Mat& dZ) {
  SvdResult r;
  if (dZ.rows() == 0 || dZ.cols() == 0) {
    r.sigma = Vec::Zero(0);
    r.V = Mat::Zero(dZ.cols(), 0);
    return r;
  }
  Eigen::BDCSVD<Mat> svd(dZ, Eigen::ComputeThinV);
  r.sigma = svd.singularValues();
  r.V = svd.matrixV();
  Vec mean = dZ.colwise().mean().transpose();
  for (Eigen::Index i = 0; i < r.V.cols(); ++i) {
    double s = mean.dot(r.V.col(i));
    if (s == 0.0) {
      Eigen::Index k = 0;
      r.V.col(i).cwiseAbs().maxCoeff(&k);
      s = r.V(k, i);
    }
    if (s < 0.0) r.V.col(i) = -r.V.col(i);
  }
  return r;
}

double effective_rank(const Vec& sigma) {
  double tot = sigma.squaredNorm();
  if (tot <= 0.0) return 0.0;
  double h = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    double p = sigma[i] * sigma[i] / tot;
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::exp(h);
}

int gap_index(const Vec& sigma, int r_max) {
  const int k = static_cast<int>(sigma.size());
  if (k < 2) return 1;
  int best = 1;
  double best_ratio = -1.0;
  for (int i = 1; i <= std::min(r_max, k - 1); ++i) {
    double ratio = sigma[i - 1] / std::max(sigma[i], 1e-12);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = i;
    }
  }
  return best;
}

int choose_rank(const Vec& sigma, int r_max) {
  int r = std::min(static_cast<int>(std::ceil(effective_rank(sigma) - 1e-12)), gap_index(sigma, r_max));
  return std::clamp(r, 1, r_max);
}

double captured_mass(const Vec& sigma, int r) {
  double tot = sigma.squaredNorm();
  if (tot <= 0.0) return 0.0;
  r = std::min<int>(r, static_cast<int>(sigma.size()));
  return sigma.head(r).squaredNorm() / tot;
}

double subspace_overlap(const Mat& A, const Mat& B) {
  if (A.cols() == 0 || A.cols() != B.cols()) return 0.0;
  return (A.transpose() * B).squaredNorm() / double(A.cols());
}

namespace {

Mat top_basis(const Mat& dZ, int r) {
  SvdResult s = thin_svd(dZ);
  int k = std::min<int>(r, static_cast<int>(s.V.cols()));
  return s.V.leftCols(k);
}

std::vector<Mat> bootstrap_bases(const Mat& dZ, int r, int B, std::uint64_t seed, Exec exec) {
  std::vector<Mat> out(B);
  const Eigen::Index n = dZ.rows();
  auto one = [&](int b) {
    auto rng = make_rng(seed, "subspace_bootstrap", static_cast<std::uint64_t>(b));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    Mat S(n, dZ.cols());
    for (Eigen::Index i = 0; i < n; ++i) S.row(i) = dZ.row(pick(rng));
    if (S.squaredNorm() > 0.0) out[b] = top_basis(S, r);
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) one(b);
  } else {
    for (int b = 0; b < B; ++b) one(b);
  }
  return out;
}

}  // namespace

double stability_median(const Mat& dZ, int r, int B, std::uint64_t seed, Exec exec) {
  if (dZ.rows() == 0 || dZ.cols() == 0 || r < 1) return 0.0;
  auto bases = bootstrap_bases(dZ, r, B, seed, exec);
  std::vector<double> ov;
  ov.reserve(static_cast<std::size_t>(B) * (B - 1) / 2);
  for (int a = 0; a < B; ++a)
    for (int b = a + 1; b < B; ++b)
      if (bases[a].cols() == r && bases[b].cols() == r) ov.push_back(subspace_overlap(bases[a], bases[b]));
  return ov.empty() ? 0.0 : median(ov);
}

double stability_reference(const Mat& dZ, int r, int B, std::uint64_t seed, Exec exec) {
  if (dZ.rows() == 0 || dZ.cols() == 0 || r < 1) return 0.0;
  Mat ref = top_basis(dZ, r);
  auto bases = bootstrap_bases(dZ, r, B, seed, exec);
  double acc = 0.0;
  int used = 0;
  for (const Mat& b : bases) {
    if (b.cols() != ref.cols()) continue;
    ++used;
    Eigen::JacobiSVD<Mat> s(ref.transpose() * b);
    double cmin = std::clamp(s.singularValues().minCoeff(), 0.0, 1.0);
    acc += std::sqrt(std::max(0.0, 1.0 - cmin * cmin));
  }
  return used ? 1.0 - acc / double(used) : 0.0;
}

double LayerGeometry::ratio12() const {
  if (sigma.size() == 0) return 0.0;
  double s2 = sigma.size() > 1 ? sigma[1] : 0.0;
  return sigma[0] / std::max(s2, 1e-12);
}

LayerGeometry layer_geometry(int layer, const std::vector<int>& support, const Mat& dZ, const GeometryConfig& cfg,
                             Exec exec) {
  LayerGeometry g;
  g.layer = layer;
  g.support = support;
  if (support.empty() || dZ.rows() == 0) {
    g.degenerate = true;
    g.sigma = Vec::Zero(0);
    g.basis = Mat::Zero(static_cast<Eigen::Index>(support.size()), 0);
    return g;
  }
  SvdResult s = thin_svd(dZ);
  g.sigma = s.sigma;
  if (g.sigma.squaredNorm() <= 0.0) {
    g.degenerate = true;
    g.basis = Mat::Zero(static_cast<Eigen::Index>(support.size()), 0);
    return g;
  }
  g.r_eff = effective_rank(g.sigma);
  g.istar = gap_index(g.sigma, cfg.r_max);
  g.r = std::min<int>(choose_rank(g.sigma, cfg.r_max), static_cast<int>(s.V.cols()));
  g.mass = captured_mass(g.sigma, g.r);
  g.basis = s.V.leftCols(g.r);
  g.stab = stability_median(dZ, g.r, cfg.bootstrap, derive_seed(cfg.seed, "stab", layer), exec);
  g.stab_ref = stability_reference(dZ, g.r, cfg.bootstrap, derive_seed(cfg.seed, "stab_ref", layer), exec);
  return g;
}

double layer_gain(const LiftInputs& in, const LiftCache& cache, int layer, const Vec& direction, double eta) {
  if (direction.norm() == 0.0 || eta == 0.0) return 0.0;
  Vec dh = (*in.dicts)[layer - 1].W * (eta * direction);
  double acc = 0.0;
  int cnt = 0;
  for (std::size_t p = 0; p < cache.residual.size(); ++p) {
    double per = 0.0;
    for (int t : in.T) {
      Vec pr = softmax(in.model->forward_from(layer, cache.residual[p][t - 1][layer] + dh, t, nullptr));
      per += (mass(pr, in.w_target) - mass(pr, in.w_en)) - cache.base_D[p][t - 1];
    }
    acc += per / double(in.T.size());
    ++cnt;
  }
  return cnt ? acc / double(cnt) / eta : 0.0;
}

std::pair<int, int> allowed_band(int L, const GeometryConfig& cfg) {
  if (cfg.band_lo > 0 && cfg.band_hi >= cfg.band_lo) return {cfg.band_lo, std::min(cfg.band_hi, L)};
  int lo = L / 4 + 1, hi = (3 * L) / 4;
  if (hi < lo) hi = lo;
  return {lo, hi};
}

double window_score(const std::vector<LayerGeometry>& g, int lo, int hi) {
  double s = 0;
  for (const auto& x : g)
    if (x.layer >= lo && x.layer <= hi) s += x.score();
  return s;
}

double window_gain(const std::vector<LayerGeometry>& g, int lo, int hi) {
  double s = 0;
  for (const auto& x : g)
    if (x.layer >= lo && x.layer <= hi) s += x.gain;
  return s;
}

Window select_window(const std::vector<LayerGeometry>& g, const GeometryConfig& cfg,
                     const std::function<double(int, int)>& objective) {
  const int L = static_cast<int>(g.size());
  auto [blo, bhi] = allowed_band(L, cfg);
  auto healthy = [&](int lo, int hi) {
    for (const auto& x : g)
      if (x.layer >= lo && x.layer <= hi && !x.healthy) return false;
    return true;
  };
  bool use_obj = cfg.mode == "dev_objective";
  if (use_obj && !objective) throw ConfigError("dev_objective window mode needs an objective");
  Window best;
  bool have = false;
  for (int w = 1; w <= bhi - blo + 1; ++w) {
    if (cfg.window_width > 0 && w != cfg.window_width) continue;
    for (int lo = blo; lo + w - 1 <= bhi; ++lo) {
      int hi = lo + w - 1;
      if (!healthy(lo, hi)) continue;
      Window c{lo, hi, use_obj ? objective(lo, hi) : window_score(g, lo, hi), window_gain(g, lo, hi)};
      bool better = !have || c.score > best.score ||
                    (c.score == best.score && (c.gain > best.gain ||
                                               (c.gain == best.gain && (c.width() < best.width() ||
                                                                        (c.width() == best.width() && c.lo < best.lo)))));
      if (better) {
        best = c;
        have = true;
      }
    }
  }
  if (!have) throw ConfigError("no admissible window in the allowed band");
  return best;
}

}  // namespace foxp2
