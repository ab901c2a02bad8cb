#include "foxp2/localize.hpp"

#include "foxp2/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace foxp2 {

void to_json(nlohmann::json& j, const LocalizeConfig& c) {
  j = {{"alpha_grid", c.alpha_grid},   {"T", c.T},
       {"K_max", c.K_max},             {"plateau_tol", c.plateau_tol},
       {"plateau_patience", c.plateau_patience}, {"sign_gate", c.sign_gate},
       {"bootstrap", c.bootstrap},     {"format_ratio", c.format_ratio},
       {"lift_prompts", c.lift_prompts}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, LocalizeConfig& c) {
  c = LocalizeConfig{};
  if (j.contains("alpha_grid")) j.at("alpha_grid").get_to(c.alpha_grid);
  if (j.contains("T")) j.at("T").get_to(c.T);
  if (j.contains("K_max")) j.at("K_max").get_to(c.K_max);
  if (j.contains("plateau_tol")) j.at("plateau_tol").get_to(c.plateau_tol);
  if (j.contains("plateau_patience")) j.at("plateau_patience").get_to(c.plateau_patience);
  if (j.contains("sign_gate")) j.at("sign_gate").get_to(c.sign_gate);
  if (j.contains("bootstrap")) j.at("bootstrap").get_to(c.bootstrap);
  if (j.contains("format_ratio")) j.at("format_ratio").get_to(c.format_ratio);
  if (j.contains("lift_prompts")) j.at("lift_prompts").get_to(c.lift_prompts);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (c.alpha_grid.empty() || c.K_max < 1 || c.plateau_patience < 1 || c.bootstrap < 1)
    throw ConfigError("invalid localize config");
}

namespace {

void col_stats(const Mat& Z, Vec& mean, Vec& sd) {
  const double n = static_cast<double>(Z.rows());
  mean = Z.colwise().mean().transpose();
  sd = Vec::Zero(Z.cols());
  if (Z.rows() < 2) return;
  for (Eigen::Index j = 0; j < Z.cols(); ++j)
    sd[j] = std::sqrt((Z.col(j).array() - mean[j]).square().sum() / (n - 1.0));
}

}  // namespace

SelStats selectivity(const Mat& Zt, const Mat& Zen) {
  if (Zt.cols() != Zen.cols() || Zt.rows() == 0 || Zen.rows() == 0) throw ConfigError("selectivity shape");
  SelStats s;
  Vec mt, me;
  col_stats(Zt, mt, s.std_t);
  col_stats(Zen, me, s.std_en);
  s.sel = mt - me;
  s.sel_tilde = s.sel.array() / (s.std_t.array() + s.std_en.array() + 1e-8);
  return s;
}

double lift_slope(const std::vector<double>& lifts, const std::vector<double>& alphas) {
  if (lifts.size() != alphas.size() || lifts.empty()) throw ConfigError("lift/alpha size mismatch");
  std::vector<double> r;
  for (std::size_t i = 0; i < lifts.size(); ++i) r.push_back(lifts[i] / alphas[i]);
  return median(r);
}

double feature_score(double sel_tilde, double slope) { return std::max(sel_tilde, 0.0) * std::max(slope, 0.0); }

bool ranks_before(const FeatureScore& a, const FeatureScore& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.lift_slope != b.lift_slope) return a.lift_slope > b.lift_slope;
  if (a.sel_tilde != b.sel_tilde) return a.sel_tilde > b.sel_tilde;
  if (a.layer != b.layer) return a.layer < b.layer;
  return a.feature < b.feature;
}

std::vector<int> Support::layer(int l) const {
  std::vector<int> out;
  for (auto [ll, j] : items)
    if (ll == l) out.push_back(j);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> Support::layers() const {
  std::set<int> s;
  for (auto [l, j] : items) s.insert(l);
  return {s.begin(), s.end()};
}

bool Support::contains(int l, int j) const {
  return std::find(items.begin(), items.end(), std::make_pair(l, j)) != items.end();
}

Support greedy_select(std::vector<FeatureScore> cands, int K_max, int cap, double tol, int patience) {
  std::sort(cands.begin(), cands.end(), ranks_before);
  Support s;
  std::map<int, int> per_layer;
  double cum = 0.0;
  int run = 0;
  for (const auto& c : cands) {
    if (c.score <= 0.0) break;
    if (s.size() >= K_max) break;
    if (per_layer[c.layer] >= cap) continue;
    double g = std::max(c.marginal, 0.0);
    s.items.emplace_back(c.layer, c.feature);
    per_layer[c.layer] += 1;
    cum += g;
    run = (g < tol * cum) ? run + 1 : 0;
    if (run >= patience) {
      s.items.resize(s.items.size() - static_cast<std::size_t>(patience));
      break;
    }
  }
  return s;
}

double support_jaccard(const Support& a, const Support& b) {
  std::set<std::pair<int, int>> A(a.items.begin(), a.items.end()), B(b.items.begin(), b.items.end());
  if (A.empty() && B.empty()) return 1.0;
  int inter = 0;
  for (const auto& x : A) inter += static_cast<int>(B.count(x));
  return double(inter) / double(A.size() + B.size() - inter);
}

Vec sign_stability(const Mat& Zt, const Mat& Zen, int B, std::uint64_t seed) {
  const Eigen::Index n = Zt.rows();
  if (Zen.rows() != n) throw ConfigError("sign stability expects paired rows");
  Vec full = (Zt - Zen).colwise().mean().transpose();
  Vec agree = Vec::Zero(Zt.cols());
  auto rng = make_rng(seed, "sign_stability");
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Mat D = Zt - Zen;
  for (int b = 0; b < B; ++b) {
    Vec s = Vec::Zero(Zt.cols());
    for (Eigen::Index i = 0; i < n; ++i) s += D.row(pick(rng)).transpose();
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      auto sg = [](double x) { return (x > 0) - (x < 0); };
      if (sg(s[j]) == sg(full[j])) agree[j] += 1.0;
    }
  }
  return agree / double(B);
}

bool format_sensitive(const std::vector<double>& sel_per_wrapper, double ratio) {
  if (sel_per_wrapper.size() < 2) return false;
  double mu = 0;
  for (double x : sel_per_wrapper) mu += x;
  mu /= double(sel_per_wrapper.size());
  double var = 0;
  for (double x : sel_per_wrapper) var += (x - mu) * (x - mu);
  var /= double(sel_per_wrapper.size());
  return var > ratio * std::abs(mu);
}

LiftCache build_lift_cache(const LiftInputs& in, Exec exec) {
  const auto& prompts = *in.prompts;
  const int n = static_cast<int>(prompts.size());
  const int tmax = *std::max_element(in.T.begin(), in.T.end());
  LiftCache c;
  c.residual.assign(n, {});
  c.base_D.assign(n, {});
  auto one = [&](int p) {
    std::vector<int> ctx = prompts[p].tokens;
    for (int t = 1; t <= tmax; ++t) {
      std::vector<Vec> res;
      Vec pr = softmax(in.model->forward(ctx, t, nullptr, &res));
      c.residual[p].push_back(res);
      c.base_D[p].push_back(mass(pr, in.w_target) - mass(pr, in.w_en));
      if (t < tmax) ctx.push_back(prompts[p].prefix[t - 1]);
    }
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n; ++p) one(p);
  } else {
    for (int p = 0; p < n; ++p) one(p);
  }
  return c;
}

std::vector<std::vector<double>> feature_lifts(const LiftInputs& in, const LiftCache& cache, int layer, int j,
                                               const std::vector<double>& alphas) {
  const int n = static_cast<int>(cache.residual.size());
  const Vec& atom = (*in.dicts)[layer - 1].W.col(j);
  std::vector<std::vector<double>> out(alphas.size(), std::vector<double>(n, 0.0));
  const double nT = double(in.T.size());
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    for (int p = 0; p < n; ++p) {
      double acc = 0;
      for (int t : in.T) {
        Vec h = cache.residual[p][t - 1][layer] + alphas[a] * atom;
        Vec pr = softmax(in.model->forward_from(layer, h, t, nullptr));
        acc += (mass(pr, in.w_target) - mass(pr, in.w_en)) - cache.base_D[p][t - 1];
      }
      out[a][p] = acc / nT;
    }
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / double(xs.size());
}

}  // namespace

LocalizeResult localize(const LocalizeData& data, const LiftInputs& lift_in, const LocalizeConfig& cfg, Exec exec) {
  const int L = static_cast<int>(data.Z_target.size());
  const int mid = static_cast<int>(cfg.alpha_grid.size()) / 2;
  LocalizeResult res;
  res.alpha_scale.assign(L, 1.0);

  std::vector<SelStats> stats(L);
  std::vector<Vec> stability(L);
  for (int l = 1; l <= L; ++l) {
    const Mat& Zt = data.Z_target[l - 1];
    const Mat& Ze = data.Z_en[l - 1];
    stats[l - 1] = selectivity(Zt, Ze);
    stability[l - 1] = sign_stability(Zt, Ze, cfg.bootstrap, derive_seed(cfg.seed, "sign", l));
    std::vector<double> nz;
    for (const Mat* Z : {&Zt, &Ze})
      for (Eigen::Index i = 0; i < Z->size(); ++i)
        if (Z->data()[i] > 0.0) nz.push_back(Z->data()[i]);
    if (!nz.empty()) res.alpha_scale[l - 1] = median(nz);
  }

  struct Cand {
    int layer, j;
  };
  std::vector<Cand> cands;
  for (int l = 1; l <= L; ++l)
    for (int j = 0; j < stats[l - 1].sel_tilde.size(); ++j)
      if (stats[l - 1].sel_tilde[j] > 0.0) cands.push_back({l, j});

  LiftCache cache = build_lift_cache(lift_in, exec);
  const int nc = static_cast<int>(cands.size());
  std::vector<std::vector<std::vector<double>>> per_prompt(nc);
  auto lift_one = [&](int c) {
    std::vector<double> alphas;
    for (double a : cfg.alpha_grid) alphas.push_back(a * res.alpha_scale[cands[c].layer - 1]);
    per_prompt[c] = feature_lifts(lift_in, cache, cands[c].layer, cands[c].j, alphas);
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < nc; ++c) lift_one(c);
  } else {
    for (int c = 0; c < nc; ++c) lift_one(c);
  }

  // wrapper-conditional selectivity for the format filter
  std::set<int> wrappers(data.wrapper.begin(), data.wrapper.end());

  auto make_scores = [&](const std::vector<SelStats>& st, const std::vector<std::vector<double>>& lift_means) {
    std::vector<FeatureScore> out;
    for (int c = 0; c < nc; ++c) {
      const int l = cands[c].layer, j = cands[c].j;
      FeatureScore f;
      f.layer = l;
      f.feature = j;
      f.sel = st[l - 1].sel[j];
      f.sel_tilde = st[l - 1].sel_tilde[j];
      f.lift = lift_means[c];
      std::vector<double> alphas;
      for (double a : cfg.alpha_grid) alphas.push_back(a * res.alpha_scale[l - 1]);
      f.lift_slope = lift_slope(f.lift, alphas);
      f.score = feature_score(f.sel_tilde, f.lift_slope);
      f.marginal = f.lift[mid];
      f.sign_stability = stability[l - 1][j];
      out.push_back(f);
    }
    return out;
  };

  std::vector<std::vector<double>> lift_means(nc);
  for (int c = 0; c < nc; ++c)
    for (const auto& row : per_prompt[c]) lift_means[c].push_back(mean_of(row));
  res.scored = make_scores(stats, lift_means);

  for (auto& f : res.scored) {
    std::vector<double> by_wrapper;
    for (int w : wrappers) {
      std::vector<double> d;
      for (std::size_t i = 0; i < data.wrapper.size(); ++i)
        if (data.wrapper[i] == w)
          d.push_back(data.Z_target[f.layer - 1](i, f.feature) - data.Z_en[f.layer - 1](i, f.feature));
      if (!d.empty()) by_wrapper.push_back(mean_of(d));
    }
    f.format_flag = format_sensitive(by_wrapper, cfg.format_ratio);
  }

  auto eligible = [&](const std::vector<FeatureScore>& fs) {
    std::vector<FeatureScore> out;
    for (std::size_t i = 0; i < fs.size(); ++i)
      if (res.scored[i].sign_stability >= cfg.sign_gate && !res.scored[i].format_flag) out.push_back(fs[i]);
    return out;
  };
  res.support = greedy_select(eligible(res.scored), cfg.K_max, cfg.per_layer_cap(), cfg.plateau_tol,
                              cfg.plateau_patience);

  // bootstrap overlap of the selected support
  const Eigen::Index npairs = data.Z_target.empty() ? 0 : data.Z_target[0].rows();
  const int nlift = static_cast<int>(cache.residual.size());
  std::vector<double> overlaps(cfg.bootstrap, 0.0);
  auto boot_one = [&](int b) {
    auto rng = make_rng(cfg.seed, "support_bootstrap", static_cast<std::uint64_t>(b));
    std::uniform_int_distribution<Eigen::Index> pp(0, npairs - 1);
    std::uniform_int_distribution<int> pl(0, nlift - 1);
    std::vector<Eigen::Index> rows(npairs);
    for (auto& r : rows) r = pp(rng);
    std::vector<int> lrows(nlift);
    for (auto& r : lrows) r = pl(rng);
    std::vector<SelStats> st(L);
    for (int l = 1; l <= L; ++l) {
      Mat Zt(npairs, data.Z_target[l - 1].cols()), Ze(npairs, data.Z_en[l - 1].cols());
      for (Eigen::Index i = 0; i < npairs; ++i) {
        Zt.row(i) = data.Z_target[l - 1].row(rows[i]);
        Ze.row(i) = data.Z_en[l - 1].row(rows[i]);
      }
      st[l - 1] = selectivity(Zt, Ze);
    }
    std::vector<std::vector<double>> lm(nc);
    for (int c = 0; c < nc; ++c)
      for (const auto& row : per_prompt[c]) {
        double s = 0;
        for (int r : lrows) s += row[r];
        lm[c].push_back(s / double(nlift));
      }
    Support sb = greedy_select(eligible(make_scores(st, lm)), cfg.K_max, cfg.per_layer_cap(), cfg.plateau_tol,
                               cfg.plateau_patience);
    overlaps[b] = support_jaccard(sb, res.support);
  };
  if (npairs > 0 && nlift > 0) {
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
      for (int b = 0; b < cfg.bootstrap; ++b) boot_one(b);
    } else {
      for (int b = 0; b < cfg.bootstrap; ++b) boot_one(b);
    }
    res.stab_N = mean_of(overlaps);
  }
  return res;
}

void to_json(nlohmann::json& j, const Support& s) {
  j = nlohmann::json::array();
  for (auto [l, f] : s.items) j.push_back({l, f});
}

void from_json(const nlohmann::json& j, Support& s) {
  s.items.clear();
  for (const auto& e : j) s.items.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
}

}  // namespace foxp2
