#include "foxp2/steer.hpp"

#include "foxp2/hash.hpp"
#include "foxp2/metrics.hpp"
#include "foxp2/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace foxp2 {

namespace {

constexpr double kSuppressEps = 1e-8;

const char* policy_name(EditPolicy p) { return p == EditPolicy::AllSteps ? "all_steps" : "prompt_only"; }
const char* mode_name(SuppressionMode m) { return m == SuppressionMode::FixedRatio ? "fixed_ratio" : "kappa"; }

}  // namespace

const LayerArtifact* SteerArtifact::at(int layer) const {
  for (const auto& la : layers)
    if (la.layer == layer) return &la;
  return nullptr;
}

int SteerArtifact::support_size() const {
  int n = 0;
  for (const auto& la : layers) n += static_cast<int>(la.support.size());
  return n;
}

Mat restrict_cols(const Mat& Z, const std::vector<int>& cols) {
  Mat out(Z.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = Z.col(cols[k]);
  return out;
}

LayerArtifact build_layer_artifact(int layer, const std::vector<int>& support, const CodeData& data,
                                   const Mat& basis) {
  if (support.empty()) throw ConfigError("empty support at layer " + std::to_string(layer));
  LayerArtifact la;
  la.layer = layer;
  la.support = support;
  std::sort(la.support.begin(), la.support.end());
  Mat dZ = restrict_cols(data.Z_target[layer - 1] - data.Z_en[layer - 1], la.support);
  la.mu_target = dZ.colwise().mean().transpose();
  la.mu_en = restrict_cols(data.Z_weak[layer - 1], la.support).colwise().mean().transpose();
  la.basis = basis;
  return la;
}

LayerArtifact build_layer_artifact(int layer, const std::vector<int>& support, const CodeData& data,
                                   int r_max, int r_fixed) {
  std::vector<int> s = support;
  std::sort(s.begin(), s.end());
  if (s.empty()) throw ConfigError("empty support at layer " + std::to_string(layer));
  Mat dZ = restrict_cols(data.Z_target[layer - 1] - data.Z_en[layer - 1], s);
  SvdResult svd = thin_svd(dZ);
  int r = 0;
  if (svd.sigma.size() > 0 && svd.sigma.squaredNorm() > 0.0)
    r = r_fixed > 0 ? r_fixed : choose_rank(svd.sigma, r_max);
  r = std::min<int>(r, static_cast<int>(svd.V.cols()));
  return build_layer_artifact(layer, s, data, Mat(svd.V.leftCols(r)));
}

Vec edit_vector_local(const LayerArtifact& la, const Vec& z_local, double lambda, double beta, bool normalize,
                      EditVariant v) {
  const Eigen::Index n = static_cast<Eigen::Index>(la.support.size());
  if (v == EditVariant::WithoutN) return Vec::Zero(n);
  Vec mu = la.mu_target;
  if (normalize && mu.norm() > 0.0) mu /= mu.norm();
  Vec pos = v == EditVariant::NoProjection ? mu : Vec(la.basis * (la.basis.transpose() * mu));
  Vec dz = lambda * pos;
  if (beta != 0.0) dz -= beta * z_local.dot(la.mu_en) / (la.mu_en.squaredNorm() + kSuppressEps) * la.mu_en;
  if (v == EditVariant::WithoutS) dz -= la.basis * (la.basis.transpose() * dz);
  return dz;
}

Vec edit_vector(const SteerArtifact& a, int layer, const Vec& z, EditVariant v) {
  Vec out = Vec::Zero(z.size());
  const LayerArtifact* la = a.in_window(layer) ? a.at(layer) : nullptr;
  if (!la) return out;
  Vec zl(static_cast<Eigen::Index>(la->support.size()));
  for (std::size_t k = 0; k < la->support.size(); ++k) zl[static_cast<Eigen::Index>(k)] = z[la->support[k]];
  Vec dl = edit_vector_local(*la, zl, a.lam(), a.beta(), a.normalize_mu, v);
  for (std::size_t k = 0; k < la->support.size(); ++k) out[la->support[k]] = dl[static_cast<Eigen::Index>(k)];
  return out;
}

HookFactory steering_hooks(const std::vector<Dictionary>& dicts, const SteerArtifact& a, EditVariant v) {
  const std::vector<Dictionary>* D = &dicts;
  return [D, a, v](int, DiagSink* sink) {
    Hooks h;
    h.residual = [D, a, v, sink](int layer, int step, Vec& x) {
      if (!a.in_window(layer)) return;
      const LayerArtifact* la = a.at(layer);
      if (!la) return;
      if (a.policy == EditPolicy::PromptOnly && step > 1) return;
      const Dictionary& dict = (*D)[layer - 1];
      Vec z = dict.encode(x);
      Vec dz = edit_vector(a, layer, z, v);
      double n = dz.norm();
      if (n == 0.0) return;
      Vec dh = dict.decode(dz);
      double rho = relative_edit_norm(dh, x);
      if (a.trust_tau > 0.0 && rho > a.trust_tau) {
        dh *= a.trust_tau / rho;
        rho = a.trust_tau;
      }
      if (sink) {
        Vec dl(static_cast<Eigen::Index>(la->support.size()));
        for (std::size_t k = 0; k < la->support.size(); ++k) dl[static_cast<Eigen::Index>(k)] = dz[la->support[k]];
        sink->rho_sum += rho;
        sink->align_sum += (la->basis * (la->basis.transpose() * dl)).norm() / (dl.norm() + 1e-8);
        ++sink->count;
      }
      x += dh;
    };
    return h;
  };
}

void verify_pins(const SteerArtifact& a, const Pins& actual) {
  auto check = [](const std::string& what, const std::string& want, const std::string& got) {
    if (want != got) throw PinError(what + ": artifact pins " + want + " but found " + got);
  };
  check("model", a.pins.model, actual.model);
  check("tokenizer", a.pins.tokenizer, actual.tokenizer);
  check("hook", a.pins.hook, actual.hook);
  if (a.pins.dicts.size() != actual.dicts.size()) throw PinError("dictionary count mismatch");
  for (std::size_t l = 0; l < a.pins.dicts.size(); ++l)
    check("dictionary " + std::to_string(l + 1), a.pins.dicts[l], actual.dicts[l]);
}

void to_json(nlohmann::json& j, const SteerArtifact& a) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& la : a.layers)
    layers.push_back({{"layer", la.layer}, {"support", la.support}, {"rank", la.basis.cols()}});
  j = {{"target", lang_name(a.target)},
       {"window", {a.window_lo, a.window_hi}},
       {"layers", layers},
       {"mode", mode_name(a.mode)},
       {"lambda", a.lambda},
       {"rho", a.rho},
       {"kappa", a.kappa},
       {"gamma", a.gamma},
       {"policy", policy_name(a.policy)},
       {"trust_tau", a.trust_tau},
       {"normalize_mu", a.normalize_mu},
       {"pins", {{"model", a.pins.model}, {"tokenizer", a.pins.tokenizer}, {"hook", a.pins.hook},
                 {"dicts", a.pins.dicts}}}};
}

void save_artifact(const std::filesystem::path& dir, const SteerArtifact& a) {
  std::vector<TensorRecord> recs;
  for (const auto& la : a.layers) {
    recs.push_back({TensorHeader{la.layer, 0, -1, 0, 0}, Mat(la.mu_target.transpose())});
    recs.push_back({TensorHeader{la.layer, 1, -1, 0, 0}, Mat(la.mu_en.transpose())});
    recs.push_back({TensorHeader{la.layer, 2, -1, 0, 0}, la.basis});
  }
  std::string bin = encode_tensors(recs);
  write_file(dir / "steer.bin", bin);
  nlohmann::json j = a;
  j["tensors_sha256"] = sha256_hex(bin);
  write_file(dir / "steer.json", j.dump(2) + "\n");
}

SteerArtifact load_artifact(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "steer.json"));
  } catch (const nlohmann::json::exception& e) {
    throw PinError(std::string("unreadable artifact header: ") + e.what());
  }
  std::string bin = read_pinned(dir / "steer.bin", j.at("tensors_sha256").get<std::string>());
  auto recs = decode_tensors(bin);
  SteerArtifact a;
  a.target = lang_from_name(j.at("target").get<std::string>());
  a.window_lo = j.at("window")[0].get<int>();
  a.window_hi = j.at("window")[1].get<int>();
  a.mode = j.at("mode").get<std::string>() == "kappa" ? SuppressionMode::Kappa : SuppressionMode::FixedRatio;
  a.lambda = j.at("lambda").get<double>();
  a.rho = j.at("rho").get<double>();
  a.kappa = j.at("kappa").get<double>();
  a.gamma = j.at("gamma").get<double>();
  a.policy = j.at("policy").get<std::string>() == "prompt_only" ? EditPolicy::PromptOnly : EditPolicy::AllSteps;
  a.trust_tau = j.at("trust_tau").get<double>();
  a.normalize_mu = j.at("normalize_mu").get<bool>();
  const auto& p = j.at("pins");
  a.pins.model = p.at("model").get<std::string>();
  a.pins.tokenizer = p.at("tokenizer").get<std::string>();
  a.pins.hook = p.at("hook").get<std::string>();
  a.pins.dicts = p.at("dicts").get<std::vector<std::string>>();
  for (const auto& lj : j.at("layers")) {
    LayerArtifact la;
    la.layer = lj.at("layer").get<int>();
    la.support = lj.at("support").get<std::vector<int>>();
    for (const auto& r : recs) {
      if (r.header.layer != la.layer) continue;
      if (r.header.step == 0) la.mu_target = r.data.row(0).transpose();
      if (r.header.step == 1) la.mu_en = r.data.row(0).transpose();
      if (r.header.step == 2) la.basis = r.data;
    }
    const auto n = static_cast<Eigen::Index>(la.support.size());
    if (la.mu_target.size() != n || la.mu_en.size() != n || la.basis.rows() != n)
      throw PinError("artifact tensors do not match layer " + std::to_string(la.layer));
    a.layers.push_back(std::move(la));
  }
  return a;
}

EvalSummary EvalContext::run(const HookFactory& f) const {
  return evaluate(*model, *prompts, *base, *part, f, cfg, exec);
}

PointMetrics point_metrics(const EvalSummary& s, const std::vector<EvalPrompt>& prompts, const EvalConfig& cfg,
                           const Guardrails& g) {
  PointMetrics m;
  m.gain = s.mean_gain();
  m.kl = s.mean(&PromptEval::kl);
  m.target_shift = s.mean_mass_shift(cfg.target);
  m.nontarget_shift = s.mean_mass_shift(cfg.nontarget);
  m.util = s.mean(&PromptEval::task_match);
  std::map<int, std::pair<double, int>> per_task;
  for (std::size_t i = 0; i < s.per_prompt.size(); ++i) {
    auto& acc = per_task[prompts[i].intent];
    acc.first += s.per_prompt[i].task_match;
    ++acc.second;
  }
  for (const auto& [task, acc] : per_task) m.sem_max = std::max(m.sem_max, std::abs(acc.first / acc.second));
  m.pass_kl = m.kl <= g.eps_kl;
  m.pass_leak = m.nontarget_shift <= g.eps_es;
  m.pass_util = std::abs(m.util) <= g.eps_util;
  m.pass_sem = m.sem_max <= g.tau_sem;
  return m;
}

int choose_admissible(const std::vector<PointMetrics>& grid) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(grid.size()); ++i) {
    const auto& p = grid[i];
    if (!p.admissible()) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    const auto& b = grid[best];
    if (p.gain > b.gain || (p.gain == b.gain && (p.lambda > b.lambda || (p.lambda == b.lambda && p.rho < b.rho))))
      best = i;
  }
  return best;
}

OperatingPoint select_operating_point(const EvalContext& ctx, const SteerArtifact& a,
                                      const std::vector<double>& lambdas, const std::vector<double>& rhos,
                                      const Guardrails& g, EditVariant v) {
  if (lambdas.empty() || rhos.empty()) throw ConfigError("empty operating-point grid");
  OperatingPoint op;
  for (double lam : lambdas)
    for (double rho : rhos) {
      SteerArtifact c = a;
      c.mode = SuppressionMode::FixedRatio;
      c.lambda = lam;
      c.rho = rho;
      PointMetrics pm = point_metrics(ctx.run(steering_hooks(*ctx.dicts, c, v)), *ctx.prompts, ctx.cfg, g);
      pm.lambda = lam;
      pm.rho = rho;
      pm.beta = c.beta();
      op.grid.push_back(pm);
    }
  op.chosen = choose_admissible(op.grid);
  if (op.chosen < 0) {
    // the zero edit is the flagged null point
    for (int i = 0; i < static_cast<int>(op.grid.size()); ++i)
      if (op.grid[i].lambda == 0.0) {
        op.chosen = i;
        break;
      }
    if (op.chosen < 0) op.chosen = 0;
    op.feasible = false;
    return op;
  }
  op.feasible = op.point().lambda > 0.0;
  return op;
}

KappaResult choose_kappa(const EvalContext& ctx, SteerArtifact a, double lambda, double gamma_gain) {
  a.mode = SuppressionMode::Kappa;
  a.lambda = lambda;
  auto at = [&](double kappa) {
    a.kappa = kappa;
    EvalSummary s = ctx.run(steering_hooks(*ctx.dicts, a));
    return std::make_pair(s.mean_gain(), s.mean(&PromptEval::kl));
  };
  KappaResult r;
  auto [g0, kl0] = at(0.0);
  if (g0 >= gamma_gain) return {0.0, g0, kl0, true};
  double lo = 0.0, hi = 10.0 * lambda;
  auto [gh, klh] = at(hi);
  if (hi <= 0.0 || gh < gamma_gain) return {hi, gh, klh, false};
  r = {hi, gh, klh, true};
  while (hi - lo > 1e-4 * hi) {
    double mid = 0.5 * (lo + hi);
    auto [gm, klm] = at(mid);
    if (gm >= gamma_gain) {
      hi = mid;
      r = {mid, gm, klm, true};
    } else {
      lo = mid;
    }
  }
  return r;
}

SteerArtifact random_support_artifact(const SteerArtifact& a, const CodeData& data, int m, int r_max,
                                      std::uint64_t seed) {
  std::map<int, std::vector<int>> supports;
  for (const auto& la : a.layers) {
    std::vector<int> pool;
    for (int j = 0; j < m; ++j)
      if (!std::binary_search(la.support.begin(), la.support.end(), j)) pool.push_back(j);
    auto rng = make_rng(seed, "random_support", static_cast<std::uint64_t>(la.layer));
    std::shuffle(pool.begin(), pool.end(), rng);
    std::size_t k = std::min(la.support.size(), pool.size());
    supports[la.layer] = std::vector<int>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return artifact_for_supports(a, supports, data, r_max);
}

SteerArtifact artifact_for_supports(const SteerArtifact& a, const std::map<int, std::vector<int>>& supports,
                                    const CodeData& data, int r_max, int r_fixed) {
  SteerArtifact out = a;
  out.layers.clear();
  for (const auto& [layer, s] : supports)
    if (!s.empty()) out.layers.push_back(build_layer_artifact(layer, s, data, r_max, r_fixed));
  return out;
}

StepDrift measure_step_drift(const EvalContext& ctx, const HookFactory& f, int tmax) {
  const int n = static_cast<int>(ctx.prompts->size());
  std::vector<std::vector<double>> dH(n, std::vector<double>(tmax)), kl(n, std::vector<double>(tmax));
  auto one = [&](int i) {
    DiagSink sink;
    Hooks h = f ? f(i, &sink) : Hooks{};
    const auto& pr = (*ctx.prompts)[i];
    auto logits = teacher_forced_logits(*ctx.model, pr.tokens, pr.prefix, tmax, &h);
    for (int t = 0; t < tmax; ++t) {
      Vec pe = softmax(logits[t]);
      const Vec& pb = (*ctx.base)[i].probs[t];
      dH[i][t] = entropy(pe) - entropy(pb);
      kl[i][t] = kl_divergence(pe, pb);
    }
  };
  if (ctx.exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) one(i);
  } else {
    for (int i = 0; i < n; ++i) one(i);
  }
  StepDrift out;
  out.d_entropy.assign(tmax, 0.0);
  out.kl.assign(tmax, 0.0);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < tmax; ++t) {
      out.d_entropy[t] += dH[i][t] / n;
      out.kl[t] += kl[i][t] / n;
    }
  return out;
}

namespace {

Vec log_probs(const Vec& p) { return p.array().max(1e-300).log().matrix(); }

// Bisection for a statistic increasing in the parameter on [lo, hi].
double bisect(const std::function<double(double)>& f, double target, double lo, double hi, double rel_tol,
              double* achieved) {
  double best = hi, fb = f(hi);
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double fm = f(mid);
    if (std::abs(fm - target) < std::abs(fb - target)) {
      best = mid;
      fb = fm;
    }
    if (std::abs(fm - target) <= rel_tol * std::abs(target)) break;
    if (fm < target) lo = mid;
    else hi = mid;
  }
  *achieved = fb;
  return best;
}

}  // namespace

StepMatch match_temperature(const std::vector<Baseline>& base, const std::vector<double>& target_dH,
                            double rel_tol) {
  StepMatch out;
  out.target = target_dH;
  for (std::size_t t = 0; t < target_dH.size(); ++t) {
    std::vector<Vec> lp;
    std::vector<double> h0;
    for (const auto& b : base) {
      lp.push_back(log_probs(b.probs[t]));
      h0.push_back(entropy(b.probs[t]));
    }
    auto f = [&](double T) {
      double acc = 0.0;
      for (std::size_t i = 0; i < lp.size(); ++i) acc += entropy(softmax(lp[i] / T)) - h0[i];
      return acc / double(lp.size());
    };
    double target = target_dH[t];
    if (target == 0.0) {
      out.param.push_back(1.0);
      out.achieved.push_back(0.0);
      continue;
    }
    double lo = target > 0 ? 1.0 : 1e-3, hi = target > 0 ? 1e3 : 1.0;
    if ((target > 0 && f(hi) < target) || (target < 0 && f(lo) > target)) {
      out.feasible = false;
      out.param.push_back(target > 0 ? hi : lo);
      out.achieved.push_back(f(out.param.back()));
      continue;
    }
    double ach = 0.0;
    out.param.push_back(bisect(f, target, lo, hi, rel_tol, &ach));
    out.achieved.push_back(ach);
    if (std::abs(ach - target) > rel_tol * std::abs(target)) out.feasible = false;
  }
  return out;
}

Vec logit_noise(int vocab, std::uint64_t seed, int prompt_id, int step) {
  auto rng = make_rng(seed, "logit_noise", static_cast<std::uint64_t>(prompt_id) * 1024u + static_cast<std::uint64_t>(step));
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec e(vocab);
  for (int u = 0; u < vocab; ++u) e[u] = nd(rng);
  return e;
}

StepMatch match_noise_kl(const std::vector<Baseline>& base, const std::vector<EvalPrompt>& prompts,
                         const std::vector<double>& target_kl, std::uint64_t seed, double rel_tol) {
  StepMatch out;
  out.target = target_kl;
  for (std::size_t t = 0; t < target_kl.size(); ++t) {
    std::vector<Vec> lp, xi;
    for (std::size_t i = 0; i < base.size(); ++i) {
      lp.push_back(log_probs(base[i].probs[t]));
      xi.push_back(logit_noise(static_cast<int>(lp.back().size()), seed, prompts[i].id, static_cast<int>(t) + 1));
    }
    auto f = [&](double s) {
      double acc = 0.0;
      for (std::size_t i = 0; i < lp.size(); ++i) acc += kl_divergence(softmax(lp[i] + s * xi[i]), base[i].probs[t]);
      return acc / double(lp.size());
    };
    double target = target_kl[t];
    if (target <= 0.0) {
      out.param.push_back(0.0);
      out.achieved.push_back(0.0);
      continue;
    }
    double hi = 1.0;
    while (f(hi) < target && hi < 1e4) hi *= 2.0;
    if (f(hi) < target) {
      out.feasible = false;
      out.param.push_back(hi);
      out.achieved.push_back(f(hi));
      continue;
    }
    double ach = 0.0;
    out.param.push_back(bisect(f, target, 0.0, hi, rel_tol, &ach));
    out.achieved.push_back(ach);
    if (std::abs(ach - target) > rel_tol * target) out.feasible = false;
  }
  return out;
}

HookFactory temperature_hooks(const std::vector<double>& T_by_step) {
  return [T_by_step](int, DiagSink*) {
    Hooks h;
    h.logits = [T_by_step](int step, Vec& z) {
      if (T_by_step.empty()) return;
      std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(step - 1), T_by_step.size() - 1);
      z /= T_by_step[k];
    };
    return h;
  };
}

HookFactory noise_hooks(const std::vector<double>& sigma_by_step, const std::vector<EvalPrompt>& prompts,
                        int vocab, std::uint64_t seed) {
  std::vector<int> ids;
  for (const auto& p : prompts) ids.push_back(p.id);
  return [sigma_by_step, ids, vocab, seed](int i, DiagSink*) {
    Hooks h;
    int id = ids.at(i);
    h.logits = [sigma_by_step, id, vocab, seed](int step, Vec& z) {
      if (sigma_by_step.empty()) return;
      std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(step - 1), sigma_by_step.size() - 1);
      if (sigma_by_step[k] == 0.0) return;
      z += sigma_by_step[k] * logit_noise(vocab, seed, id, step);
    };
    return h;
  };
}

std::vector<SufficiencyRow> sufficiency_sweep(const EvalContext& ctx, const SteerArtifact& full,
                                              const Support& N, const CodeData& data, int m,
                                              const std::vector<double>& lambdas, const Guardrails& g,
                                              double full_gain, int r_cap) {
  std::vector<SufficiencyRow> rows;
  auto best_over_lambda = [&](const SteerArtifact& a) {
    std::vector<PointMetrics> grid;
    for (double lam : lambdas) {
      SteerArtifact c = a;
      c.lambda = lam;
      PointMetrics pm = point_metrics(ctx.run(steering_hooks(*ctx.dicts, c)), *ctx.prompts, ctx.cfg, g);
      pm.lambda = lam;
      pm.rho = c.rho;
      pm.beta = c.beta();
      grid.push_back(pm);
    }
    int k = choose_admissible(grid);
    return k >= 0 ? grid[k] : PointMetrics{};
  };
  auto prefix_supports = [&](int k) {
    std::map<int, std::vector<int>> s;
    for (int i = 0; i < k && i < N.size(); ++i)
      if (full.in_window(N.items[i].first)) s[N.items[i].first].push_back(N.items[i].second);
    return s;
  };
  auto frac = [&](double gain) { return full_gain > 0.0 ? gain / full_gain : 0.0; };
  for (int k = 1; k <= N.size(); ++k) {
    auto s = prefix_supports(k);
    if (s.empty()) continue;
    {
      SufficiencyRow row{"sparse", k, 0, {}, 0.0};
      SteerArtifact a = artifact_for_supports(full, s, data, r_cap);
      row.best = best_over_lambda(a);
      row.fraction = frac(row.best.gain);
      rows.push_back(row);
    }
    for (int r = 1; r <= r_cap; ++r) {
      int max_layer_k = 0;
      for (const auto& [l, v] : s) max_layer_k = std::max<int>(max_layer_k, static_cast<int>(v.size()));
      if (r > max_layer_k) break;
      SufficiencyRow row{"sparse_rank", k, r, {}, 0.0};
      std::map<int, std::vector<int>> sr = s;
      SteerArtifact a = full;
      a.layers.clear();
      for (const auto& [l, v] : sr)
        a.layers.push_back(build_layer_artifact(l, v, data, r_cap, std::min<int>(r, static_cast<int>(v.size()))));
      row.best = best_over_lambda(a);
      row.fraction = frac(row.best.gain);
      rows.push_back(row);
    }
  }
  // rank-r only: dense over every feature at the window layers
  for (int r = 1; r <= r_cap; ++r) {
    std::map<int, std::vector<int>> dense;
    for (int l = full.window_lo; l <= full.window_hi; ++l) {
      std::vector<int> all(m);
      std::iota(all.begin(), all.end(), 0);
      dense[l] = all;
    }
    SufficiencyRow row{"rank", 0, r, {}, 0.0};
    row.best = best_over_lambda(artifact_for_supports(full, dense, data, r_cap, r));
    row.fraction = frac(row.best.gain);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace foxp2
