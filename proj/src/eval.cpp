#include "foxp2/eval.hpp"

#include "foxp2/metrics.hpp"

#include <algorithm>

namespace foxp2 {

std::vector<EvalPrompt> make_eval_prompts(const Model& model, const std::vector<std::vector<int>>& prompts,
                                          const std::vector<int>& ids, const std::vector<int>& intents,
                                          int m, Exec exec) {
  const int n = static_cast<int>(prompts.size());
  std::vector<EvalPrompt> out(n);
  auto one = [&](int i) {
    out[i].id = ids.empty() ? i : ids[i];
    out[i].intent = intents.empty() ? 0 : intents[i];
    out[i].tokens = prompts[i];
    out[i].prefix = greedy_decode(model, prompts[i], m, nullptr);
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) one(i);
  } else {
    for (int i = 0; i < n; ++i) one(i);
  }
  return out;
}

namespace {

int max_step(const EvalConfig& cfg) {
  if (cfg.T.empty()) throw ConfigError("empty step set T");
  return *std::max_element(cfg.T.begin(), cfg.T.end());
}

}  // namespace

int meaning_argmax(const Vec& p, const Vocab& v) {
  // word k in any language -> class k; every other token is its own class
  Vec agg = Vec::Zero(v.n_words + p.size());
  for (Eigen::Index t = 0; t < p.size(); ++t) {
    int k = v.word_index(static_cast<int>(t));
    agg[k >= 0 ? k : v.n_words + t] += p[t];
  }
  return argmax(agg);
}

std::vector<Baseline> compute_baselines(const Model& model, const std::vector<EvalPrompt>& prompts,
                                        const EvalConfig& cfg, Exec exec) {
  const int n = static_cast<int>(prompts.size());
  const int tmax = max_step(cfg);
  std::vector<Baseline> out(n);
  auto one = [&](int i) {
    for (const Vec& z : teacher_forced_logits(model, prompts[i].tokens, prompts[i].prefix, tmax, nullptr))
      out[i].probs.push_back(softmax(z));
    out[i].greedy.assign(prompts[i].prefix.begin(),
                         prompts[i].prefix.begin() + std::min<std::size_t>(cfg.lid_len, prompts[i].prefix.size()));
    if (static_cast<int>(out[i].greedy.size()) < cfg.lid_len)
      out[i].greedy = greedy_decode(model, prompts[i].tokens, cfg.lid_len, nullptr);
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) one(i);
  } else {
    for (int i = 0; i < n; ++i) one(i);
  }
  return out;
}

double EvalSummary::mean(double PromptEval::*field) const {
  if (per_prompt.empty()) return 0.0;
  double s = 0;
  for (const auto& p : per_prompt) s += p.*field;
  return s / double(per_prompt.size());
}

double EvalSummary::mean_mass_shift(Lang l) const {
  if (per_prompt.empty()) return 0.0;
  double s = 0;
  for (const auto& p : per_prompt) s += p.mass_shift(l);
  return s / double(per_prompt.size());
}

EvalSummary evaluate(const Model& model, const std::vector<EvalPrompt>& prompts,
                     const std::vector<Baseline>& base, const Partition& part, const HookFactory& factory,
                     const EvalConfig& cfg, Exec exec) {
  const int n = static_cast<int>(prompts.size());
  if (static_cast<int>(base.size()) != n) throw ConfigError("baseline cache does not match prompts");
  const int V = model.vocab_size();
  const int tmax = max_step(cfg);
  std::array<Vec, kNumLangs> w;
  for (int k = 0; k < kNumLangs; ++k) w[k] = part.weights(static_cast<Lang>(k), V);
  Vec w_shared = Vec::Zero(V);
  for (int u : part.shared) w_shared[u] = 1.0;
  const Vocab& vocab = model.vocab();
  const int tgt = static_cast<int>(cfg.target), en = static_cast<int>(Lang::En);

  EvalSummary out;
  out.per_prompt.resize(n);
  auto one = [&](int i) {
    DiagSink sink;
    Hooks hooks = factory ? factory(i, &sink) : Hooks{};
    std::vector<Vec> logits = teacher_forced_logits(model, prompts[i].tokens, prompts[i].prefix, tmax, &hooks);
    PromptEval& r = out.per_prompt[i];
    const double nT = static_cast<double>(cfg.T.size());
    for (int t : cfg.T) {
      const Vec& pb = base[i].probs[t - 1];
      Vec pe = softmax(logits[t - 1]);
      std::array<double, kNumLangs> mb{}, me{};
      for (int k = 0; k < kNumLangs; ++k) {
        mb[k] = mass(pb, w[k]);
        me[k] = mass(pe, w[k]);
        r.mass_base[k] += mb[k] / nT;
        r.mass_edit[k] += me[k] / nT;
      }
      r.gain += ((me[tgt] - me[en]) - (mb[tgt] - mb[en])) / nT;
      r.shared_shift += (mass(pe, w_shared) - mass(pb, w_shared)) / nT;
      r.kl += kl_divergence(pe, pb) / nT;
      r.d_entropy += (entropy(pe) - entropy(pb)) / nT;
      int y = prompts[i].prefix[t - 1];
      r.d_nll += (nll(pe, y) - nll(pb, y)) / nT;
      bool match = meaning_argmax(pb, vocab) == meaning_argmax(pe, vocab);
      r.task_match += ((match ? 1.0 : 0.0) - 1.0) / nT;
      r.churn += churn(pb, pe) / nT;
    }
    std::vector<int> y_edit = greedy_decode(model, prompts[i].tokens, cfg.lid_len, &hooks);
    Lid lb = lid(base[i].greedy, cfg.target, part), le = lid(y_edit, cfg.target, part);
    r.lid_base = lb.value;
    r.lid_edit = le.value;
    r.lid_abstain = lb.abstain || le.abstain;
    r.lid_nt_base = lid(base[i].greedy, cfg.nontarget, part).value;
    r.lid_nt_edit = lid(y_edit, cfg.nontarget, part).value;
    if (sink.count > 0) {
      r.rho = sink.rho_sum / sink.count;
      r.align = sink.align_sum / sink.count;
    }
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) one(i);
  } else {
    for (int i = 0; i < n; ++i) one(i);
  }
  return out;
}

std::vector<Mat> collect_residuals(const Model& model, const std::vector<std::vector<int>>& prompts, Exec exec) {
  const int n = static_cast<int>(prompts.size()), L = model.L();
  std::vector<Mat> out(L, Mat(n, model.d()));
  auto one = [&](int i) {
    std::vector<Vec> res;
    model.forward(prompts[i], 1, nullptr, &res);
    for (int l = 1; l <= L; ++l) out[l - 1].row(i) = res[l].transpose();
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) one(i);
  } else {
    for (int i = 0; i < n; ++i) one(i);
  }
  return out;
}

std::vector<Mat> collect_residuals_tf(const Model& model, const std::vector<EvalPrompt>& prompts, int m,
                                      Exec exec) {
  const int n = static_cast<int>(prompts.size()), L = model.L();
  std::vector<Mat> out(L, Mat(n * m, model.d()));
  auto one = [&](int i) {
    std::vector<int> ctx = prompts[i].tokens;
    for (int t = 1; t <= m; ++t) {
      std::vector<Vec> res;
      model.forward(ctx, t, nullptr, &res);
      for (int l = 1; l <= L; ++l) out[l - 1].row(i * m + t - 1) = res[l].transpose();
      if (t < m) ctx.push_back(prompts[i].prefix[t - 1]);
    }
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
