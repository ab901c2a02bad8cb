#include "foxp2/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace foxp2 {

double mass(const Vec& p, const Vec& w) { return p.dot(w); }

double kl_divergence(const Vec& p_edit, const Vec& p_base) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p_edit.size(); ++i) {
    double a = std::max(p_edit[i], kProbFloor), b = std::max(p_base[i], kProbFloor);
    s += a * std::log(a / b);
  }
  return s;
}

double entropy(const Vec& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return h;
}

double nll(const Vec& p, int tok) { return -std::log(std::max(p[tok], kProbFloor)); }

Lid lid(const std::vector<int>& tokens, Lang l, const Partition& part, double s) {
  std::array<std::set<int>, kNumLangs> sets;
  for (int k = 0; k < kNumLangs; ++k) sets[k] = std::set<int>(part.sets[k].begin(), part.sets[k].end());
  int in_l = 0, non_shared = 0;
  for (int t : tokens) {
    for (int k = 0; k < kNumLangs; ++k)
      if (sets[k].count(t)) {
        ++non_shared;
        if (k == static_cast<int>(l)) ++in_l;
        break;
      }
  }
  Lid r;
  r.abstain = non_shared == 0;
  r.value = (in_l + s) / (non_shared + s * kNumLangs);
  return r;
}

Thresholds calibrate_thresholds(const std::vector<double>& dm, const std::vector<double>& dl, double pct,
                                double floor) {
  auto absq = [&](const std::vector<double>& xs) {
    std::vector<double> a;
    for (double x : xs) a.push_back(std::abs(x));
    return std::max(quantile(a, pct), floor);
  };
  return {absq(dm), absq(dl)};
}

int default_indicator(double d_mass, double d_lid, const Thresholds& t) {
  return (d_mass >= t.tau_M && d_lid >= t.tau_L) ? 1 : 0;
}

double default_continuous(double d_mass, double d_lid, double w1, double w2) {
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return w1 * sig(d_mass) + w2 * sig(d_lid);
}

Interval bootstrap_ci(const std::vector<double>& xs, int B, double alpha, std::uint64_t seed) {
  Interval ci;
  if (xs.empty()) return ci;
  double sum = 0;
  for (double x : xs) sum += x;
  ci.mean = sum / double(xs.size());
  auto rng = make_rng(seed, "bootstrap_ci");
  std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
  std::vector<double> means(B);
  for (int b = 0; b < B; ++b) {
    double s = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += xs[pick(rng)];
    means[b] = s / double(xs.size());
  }
  ci.lo = quantile(means, alpha / 2);
  ci.hi = quantile(means, 1 - alpha / 2);
  return ci;
}

double stab_out(const Interval& ci, const std::vector<double>& xs) {
  double idr = quantile(xs, 0.9) - quantile(xs, 0.1);
  double w = ci.hi - ci.lo;
  if (idr <= 0.0) return w <= 0.0 ? 1.0 : 0.0;
  return 1.0 - std::min(1.0, w / idr);
}

double boot_stab(double stab_sub, double stab_out_v, double beta) {
  return beta * stab_sub + (1.0 - beta) * stab_out_v;
}

double relative_edit_norm(const Vec& dh, const Vec& h, double eps) { return dh.norm() / (h.norm() + eps); }

double churn(const Vec& p_base, const Vec& p_edit, int k) {
  auto topk = [k](const Vec& p) {
    std::vector<int> idx(p.size());
    for (int i = 0; i < p.size(); ++i) idx[i] = i;
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](int a, int b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
    return std::set<int>(idx.begin(), idx.begin() + k);
  };
  auto a = topk(p_base), b = topk(p_edit);
  int common = 0;
  for (int x : a) common += static_cast<int>(b.count(x));
  return 1.0 - double(common) / double(k);
}

double cosine(const Vec& a, const Vec& b) {
  double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

double inflation_fraction(double shift_diagnostic, double shift_shared_as_diag) {
  if (shift_shared_as_diag == 0.0) return 0.0;
  return (shift_shared_as_diag - shift_diagnostic) / shift_shared_as_diag;
}

double round_half_away(double x, int decimals) {
  double scale = std::pow(10.0, decimals);
  double y = std::abs(x) * scale;
  // absorb representation error such as 0.675 -> 67.4999...
  double r = std::floor(y + 0.5 + 1e-9);
  return std::copysign(r / scale, x);
}

std::string format_signed(double x) {
  double r = round_half_away(x, 2);
  if (r == 0.0) r = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", r);
  return buf;
}

std::string format_cell(double delta, double base, double edited) {
  char buf[96];
  double b = round_half_away(base, 2), e = round_half_away(edited, 2);
  if (b == 0.0) b = 0.0;
  if (e == 0.0) e = 0.0;
  std::snprintf(buf, sizeof buf, "%s / (%.2f→%.2f)", format_signed(delta).c_str(), b, e);
  return buf;
}

}  // namespace foxp2
