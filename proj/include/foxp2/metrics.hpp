#pragma once

#include "foxp2/common.hpp"
#include "foxp2/tokens.hpp"

#include <string>
#include <vector>

namespace foxp2 {

inline constexpr double kProbFloor = 1e-12;

double mass(const Vec& p, const Vec& w);
double kl_divergence(const Vec& p_edit, const Vec& p_base);  // natural log, probabilities floored
double entropy(const Vec& p);
double nll(const Vec& p, int tok);

struct Lid {
  double value = 0.0;
  bool abstain = false;  // every token was shared
};
// (count in V_l + s) / (non-shared count + s*K)
Lid lid(const std::vector<int>& tokens, Lang l, const Partition& part, double s = 1.0);

struct Thresholds {
  double tau_M = 0.0;
  double tau_L = 0.0;
};
// 75th percentile of the no-edit shift magnitudes, floored so the indicator needs a positive shift.
Thresholds calibrate_thresholds(const std::vector<double>& mass_shift_noedit,
                                const std::vector<double>& lid_shift_noedit, double pct = 0.75,
                                double floor = 1e-3);
int default_indicator(double d_mass, double d_lid, const Thresholds& t);
double default_continuous(double d_mass, double d_lid, double w1 = 0.5, double w2 = 0.5);

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};
Interval bootstrap_ci(const std::vector<double>& xs, int B, double alpha, std::uint64_t seed);
// 1 - min(1, CI width / interdecile range of the per-prompt values)
double stab_out(const Interval& ci, const std::vector<double>& xs);
double boot_stab(double stab_sub, double stab_out_v, double beta = 0.5);

double relative_edit_norm(const Vec& dh, const Vec& h, double eps = 1e-8);
double churn(const Vec& p_base, const Vec& p_edit, int k = 10);
double cosine(const Vec& a, const Vec& b);

// Share of the shared-as-diagnostic mass shift that comes from shared tokens.
double inflation_fraction(double shift_diagnostic, double shift_shared_as_diag);

double round_half_away(double x, int decimals);
std::string format_signed(double x);
// "+0.68 / (0.10→0.78)"
std::string format_cell(double delta, double base, double edited);

}  // namespace foxp2
