#include "fixtures.hpp"
#include "foxp2/metrics.hpp"
#include "foxp2/steer.hpp"
#include "foxp2/tensor_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace foxp2;
namespace fs = std::filesystem;

namespace {

LayerArtifact toy_layer() {
  LayerArtifact la;
  la.layer = 4;
  la.support = {1, 3, 5};
  la.mu_target = (Vec(3) << 1.0, 0.5, 0.0).finished();
  la.mu_en = (Vec(3) << 0.0, 0.0, 2.0).finished();
  la.basis = Vec::Unit(3, 0);
  return la;
}

SteerArtifact toy_artifact() {
  SteerArtifact a;
  a.window_lo = 3;
  a.window_hi = 5;
  a.layers = {toy_layer()};
  a.lambda = 0.4;
  a.rho = 1.0;
  a.pins.model = "m";
  a.pins.tokenizer = "t";
  a.pins.dicts = {"d1", "d2"};
  return a;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("foxp2_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Edit, ZeroIntensityAndOrthogonalSuppression) {
  LayerArtifact la = toy_layer();
  Vec z = (Vec(3) << 0.3, 0.2, 0.0).finished();  // orthogonal to mu_en
  EXPECT_EQ(edit_vector_local(la, z, 0.0, 0.0, false), Vec::Zero(3));
  Vec d = edit_vector_local(la, z, 0.5, 0.9, false);
  EXPECT_LE((d - 0.5 * (Vec(3) << 1.0, 0.0, 0.0).finished()).norm(), 1e-15);
  EXPECT_EQ(edit_vector_local(la, z, 0.5, 0.9, false, EditVariant::WithoutN), Vec::Zero(3));
  Vec zz = (Vec(3) << 0.3, 0.2, 1.0).finished();
  Vec ws = edit_vector_local(la, zz, 0.5, 0.9, false, EditVariant::WithoutS);
  EXPECT_NEAR(ws.dot(la.basis.col(0)), 0.0, 1e-15);
  Vec np = edit_vector_local(la, z, 0.5, 0.0, false, EditVariant::NoProjection);
  EXPECT_LE((np - 0.5 * la.mu_target).norm(), 1e-15);
}

TEST(Edit, IntensityScalesJointly) {
  SteerArtifact a = toy_artifact();
  Vec z = Vec::Zero(8);
  z[5] = 1.0;
  z[1] = 0.4;
  Vec d1 = edit_vector(a, 4, z);
  a.gamma = 2.0;
  Vec d2 = edit_vector(a, 4, z);
  EXPECT_LE((d2 - 2.0 * d1).norm(), 1e-15);
  a.gamma = 0.0;
  EXPECT_EQ(edit_vector(a, 4, z), Vec::Zero(8));
  a.gamma = 1.0;
  EXPECT_EQ(edit_vector(a, 6, z), Vec::Zero(8));  // outside the window
  EXPECT_EQ(edit_vector(a, 3, z), Vec::Zero(8));  // inside, but no support at that layer
  EXPECT_EQ(a.support_size(), 3);
}

TEST(Artifact, BuildFromCodes) {
  CodeData data;
  Mat Z = fixtures::gaussian(20, 6, 1).cwiseAbs();
  data.Z_target = {Z};
  data.Z_en = {Z};
  data.Z_weak = {Z};
  LayerArtifact la = build_layer_artifact(1, {4, 2}, data, 8);
  EXPECT_EQ(la.support, (std::vector<int>{2, 4}));
  EXPECT_EQ(la.mu_target, Vec::Zero(2));
  EXPECT_EQ(la.basis.cols(), 0);
  EXPECT_THROW(build_layer_artifact(1, {}, data, 8), ConfigError);

  data.Z_target = {Z};
  data.Z_target[0].col(2).array() += 1.0;
  LayerArtifact lb = build_layer_artifact(1, {2, 4}, data, 8);
  EXPECT_NEAR(lb.mu_target[0], 1.0, 1e-12);
  EXPECT_EQ(lb.basis.cols(), 1);
  EXPECT_NEAR(std::abs(lb.basis(0, 0)), 1.0, 1e-12);
}

TEST(Artifact, RandomSupportMatchesSizeAndAvoidsN) {
  CodeData data;
  Mat Z = fixtures::gaussian(30, 12, 2).cwiseAbs();
  Mat Zt = Z;
  Zt.array() += 0.5;
  data.Z_target = {Z, Zt, Z, Zt, Z};
  data.Z_en = {Z, Z, Z, Z, Z};
  data.Z_weak = data.Z_en;
  SteerArtifact a = toy_artifact();
  a.layers[0].support = {1, 3, 5};
  SteerArtifact r1 = random_support_artifact(a, data, 12, 2, 9);
  SteerArtifact r2 = random_support_artifact(a, data, 12, 2, 9);
  ASSERT_EQ(r1.layers.size(), 1u);
  EXPECT_EQ(r1.layers[0].support.size(), 3u);
  for (int j : r1.layers[0].support) EXPECT_TRUE(j != 1 && j != 3 && j != 5);
  EXPECT_EQ(r1.layers[0].support, r2.layers[0].support);
}

TEST(Artifact, SaveLoadRoundTripAndTamper) {
  fs::path dir = scratch("artifact");
  SteerArtifact a = toy_artifact();
  save_artifact(dir, a);
  SteerArtifact b = load_artifact(dir);
  EXPECT_EQ(b.window_lo, 3);
  EXPECT_EQ(b.lambda, a.lambda);
  ASSERT_EQ(b.layers.size(), 1u);
  EXPECT_EQ(b.layers[0].support, a.layers[0].support);
  EXPECT_EQ(b.layers[0].mu_en, a.layers[0].mu_en);
  EXPECT_EQ(b.layers[0].basis, a.layers[0].basis);
  EXPECT_NO_THROW(verify_pins(b, a.pins));
  Pins other = a.pins;
  other.dicts[1] = "x";
  EXPECT_THROW(verify_pins(b, other), PinError);

  std::string bin = read_file(dir / "steer.bin");
  bin[bin.size() / 2] ^= 0x01;
  write_file(dir / "steer.bin", bin);
  EXPECT_THROW(load_artifact(dir), PinError);
  fs::remove_all(dir);
}

TEST(OperatingPoint, ChoiceRules) {
  auto pm = [](double lam, double rho, double gain, bool ok) {
    PointMetrics p;
    p.lambda = lam;
    p.rho = rho;
    p.gain = gain;
    p.pass_kl = ok;
    return p;
  };
  EXPECT_EQ(choose_admissible({pm(0, 0, 0, true), pm(1, 0, 0.5, true), pm(2, 0, 0.9, false)}), 1);
  EXPECT_EQ(choose_admissible({pm(1, 0.5, 0.5, true), pm(2, 1, 0.5, true), pm(2, 0.5, 0.5, true)}), 2);
  EXPECT_EQ(choose_admissible({pm(1, 0, 0.5, false)}), -1);
}

TEST(OperatingPoint, GuardrailChecks) {
  EvalSummary s;
  std::vector<EvalPrompt> prompts(4);
  for (int i = 0; i < 4; ++i) {
    PromptEval e;
    e.kl = 0.05;
    e.task_match = i == 0 ? -0.04 : 0.0;
    prompts[i].intent = i % 2;
    s.per_prompt.push_back(e);
  }
  EvalConfig cfg;
  PointMetrics m = point_metrics(s, prompts, cfg, Guardrails{});
  EXPECT_TRUE(m.pass_kl);
  EXPECT_FALSE(m.pass_util);  // mean -0.01
  EXPECT_FALSE(m.pass_sem);   // intent 0 regresses by 0.02
  Guardrails loose{1e9, 1e9, 1e9, 1e9};
  EXPECT_TRUE(point_metrics(s, prompts, cfg, loose).admissible());
  Guardrails strict;
  strict.eps_kl = 0.0;
  EXPECT_FALSE(point_metrics(s, prompts, cfg, strict).pass_kl);
}

TEST(Controls, ZeroDriftGivesIdentityParameters) {
  auto prompts = fixtures::english_prompts(5);
  EvalConfig cfg;
  auto base = compute_baselines(fixtures::planted(), prompts, cfg, Exec::Serial);
  StepMatch t = match_temperature(base, {0.0, 0.0, 0.0});
  EXPECT_EQ(t.param, (std::vector<double>{1.0, 1.0, 1.0}));
  StepMatch n = match_noise_kl(base, prompts, {0.0, 0.0, 0.0}, 1);
  EXPECT_EQ(n.param, (std::vector<double>{0.0, 0.0, 0.0}));
  StepMatch t2 = match_temperature(base, {0.05, 0.05, 0.05});
  EXPECT_TRUE(t2.feasible);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(t2.achieved[k], 0.05, 0.0005 + 1e-12);
}

TEST(Hooks, NullAndZeroIntensityEditsAreIdentity) {
  const Model& m = fixtures::planted();
  std::vector<Dictionary> dicts;
  for (int l = 1; l <= m.L(); ++l) {
    Dictionary D;
    D.W = fixtures::gaussian(m.d(), 10, l);
    D.b = Vec::Constant(10, 0.1);
    dicts.push_back(D);
  }
  SteerArtifact a = toy_artifact();
  a.gamma = 0.0;
  auto prompts = fixtures::english_prompts(6);
  EvalConfig cfg;
  auto base = compute_baselines(m, prompts, cfg, Exec::Serial);
  EvalContext ctx{&m, &dicts, &prompts, &base, &fixtures::partition(), cfg, Exec::Serial};
  EvalSummary zero = ctx.run(steering_hooks(dicts, a));
  EvalSummary none = ctx.run([](int, DiagSink*) { return Hooks{}; });
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    EXPECT_NEAR(zero.per_prompt[i].gain, none.per_prompt[i].gain, 1e-12);
    EXPECT_NEAR(zero.per_prompt[i].kl, 0.0, 1e-12);
  }
  a.gamma = 1.0;
  EvalSummary wn = ctx.run(steering_hooks(dicts, a, EditVariant::WithoutN));
  for (const auto& p : wn.per_prompt) EXPECT_NEAR(p.kl, 0.0, 1e-12);
  EvalContext par = ctx;
  par.exec = Exec::Parallel;
  EvalSummary e1 = ctx.run(steering_hooks(dicts, a)), e2 = par.run(steering_hooks(dicts, a));
  for (std::size_t i = 0; i < prompts.size(); ++i) EXPECT_EQ(e1.per_prompt[i].gain, e2.per_prompt[i].gain);
}
