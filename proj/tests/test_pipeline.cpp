#include "foxp2/hash.hpp"
#include "foxp2/pipeline.hpp"
#include "foxp2/tensor_io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

using namespace foxp2;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("foxp2_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args) {
  std::string cmd = std::string(FOXP2_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST(Config, DefaultsRoundTripAndValidate) {
  PipelineConfig c;
  nlohmann::json j = c;
  EXPECT_EQ(nlohmann::json(j.get<PipelineConfig>()).dump(), j.dump());
  EXPECT_EQ(c.steer.guard.eps_kl, 0.10);
  EXPECT_EQ(c.steer.guard.eps_es, 0.20);
  EXPECT_EQ(c.eval.m, 8);
  EXPECT_EQ(c.eval.T, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(c.partition.f_min, 50);
  EXPECT_EQ(c.partition.spec_hi, 2.0);
  EXPECT_EQ(c.partition.spec_es, 1.5);

  nlohmann::json bad = j;
  bad["eval"]["T"] = {1, 9};
  EXPECT_THROW(bad.get<PipelineConfig>(), ConfigError);
  bad = j;
  bad["target"] = "en";
  EXPECT_THROW(bad.get<PipelineConfig>(), ConfigError);
}

TEST(Config, LoadErrorsAreConfigErrors) {
  fs::path d = scratch("config");
  write_file(d / "bad.json", "{not json");
  EXPECT_THROW(load_config(d / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(d / "missing.json"), ConfigError);
  write_file(d / "partial.json", R"({"seed": 11, "steer": {"lambda0": 0.1}})");
  PipelineConfig c = load_config(d / "partial.json");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.steer.lambda0, 0.1);
  EXPECT_EQ(c.eval.m, 8);
  fs::remove_all(d);
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(PinError("x")), 2);
  EXPECT_EQ(exit_code_for(GuardrailInfeasible("x")), 3);
  EXPECT_EQ(exit_code_for(ConfigError("x")), 4);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), 1);
}

TEST(ArtifactRoot, FlagThenEnvironmentThenDefault) {
  ::unsetenv("FOXP2_ARTIFACT_ROOT");
  EXPECT_EQ(artifact_root(std::nullopt), fs::path("foxp2_artifacts"));
  ::setenv("FOXP2_ARTIFACT_ROOT", "/tmp/elsewhere", 1);
  EXPECT_EQ(artifact_root(std::nullopt), fs::path("/tmp/elsewhere"));
  EXPECT_EQ(artifact_root(std::string("/x")), fs::path("/x"));
  ::unsetenv("FOXP2_ARTIFACT_ROOT");
}

TEST(Stages, EarlyStagesAreDeterministicAndPinned) {
  fs::path a = scratch("stages_a"), b = scratch("stages_b");
  for (const auto& root : {a, b}) {
    Pipeline p(PipelineConfig{}, root, Exec::Parallel);
    p.run("partition");
    p.run("corpus");
  }
  for (const char* f : {"partition/manifest.json", "partition/partition_diagnostic.json", "corpus/units.jsonl",
                        "corpus/manifest.json"})
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;

  // a downstream stage refuses a tampered upstream output
  std::string units = read_file(a / "corpus/units.jsonl");
  units[units.size() / 3] ^= 0x01;
  write_file(a / "corpus/units.jsonl", units);
  Pipeline p(PipelineConfig{}, a, Exec::Parallel);
  EXPECT_THROW(p.run("dict"), PinError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Stages, MissingUpstreamIsReported) {
  fs::path r = scratch("stages_missing");
  Pipeline p(PipelineConfig{}, r, Exec::Serial);
  EXPECT_ANY_THROW(p.run("geometry"));
  EXPECT_THROW(p.run("nonsense"), ConfigError);
  fs::remove_all(r);
}

TEST(Cli, ExitCodes) {
  fs::path r = scratch("cli");
  EXPECT_EQ(cli("--root " + r.string() + " --dump-config partition"), 0);
  EXPECT_EQ(cli("--no-such-flag partition"), 4);
  EXPECT_EQ(cli("--root " + r.string()), 4);  // no subcommand
  write_file(r / "bad.json", "[1,2");
  EXPECT_EQ(cli("--root " + r.string() + " --config " + (r / "bad.json").string() + " partition"), 4);
  EXPECT_EQ(cli("--root " + r.string() + " --target en partition"), 4);
  EXPECT_EQ(cli("--root " + r.string() + " partition"), 0);
  EXPECT_TRUE(fs::exists(r / "partition/manifest.json"));
  EXPECT_TRUE(fs::exists(r / "run_partition.json"));
  fs::remove_all(r);
}
