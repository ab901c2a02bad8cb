#include "foxp2/hash.hpp"
#include "foxp2/pipeline.hpp"
#include "foxp2/tensor_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>

#ifndef FOXP2_SOURCE_REVISION
#define FOXP2_SOURCE_REVISION "unknown"
#endif

namespace {

std::string environment_descriptor() {
  std::string s = "compiler=";
#if defined(__clang__)
  s += "clang " __clang_version__;
#elif defined(__GNUC__)
  s += "gcc " __VERSION__;
#endif
#ifdef _OPENMP
  s += "; openmp=" + std::to_string(_OPENMP);
#endif
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"foxp2: sparse language-control steering on a planted toy model"};
  app.require_subcommand(1, 1);

  std::optional<std::string> config_path, root;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<std::string> target;
  bool serial = false;
  bool dump_config = false;
  app.add_option("--config", config_path, "JSON config file (defaults apply to omitted keys)");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--root", root, "artifact root (default: $FOXP2_ARTIFACT_ROOT or ./foxp2_artifacts)");
  app.add_option("--gamma", gamma, "edit intensity applied at eval time");
  app.add_option("--target", target, "target language (hi or es)");
  app.add_flag("--serial", serial, "use the serial reference kernels");
  app.add_flag("--dump-config", dump_config, "print the resolved config and exit");

  std::vector<std::string> stages = foxp2::stage_names();
  stages.push_back("all");
  for (const auto& s : stages) app.add_subcommand(s, s == "all" ? "run every stage in order" : "run the " + s + " stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 4;
  }

  try {
    foxp2::PipelineConfig cfg = config_path ? foxp2::load_config(*config_path) : foxp2::PipelineConfig{};
    if (seed) cfg.seed = *seed;
    if (gamma) cfg.steer.gamma = *gamma;
    if (target) {
      cfg.target = foxp2::lang_from_name(*target);
      if (cfg.target == foxp2::Lang::En) throw foxp2::ConfigError("target language must differ from English");
    }
    if (dump_config) {
      std::cout << nlohmann::json(cfg).dump(2) << "\n";
      return 0;
    }
    const std::string stage = app.get_subcommands().front()->get_name();
    auto dir = foxp2::artifact_root(root);

    std::string command;
    for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);
    nlohmann::json cj = cfg;
    nlohmann::json run = {{"run_id", foxp2::sha256_hex(cj.dump() + "|" + stage).substr(0, 16)},
                          {"source_revision", FOXP2_SOURCE_REVISION},
                          {"command", command},
                          {"stage", stage},
                          {"seed", cfg.seed},
                          {"config", cj},
                          {"environment", environment_descriptor()}};
    foxp2::write_file(dir / ("run_" + stage + ".json"), run.dump(2) + "\n");

    foxp2::Pipeline p(cfg, dir, serial ? foxp2::Exec::Serial : foxp2::Exec::Parallel);
    p.run(stage);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "foxp2: " << e.what() << "\n";
    return foxp2::exit_code_for(e);
  }
}
