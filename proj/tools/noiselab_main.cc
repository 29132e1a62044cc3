// Copyright 2026 The NoiseLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// noiselab command-line entry point.
//
//   noiselab <gen-data|perturb|pretrain|finetune|evaluate|ablate|all>
//            --config FILE [--seed N] [--output DIR] [--quiet]
//
// Exit codes: 0 success, 1 stage failure, 2 usage error, 3 invalid config.
// Failures print one JSON object on stderr: {"error","exit","message"}.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "noiselab/config.h"
#include "noiselab/errors.h"
#include "noiselab/pipeline.h"

namespace {

int fail(const std::string& kind, int code, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["exit"] = code;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using noiselab::RunConfig;
  using noiselab::StageContext;

  const std::map<std::string, std::function<void(const RunConfig&, const StageContext&)>> stages = {
      {"gen-data", noiselab::stage_gen_data}, {"perturb", noiselab::stage_perturb},
      {"pretrain", noiselab::stage_pretrain}, {"finetune", noiselab::stage_finetune},
      {"evaluate", noiselab::stage_evaluate}, {"ablate", noiselab::stage_ablate},
      {"all", noiselab::stage_all},
  };

  CLI::App app{"Noise-robust slot filling pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, output;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--seed", seed, "overrides every seed in the config");
  app.add_option("--output", output, "overrides paths.output_dir");
  app.add_flag("--quiet", quiet, "no progress output");
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, fn] : stages) subs[name] = app.add_subcommand(name, "run the " + name + " stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", 2, e.what());
  }
  if (config_path.empty()) return fail("usage", 2, "--config is required");
  if (!std::filesystem::is_regular_file(config_path)) {
    return fail("usage", 2, "config file not found: " + config_path);
  }

  std::string stage;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) stage = name;
  }

  try {
    RunConfig config = noiselab::load_config(config_path);
    if (seed) config.set_seed(*seed);
    if (!output.empty()) {
      config.output_dir = std::filesystem::absolute(output).string();
    }
    config.validate();
    StageContext ctx;
    ctx.quiet = quiet;
    ctx.threads = noiselab::threads_from_env();
    stages.at(stage)(config, ctx);
  } catch (const noiselab::ConfigError& e) {
    return fail("validation", 3, e.what());
  } catch (const noiselab::Error& e) {
    return fail(e.kind(), 1, stage + ": " + e.what());
  } catch (const std::exception& e) {
    return fail("internal", 1, stage + ": " + e.what());
  }
  return 0;
}
