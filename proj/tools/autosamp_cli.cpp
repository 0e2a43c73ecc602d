// autosamp: pattern generation, analysis, simulation, reconstruction,
// training, gradient checks and run replay.

#include <cstdlib>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace autosamp;
using namespace autosamp::cli;

namespace {

struct CommandFlags {
  CLI::App* app = nullptr;
  std::string profile = "desk";
  std::string config;
  std::string out;
  int threads = 0;
  std::map<std::string, std::string> text;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
};

std::string default_out(const std::string& command) {
  const char* root = std::getenv("AUTOSAMP_OUT");
  return (fs::path(root && *root ? root : "runs") / command).string();
}

void add_common(CLI::App* sub, std::string& out, int& threads) {
  sub->add_option("--out", out, "run directory (default $AUTOSAMP_OUT/<command>, or runs/<command>)");
  sub->add_option("--threads", threads, "cap on worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
}

/// Defaults from the profile, then the config file, then flags given explicitly.
ojson resolve(const std::string& command, const CommandFlags& f) {
  std::string profile = f.profile;
  nlohmann::json file;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ValidationError("cannot read config file " + f.config);
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config file " + f.config + " is not valid JSON: " + e.what());
    }
    if (file.is_object() && file.contains("profile") && f.app->get_option("--profile")->count() == 0) {
      if (!file["profile"].is_string()) throw ValidationError("config key 'profile' must be a string");
      profile = file["profile"].get<std::string>();
    }
  }
  ojson cfg = profile_defaults(command, profile);
  if (!f.config.empty()) apply_config(command, cfg, file);
  for (const auto& s : schema(command)) {
    const CLI::Option* o = f.options.at(s.key);
    if (o->count() == 0) continue;
    cfg[s.key] = s.type == OptType::boolean ? ojson(f.flags.at(s.key)) : parse_flag(s, f.text.at(s.key));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint k-space sampling and reconstruction toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::map<std::string, CommandFlags> commands;
  for (const auto& name : command_names()) {
    CommandFlags& f = commands[name];
    f.app = app.add_subcommand(name);
    f.app->add_option("--profile", f.profile, "defaults profile: desk | paper")->check(CLI::IsMember({"desk", "paper"}));
    f.app->add_option("--config", f.config, "JSON config file; keys as below with '_' for '-'");
    add_common(f.app, f.out, f.threads);
    for (const auto& s : schema(name)) {
      const std::string flag = "--" + flag_name(s.key);
      if (s.type == OptType::boolean) {
        f.flags[s.key] = false;
        f.options[s.key] = f.app->add_flag(flag, f.flags[s.key], s.help);
      } else {
        f.text[s.key];
        f.options[s.key] = f.app->add_option(flag, f.text[s.key], s.help);
      }
    }
  }
  commands.at("gen-pattern").app->description("generate a sampling pattern (CSV + JSON sidecar)");
  commands.at("analyze-pattern").app->description("PSF, Voronoi areas and radial density of a pattern");
  commands.at("simulate").app->description("synthesize a phantom dataset, optionally with k-space data");
  commands.at("reconstruct").app->description("reconstruct a split and dump images and metrics");
  commands.at("evaluate").app->description("PSNR/SSIM of a decoder on a split");
  commands.at("train").app->description("jointly optimize sampling coordinates and the unrolled decoder");
  commands.at("gradcheck").app->description("finite-difference gradient checks");

  std::string replay_manifest, replay_out;
  int replay_threads = 0;
  CLI::App* replay = app.add_subcommand("replay", "rerun a recorded run and compare outputs bit for bit");
  replay->add_option("--manifest", replay_manifest, "manifest.json of the recorded run")->required();
  add_common(replay, replay_out, replay_threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (replay->parsed()) {
      set_max_threads(replay_threads);
      const fs::path out = replay_out.empty() ? fs::path(default_out("replay")) : fs::path(replay_out);
      return run_replay(replay_manifest, out, replay_threads);
    }
    for (auto& [name, f] : commands) {
      if (!f.app->parsed()) continue;
      set_max_threads(f.threads);
      const ojson cfg = resolve(name, f);
      return execute(name, cfg, f.out.empty() ? default_out(name) : f.out, f.threads);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
