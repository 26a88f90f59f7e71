// Command-line driver for the backdoor laboratory. Thin by design: every
// subcommand forwards to sblab_run_stage from the public C interface, so the
// CLI exercises exactly what external consumers of the shared library get.
//
// Exit codes: 0 success, 2 validation problem (bad flags, malformed config,
// missing input), 3 runtime failure (training, adapters, verification).

#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "sblab.h"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

int exit_code_for(sblab_status status) {
  switch (status) {
    case SBLAB_OK:
      return 0;
    case SBLAB_E_INVALID_ARGUMENT:
    case SBLAB_E_FORMAT:
    case SBLAB_E_SCHEMA:
    case SBLAB_E_IO:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

struct StageFlags {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool dry_run = false;
  int jobs = 1;
};

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string overrides_json(const StageFlags& flags) {
  std::string j = "{";
  j += "\"dry_run\":" + std::string(flags.dry_run ? "true" : "false");
  j += ",\"jobs\":" + std::to_string(flags.jobs);
  if (flags.seed_set) j += ",\"seed\":" + std::to_string(flags.seed);
  if (!flags.out.empty()) j += ",\"out\":\"" + json_escape(flags.out) + "\"";
  j += "}";
  return j;
}

int run(const char* stage, const StageFlags& flags) {
  char* summary = nullptr;
  sblab_status status =
      sblab_run_stage(stage, flags.config.c_str(), overrides_json(flags).c_str(), &summary);
  if (status != SBLAB_OK) {
    std::fprintf(stderr, "sblab %s: %s\n", stage, sblab_last_error());
    return exit_code_for(status);
  }
  if (summary != nullptr && summary[0] != '\0') std::printf("%s\n", summary);
  sblab_string_free(summary);
  return 0;
}

void add_stage(CLI::App& app, const char* name, const char* description,
               StageFlags& flags, int& rc) {
  CLI::App* cmd = app.add_subcommand(name, description);
  cmd->add_option("--config", flags.config, "experiment config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "override poisoning and training seeds")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--out", flags.out, "override the config's output directory");
  cmd->add_flag("--dry-run", flags.dry_run, "describe the work without writing anything");
  cmd->add_option("--jobs", flags.jobs, "worker threads for trigger application")
      ->check(CLI::PositiveNumber);
  cmd->callback([name, &flags, &rc] { rc = run(name, flags); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech-backdoor laboratory"};
  app.set_version_flag("--version", sblab_version());
  app.require_subcommand(1);

  StageFlags flags;
  int rc = 0;
  add_stage(app, "mkcorpus", "synthesize the bundled speech-command corpus", flags, rc);
  add_stage(app, "poison", "select the poison subset and build the backdoor dataset", flags, rc);
  add_stage(app, "train", "train the classifier on the backdoor dataset", flags, rc);
  add_stage(app, "eval", "measure benign accuracy and attack success rate", flags, rc);
  add_stage(app, "sweep", "rerun the attack across poisoning rates (and configured axes)", flags, rc);
  add_stage(app, "defend", "fine-tune on clean data and trace ASR/BA per epoch", flags, rc);
  add_stage(app, "scenarios", "probe the model with matching and non-matching triggers", flags, rc);
  add_stage(app, "verify", "recheck recorded artifact digests against the config", flags, rc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int cli_rc = app.exit(e);
    return cli_rc == 0 ? 0 : kExitValidation;
  }
  return rc;
}
