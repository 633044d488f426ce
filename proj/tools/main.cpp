#include <CLI11.hpp>

#include "fera/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Frequency-energy routed LoRA experts for toy diffusion models"};
  fera::CommandOptions opt;
  std::uint64_t seed = 0;
  app.add_option("command", opt.command, "Command to run")
      ->required()
      ->check(CLI::IsMember(fera::command_names()));
  app.add_option("--config", opt.config, "Configuration file (INI sections)")->required()->check(CLI::ExistingFile);
  app.add_option("--out", opt.out, "Output directory")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Run seed; overrides run.seed");
  app.add_option("--set", opt.overrides, "Override a config value, section.key=value")->allow_extra_args(false);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fera::kExitUsage;
  }
  if (*seed_opt) opt.seed = seed;
  return fera::run_command(opt);
}
