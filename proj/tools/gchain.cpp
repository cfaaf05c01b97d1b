#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gchain/cli.hpp"

namespace {

int execute(gchain::cli::Command command, const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_dir, unsigned threads) {
  using namespace gchain;
  try {
    auto cfg = cli::load_config(command, config_path);
    cfg.seed_override = seed;
    cfg.threads = threads;
    const auto report = cli::run(cfg);
    cli::emit(report, out_dir);
    for (const auto& [name, check] : report.checks)
      std::printf("%s %s%s\n", check.pass ? "ok  " : "FAIL", name.c_str(), check.asserted ? "" : " (informational)");
    std::printf("report: %s\n", (std::filesystem::path(out_dir) / "report.json").string().c_str());
    return report.all_pass() ? 0 : 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::exit_code_for(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generic chaining toolkit: admissible nets, chaining moduli and Monte Carlo checks"};
  app.require_subcommand(1);
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  unsigned threads = 1;

  for (const auto& [name, cmd] : gchain::cli::command_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const auto* chosen = app.get_subcommands().front();
  return execute(gchain::cli::parse_command(chosen->get_name()), config, seed, out_dir, threads);
}
