#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seqrl/commands.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << seqrl::usage_text();
    return 2;
  }
  const std::string name = argv[1];
  if (name == "-h" || name == "--help") {
    std::cout << seqrl::usage_text();
    return 0;
  }
  const auto& names = seqrl::subcommand_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::cerr << "unknown subcommand '" << name << "'\n" << seqrl::usage_text();
    return 2;
  }

  CLI::App app{"seqrl " + name};
  app.name("seqrl " + name);
  seqrl::CommandOptions options;
  std::string config_path;
  app.add_option("--config,-c", config_path, "key = value config file");
  app.add_option("--set,-s", options.overrides, "override, key=value (repeatable)")->take_all();
  app.add_option("--run-dir", options.run_dir, "run directory for train commands");
  if (name == "eval") app.add_option("--from", options.from, "run directory to evaluate");
  try {
    app.parse(argc - 1, argv + 1);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (!config_path.empty()) options.config_path = config_path;
  return seqrl::run_subcommand(name, options, std::cout, std::cerr);
}
