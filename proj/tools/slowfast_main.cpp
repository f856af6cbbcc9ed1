#include "slowfast/cli_runner.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{
      "slowfast: slow-fast McKean-Vlasov particle systems, their homogenized "
      "limits, and moderate-deviations rate evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string chosen;
  for (const char* name : {"equilibrium", "cell", "average", "simulate",
                           "couple", "fluctuate", "rate", "validate"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("config", config_path, "JSON config file")->required();
    sub->callback([name, &chosen]() { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  return slowfast::run_subcommand(chosen, config_path);
}
