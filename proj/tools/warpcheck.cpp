// warpcheck <command> --scenario <path> [--seed N] [--out dir] [--grid-scale k]
//
// Exit status: 0 when every check passes, 1 when a check fails or a module
// error is recorded in the report, 2 on usage or scenario errors.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "warpcheck/cli_report.hpp"

#ifndef WARPCHECK_GIT_DESCRIBE
#define WARPCHECK_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

void summarize(const warpcheck::Report& rep) {
  for (const auto& [name, r] : rep.results) {
    std::cerr << (r.pass ? "PASS " : "FAIL ") << name;
    if (r.error_code) std::cerr << "  [" << *r.error_code << "] " << r.error_message.value_or("");
    else std::cerr << "  margin=" << r.margin << " tolerance=" << r.tolerance;
    std::cerr << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curvature-dimension checks for one-dimensional warped products"};
  app.set_version_flag("--version", std::string(WARPCHECK_GIT_DESCRIBE));

  std::string command, scenario_path, out_dir;
  warpcheck::RunOptions opts;
  opts.git_describe = WARPCHECK_GIT_DESCRIBE;
  app.add_option("command", command, "check | classify | distance | geodesic | spectrum | bochner | brunn-minkowski | mcp | all")
      ->required()
      ->check(CLI::IsMember(warpcheck::command_names()));
  app.add_option("--scenario", scenario_path, "scenario JSON file")->required();
  app.add_option("--seed", opts.seed, "seed for randomized checks")->capture_default_str();
  app.add_option("--out", out_dir, "directory for report.json and CSV artifacts (default: report on stdout)");
  app.add_option("--grid-scale", opts.grid_scale, "multiplier for the scenario grid sizes")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_flag("--quiet,-q", "no per-check summary on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      opts.source_date_epoch = std::stoll(sde);
    } catch (const std::exception&) {
      std::cerr << "warpcheck: ignoring malformed SOURCE_DATE_EPOCH\n";
    }
  }

  warpcheck::Scenario scenario;
  try {
    scenario = warpcheck::load_scenario(scenario_path);
  } catch (const warpcheck::Error& e) {
    std::cerr << "warpcheck: " << e.what() << '\n';
    return 2;
  }

  const auto rep = warpcheck::run(command, scenario, opts);
  const std::string text = rep.dump();
  try {
    if (out_dir.empty()) {
      std::cout << text;
    } else {
      fs::create_directories(out_dir);
      write_file(fs::path(out_dir) / "report.json", text);
      for (const auto& [name, csv] : rep.artifacts) write_file(fs::path(out_dir) / name, csv);
    }
  } catch (const std::exception& e) {
    std::cerr << "warpcheck: " << e.what() << '\n';
    return 2;
  }
  if (app.count("--quiet") == 0) summarize(rep);
  return rep.exit_code();
}
