// SPDX-License-Identifier: Apache-2.0
//
// lab run <spec> | lab list [--json] | lab validate <spec> | lab defaults <scenario>
//
// Exit codes: 0 success, 1 error, 2 a bound failed its threshold.
// LAB_OUTPUT_DIR sets the output directory when the YAML file gives none.

#include "mdlab/io.hpp"
#include "mdlab/scenarios.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace sc = mdlab::scenarios;

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-on-manifolds experiment runner"};
  app.require_subcommand(1);

  std::string spec_path, out_override;
  auto* run = app.add_subcommand("run", "Execute a scenario spec");
  run->add_option("spec", spec_path, "YAML spec file")->required();
  run->add_option("-o,--output", out_override, "Output directory (overrides spec and LAB_OUTPUT_DIR)");

  bool as_json = false;
  auto* list = app.add_subcommand("list", "List scenarios");
  list->add_flag("--json", as_json, "Machine-readable output");

  std::string check_path;
  auto* val = app.add_subcommand("validate", "Parse and validate a spec");
  val->add_option("spec", check_path, "YAML spec file")->required();

  std::string default_name;
  auto* def = app.add_subcommand("defaults", "Print the default spec of a scenario");
  def->add_option("scenario", default_name, "Scenario name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*list) {
      if (as_json) {
        mdlab::io::Json j = mdlab::io::Json::array();
        for (const auto& s : sc::registry()) j.push_back({{"name", s.name}, {"description", s.description}});
        std::cout << j.dump(2) << "\n";
      } else {
        for (const auto& s : sc::registry()) std::cout << s.name << "  " << s.description << "\n";
      }
      return 0;
    }
    if (*def) {
      std::cout << sc::dump_spec(sc::default_spec(default_name));
      return 0;
    }
    if (*val) {
      auto spec = sc::parse_spec(mdlab::io::read_file(check_path));
      std::cout << "ok: " << spec.scenario << "\n";
      return 0;
    }
    auto spec = sc::parse_spec(mdlab::io::read_file(spec_path));
    std::string out = out_override;
    if (out.empty()) out = spec.output_dir;
    if (out.empty()) {
      const char* env = std::getenv("LAB_OUTPUT_DIR");
      out = env && *env ? env : "lab_out";
      out += "/" + spec.scenario;
    }
    auto res = sc::run(spec, out);
    std::cout << res.summary.dump(2) << "\n";
    for (const auto& f : res.files) std::cerr << "wrote " << out << "/" << f << "\n";
    return res.violation ? 2 : 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
