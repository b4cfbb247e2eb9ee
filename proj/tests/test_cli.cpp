// SPDX-License-Identifier: Apache-2.0

#include "mdlab/io.hpp"
#include "mdlab/scenarios.hpp"

#include <doctest.h>

#include <filesystem>
#include <set>

using namespace mdlab;
using namespace mdlab::scenarios;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& yaml) {
  try {
    validate(parse_spec(yaml));
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mdlab_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("registry: all families in a stable order") {
  const auto& r = registry();
  REQUIRE(r.size() == 13);
  CHECK(r.front().name == "concentration.inner_product");
  CHECK(r.back().name == "estimator.erm_demo");
  std::set<std::string> names;
  for (const auto& s : r) names.insert(s.name);
  for (const char* want : {"fit.rate", "sampler.compare", "sampler.k_sweep", "bounds.sml_w2", "bounds.kl_dissipation",
                           "estimator.erm_demo", "concentration.denoiser_variance"})
    CHECK(names.count(want) == 1);
  CHECK(&registry() == &r);
  for (const auto& s : r) CHECK_NOTHROW(validate(default_spec(s.name)));
}

TEST_CASE("parse_spec: errors name the offending key") {
  CHECK(error_of("scenario: fit.rate\nbogus: 1\n").find("bogus: unknown key") != std::string::npos);
  CHECK(error_of("scenario: fit.rate\nmanifold:\n  radius: [1, 2]\n").find("manifold.radius") != std::string::npos);
  CHECK(error_of("scenario: fit.rate\nmanifold:\n  colour: red\n").find("manifold.colour: unknown key") !=
        std::string::npos);
  CHECK(error_of("scenario: nope\n").find("scenario") != std::string::npos);
  CHECK(error_of("schema: 2\nscenario: fit.rate\n").find("schema") != std::string::npos);
  CHECK(error_of("seed: 3\n").find("scenario") != std::string::npos);
}

TEST_CASE("validate: empty sweep axis is named") {
  CHECK(error_of("scenario: concentration.denoiser_variance\nsweep:\n  D: []\n").find("sweep.D: axis is empty") !=
        std::string::npos);
  CHECK(error_of("scenario: sampler.k_sweep\nsweep:\n  K: []\n").find("sweep.K") != std::string::npos);
}

TEST_CASE("parse_spec overlays defaults and round-trips through dump_spec") {
  auto s = parse_spec("scenario: sampler.k_sweep\nseed: 9\nsampler:\n  n_paths: 1000\nsweep:\n  K: [8, 16]\n");
  CHECK(s.seed == 9);
  CHECK(s.sampler.n_paths == 1000);
  REQUIRE(s.sweep.K);
  CHECK(s.sweep.K->size() == 2);
  CHECK(s.sampler.T_bar == default_spec("sampler.k_sweep").sampler.T_bar);
  auto back = parse_spec(dump_spec(s));
  CHECK(dump_spec(back) == dump_spec(s));
}

TEST_CASE("run: denoiser default sweep writes 3 CSVs and a summary, reruns are byte-identical") {
  auto spec = default_spec("concentration.denoiser_variance");
  auto a = fresh_dir("den_a"), b = fresh_dir("den_b");
  auto out = run(spec, a.string());
  run(spec, b.string());
  int csvs = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++csvs;
    CHECK(io::read_file(e.path().string()) == io::read_file((b / e.path().filename()).string()));
    auto head = io::read_file(e.path().string()).substr(0, 32);
    CHECK(head.rfind("trial,statistic,excess,violation", 0) == 0);
  }
  CHECK(csvs == 3);
  CHECK(fs::exists(a / "summary.json"));
  CHECK(fs::exists(a / "manifest.json"));
  CHECK(io::read_file((a / "summary.json").string()) == io::read_file((b / "summary.json").string()));
  auto manifest = io::Json::parse(io::read_file((a / "manifest.json").string()));
  CHECK(manifest["spec_sha256"].get<std::string>().size() == 64);
  CHECK(manifest["seed"].get<std::uint64_t>() == spec.seed);
  CHECK_FALSE(out.violation);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("run: small k-sweep and KL scenarios produce their tables") {
  auto spec = parse_spec("scenario: sampler.k_sweep\nsampler:\n  n_paths: 2000\nsweep:\n  K: [16, 32]\n");
  auto d = fresh_dir("ks");
  auto out = run(spec, d.string());
  CHECK(fs::exists(d / "k_sweep.csv"));
  CHECK(out.summary["median_w1"].size() == 2);
  fs::remove_all(d);
  auto kl = default_spec("bounds.kl_dissipation");
  auto d2 = fresh_dir("kl");
  auto o2 = run(kl, d2.string());
  CHECK(o2.summary.contains("max_abs_gap"));
  fs::remove_all(d2);
}

TEST_CASE("run: ERM demo writes a loadable checkpoint") {
  auto d = fresh_dir("erm");
  auto out = run(default_spec("estimator.erm_demo"), d.string());
  REQUIRE(fs::exists(d / "model.ckpt"));
  auto m = io::load_checkpoint((d / "model.ckpt").string());
  CHECK_NOTHROW(m.validate());
  CHECK(m.anchors.rows() == 2);
  CHECK(out.summary["improvement"].get<double>() > 1);
  fs::remove_all(d);
}
