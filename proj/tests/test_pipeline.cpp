#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>
#include <vector>

#include "support.hpp"
#include "tailcal/error.hpp"
#include "tailcal/pipeline.hpp"

using namespace tailcal;
using testing::TempDir;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticSpec overconfident_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.overconfidence_scale = 2.5;
  spec.prior_bias = true;
  spec.test_per_class = 300;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  PipelineConfig c;
  c.train = "a/train.json";
  c.val = "a/val.json";
  c.test = "a/test.json";
  c.zeta = 37;
  c.alpha = 0.9975;
  c.eta1 = 0.25;
  c.eta2 = 6.5;
  c.strategy = TransferStrategy::onehot;
  c.bins = 20;
  c.ranges = 12;
  c.weight_bins = 8;
  c.tmin = 0.1;
  c.tmax = 12.0;
  c.seed = 123456789012345ULL;
  c.out = "runs/x";
  CHECK(config_from_json(nlohmann::json::parse(to_json(c).dump())) == c);

  TempDir dir;
  std::ofstream(dir / "c.json") << to_json(c).dump(2);
  CHECK(load_config(dir / "c.json") == c);
  CHECK(config_from_json(nlohmann::json::object()) == PipelineConfig{});
}

TEST_CASE("config validation") {
  CHECK_THROWS_WITH_AS(config_from_json(nlohmann::json::parse(R"({"zeta_typo": 3})")),
                       doctest::Contains("zeta_typo"), ValidationError);
  for (const char* bad : {R"({"alpha": 1.5})", R"({"alpha": -0.1})", R"({"zeta": 0})", R"({"eta1": 0})",
                          R"({"eta1": 6, "eta2": 5})", R"({"bins": 0})", R"({"ranges": 0})", R"({"tmin": 2, "tmax": 1})",
                          R"({"strategy": "nearest"})", R"({"alpha": "high"})", R"([1, 2])"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(bad)), ValidationError);
  }
  TempDir dir;
  CHECK_THROWS_AS(load_config(dir / "absent.json"), MissingArtifactError);
}

TEST_CASE("partition round-trips through JSON") {
  const std::vector<std::size_t> counts{500, 120, 99, 4};
  const auto parts = partition(counts, 100);
  const auto doc = to_json(parts, counts);
  CHECK(doc.at("class_counts") == counts);
  const auto back = partition_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.head == parts.head);
  CHECK(back.tail == parts.tail);
  CHECK(back.threshold == parts.threshold);
}

TEST_CASE("in-memory pipeline contract") {
  const auto data = generate_synthetic(overconfident_spec(4));
  PipelineConfig config;
  const auto result = run_pipeline(data.train, data.val, data.test, config);

  CHECK(result.stats.size() == 10);
  CHECK(result.partition.num_classes() == 10);
  CHECK(result.base.temperature == 1.0);
  CHECK(result.base.predictions == result.plain.predictions);
  CHECK(result.base.predictions == result.weighted.predictions);
  CHECK(result.base.metrics.accuracy == result.weighted.metrics.accuracy);
  CHECK(result.plain.metrics.ece < result.base.metrics.ece);
  CHECK(result.weighted.metrics.ece < result.base.metrics.ece);
  for (const auto* eval : {&result.base, &result.plain, &result.weighted}) {
    for (double v : {eval->metrics.ece, eval->metrics.sce, eval->metrics.ace, eval->metrics.accuracy}) {
      CHECK(std::isfinite(v));
    }
    CHECK(eval->metrics.n == data.test.size());
  }

  config.alpha = 1.0;
  const auto identity = run_pipeline(data.train, data.val, data.test, config);
  CHECK(std::abs(identity.calibration.weighted.temperature - identity.calibration.plain.temperature) < 1e-6);
  for (double w : identity.calibration.weights.weights) CHECK(std::abs(w - 1.0) < 1e-9);
}

TEST_CASE("sweep rows are sorted and the identity row matches plain scaling") {
  const auto data = generate_synthetic(overconfident_spec(2));
  PipelineConfig config;
  const auto rows = sweep_alpha(data.train, data.val, data.test, config, {1.0, 0.995, 0.998});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].alpha == 0.995);
  CHECK(rows[2].alpha == 1.0);
  const auto plain = run_pipeline(data.train, data.val, data.test, config).calibration.plain;
  CHECK(std::abs(rows[2].temperature - plain.temperature) < 1e-9);

  const std::string csv = sweep_to_csv(rows);
  CHECK(csv.rfind("alpha,temperature,test_ece\n", 0) == 0);
  CHECK_THROWS_AS(sweep_alpha(data.train, data.val, data.test, config, {0.998}), ValidationError);
}

TEST_CASE("heavier imbalance pushes the weighted temperature above plain") {
  auto median = [](std::vector<double> v) {
    std::ranges::sort(v);
    return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  auto gaps = [&](double imbalance) {
    std::vector<double> weighted, plain, gap;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto spec = overconfident_spec(seed);
      spec.imbalance_factor = imbalance;
      spec.test_per_class = 20;
      const auto data = generate_synthetic(spec);
      const auto fits = run_pipeline(data.train, data.val, data.test, PipelineConfig{}).calibration;
      weighted.push_back(fits.weighted.temperature);
      plain.push_back(fits.plain.temperature);
      gap.push_back(fits.weighted.temperature - fits.plain.temperature);
    }
    return std::tuple{median(weighted), median(plain), median(gap)};
  };
  const auto [heavy_weighted, heavy_plain, heavy_gap] = gaps(100.0);
  const auto [light_weighted, light_plain, light_gap] = gaps(10.0);
  CHECK(heavy_weighted >= heavy_plain);
  CHECK(heavy_gap > light_gap);
}

TEST_CASE("file-backed commands produce their artifacts") {
  TempDir dir;
  auto spec = overconfident_spec(8);
  const auto paths = cmd_synth(spec, dir / "data");

  PipelineConfig config;
  config.train = paths.train.string();
  config.val = paths.val.string();
  config.test = paths.test.string();
  config.out = (dir / "run").string();

  std::ostringstream log;
  SUBCASE("calibrate before fit is a missing artifact") {
    CHECK_THROWS_AS(cmd_calibrate(config, log), MissingArtifactError);
    CHECK_THROWS_AS(cmd_evaluate(config, log), MissingArtifactError);
  }

  SUBCASE("full run") {
    cmd_fit(config, log);
    const auto stats = nlohmann::json::parse(slurp(dir / "run/stats.json"));
    CHECK(stats.at("classes").size() == 10);
    const auto parts = nlohmann::json::parse(slurp(dir / "run/partition.json"));
    CHECK(parts.at("head").size() + parts.at("tail").size() == 10);
    CHECK(log.str().find("class") != std::string::npos);

    cmd_calibrate(config, log);
    const auto fits = nlohmann::json::parse(slurp(dir / "run/fits.json"));
    for (const char* method : {"base", "plain_ts", "weighted_ts"}) {
      CHECK(fits.contains(method));
    }
    CHECK(fits.at("weighted_ts").at("search_trace").size() >= 64);
    CHECK(fs::exists(dir / "run/plan.json"));
    CHECK(fs::exists(dir / "run/weights.json"));
    CHECK(slurp(dir / "run/weight_histogram.csv").rfind("bin_left,bin_right,count,density", 0) == 0);

    const auto evals = cmd_evaluate(config, log);
    CHECK(evals.size() == 3);
    const auto report = nlohmann::json::parse(slurp(dir / "run/report.json"));
    CHECK(report.dump().find("weighted_ts") != std::string::npos);
    for (const char* method : {"base", "plain_ts", "weighted_ts"}) {
      CHECK(fs::exists(dir / "run" / ("reliability_" + std::string(method) + ".csv")));
    }

    cmd_diagram(config, BinScheme::equal_mass, "json", log);
    CHECK(fs::exists(dir / "run/diagram_weighted_ts.json"));
    CHECK_THROWS_AS(cmd_diagram(config, BinScheme::equal_width, "svg", log), ValidationError);

    // Byte-identical reruns.
    const std::string first_stats = slurp(dir / "run/stats.json");
    const std::string first_fits = slurp(dir / "run/fits.json");
    const std::string first_report = slurp(dir / "run/report.json");
    cmd_fit(config, log);
    cmd_calibrate(config, log);
    cmd_evaluate(config, log);
    CHECK(slurp(dir / "run/stats.json") == first_stats);
    CHECK(slurp(dir / "run/fits.json") == first_fits);
    CHECK(slurp(dir / "run/report.json") == first_report);

    // A test split with a different class count is rejected.
    auto other = spec;
    other.num_classes = 8;
    const auto other_paths = cmd_synth(other, dir / "other");
    auto mismatched = config;
    mismatched.test = other_paths.test.string();
    CHECK_THROWS_AS(cmd_evaluate(mismatched, log), ValidationError);
  }
}
