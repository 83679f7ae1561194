// tailcal: long-tail aware temperature scaling from exported features/logits.
//
//   tailcal synth         --out data/ [--imbalance 100 --gamma 2.5 --prior-bias ...]
//   tailcal fit           --train data/train.json --out run/
//   tailcal calibrate     --val data/val.json --out run/ [--alpha 0.998 --strategy attention]
//   tailcal evaluate      --test data/test.json --out run/
//   tailcal diagram       --test data/test.json --out run/ [--scheme equal_mass --format csv]
//   tailcal sweep-alpha   --train .. --val .. --test .. --alphas 0.995,0.996,...,1.0
//   tailcal verify-theory [--samples 1000000]
//
// Every pipeline flag may also come from --config <file.json>; flags win.
// Exit codes: 0 ok, 2 validation error, 3 missing artifact, 4 theory violation.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "tailcal/error.hpp"
#include "tailcal/pipeline.hpp"
#include "tailcal/theory.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitMissing = 3;
constexpr int kExitTheory = 4;

struct ConfigFlags {
  std::string config;
  std::optional<std::string> train, val, test, out, strategy;
  std::optional<std::size_t> zeta, bins, ranges, weight_bins;
  std::optional<double> alpha, eta1, eta2, tmin, tmax;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file; flags override its fields");
    app->add_option("--train", train, "training split manifest");
    app->add_option("--val", val, "validation split manifest");
    app->add_option("--test", test, "test split manifest");
    app->add_option("--out", out, "artifact directory");
    app->add_option("--zeta", zeta, "head/tail threshold on training counts (default 100)");
    app->add_option("--alpha", alpha, "weight kept on the tail class's own statistics (default 0.998)");
    app->add_option("--eta1", eta1, "lower importance-weight clip (default 0.3)");
    app->add_option("--eta2", eta2, "upper importance-weight clip (default 5.0)");
    app->add_option("--strategy", strategy, "attention | uniform | onehot");
    app->add_option("--bins", bins, "equal-width bins for ECE/SCE (default 15)");
    app->add_option("--ranges", ranges, "equal-mass ranges for ACE (default 15)");
    app->add_option("--weight-bins,--weight_bins", weight_bins, "weight histogram bins (default 10)");
    app->add_option("--tmin", tmin, "lower temperature bound (default 0.05)");
    app->add_option("--tmax", tmax, "upper temperature bound (default 20)");
    app->add_option("--seed", seed, "seed recorded with the run");
  }

  tailcal::PipelineConfig resolve() const {
    tailcal::PipelineConfig c = config.empty() ? tailcal::PipelineConfig{} : tailcal::load_config(config);
    if (train) c.train = *train;
    if (val) c.val = *val;
    if (test) c.test = *test;
    if (out) c.out = *out;
    if (strategy) c.strategy = tailcal::parse_strategy(*strategy);
    if (zeta) c.zeta = *zeta;
    if (bins) c.bins = *bins;
    if (ranges) c.ranges = *ranges;
    if (weight_bins) c.weight_bins = *weight_bins;
    if (alpha) c.alpha = *alpha;
    if (eta1) c.eta1 = *eta1;
    if (eta2) c.eta2 = *eta2;
    if (tmin) c.tmin = *tmin;
    if (tmax) c.tmax = *tmax;
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

int verify_theory(const tailcal::theory::TheorySuiteOptions& options) {
  const auto report = tailcal::theory::run_theory_suite(options);
  std::cout << fmt::format("{:<24} {:>14} {:>14} {:>14} {:>12}  {}\n", "case", "epsilon", "lower", "upper",
                           "stderr", "verdict");
  for (const auto& c : report.bounds) {
    std::cout << fmt::format("{:<24} {:>14.6g} {:>14.6g} {:>14.6g} {:>12.3g}  {}\n", c.id, c.check.epsilon,
                             c.check.lower, c.check.upper, c.check.mc_stderr, c.pass ? "PASS" : "FAIL");
  }
  std::cout << fmt::format("\n{:<24} {:>14} {:>14} {:>14} {:>12}  {}\n", "case", "tau1", "tau2",
                           "bisect_err", "|w-1|", "verdict");
  for (const auto& c : report.crossovers) {
    std::cout << fmt::format("{:<24} {:>14.8f} {:>14.8f} {:>14.3g} {:>12.3g}  {}\n", c.id, c.closed_form.tau1,
                             c.closed_form.tau2, c.bisection_error, c.ratio_error,
                             c.pass ? "PASS" : (c.sign_pattern_ok ? "FAIL" : "FAIL(sign)"));
  }
  const bool ok = report.all_pass();
  std::cout << (ok ? "\nall theory checks passed\n" : "\ntheory check violation\n");
  return ok ? 0 : kExitTheory;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tailcal: importance-weighted temperature scaling for long-tailed classifiers"};
  app.require_subcommand(1);

  tailcal::SyntheticSpec synth_spec;
  std::string synth_out = "tailcal_data";
  std::string synth_format = "binary";
  auto* synth = app.add_subcommand("synth", "generate a long-tailed Gaussian benchmark");
  synth->add_option("--classes", synth_spec.num_classes, "number of classes")->capture_default_str();
  synth->add_option("--dim", synth_spec.feature_dim, "feature dimension")->capture_default_str();
  synth->add_option("--imbalance", synth_spec.imbalance_factor, "largest/smallest class ratio")
      ->capture_default_str();
  synth->add_option("--max-count", synth_spec.max_count, "instances in the largest class")->capture_default_str();
  synth->add_option("--gamma", synth_spec.overconfidence_scale, "logit scale (>1 is overconfident)")
      ->capture_default_str();
  synth->add_flag("--prior-bias", synth_spec.prior_bias, "add log n_c to the class-c logit");
  synth->add_option("--test-per-class", synth_spec.test_per_class, "balanced test instances per class")
      ->capture_default_str();
  synth->add_option("--separation", synth_spec.separation, "norm of the class means")->capture_default_str();
  synth->add_option("--train-overfit", synth_spec.train_overfit,
                    "exponent shrinking the training noise of rare classes (0 disables)")
      ->capture_default_str();
  synth->add_option("--seed", synth_spec.seed, "RNG seed")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->add_option("--data-format", synth_format, "binary | csv")->capture_default_str();

  ConfigFlags fit_flags, calibrate_flags, evaluate_flags, diagram_flags, sweep_flags;
  auto* fit = app.add_subcommand("fit", "fit per-class Gaussians and the head/tail partition");
  fit_flags.attach(fit);
  auto* calibrate = app.add_subcommand("calibrate", "fit base, plain and importance-weighted temperatures");
  calibrate_flags.attach(calibrate);
  auto* evaluate = app.add_subcommand("evaluate", "score every fitted temperature on the test split");
  evaluate_flags.attach(evaluate);

  auto* diagram = app.add_subcommand("diagram", "export reliability-diagram tables");
  diagram_flags.attach(diagram);
  std::string scheme = "equal_width";
  std::string diagram_format = "csv";
  diagram->add_option("--scheme", scheme, "equal_width | equal_mass")->capture_default_str();
  diagram->add_option("--format", diagram_format, "json | csv")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep-alpha", "fit the weighted temperature for several alphas");
  sweep_flags.attach(sweep);
  std::vector<double> alphas{0.995, 0.996, 0.997, 0.998, 0.999, 1.0};
  sweep->add_option("--alphas", alphas, "comma-separated alpha values")->delimiter(',')->capture_default_str();

  tailcal::theory::TheorySuiteOptions theory_options;
  auto* theory = app.add_subcommand("verify-theory", "Monte-Carlo check of the importance-weight error bound");
  theory->add_option("--seed", theory_options.seed, "RNG seed")->capture_default_str();
  theory->add_option("--samples", theory_options.mc_samples, "Monte-Carlo samples per case")
      ->capture_default_str();
  theory->add_option("--cases", theory_options.bound_cases, "random bound cases")->capture_default_str();
  theory->add_option("--crossover-cases", theory_options.crossover_cases, "random crossover cases")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto paths = tailcal::cmd_synth(synth_spec, synth_out, tailcal::io::parse_format(synth_format));
      std::cout << fmt::format("wrote {}\nwrote {}\nwrote {}\n", paths.train.string(), paths.val.string(),
                               paths.test.string());
    } else if (*fit) {
      tailcal::cmd_fit(fit_flags.resolve(), std::cout);
    } else if (*calibrate) {
      tailcal::cmd_calibrate(calibrate_flags.resolve(), std::cout);
    } else if (*evaluate) {
      tailcal::cmd_evaluate(evaluate_flags.resolve(), std::cout);
    } else if (*diagram) {
      tailcal::cmd_diagram(diagram_flags.resolve(), tailcal::parse_bin_scheme(scheme), diagram_format, std::cout);
    } else if (*sweep) {
      tailcal::cmd_sweep_alpha(sweep_flags.resolve(), alphas, std::cout);
    } else if (*theory) {
      return verify_theory(theory_options);
    }
  } catch (const tailcal::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissing;
  } catch (const tailcal::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const tailcal::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
  return 0;
}
