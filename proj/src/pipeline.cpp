#include "tailcal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/core.h>

#include "tailcal/error.hpp"

namespace tailcal {

namespace {

using json = nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_artifact(const fs::path& path, const char* produced_by) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MissingArtifactError(
        fmt::format("missing artifact {} (run `tailcal {}` first)", path.string(), produced_by));
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
}

LabeledEmbeddingSet load_split(const std::string& manifest, const char* flag) {
  if (manifest.empty()) throw ValidationError(fmt::format("--{} <manifest> is required", flag));
  return io::load_set(manifest);
}

TemperatureFit identity_fit(const LabeledEmbeddingSet& val) {
  TemperatureFit fit;
  fit.method = FitMethod::base;
  fit.temperature = 1.0;
  fit.objective = weighted_nll(val.logits(), val.labels(), {}, 1.0);
  return fit;
}

}  // namespace

void PipelineConfig::validate() const {
  if (zeta < 1) throw ValidationError("zeta must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError(fmt::format("alpha {} outside [0, 1]", alpha));
  if (!(eta1 > 0.0 && eta1 <= eta2) || !std::isfinite(eta2)) {
    throw ValidationError(fmt::format("need 0 < eta1 <= eta2, got [{}, {}]", eta1, eta2));
  }
  if (bins < 1) throw ValidationError("bins must be >= 1");
  if (ranges < 1) throw ValidationError("ranges must be >= 1");
  if (weight_bins < 1) throw ValidationError("weight_bins must be >= 1");
  if (!(tmin > 0.0 && tmin < tmax) || !std::isfinite(tmax)) {
    throw ValidationError(fmt::format("need 0 < tmin < tmax, got [{}, {}]", tmin, tmax));
  }
  if (out.empty()) throw ValidationError("out directory must be set");
}

json to_json(const PipelineConfig& c) {
  return {{"train", c.train},   {"val", c.val},         {"test", c.test},
          {"zeta", c.zeta},     {"alpha", c.alpha},     {"eta1", c.eta1},
          {"eta2", c.eta2},     {"strategy", to_string(c.strategy)},
          {"bins", c.bins},     {"ranges", c.ranges},   {"weight_bins", c.weight_bins},
          {"tmin", c.tmin},     {"tmax", c.tmax},       {"seed", c.seed},
          {"out", c.out}};
}

PipelineConfig config_from_json(const json& doc) {
  static const std::set<std::string> known{"train", "val",    "test",        "zeta", "alpha",
                                           "eta1",  "eta2",   "strategy",    "bins", "ranges",
                                           "tmin",  "tmax",   "weight_bins", "seed", "out"};
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw ValidationError(fmt::format("unknown config key '{}'", key));
  }
  PipelineConfig c;
  try {
    auto take = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("train", c.train);
    take("val", c.val);
    take("test", c.test);
    take("zeta", c.zeta);
    take("alpha", c.alpha);
    take("eta1", c.eta1);
    take("eta2", c.eta2);
    take("bins", c.bins);
    take("ranges", c.ranges);
    take("weight_bins", c.weight_bins);
    take("tmin", c.tmin);
    take("tmax", c.tmax);
    take("seed", c.seed);
    take("out", c.out);
    if (doc.contains("strategy")) c.strategy = parse_strategy(doc.at("strategy").get<std::string>());
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed config: {}", e.what()));
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(fmt::format("cannot open config {}", path.string()));
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
}

json to_json(const HeadTailPartition& parts, std::span<const std::size_t> counts) {
  return {{"threshold", parts.threshold},
          {"head", parts.head},
          {"tail", parts.tail},
          {"class_counts", std::vector<std::size_t>(counts.begin(), counts.end())}};
}

HeadTailPartition partition_from_json(const json& doc) {
  try {
    HeadTailPartition parts;
    parts.threshold = doc.at("threshold").get<std::size_t>();
    parts.head = doc.at("head").get<std::vector<std::size_t>>();
    parts.tail = doc.at("tail").get<std::vector<std::size_t>>();
    std::sort(parts.head.begin(), parts.head.end());
    std::sort(parts.tail.begin(), parts.tail.end());
    return parts;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed partition: {}", e.what()));
  }
}

CalibrationOutcome calibrate(const ClassStats& stats, const HeadTailPartition& parts,
                             const LabeledEmbeddingSet& val, const PipelineConfig& config) {
  config.validate();
  if (val.num_classes() != stats.size()) {
    throw ValidationError(fmt::format("validation split has {} classes, statistics have {}",
                                      val.num_classes(), stats.size()));
  }
  if (!stats.empty() && val.feature_dim() != stats.front().dim()) {
    throw ValidationError(fmt::format("validation features have dimension {}, statistics have {}",
                                      val.feature_dim(), stats.front().dim()));
  }
  CalibrationOutcome out;
  out.plan = build_transfer_plan(stats, parts, config.alpha, config.strategy);
  out.weights = importance_weights(val, stats, out.plan, parts, config.eta1, config.eta2);
  out.base = identity_fit(val);
  out.plain = fit_temperature(val.logits(), val.labels(), {}, config.bounds(), FitMethod::plain_ts);
  out.weighted =
      fit_temperature(val.logits(), val.labels(), out.weights.weights, config.bounds(), FitMethod::weighted_ts);
  return out;
}

MethodEvaluation evaluate_method(const LabeledEmbeddingSet& test, const TemperatureFit& fit,
                                 const PipelineConfig& config, BinScheme scheme) {
  const MatrixD probs = apply_temperature(test.logits(), fit.temperature);
  MethodEvaluation eval;
  eval.method = fit.method;
  eval.temperature = fit.temperature;
  eval.metrics = evaluate_metrics(probs, test.labels(), config.bins, config.ranges);
  eval.reliability = reliability_table(probs, test.labels(), config.bins, scheme);
  eval.predictions = confidences(probs).prediction;
  return eval;
}

PipelineResult run_pipeline(const LabeledEmbeddingSet& train, const LabeledEmbeddingSet& val,
                            const LabeledEmbeddingSet& test, const PipelineConfig& config) {
  if (test.num_classes() != train.num_classes()) {
    throw ValidationError(fmt::format("test split has {} classes, training split has {}", test.num_classes(),
                                      train.num_classes()));
  }
  PipelineResult result;
  result.stats = fit_class_gaussians(train);
  result.partition = partition(train.class_counts(), config.zeta);
  result.calibration = calibrate(result.stats, result.partition, val, config);
  result.base = evaluate_method(test, result.calibration.base, config);
  result.plain = evaluate_method(test, result.calibration.plain, config);
  result.weighted = evaluate_method(test, result.calibration.weighted, config);
  return result;
}

std::vector<SweepRow> sweep_alpha(const LabeledEmbeddingSet& train, const LabeledEmbeddingSet& val,
                                  const LabeledEmbeddingSet& test, const PipelineConfig& config,
                                  std::vector<double> alphas) {
  if (alphas.size() < 2) throw ValidationError("sweep-alpha needs at least two alpha values");
  if (test.num_classes() != train.num_classes()) {
    throw ValidationError(fmt::format("test split has {} classes, training split has {}", test.num_classes(),
                                      train.num_classes()));
  }
  std::sort(alphas.begin(), alphas.end());
  const ClassStats stats = fit_class_gaussians(train);
  const HeadTailPartition parts = partition(train.class_counts(), config.zeta);

  std::vector<SweepRow> rows;
  rows.reserve(alphas.size());
  for (double alpha : alphas) {
    PipelineConfig run = config;
    run.alpha = alpha;
    run.validate();
    const TransferPlan plan = build_transfer_plan(stats, parts, alpha, run.strategy);
    const ImportanceWeights w = importance_weights(val, stats, plan, parts, run.eta1, run.eta2);
    const TemperatureFit fit =
        fit_temperature(val.logits(), val.labels(), w.weights, run.bounds(), FitMethod::weighted_ts);
    const MatrixD probs = apply_temperature(test.logits(), fit.temperature);
    rows.push_back({alpha, fit.temperature, ece(probs, test.labels(), run.bins)});
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string text = "alpha,temperature,test_ece\n";
  for (const auto& r : rows) text += fmt::format("{},{},{}\n", r.alpha, r.temperature, r.test_ece);
  return text;
}

SynthOutputs cmd_synth(const SyntheticSpec& spec, const fs::path& out_dir, io::DataFormat format) {
  const SyntheticData data = generate_synthetic(spec);
  SynthOutputs out;
  out.train = io::save_set(data.train, out_dir, "train", format);
  out.val = io::save_set(data.val, out_dir, "val", format);
  out.test = io::save_set(data.test, out_dir, "test", format);
  return out;
}

void cmd_fit(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const LabeledEmbeddingSet train = load_split(config.train, "train");
  const ClassStats stats = fit_class_gaussians(train);
  const HeadTailPartition parts = partition(train.class_counts(), config.zeta);
  const fs::path out = config.out;
  write_json(out / "stats.json", to_json(stats));
  write_json(out / "partition.json", to_json(parts, train.class_counts()));

  log << fmt::format("fitted {} classes (D={}) from {} training samples, zeta={}\n", stats.size(),
                     train.feature_dim(), train.size(), config.zeta);
  for (std::size_t c = 0; c < stats.size(); ++c) {
    log << fmt::format("  class {:>4}  n={:>7}  {}\n", c, stats[c].count, parts.is_head(c) ? "head" : "tail");
  }
  log << fmt::format("head: {}  tail: {}\n", parts.head.size(), parts.tail.size());
}

CalibrationOutcome cmd_calibrate(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const fs::path out = config.out;
  const ClassStats stats = stats_from_json(read_artifact(out / "stats.json", "fit"));
  const HeadTailPartition parts = partition_from_json(read_artifact(out / "partition.json", "fit"));
  const LabeledEmbeddingSet val = load_split(config.val, "val");
  const CalibrationOutcome result = calibrate(stats, parts, val, config);

  json fits{{"alpha", config.alpha},
            {"strategy", to_string(config.strategy)},
            {"base", to_json(result.base)},
            {"plain_ts", to_json(result.plain)},
            {"weighted_ts", to_json(result.weighted)}};
  write_json(out / "fits.json", fits);
  write_json(out / "plan.json", to_json(result.plan));
  write_json(out / "weights.json", to_json(result.weights));
  write_text(out / "weight_histogram.csv", to_csv(weight_histogram(result.weights, config.weight_bins)));

  log << fmt::format("alpha={} strategy={} eta=[{}, {}]\n", config.alpha, to_string(config.strategy),
                     config.eta1, config.eta2);
  log << fmt::format("  plain_ts     T={:.6f}  nll={:.6f}\n", result.plain.temperature, result.plain.objective);
  log << fmt::format("  weighted_ts  T={:.6f}  nll={:.6f}\n", result.weighted.temperature,
                     result.weighted.objective);
  return result;
}

namespace {

std::vector<TemperatureFit> load_fits(const PipelineConfig& config) {
  const json fits = read_artifact(fs::path(config.out) / "fits.json", "calibrate");
  std::vector<TemperatureFit> out;
  for (const char* key : {"base", "plain_ts", "weighted_ts"}) {
    if (!fits.contains(key)) throw ValidationError(fmt::format("fits.json lacks '{}'", key));
    out.push_back(fit_from_json(fits.at(key)));
  }
  return out;
}

void require_matching_classes(const LabeledEmbeddingSet& test, const PipelineConfig& config) {
  const json stats = read_artifact(fs::path(config.out) / "stats.json", "fit");
  const auto classes = stats.value("num_classes", std::size_t{0});
  if (classes != test.num_classes()) {
    throw ValidationError(
        fmt::format("test split has {} classes but the fitted statistics have {}", test.num_classes(), classes));
  }
}

}  // namespace

std::vector<MethodEvaluation> cmd_evaluate(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const LabeledEmbeddingSet test = load_split(config.test, "test");
  require_matching_classes(test, config);
  const fs::path out = config.out;

  std::vector<MethodEvaluation> evals;
  json report = json::object();
  for (const TemperatureFit& fit : load_fits(config)) {
    MethodEvaluation eval = evaluate_method(test, fit, config);
    json entry = to_json(eval.metrics);
    entry["temperature"] = eval.temperature;
    report[to_string(fit.method)] = entry;
    write_text(out / fmt::format("reliability_{}.csv", to_string(fit.method)), to_csv(eval.reliability));
    log << fmt::format("  {:<12} T={:.4f}  ECE={:.4f}  SCE={:.4f}  ACE={:.4f}  acc={:.4f}\n",
                       to_string(fit.method), eval.temperature, eval.metrics.ece, eval.metrics.sce,
                       eval.metrics.ace, eval.metrics.accuracy);
    evals.push_back(std::move(eval));
  }
  write_json(out / "report.json", report);
  return evals;
}

std::vector<MethodEvaluation> cmd_diagram(const PipelineConfig& config, BinScheme scheme,
                                          const std::string& format, std::ostream& log) {
  config.validate();
  if (format != "json" && format != "csv") {
    throw ValidationError(fmt::format("unknown output format '{}' (expected json or csv)", format));
  }
  const LabeledEmbeddingSet test = load_split(config.test, "test");
  require_matching_classes(test, config);
  const fs::path out = config.out;

  std::vector<MethodEvaluation> evals;
  for (const TemperatureFit& fit : load_fits(config)) {
    MethodEvaluation eval = evaluate_method(test, fit, config, scheme);
    const fs::path path = out / fmt::format("diagram_{}.{}", to_string(fit.method), format);
    if (format == "csv") {
      write_text(path, to_csv(eval.reliability));
    } else {
      json doc = to_json(eval.reliability);
      doc["method"] = to_string(fit.method);
      doc["temperature"] = eval.temperature;
      write_json(path, doc);
    }
    log << fmt::format("wrote {}\n", path.string());
    evals.push_back(std::move(eval));
  }
  return evals;
}

std::vector<SweepRow> cmd_sweep_alpha(const PipelineConfig& config, std::vector<double> alphas,
                                      std::ostream& log) {
  config.validate();
  const LabeledEmbeddingSet train = load_split(config.train, "train");
  const LabeledEmbeddingSet val = load_split(config.val, "val");
  const LabeledEmbeddingSet test = load_split(config.test, "test");
  const auto rows = sweep_alpha(train, val, test, config, std::move(alphas));
  write_text(fs::path(config.out) / "sweep_alpha.csv", sweep_to_csv(rows));
  for (const auto& r : rows) {
    log << fmt::format("  alpha={:<8} T={:.6f}  test ECE={:.4f}\n", r.alpha, r.temperature, r.test_ece);
  }
  return rows;
}

}  // namespace tailcal
