#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailcal/calibrator.hpp"
#include "tailcal/datamodel.hpp"
#include "tailcal/gaussians.hpp"
#include "tailcal/io.hpp"
#include "tailcal/metrics.hpp"
#include "tailcal/transfer.hpp"

namespace tailcal {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::string train;
  std::string val;
  std::string test;
  std::size_t zeta = kDefaultZeta;
  double alpha = kDefaultAlpha;
  double eta1 = kDefaultClipLow;
  double eta2 = kDefaultClipHigh;
  TransferStrategy strategy = TransferStrategy::attention;
  std::size_t bins = kDefaultBins;
  std::size_t ranges = kDefaultRanges;
  std::size_t weight_bins = 10;
  double tmin = 0.05;
  double tmax = 20.0;
  std::uint64_t seed = 0;
  std::string out = "tailcal_out";

  TemperatureBounds bounds() const { return {tmin, tmax}; }

  // Throws ValidationError for values outside their domains.
  void validate() const;

  bool operator==(const PipelineConfig&) const = default;
};

nlohmann::json to_json(const PipelineConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& doc);
PipelineConfig load_config(const fs::path& path);

nlohmann::json to_json(const HeadTailPartition& parts, std::span<const std::size_t> counts);
HeadTailPartition partition_from_json(const nlohmann::json& doc);

// Everything produced by fitting both temperature objectives on one
// validation split.
struct CalibrationOutcome {
  TransferPlan plan;
  ImportanceWeights weights;
  TemperatureFit base;      // identity, T = 1
  TemperatureFit plain;     // unweighted NLL
  TemperatureFit weighted;  // importance-weighted NLL
};

CalibrationOutcome calibrate(const ClassStats& stats, const HeadTailPartition& parts,
                             const LabeledEmbeddingSet& val, const PipelineConfig& config);

struct MethodEvaluation {
  FitMethod method;
  double temperature;
  MetricReport metrics;
  BinStats reliability;
  std::vector<Label> predictions;
};

MethodEvaluation evaluate_method(const LabeledEmbeddingSet& test, const TemperatureFit& fit,
                                 const PipelineConfig& config, BinScheme scheme = BinScheme::equal_width);

// In-memory train -> val -> test run used by the CLI commands and the
// acceptance suite.
struct PipelineResult {
  ClassStats stats;
  HeadTailPartition partition;
  CalibrationOutcome calibration;
  MethodEvaluation base;
  MethodEvaluation plain;
  MethodEvaluation weighted;
};

PipelineResult run_pipeline(const LabeledEmbeddingSet& train, const LabeledEmbeddingSet& val,
                            const LabeledEmbeddingSet& test, const PipelineConfig& config);

struct SweepRow {
  double alpha;
  double temperature;
  double test_ece;
};

std::vector<SweepRow> sweep_alpha(const LabeledEmbeddingSet& train, const LabeledEmbeddingSet& val,
                                  const LabeledEmbeddingSet& test, const PipelineConfig& config,
                                  std::vector<double> alphas);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// File-backed commands. Artifacts live under config.out:
//   stats.json, partition.json                         (fit)
//   fits.json, plan.json, weights.json,
//   weight_histogram.csv                               (calibrate)
//   report.json, reliability_<method>.csv              (evaluate)
//   diagram_<method>.<json|csv>                        (diagram)
//   sweep_alpha.csv                                    (sweep-alpha)
// Missing upstream artifacts raise MissingArtifactError.
struct SynthOutputs {
  fs::path train, val, test;
};
SynthOutputs cmd_synth(const SyntheticSpec& spec, const fs::path& out_dir,
                       io::DataFormat format = io::DataFormat::binary);

void cmd_fit(const PipelineConfig& config, std::ostream& log);
CalibrationOutcome cmd_calibrate(const PipelineConfig& config, std::ostream& log);
std::vector<MethodEvaluation> cmd_evaluate(const PipelineConfig& config, std::ostream& log);
std::vector<MethodEvaluation> cmd_diagram(const PipelineConfig& config, BinScheme scheme,
                                          const std::string& format, std::ostream& log);
std::vector<SweepRow> cmd_sweep_alpha(const PipelineConfig& config, std::vector<double> alphas,
                                      std::ostream& log);

}  // namespace tailcal
