#pragma once

#include "plmc/metrics.hpp"
#include "plmc/synthdata.hpp"
#include "plmc/training.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace plmc {

/// Which test outputs the errors and PVA are measured against.
enum class TargetMode { noisy, noiseless };

struct Sweep {
  std::string parameter;  // a DataGenConfig field name
  std::vector<double> values;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataGenConfig datagen;
  TrainConfig train;
  std::vector<Variant> variants = all_variants();
  int n_rep = 1;
  std::optional<Sweep> sweep;
  TargetMode targets = TargetMode::noisy;
  bool record_time = true;  // false writes t_train_s = 0 for byte-stable output

  void validate() const;
};

/// INI file with [experiment], [data] and [train] sections. Unknown keys
/// are rejected.
ExperimentConfig parse_experiment_config(std::istream& in, const std::string& source = "config");
ExperimentConfig load_experiment_config(const std::string& path);

/// Sets a numeric DataGenConfig field by name; integer fields require an
/// integral value.
void set_datagen_field(DataGenConfig& config, const std::string& field, double value);

/// Fits one variant on generated data; the model init seed is the data seed.
struct FitOutcome {
  LmcModel model;
  FitReport report;
};
FitOutcome fit_variant(Variant variant, const SyntheticData& data, const TrainConfig& config);

MetricsRecord evaluate_fit(const LmcModel& model, const SyntheticData& data, TargetMode targets,
                           const FitReport& report);

struct DetailRow {
  Variant model = Variant::exact;
  std::uint64_t seed = 0;
  std::string sweep_param;  // empty without a sweep
  double sweep_value = 0.0;
  MetricsRecord metrics;
  bool ok = true;
  std::string error;
};

struct AggregateRow {
  Variant model = Variant::exact;
  std::string sweep_param;
  double sweep_value = 0.0;
  int n_rep = 0;
  int n_ok = 0;
  // Arithmetic means over the successful rows (NaN when none succeeded).
  double n_iter = 0.0;
  double t_train = 0.0;
  double err_l1 = 0.0;
  double q95_l1 = 0.0;
  double pva = 0.0;
  double h_corr = 0.0;
};

struct ExperimentResult {
  std::vector<DetailRow> rows;
  std::vector<AggregateRow> aggregates;
  bool all_ok() const;
};

struct RunOptions {
  int workers = 1;
  std::uint64_t seed_offset = 0;
  std::ostream* log = nullptr;  // one progress line per finished fit
};

/// Runs every (sweep value, variant, repetition) job. Rows come back in
/// that order regardless of scheduling; failed fits become rows with
/// ok = false.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

void write_detail_csv(std::ostream& out, const ExperimentResult& result);
void write_aggregate_csv(std::ostream& out, const ExperimentResult& result);

}  // namespace plmc
