#include "plmc/experiment.hpp"

#include "plmc/errors.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace plmc {

namespace pt = boost::property_tree;

namespace {


double parse_double(const std::string& text, const std::string& key) {
  const std::string t = boost::algorithm::trim_copy(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) throw InvalidInput(key + ": expected a number, got '" + text + "'");
  return v;
}

long long parse_integer(const std::string& text, const std::string& key) {
  const double v = parse_double(text, key);
  if (v != std::floor(v) || std::abs(v) > 1e15) throw InvalidInput(key + ": expected an integer, got '" + text + "'");
  return static_cast<long long>(v);
}

bool parse_bool(const std::string& text, const std::string& key) {
  const std::string t = boost::algorithm::to_lower_copy(boost::algorithm::trim_copy(text));
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  throw InvalidInput(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, boost::algorithm::is_any_of(","));
  std::vector<std::string> out;
  for (auto& part : parts) {
    boost::algorithm::trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["experiment.name"] = [](ExperimentConfig& c, const std::string& v, const std::string&) {
      c.name = boost::algorithm::trim_copy(v);
    };
    t["experiment.variants"] = [](ExperimentConfig& c, const std::string& v, const std::string&) {
      c.variants.clear();
      for (const auto& name : split_list(v)) c.variants.push_back(parse_variant(name));
    };
    t["experiment.n_rep"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      c.n_rep = static_cast<int>(parse_integer(v, k));
    };
    t["experiment.sweep_param"] = [](ExperimentConfig& c, const std::string& v, const std::string&) {
      if (!c.sweep) c.sweep.emplace();
      c.sweep->parameter = boost::algorithm::trim_copy(v);
    };
    t["experiment.sweep_values"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      if (!c.sweep) c.sweep.emplace();
      c.sweep->values.clear();
      for (const auto& item : split_list(v)) c.sweep->values.push_back(parse_double(item, k));
    };
    t["experiment.targets"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      const std::string s = boost::algorithm::trim_copy(v);
      if (s == "noisy") {
        c.targets = TargetMode::noisy;
      } else if (s == "noiseless") {
        c.targets = TargetMode::noiseless;
      } else {
        throw InvalidInput(k + ": expected noisy or noiseless");
      }
    };
    t["experiment.record_time"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      c.record_time = parse_bool(v, k);
    };
    for (const char* field : {"n_tasks", "n_lat", "n_lat_noise", "n_points", "mu_noise", "mu_str",
                              "l_min", "l_max", "n_test"}) {
      const std::string name = field;
      t["data." + name] = [name](ExperimentConfig& c, const std::string& v, const std::string& k) {
        set_datagen_field(c.datagen, name, parse_double(v, k));
      };
    }
    t["data.seed"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      c.datagen.seed = static_cast<std::uint64_t>(parse_integer(v, k));
    };
    t["data.h_mode"] = [](ExperimentConfig& c, const std::string& v, const std::string&) {
      c.datagen.h_mode = parse_mixing_mode(boost::algorithm::trim_copy(v));
    };
    t["train.lr_max"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      c.train.lr_max = parse_double(v, k);
    };
    t["train.lr_min"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      c.train.lr_min = parse_double(v, k);
    };
    t["train.max_iters"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      c.train.max_iters = static_cast<int>(parse_integer(v, k));
    };
    t["train.plateau_delta"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      c.train.plateau_delta = parse_double(v, k);
    };
    t["train.patience"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      c.train.patience = static_cast<int>(parse_integer(v, k));
    };
    t["train.weight_decay"] = [](ExperimentConfig& c, const std::string& v, const std::string& k) {
      c.train.weight_decay = parse_double(v, k);
    };
    return t;
  }();
  return table;
}

struct Job {
  std::size_t sweep_index = 0;
  Variant variant = Variant::exact;
  int rep = 0;
};

DetailRow run_job(const ExperimentConfig& config, const Job& job, std::uint64_t seed_offset) {
  DataGenConfig datagen = config.datagen;
  DetailRow row;
  row.model = job.variant;
  if (config.sweep) {
    row.sweep_param = config.sweep->parameter;
    row.sweep_value = config.sweep->values[job.sweep_index];
    set_datagen_field(datagen, row.sweep_param, row.sweep_value);
  }
  datagen.seed = config.datagen.seed + seed_offset + static_cast<std::uint64_t>(job.rep);
  row.seed = datagen.seed;
  try {
    const SyntheticData data = generate(datagen);
    TrainConfig train = config.train;
    train.seed = datagen.seed;
    const FitOutcome outcome = fit_variant(job.variant, data, train);
    row.metrics = evaluate_fit(outcome.model, data, config.targets, outcome.report);
    if (!config.record_time) row.metrics.t_train = 0.0;
  } catch (const std::exception& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.ok = false;
    row.error = e.what();
    row.metrics = MetricsRecord{nan, nan, nan, nan, 0, 0.0};
  }
  return row;
}

}  // namespace

void set_datagen_field(DataGenConfig& c, const std::string& field, double value) {
  auto integral = [&](int& target) {
    if (value != std::floor(value) || std::abs(value) > 1e9) {
      throw InvalidInput("data field '" + field + "' needs an integer value");
    }
    target = static_cast<int>(value);
  };
  if (field == "n_tasks") return integral(c.n_tasks);
  if (field == "n_lat") return integral(c.n_lat);
  if (field == "n_lat_noise") return integral(c.n_lat_noise);
  if (field == "n_points") return integral(c.n_points);
  if (field == "n_test") return integral(c.n_test);
  if (field == "mu_noise") { c.mu_noise = value; return; }
  if (field == "mu_str") { c.mu_str = value; return; }
  if (field == "l_min") { c.l_min = value; return; }
  if (field == "l_max") { c.l_max = value; return; }
  throw InvalidInput("'" + field + "' is not a numeric data generation field");
}

void ExperimentConfig::validate() const {
  datagen.validate();
  train.validate();
  if (variants.empty()) throw InvalidInput("experiment: no variants selected");
  if (n_rep < 1) throw InvalidInput("experiment: n_rep must be >= 1");
  if (sweep) {
    if (sweep->values.empty()) throw InvalidInput("experiment: sweep_values is empty");
    for (double v : sweep->values) {
      DataGenConfig probe = datagen;
      set_datagen_field(probe, sweep->parameter, v);
      probe.validate();
    }
  }
}

ExperimentConfig parse_experiment_config(std::istream& in, const std::string& source) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidInput(source + ": " + e.what());
  }
  ExperimentConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw InvalidInput(source + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = setters().find(full);
      if (it == setters().end()) throw InvalidInput(source + ": unknown key '" + full + "'");
      it->second(config, value.get_value<std::string>(), source + ": " + full);
    }
  }
  if (config.sweep && (config.sweep->parameter.empty() || config.sweep->values.empty())) {
    throw InvalidInput(source + ": sweep_param and sweep_values must be given together");
  }
  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config '" + path + "'");
  return parse_experiment_config(in, path);
}

FitOutcome fit_variant(Variant variant, const SyntheticData& data, const TrainConfig& config) {
  LmcModel model = LmcModel::from_svd(variant, data.train, data.truth.H.cols(), config.seed);
  FitReport report = fit(model, data.train, config);
  return FitOutcome{std::move(model), std::move(report)};
}

MetricsRecord evaluate_fit(const LmcModel& model, const SyntheticData& data, TargetMode targets,
                           const FitReport& report) {
  const PredictionResult pred = model.predict(data.train, data.test.X);
  const Matrix& truth = targets == TargetMode::noisy ? data.test.Y : data.test_signal;
  Matrix variance = pred.variance;
  if (targets == TargetMode::noisy) variance.colwise() += model.sigma().diagonal();
  MetricsRecord out;
  const L1Metrics l1 = l1_metrics(pred.mean, truth);
  out.err_l1 = l1.mean;
  out.q95_l1 = l1.q95;
  out.pva = pva(pred.mean, variance, truth);
  out.h_corr = h_corr(model.H(), data.truth.H);
  out.n_iter = report.n_iters;
  out.t_train = report.wall_time;
  return out;
}

bool ExperimentResult::all_ok() const {
  for (const auto& row : rows)
    if (!row.ok) return false;
  return true;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (options.workers < 1) throw InvalidInput("run_experiment: workers must be >= 1");

  std::vector<Job> jobs;
  const std::size_t n_sweep = config.sweep ? config.sweep->values.size() : 1;
  for (std::size_t s = 0; s < n_sweep; ++s)
    for (Variant v : config.variants)
      for (int r = 0; r < config.n_rep; ++r) jobs.push_back({s, v, r});

  ExperimentResult result;
  result.rows.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::size_t done = 0;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      result.rows[j] = run_job(config, jobs[j], options.seed_offset);
      if (options.log) {
        const DetailRow& row = result.rows[j];
        std::lock_guard<std::mutex> lock(log_mutex);
        *options.log << "[" << ++done << "/" << jobs.size() << "] " << to_string(row.model)
                     << " seed=" << row.seed;
        if (!row.sweep_param.empty()) *options.log << " " << row.sweep_param << "=" << row.sweep_value;
        if (row.ok) {
          *options.log << " err_l1=" << row.metrics.err_l1 << " n_iter=" << row.metrics.n_iter;
        } else {
          *options.log << " FAILED: " << row.error;
        }
        *options.log << std::endl;
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(options.workers), jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  const auto n_rep = static_cast<std::size_t>(config.n_rep);
  for (std::size_t first = 0; first < result.rows.size(); first += n_rep) {
    AggregateRow agg;
    const DetailRow& head = result.rows[first];
    agg.model = head.model;
    agg.sweep_param = head.sweep_param;
    agg.sweep_value = head.sweep_value;
    agg.n_rep = config.n_rep;
    for (std::size_t j = first; j < first + n_rep; ++j) {
      const DetailRow& row = result.rows[j];
      if (!row.ok) continue;
      ++agg.n_ok;
      agg.n_iter += row.metrics.n_iter;
      agg.t_train += row.metrics.t_train;
      agg.err_l1 += row.metrics.err_l1;
      agg.q95_l1 += row.metrics.q95_l1;
      agg.pva += row.metrics.pva;
      agg.h_corr += row.metrics.h_corr;
    }
    const double count = agg.n_ok > 0 ? agg.n_ok : std::numeric_limits<double>::quiet_NaN();
    for (double* field : {&agg.n_iter, &agg.t_train, &agg.err_l1, &agg.q95_l1, &agg.pva, &agg.h_corr}) {
      *field /= count;
    }
    result.aggregates.push_back(std::move(agg));
  }
  return result;
}

void write_detail_csv(std::ostream& out, const ExperimentResult& result) {
  out << "model,seed,sweep_param,sweep_value,n_iter,t_train_s,err_l1,q95_l1,pva,h_corr,status\n";
  for (const auto& r : result.rows) {
    out << to_string(r.model) << ',' << r.seed << ',' << csv_field(r.sweep_param) << ','
        << (r.sweep_param.empty() ? "" : format_double(r.sweep_value)) << ',' << r.metrics.n_iter << ','
        << format_double(r.metrics.t_train) << ',' << format_double(r.metrics.err_l1) << ','
        << format_double(r.metrics.q95_l1) << ',' << format_double(r.metrics.pva) << ','
        << format_double(r.metrics.h_corr) << ',' << (r.ok ? "ok" : "failed") << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, const ExperimentResult& result) {
  out << "model,sweep_param,sweep_value,n_rep,n_ok,n_iter,t_train_s,err_l1,q95_l1,pva,h_corr\n";
  for (const auto& a : result.aggregates) {
    out << to_string(a.model) << ',' << csv_field(a.sweep_param) << ','
        << (a.sweep_param.empty() ? "" : format_double(a.sweep_value)) << ',' << a.n_rep << ','
        << a.n_ok << ',' << format_double(a.n_iter) << ',' << format_double(a.t_train) << ','
        << format_double(a.err_l1) << ',' << format_double(a.q95_l1) << ','
        << format_double(a.pva) << ',' << format_double(a.h_corr) << '\n';
  }
}

}  // namespace plmc
