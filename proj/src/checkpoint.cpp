#include "plmc/checkpoint.hpp"

#include "plmc/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace plmc {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows)) {
    throw InvalidInput("matrix entry has inconsistent dimensions");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = data.at(i);
    if (row.size() != static_cast<std::size_t>(cols)) throw InvalidInput("matrix row has wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(c).get<double>();
  }
  return m;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& cp) {
  const LmcModel& model = cp.model;
  json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["model"] = {
      {"variant", to_string(model.variant())},
      {"p", model.p()},
      {"q", model.q()},
      {"q_base", matrix_to_json(model.q_base())},
      {"parameter_names", model.parameter_names()},
      {"parameters", std::vector<double>(model.parameters().begin(), model.parameters().end())},
  };
  doc["train_config"] = {
      {"lr_max", cp.config.lr_max},
      {"lr_min", cp.config.lr_min},
      {"max_iters", cp.config.max_iters},
      {"plateau_delta", cp.config.plateau_delta},
      {"patience", cp.config.patience},
      {"weight_decay", cp.config.weight_decay},
      {"seed", cp.config.seed},
  };
  doc["report"] = {
      {"n_iters", cp.report.n_iters},
      {"wall_time", cp.report.wall_time},
      {"initial_loss", cp.report.initial_loss},
      {"final_loss", cp.report.final_loss},
      {"stopped_early", cp.report.stopped_early},
      {"retries", cp.report.retries},
      {"loss_trace", cp.report.loss_trace},
  };
  return doc.dump(2) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text, const std::string& source) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != kCheckpointFormat) {
      throw InvalidInput(source + ": not a checkpoint file");
    }
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw InvalidInput(source + ": unsupported checkpoint version " + std::to_string(version));
    }
    const json& jm = doc.at("model");
    const auto params = jm.at("parameters").get<std::vector<double>>();
    LmcModel model(parse_variant(jm.at("variant").get<std::string>()), jm.at("p").get<Eigen::Index>(),
                   jm.at("q").get<Eigen::Index>(), matrix_from_json(jm.at("q_base")),
                   Eigen::Map<const Vector>(params.data(), static_cast<Eigen::Index>(params.size())));

    const json& jc = doc.at("train_config");
    TrainConfig config;
    config.lr_max = jc.at("lr_max").get<double>();
    config.lr_min = jc.at("lr_min").get<double>();
    config.max_iters = jc.at("max_iters").get<int>();
    config.plateau_delta = jc.at("plateau_delta").get<double>();
    config.patience = jc.at("patience").get<int>();
    config.weight_decay = jc.at("weight_decay").get<double>();
    config.seed = jc.at("seed").get<std::uint64_t>();

    const json& jr = doc.at("report");
    FitReport report;
    report.n_iters = jr.at("n_iters").get<int>();
    report.wall_time = jr.at("wall_time").get<double>();
    report.initial_loss = jr.at("initial_loss").get<double>();
    report.final_loss = jr.at("final_loss").get<double>();
    report.stopped_early = jr.at("stopped_early").get<bool>();
    report.retries = jr.value("retries", 0);
    report.loss_trace = jr.at("loss_trace").get<std::vector<double>>();
    return Checkpoint{std::move(model), config, std::move(report)};
  } catch (const json::exception& e) {
    throw InvalidInput(source + ": malformed checkpoint: " + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  out << checkpoint_to_string(checkpoint);
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str(), path);
}

}  // namespace plmc
