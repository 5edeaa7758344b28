#include "plmc/training.hpp"

#include "plmc/errors.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>

namespace plmc {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr int kMaxRetries = 5;

std::optional<LossGradient> try_evaluate(const LmcModel& model, const Dataset& data,
                                         const InferenceOptions& opts, std::string& why) {
  try {
    LossGradient lg = model.loss_gradient(data, opts);
    if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) {
      why = "non-finite loss or gradient";
      return std::nullopt;
    }
    return lg;
  } catch (const NumericalDegeneracy& e) {
    why = e.what();
  } catch (const IndefiniteNoise& e) {
    why = e.what();
  }
  return std::nullopt;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_min > 0.0) || !(lr_max >= lr_min)) throw InvalidInput("TrainConfig: need lr_max >= lr_min > 0");
  if (max_iters < 1) throw InvalidInput("TrainConfig: max_iters must be >= 1");
  if (!(plateau_delta > 0.0)) throw InvalidInput("TrainConfig: plateau_delta must be > 0");
  if (patience < 1) throw InvalidInput("TrainConfig: patience must be >= 1");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw InvalidInput("TrainConfig: weight_decay must be finite and >= 0");
  }
}

double TrainConfig::learning_rate(int t) const {
  return lr_max * std::pow(lr_min / lr_max, static_cast<double>(t) / max_iters);
}

FitReport fit(LmcModel& model, const Dataset& data, const TrainConfig& config,
              const InferenceOptions& opts) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  FitReport report;

  std::string why;
  auto current = try_evaluate(model, data, opts, why);
  if (!current) throw TrainingAborted("fit: loss is not computable at initialization: " + why);
  report.initial_loss = current->loss;

  const Eigen::Index np = model.num_parameters();
  const std::vector<bool> mask = model.decay_mask();
  Vector decay(np);
  for (Eigen::Index i = 0; i < np; ++i) decay(i) = mask[i] ? config.weight_decay : 0.0;

  Vector theta = model.parameters();
  Vector best = theta;
  double best_loss = current->loss;
  Vector m1 = Vector::Zero(np);
  Vector m2 = Vector::Zero(np);
  double lr_scale = 1.0;
  double previous = current->loss;
  int flat = 0;

  for (int t = 0; t < config.max_iters; ++t) {
    const Vector& g = current->gradient;
    const Vector m1_next = kBeta1 * m1 + (1.0 - kBeta1) * g;
    const Vector m2_next = kBeta2 * m2 + (1.0 - kBeta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t + 1);
    const double c2 = 1.0 - std::pow(kBeta2, t + 1);
    const Vector direction =
        (m1_next / c1).array() / ((m2_next / c2).array().sqrt() + kAdamEps);

    std::optional<LossGradient> next;
    Vector candidate;
    for (int attempt = 0;; ++attempt) {
      const double lr = config.learning_rate(t) * lr_scale;
      candidate = theta - lr * (direction + decay.cwiseProduct(theta));
      model.set_parameters(candidate);
      next = try_evaluate(model, data, opts, why);
      if (next) break;
      if (attempt == kMaxRetries) {
        model.set_parameters(best);
        std::ostringstream msg;
        msg << "fit: step " << t << " failed after " << kMaxRetries
            << " learning-rate halvings (lr = " << lr << "): " << why;
        throw TrainingAborted(msg.str());
      }
      lr_scale *= 0.5;
      ++report.retries;
    }

    theta = candidate;
    m1 = m1_next;
    m2 = m2_next;
    current = std::move(next);
    report.loss_trace.push_back(current->loss);
    if (current->loss < best_loss) {
      best_loss = current->loss;
      best = theta;
    }
    flat = std::abs(current->loss - previous) < config.plateau_delta ? flat + 1 : 0;
    previous = current->loss;
    if (flat >= config.patience) {
      report.stopped_early = true;
      break;
    }
  }

  model.set_parameters(best);
  report.n_iters = static_cast<int>(report.loss_trace.size());
  report.final_loss = best_loss;
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace plmc
