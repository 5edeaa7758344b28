#pragma once

#include "plmc/inference.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace plmc {

enum class MixingMode { gaussian, physical };

std::string to_string(MixingMode mode);
MixingMode parse_mixing_mode(const std::string& name);

struct DataGenConfig {
  int n_tasks = 10;
  int n_lat = 2;
  int n_lat_noise = 3;
  int n_points = 50;
  double mu_noise = 0.05;
  double mu_str = 0.5;
  double l_min = 0.1;
  double l_max = 0.5;
  int n_test = 500;
  std::uint64_t seed = 0;
  MixingMode h_mode = MixingMode::gaussian;

  void validate() const;
};

/// Everything drawn while generating a dataset. Matrices over points hold
/// the training columns first, then the test columns.
struct GroundTruth {
  Matrix H;             // p x q
  Matrix H_noise;       // p x n_lat_noise
  Vector lengthscales;  // q
  Matrix latents;       // q x (n + m)
  Matrix signal;        // p x (n + m), H * latents
  Matrix noise_str;     // p x (n + m), H_noise * white noise
  Matrix noise_ind;     // p x (n + m)
  Matrix noise;         // mu_str * noise_str + (1 - mu_str) * noise_ind
};

struct SyntheticData {
  Dataset train;
  Dataset test;        // noisy test outputs
  Matrix test_signal;  // noise-free part of the test outputs, (1 - mu_noise) * signal
  GroundTruth truth;
};

SyntheticData generate(const DataGenConfig& config);

/// H_noise times independent unit white noise, one column per point.
Matrix structured_noise(const Matrix& h_noise, Eigen::Index count, std::mt19937_64& rng);

/// Inverse-square mixing: H_ij = j / d_ij^2 (1-based j) between sensor i,
/// placed at x = -1 + 2 i / (p - 1) on the y = 0 axis, and source j.
/// `sources` is 2 x q. Throws InvalidInput if a source sits on a sensor.
Matrix physical_H_from_sources(Eigen::Index p, const Matrix& sources);

/// Sources drawn from N(0, I_2); a source landing on a sensor is redrawn.
Matrix physical_H(Eigen::Index p, Eigen::Index q, std::mt19937_64& rng);
Matrix physical_H(Eigen::Index p, Eigen::Index q, std::uint64_t seed);

}  // namespace plmc
