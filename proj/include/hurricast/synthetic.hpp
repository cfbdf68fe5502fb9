#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hurricast/cube_store.hpp"
#include "hurricast/forecast.hpp"
#include "hurricast/storm_data.hpp"

namespace hurricast::synthetic {

enum class SignalPlacement { Statistical, Vision, Both };
std::string_view label(SignalPlacement p);
SignalPlacement parse_placement(std::string_view s);

/// Planted-signal storm generator.
///
/// A latent AR(1) series s_t (unit variance, coefficient `rho`) drives the
/// intensity 24 h later:
///
///   w_t = 65 + signal * s_{t-8} + noise_sd * e_t,   e_t ~ N(0, 1)
///
/// so the target of a case issued at t0 is 65 + signal * s_{t0} plus noise.
/// With Statistical placement s_t is readable from the pressure column
/// (p_t = 1000 - 10 s_t). With Vision placement it sets the amplitude of a
/// Gaussian vortex in the cubes (A_t = 1 + 0.25 s_t) and pressure follows
/// the current wind only. Both uses two independent series, one per source,
/// each weighted 1/sqrt(2).
///
/// Positions follow a random walk whose velocity itself drifts slowly, so
/// recent displacement predicts the next 24 h.
struct SyntheticSpec {
  int storms = 200;
  int steps = 40;  // 3-hourly records per storm
  SignalPlacement placement = SignalPlacement::Vision;
  double noise_sd = 3.0;  // kt
  double signal = 8.0;    // kt per unit of s
  double rho = 0.9;
  std::uint64_t seed = 7;
  int first_year = 1980;
  int last_year = 2019;
  // Operational members: truth plus bias and Gaussian error.
  int operational_members = 2;
  double operational_wind_sd = 6.0;  // kt
  double operational_track_sd = 0.4; // degrees, per displacement component

  /// Throws ConfigError on impossible specs (no storms, fewer than 24 steps, ...).
  void validate() const;
};

struct SyntheticData {
  std::vector<storm::StormTrack> tracks;
  CubeStore cubes;  // one entry per storm covering all of its records
  std::vector<ForecastRecord> operational;
  /// MAE of the Bayes predictor for intensity: noise_sd * sqrt(2 / pi).
  double intensity_noise_floor = 0.0;
};

SyntheticData generate(const SyntheticSpec& spec);

/// Writes tracks.csv, cubes/, operational.csv and manifest.txt under `dir`.
void write(const SyntheticData& data, const SyntheticSpec& spec, const std::filesystem::path& dir);

/// Manifest body (key=value lines).
std::string manifest(const SyntheticData& data, const SyntheticSpec& spec);

}  // namespace hurricast::synthetic
