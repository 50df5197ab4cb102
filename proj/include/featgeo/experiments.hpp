#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "featgeo/metrics.hpp"

namespace featgeo {

// A plot-ready table: one header row, one sample or grid point per data row.
struct Artifact {
  std::vector<std::string> header;
  Eigen::MatrixXd data;

  Eigen::VectorXd column(const std::string& name) const;
};

struct ExperimentOptions {
  std::optional<std::uint32_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> grid;
  std::optional<std::size_t> samples;  // overrides the preset's training-set size
};

struct ExperimentResult {
  std::string preset;
  std::uint32_t seed = 0;
  std::vector<MetricResult> metrics;
  std::map<std::string, Artifact> artifacts;
  nlohmann::json notes = nlohmann::json::object();
  double seconds = 0.0;

  bool passed() const;
  nlohmann::json manifest() const;
};

const std::vector<std::string>& preset_names();
bool is_preset(const std::string& name);
std::uint32_t default_seed(const std::string& preset);

// Throws ConfigError for an unknown preset and TrainingDiverged if optimisation blows up.
ExperimentResult run_experiment(const std::string& preset, const ExperimentOptions& opt = {});

// manifest.json plus one CSV per artifact under dir (created if missing).
void write_experiment(const ExperimentResult& r, const std::string& dir);

void write_csv(const std::string& path, const Artifact& a);
Artifact read_csv(const std::string& path);

// Evenly spaced points on [-1, 1], endpoints included.
Eigen::VectorXd grid_1d(std::size_t n);
// All (x1, x2) pairs of grid_1d(n), x1 major.
Eigen::MatrixXd grid_2d(std::size_t n);

}  // namespace featgeo
