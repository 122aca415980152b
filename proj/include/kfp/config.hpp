#pragma once

// Experiment configuration with JSON load/dump. Every field has a default;
// unknown keys and out-of-range values are rejected with the key path.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kfp/demand_models.hpp"
#include "kfp/provisioning.hpp"
#include "kfp/switching.hpp"
#include "kfp/trace_io.hpp"

namespace kfp {

enum class SourceKind { slam, bernoulli, files };
enum class ForecastKind { model, oracle, channel };

std::string_view to_string(SourceKind kind);
std::string_view to_string(ForecastKind kind);

struct SourceConfig {
  SourceKind kind = SourceKind::slam;
  double frame_rate = 25.0;
  WorldModel world;
  // Repeated until the run length is covered.
  std::vector<RegimeSegment> schedule{{Regime::stable, 50}, {Regime::burst, 20}};
  std::vector<std::string> trace_paths;
  // Bernoulli source: per-device key probability spread evenly over [lambda_min, lambda_max].
  double lambda_min = 0.1;
  double lambda_max = 0.6;
};

struct RegimeNoise {
  double stable = 0.0;
  double walk = 0.0;
  double burst = 0.0;

  double get(Regime r) const { return r == Regime::stable ? stable : r == Regime::walk ? walk : burst; }
};

struct ForecastConfig {
  ForecastKind kind = ForecastKind::model;
  double channel_p = 0.85;
  double channel_q = 0.9;
  RegimeNoise noise;  // per-frame flip probability applied to every prediction
};

struct EstimationConfig {
  EstimationMode mode = EstimationMode::fine;
  std::size_t tau = 50;
  ChannelParams prior;
};

struct SlicingConfig {
  bool enabled = true;
  SlicingMode mode = SlicingMode::clt_consistent;
  std::size_t tau = 50;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::size_t devices = 10;
  std::size_t slots = 700;
  std::string output_dir = "out";
  RadioConfig radio;
  std::vector<double> device_snr_db;  // empty: every device uses radio.snr_db
  ReferencePolicy policy;
  std::size_t edge_map_capacity = kDefaultEdgeMapCapacity;
  PredictorSettings predictor;
  ForecastConfig forecast;
  SwitchThresholds switching;
  EstimationConfig estimation;
  SlicingConfig slicing;
  SourceConfig source;

  // Throws InputError naming the offending key.
  void validate() const;
  double snr_db_for(std::size_t device) const;
};

// The JSON type is kept out of this header; documents travel as text.
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Returns `text` with the value at a dotted path (e.g. "radio.epsilon")
// replaced by `value`, itself parsed as JSON when possible and as a string otherwise.
std::string set_config_value(std::string_view text, std::string_view dotted_path, std::string_view value);

}  // namespace kfp
