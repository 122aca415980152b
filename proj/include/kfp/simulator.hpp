#pragma once

// Per-device reservation loop (predict, size, realize, re-estimate), the
// slicing baseline over the same traces, and the TUKF / RP metrics.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kfp/config.hpp"
#include "kfp/demand_models.hpp"
#include "kfp/provisioning.hpp"
#include "kfp/switching.hpp"
#include "kfp/trace_io.hpp"

namespace kfp {

// Source of per-slot action predictions for one device.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  // Called at the start of slot `slot`, before any of its frames are known.
  virtual PredictionVector forecast(ModelTag tag, std::size_t slot) = 0;
  // Called once the frames of slot `slot` have been realized.
  virtual void observe_slot(std::size_t slot) = 0;
};

// The dual-model predictor fed with the device's own frames.
class DualModelForecaster final : public Forecaster {
 public:
  DualModelForecaster(const Trace& trace, ReferencePolicy policy, PredictorSettings settings);
  PredictionVector forecast(ModelTag tag, std::size_t slot) override;
  void observe_slot(std::size_t slot) override;

 private:
  const Trace& trace_;
  DemandModel model_;
};

// Predicts the realized actions exactly.
class GroundTruthForecaster final : public Forecaster {
 public:
  explicit GroundTruthForecaster(const Trace& trace) : trace_(trace) {}
  PredictionVector forecast(ModelTag tag, std::size_t slot) override;
  void observe_slot(std::size_t) override {}

 private:
  const Trace& trace_;
};

// Passes the realized actions through a (p, q) binary channel.
class ChannelForecaster final : public Forecaster {
 public:
  ChannelForecaster(const Trace& trace, double p, double q, std::uint64_t seed, std::size_t device);
  PredictionVector forecast(ModelTag tag, std::size_t slot) override;
  void observe_slot(std::size_t) override {}

 private:
  const Trace& trace_;
  double p_;
  double q_;
  std::uint64_t seed_;
  std::size_t device_;
};

// Flips each bit of an inner forecaster's output with a per-slot probability.
class NoisyForecaster final : public Forecaster {
 public:
  NoisyForecaster(std::unique_ptr<Forecaster> inner, std::vector<double> flip_probability, std::uint64_t seed,
                  std::size_t device);
  PredictionVector forecast(ModelTag tag, std::size_t slot) override;
  void observe_slot(std::size_t slot) override { inner_->observe_slot(slot); }

 private:
  std::unique_ptr<Forecaster> inner_;
  std::vector<double> flip_;
  std::uint64_t seed_;
  std::size_t device_;
};

// Independent stream for (seed, device, stream, slot).
std::uint64_t derive_seed(std::uint64_t seed, std::size_t device, std::uint64_t stream, std::uint64_t slot = 0);

struct DeviceInput {
  Trace trace;
  std::vector<Regime> regimes;     // per slot
  std::vector<double> snr_db;      // per slot
  double lambda = 0.0;             // bernoulli source only
};

struct DeviceSettings {
  RadioConfig radio;
  SwitchThresholds switching;
  EstimationConfig estimation;
};

class DeviceRun {
 public:
  DeviceRun(const DeviceInput& input, std::unique_ptr<Forecaster> forecaster, DeviceSettings settings);

  // Executes slot t; slots must be run in order. Throws EndOfTrace past the trace.
  const ProvisionDecision& run_slot(std::size_t t);

  const std::vector<ProvisionDecision>& decisions() const noexcept { return decisions_; }
  const SwitchState& switch_state() const noexcept { return switch_; }
  const TaggedChannelParams& channel_params() const noexcept { return params_; }

 private:
  void update_estimates(ModelTag used);

  const DeviceInput& input_;
  std::unique_ptr<Forecaster> forecaster_;
  DeviceSettings settings_;
  SwitchState switch_;
  TaggedChannelParams params_;
  std::deque<SlotOutcome> recent_all_;
  std::deque<SlotOutcome> recent_detailed_;
  std::deque<SlotOutcome> recent_simplified_;
  std::vector<ProvisionDecision> decisions_;
};

const ProvisionDecision& run_slot(DeviceRun& device, std::size_t t);

// Sum of bandwidth_hz over the decisions.
double aggregate_bandwidth(std::span<const ProvisionDecision> decisions);

// Slicing decisions for every device and slot; moments come from the trailing
// `tau` slots of all devices (prior F·λ0, F·λ0(1-λ0) before any history).
std::vector<std::vector<ProvisionDecision>> run_slicing(std::span<const DeviceInput> devices, const RadioConfig& radio,
                                                        const SlicingConfig& slicing, double prior_lambda);

struct DeviceMetrics {
  double tukf = 1.0;
  std::optional<double> rp_ratio;  // empty when nothing was required but something was provisioned
  std::int64_t provisioned_rbs = 0;
  std::int64_t required_rbs = 0;
  std::int64_t over_provisioned_rbs = 0;
  std::int64_t under_provisioned_rbs = 0;
  std::size_t key_frames = 0;
  std::size_t timely_key_frames = 0;
  std::size_t slots = 0;
  double mean_rbs = 0.0;
  double detailed_share = 0.0;  // fraction of slots run with the detailed model

  friend bool operator==(const DeviceMetrics&, const DeviceMetrics&) = default;
};

struct MetricsReport {
  DeviceMetrics total;
  std::vector<DeviceMetrics> per_device;
  double min_device_tukf = 1.0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

DeviceMetrics compute_device_metrics(std::span<const ProvisionDecision> log);
MetricsReport compute_metrics(const std::vector<std::vector<ProvisionDecision>>& logs);

struct ExperimentResult {
  std::vector<DeviceInput> inputs;
  std::vector<std::vector<ProvisionDecision>> user_centric;
  std::vector<std::vector<ProvisionDecision>> slicing;
  MetricsReport user_centric_report;
  MetricsReport slicing_report;
};

// Builds the device inputs (generated, Bernoulli or read from files).
std::vector<DeviceInput> build_inputs(const ExperimentConfig& config);

ExperimentResult run_experiment(const ExperimentConfig& config);

// slot,device,model_tag,A_hat,k_true,k_star,rb_provisioned,rb_required,timely
void write_slot_csv(const std::vector<std::vector<ProvisionDecision>>& logs, const std::vector<DeviceInput>& inputs,
                    std::ostream& out);
std::string summary_json(const ExperimentConfig& config, const ExperimentResult& result);

}  // namespace kfp
