#pragma once

// Robust reservation: predictor-channel posteriors, the headroom quantile k*,
// the bandwidth/RB mapping, channel-parameter estimation and the slicing
// baseline sized from population moments.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kfp/demand_models.hpp"

namespace kfp {

struct ChannelParams {
  double p = 0.9;       // P(â=1 | a=1)
  double q = 0.9;       // P(â=0 | a=0)
  double lambda = 0.25;  // P(a=1)

  void validate() const;
  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

// Posterior P(a=1 | â=1) and P(a=0 | â=0). Throw DegenerateChannel on a zero denominator.
double tpr(const ChannelParams& c);
double tnr(const ChannelParams& c);

// g(0..F): P(number of true key frames <= k | Â predicted positives out of F).
std::vector<double> posterior_cdf_table(std::size_t a_hat, std::size_t frames, const ChannelParams& c);
double posterior_cdf(long k, std::size_t a_hat, std::size_t frames, const ChannelParams& c);

// Least k in [0, F] with g(k) >= epsilon.
std::size_t k_star(std::size_t a_hat, std::size_t frames, const ChannelParams& c, double epsilon);

enum class LogBase { two, natural };

struct RadioConfig {
  std::size_t frames_per_slot = 10;  // F
  double alpha_bits = 5e6;           // bits per key frame
  double upload_window_s = 0.02;     // T^r
  double snr_db = 15.0;
  double epsilon = 0.8;
  double rb_bandwidth_hz = 180e3;
  double rb_duration_s = 0.5e-3;
  LogBase log_base = LogBase::two;

  void validate() const;
};

double db_to_linear(double db);
// log(1 + γ) in the configured base, γ given in dB.
double spectral_efficiency(double snr_db, LogBase base);

struct Bandwidth {
  double hz = 0.0;
  std::int64_t rbs = 0;
};

std::int64_t rb_count(double hz, const RadioConfig& r);
Bandwidth bandwidth_for_k(std::size_t k, const RadioConfig& r);
Bandwidth bandwidth_for_k(std::size_t k, const RadioConfig& r, double snr_db);

// α·k ≤ T^r·b·log(1+γ), tolerant to the last-bit rounding of bandwidth_for_k.
bool bandwidth_covers(std::size_t k, double hz, const RadioConfig& r, double snr_db);

// Realized and predicted actions of one slot, with the model that predicted it.
struct SlotOutcome {
  ModelTag model_tag = ModelTag::detailed;
  std::vector<std::uint8_t> actual;
  std::vector<std::uint8_t> predicted;
};

enum class EstimationMode { fine, coarse, fixed };

std::string_view to_string(EstimationMode mode);
EstimationMode parse_estimation_mode(std::string_view name);

// Add-one smoothed (p, q, λ) over the given slots.
ChannelParams estimate_channel(std::span<const SlotOutcome> history);

struct TaggedChannelParams {
  ChannelParams detailed;
  ChannelParams simplified;

  const ChannelParams& get(ModelTag tag) const { return tag == ModelTag::detailed ? detailed : simplified; }
  ChannelParams& get(ModelTag tag) { return tag == ModelTag::detailed ? detailed : simplified; }
};

// Fine: each tag from its own slots. Coarse: one estimate from all slots for
// both tags. Fixed is not an estimation mode and is rejected.
TaggedChannelParams estimate_channel(std::span<const SlotOutcome> history, EstimationMode mode);

// Standard normal quantile.
double normal_quantile(double probability);

// variance_scaled: k̄ + z·σ²/N. clt_consistent: k̄ + z·σ/√N.
enum class SlicingMode { variance_scaled, clt_consistent };

std::string_view to_string(SlicingMode mode);
SlicingMode parse_slicing_mode(std::string_view name);

struct PopulationMoments {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t observations = 0;
};

PopulationMoments estimate_population_moments(std::span<const std::size_t> counts);

struct SlicingReservation {
  double inner = 0.0;              // per-device key-frame level before the ceiling
  std::size_t per_device_k = 0;
  double per_device_hz = 0.0;      // B^s / N
  std::int64_t per_device_rbs = 0;
  double total_hz = 0.0;
};

double slicing_inner(double mean, double variance, std::size_t devices, double epsilon, SlicingMode mode);
SlicingReservation slicing_bandwidth(double mean, double variance, std::size_t devices, double epsilon,
                                     const RadioConfig& r, SlicingMode mode, double mean_snr_db);

enum class ProvisionMode { user_centric, slicing };

struct ProvisionDecision {
  std::size_t slot_index = 0;
  ProvisionMode mode = ProvisionMode::user_centric;
  ModelTag model_tag = ModelTag::detailed;
  std::size_t a_hat = 0;
  std::size_t k_star = 0;
  double bandwidth_hz = 0.0;
  std::int64_t rb_count = 0;
  std::size_t k_true = 0;
  std::int64_t rb_required = 0;
  bool timely = false;

  friend bool operator==(const ProvisionDecision&, const ProvisionDecision&) = default;
};

}  // namespace kfp
