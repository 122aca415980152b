#pragma once

// Synthetic SLAM-like trace generation and the line-oriented trace format.
//
// Format (UTF-8, LF, TAB-separated):
//   kftrace<TAB>device=<id><TAB>frame_rate=<fps><TAB>mode=<feature-sets|similarity-only><TAB>F=<n>
//   <frame_id><TAB><0|1><TAB><payload>
// Payload is a comma-separated list of feature-point ids (feature-sets mode) or
// of <earlier_frame_id>:<weight> pairs (similarity-only mode, may be empty).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "kfp/core_model.hpp"
#include "kfp/demand_models.hpp"

namespace kfp {

enum class Regime { stable, walk, burst };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view name);

struct RegimeSegment {
  Regime regime = Regime::stable;
  std::size_t duration_slots = 1;

  friend bool operator==(const RegimeSegment&, const RegimeSegment&) = default;
};

struct RegimeSchedule {
  std::vector<RegimeSegment> segments;
  std::uint64_t seed = 7;

  std::size_t total_slots() const;
  // Regime of every slot, in order.
  std::vector<Regime> per_slot() const;
};

// Repeats `pattern` until `slots` slots are covered, truncating the last segment.
RegimeSchedule expand_schedule(const std::vector<RegimeSegment>& pattern, std::size_t slots, std::uint64_t seed);

// Per-frame displacement: uniform on [-max_step, max_step], or with probability
// teleport_probability a jump to a uniformly random position. At each slot
// start the camera toggles between moving and holding still with probability
// pause_toggle_probability; it starts every regime segment moving.
struct StepLaw {
  int max_step = 1;
  double teleport_probability = 0.0;
  double pause_toggle_probability = 0.0;
};

struct WorldModel {
  std::uint64_t fp_universe_size = 100000;
  std::uint64_t view_width = 400;
  StepLaw stable{1, 0.0};
  StepLaw walk{5, 0.0};
  StepLaw burst{200, 0.1, 0.7};

  const StepLaw& law(Regime regime) const;
  void validate() const;
};

struct Trace {
  std::string device_id = "device-0";
  double frame_rate = 25.0;
  TraceMode mode = TraceMode::feature_sets;
  std::size_t frames_per_slot = 10;
  std::vector<FrameRecord> frames;

  std::size_t slot_count() const { return frames_per_slot ? frames.size() / frames_per_slot : 0; }
  SlotWindow slot(std::size_t index) const;
  std::vector<std::size_t> slot_key_counts() const;

  friend bool operator==(const Trace&, const Trace&) = default;
};

// Deterministic in (world, schedule, policy). Key-frame flags come from
// replaying the reference policy over the generated frames.
Trace generate_trace(const WorldModel& world, const RegimeSchedule& schedule, const ReferencePolicy& policy,
                     std::size_t length_frames, std::size_t frames_per_slot = 10, double frame_rate = 25.0,
                     std::string device_id = "device-0");

std::string to_string(TraceMode mode);
TraceMode parse_trace_mode(std::string_view name);

void write_trace(const Trace& trace, std::ostream& out);
std::string write_trace(const Trace& trace);
void write_trace_file(const Trace& trace, const std::filesystem::path& path);

Trace read_trace(std::istream& in);
Trace read_trace(std::string_view document);
Trace read_trace_file(const std::filesystem::path& path);

}  // namespace kfp
