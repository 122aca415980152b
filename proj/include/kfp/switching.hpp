#pragma once

// Model switching between the detailed and simplified predictors, driven by
// the change in realized key-frame count between consecutive slots.

#include <cstddef>
#include <optional>

namespace kfp {

struct SwitchThresholds {
  int upper = 4;  // δᵘ
  int lower = 2;  // δᵇ
  int trigger = 3;  // M

  void validate() const;
  friend bool operator==(const SwitchThresholds&, const SwitchThresholds&) = default;
};

struct SwitchState {
  int h = 1;  // 1 = detailed, 0 = simplified
  int m = 0;
  SwitchThresholds thresholds;
  std::optional<std::size_t> last_count;      // k̃ of slot t-1
  std::optional<std::size_t> previous_count;  // k̃ of slot t-2

  friend bool operator==(const SwitchState&, const SwitchState&) = default;
};

// |k̃_{t-1} - k̃_{t-2}|, 0 until two counts have been recorded.
int delta(const SwitchState& state);

SwitchState msf_step(SwitchState state, int delta_value);

// Shifts a realized slot key count into the two-slot memory.
SwitchState record_count(SwitchState state, std::size_t key_count);

}  // namespace kfp
