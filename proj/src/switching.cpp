#include "kfp/switching.hpp"

#include "kfp/errors.hpp"

namespace kfp {

void SwitchThresholds::validate() const {
  if (lower < 0 || lower > upper) throw InputError("switching thresholds need 0 <= lower <= upper");
  if (trigger < 1) throw InputError("switching trigger must be at least 1");
}

int delta(const SwitchState& state) {
  if (!state.last_count || !state.previous_count) return 0;
  const auto a = *state.last_count;
  const auto b = *state.previous_count;
  return static_cast<int>(a > b ? a - b : b - a);
}

SwitchState msf_step(SwitchState state, int delta_value) {
  if (delta_value < 0) throw ContractViolation("delta must be non-negative");
  const SwitchThresholds& th = state.thresholds;
  if (delta_value > th.upper) {
    state.h = 1;
    state.m = 0;
  } else if (delta_value < th.lower) {
    ++state.m;
    if (state.m >= th.trigger) {
      state.h = 0;
      state.m = 0;
    }
  }
  return state;
}

SwitchState record_count(SwitchState state, std::size_t key_count) {
  state.previous_count = state.last_count;
  state.last_count = key_count;
  return state;
}

}  // namespace kfp
