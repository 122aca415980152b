#pragma once

#include <random>
#include <string>

#include "kfp/trace_io.hpp"

namespace testing {

// Random well-formed trace in either mode with awkward doubles.
inline kfp::Trace random_trace(std::mt19937_64& rng) {
  using namespace kfp;
  Trace t;
  std::uniform_int_distribution<int> small(1, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  t.device_id = "dev-" + std::to_string(rng() % 1000);
  t.frame_rate = 1.0 + unit(rng) * 59.0;
  t.frames_per_slot = static_cast<std::size_t>(small(rng));
  t.mode = unit(rng) < 0.5 ? TraceMode::feature_sets : TraceMode::similarity_only;
  const std::size_t frames = t.frames_per_slot * static_cast<std::size_t>(small(rng));
  for (std::size_t f = 0; f < frames; ++f) {
    FrameRecord r;
    r.id = f;
    r.is_key = unit(rng) < 0.3;
    if (t.mode == TraceMode::feature_sets) {
      std::vector<FeatureId> ids;
      for (int i = small(rng); i > 0; --i) ids.push_back(rng() % 100000);
      r.features = make_feature_set(ids);
    } else {
      for (FrameId g = 0; g < f; ++g) {
        if (unit(rng) < 0.6) r.links.push_back({g, unit(rng)});
      }
    }
    t.frames.push_back(std::move(r));
  }
  return t;
}

}  // namespace testing
