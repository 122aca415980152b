#include "kfp/demand_models.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "kfp/errors.hpp"

namespace kfp {

void ReferencePolicy::validate() const {
  if (!(theta_low > 0.0 && theta_low < theta_high && theta_high < 1.0)) {
    throw InputError("policy thresholds must satisfy 0 < theta_low < theta_high < 1");
  }
  if (burst_len < 1) throw InputError("policy burst_len must be positive");
}

bool reference_policy_decide(const ReferencePolicy& policy, PolicyState& state,
                             double max_map_similarity, bool map_empty) {
  if (map_empty) return true;
  if (state.burst_remaining > 0) {
    --state.burst_remaining;
    return true;
  }
  if (max_map_similarity < policy.theta_low) {
    state.burst_remaining = policy.burst_len - 1;
    return true;
  }
  return max_map_similarity < policy.theta_high;
}

bool reference_policy_step(const ReferencePolicy& policy, PolicyState& state, const DState& dstate) {
  const bool map_empty = dstate.map_graph.nodes().size() <= 1;
  double best = 0.0;
  for (FrameId id : dstate.map_graph.nodes()) {
    if (id == dstate.frame) continue;
    best = std::max(best, dstate.map_graph.weight(id, dstate.frame).value_or(0.0));
  }
  return reference_policy_decide(policy, state, best, map_empty);
}

// --- FrameObserver ---------------------------------------------------------

FrameObserver::FrameObserver(ReferencePolicy policy, TraceMode mode, ObserverSettings settings)
    : policy_(policy), mode_(mode), settings_(settings) {
  policy_.validate();
  if (settings_.frames_per_slot == 0) throw ContractViolation("frames_per_slot must be positive");
  if (settings_.window_frames == 0) throw ContractViolation("window_frames must be positive");
}

double FrameObserver::max_map_similarity(const FrameRecord& frame) const {
  if (mode_ == TraceMode::feature_sets) {
    if (frame.features.empty()) {
      throw InputError("frame " + std::to_string(frame.id) + " has no feature points");
    }
    return index_.max_similarity(frame.features);
  }
  double best = 0.0;
  for (const auto& g : map_frames_) best = std::max(best, frame_similarity(frame, g, mode_));
  return best;
}

bool FrameObserver::advance(const FrameRecord& frame, bool follow_policy) {
  if (frame.id != actions_.size()) {
    throw ContractViolation("frame " + std::to_string(frame.id) + " observed out of order");
  }
  const bool admit = last_action();
  maps_ = update_device_map(std::move(maps_), frame.id, admit);
  if (admit) {
    const FrameRecord& previous = window_.back();
    if (mode_ == TraceMode::feature_sets) {
      index_.add(previous.id, previous.features);
    } else {
      map_frames_.push_back(previous);
    }
  }

  const bool map_empty = maps_.device_map.empty();
  const double similarity = map_empty ? 0.0 : max_map_similarity(frame);
  const bool decision = reference_policy_decide(policy_, policy_state_, similarity, map_empty);
  const bool realized = follow_policy ? decision : frame.is_key;

  last_max_similarity_ = similarity;
  actions_.push_back(realized ? 1 : 0);
  window_.push_back(frame);
  window_.back().is_key = realized;
  if (window_.size() > settings_.window_frames) window_.pop_front();

  if (realized) slot_uploads_.insert(frame.id);
  if ((frame.id + 1) % settings_.frames_per_slot == 0) {
    FrameSet merged = maps_.edge_map;
    merged.insert(slot_uploads_.begin(), slot_uploads_.end());
    maps_ = update_edge_map(std::move(maps_), slot_uploads_,
                            cull_oldest(merged, settings_.edge_map_capacity));
    slot_uploads_.clear();
  }
  return decision;
}

bool FrameObserver::observe(const FrameRecord& frame) { return advance(frame, false); }

void FrameObserver::label(FrameRecord& frame) { frame.is_key = advance(frame, true); }

FrameGraph FrameObserver::window_graph() const {
  std::vector<FrameRecord> frames(window_.begin(), window_.end());
  return build_frame_graph(frames, mode_);
}

// --- Link prediction -------------------------------------------------------

LinkPredictor fit_link_predictor(const FrameGraph& window_graph) {
  if (window_graph.nodes().size() < 2) {
    throw ContractViolation("link fit needs at least two frames");
  }
  std::map<std::uint64_t, std::pair<double, std::size_t>> by_distance;
  for (const auto& [edge, w] : window_graph.edges()) {
    auto& [sum, count] = by_distance[edge.second - edge.first];
    sum += w;
    ++count;
  }
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& [d, acc] : by_distance) {
    const double mean = acc.first / static_cast<double>(acc.second);
    if (mean <= 0.0) continue;
    const auto dist = static_cast<double>(d);
    sxy += dist * std::log(mean);
    sxx += dist * dist;
  }
  LinkPredictor link;
  link.calibration_window = window_graph.nodes().size();
  if (sxx == 0.0) {
    link.decay = 0.5;
    link.degenerate = true;
    return link;
  }
  link.decay = std::clamp(std::exp(sxy / sxx), kMinDecay, kMaxDecay);
  return link;
}

LinkPredictor fit_link_predictor(std::span<const FrameRecord> frames, TraceMode mode) {
  return fit_link_predictor(build_frame_graph(frames, mode));
}

DetailedContext make_detailed_context(const FrameObserver& observer) {
  DetailedContext ctx;
  ctx.window_graph = observer.window_graph();
  ctx.last_max_similarity = observer.last_max_similarity();
  ctx.last_was_key = observer.last_action();
  ctx.map_empty = observer.maps().device_map.empty();
  ctx.policy_state = observer.policy_state();
  return ctx;
}

std::vector<std::uint8_t> predict_detailed(const DetailedContext& context, const LinkPredictor& link,
                                           const ReferencePolicy& policy, std::size_t horizon) {
  std::vector<std::uint8_t> out;
  out.reserve(horizon);
  PolicyState state = context.policy_state;
  bool map_empty = context.map_empty && !context.last_was_key;
  std::optional<std::size_t> last_predicted_key;

  for (std::size_t j = 1; j <= horizon; ++j) {
    double similarity = context.last_max_similarity * std::pow(link.decay, static_cast<double>(j));
    if (context.last_was_key) similarity = std::max(similarity, std::pow(link.decay, static_cast<double>(j)));
    if (last_predicted_key) {
      similarity = std::max(similarity, std::pow(link.decay, static_cast<double>(j - *last_predicted_key)));
    }
    const bool action = reference_policy_decide(policy, state, similarity, map_empty);
    out.push_back(action ? 1 : 0);
    if (action) {
      last_predicted_key = j;
      map_empty = false;
    }
  }
  return out;
}

// --- Simplified model ------------------------------------------------------

SuffixHistory::SuffixHistory(std::size_t window, std::size_t min_support)
    : window_(window), min_support_(min_support) {
  if (window > 32) throw ContractViolation("action window longer than 32 frames is not supported");
  if (min_support == 0) throw ContractViolation("min_support must be positive");
}

std::uint64_t SuffixHistory::suffix_bits(const SState& pattern, std::size_t length) {
  std::uint64_t bits = 0;
  const std::size_t n = pattern.actions.size();
  for (std::size_t i = n - length; i < n; ++i) bits = (bits << 1) | (pattern.actions[i] ? 1u : 0u);
  return bits;
}

void SuffixHistory::record(const SState& pattern, bool outcome) {
  if (pattern.actions.size() != window_) throw ContractViolation("S-state has the wrong length");
  for (std::size_t len = 0; len <= window_; ++len) {
    auto& c = counts_[key(len, suffix_bits(pattern, len))];
    ++c.seen;
    if (outcome) ++c.ones;
  }
}

std::size_t SuffixHistory::total() const noexcept {
  auto it = counts_.find(key(0, 0));
  return it == counts_.end() ? 0 : it->second.seen;
}

double SuffixHistory::probability_of_key(const SState& pattern) const {
  if (pattern.actions.size() != window_) throw ContractViolation("S-state has the wrong length");
  for (std::size_t len = window_; len >= 1; --len) {
    auto it = counts_.find(key(len, suffix_bits(pattern, len)));
    if (it != counts_.end() && it->second.seen >= min_support_) {
      return static_cast<double>(it->second.ones) / static_cast<double>(it->second.seen);
    }
  }
  auto it = counts_.find(key(0, 0));
  if (it == counts_.end() || it->second.seen == 0) return 0.5;
  return static_cast<double>(it->second.ones) / static_cast<double>(it->second.seen);
}

bool predict_simplified(const SState& sstate, const SuffixHistory& history) {
  return history.probability_of_key(sstate) >= 0.5;
}

// --- Tags, registry, dual model ---------------------------------------------

std::string_view to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::detailed: return "detailed";
    case ModelTag::simplified: return "simplified";
  }
  throw ContractViolation("unknown model tag");
}

char tag_letter(ModelTag tag) {
  switch (tag) {
    case ModelTag::detailed: return 'D';
    case ModelTag::simplified: return 'S';
  }
  throw ContractViolation("unknown model tag");
}

std::size_t PredictionVector::predicted_key_count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

namespace {

class RolloutModel final : public DetailedModel {
 public:
  explicit RolloutModel(std::size_t calibration_frames) : calibration_frames_(calibration_frames) {}

  std::vector<std::uint8_t> predict(const FrameObserver& observer, std::size_t horizon) const override {
    DetailedContext ctx = make_detailed_context(observer);
    const auto& window = observer.window();
    const std::size_t take = std::min(calibration_frames_, window.size());
    LinkPredictor link;
    if (take >= 2) {
      const std::vector<FrameRecord> recent(window.end() - static_cast<std::ptrdiff_t>(take), window.end());
      link = fit_link_predictor(recent, observer.mode());
    } else {
      link.degenerate = true;
    }
    return predict_detailed(ctx, link, observer.policy(), horizon);
  }

 private:
  std::size_t calibration_frames_;
};

class SuffixModel final : public SimplifiedModel {
 public:
  bool predict(const SState& sstate, const SuffixHistory& history) const override {
    return predict_simplified(sstate, history);
  }
};

}  // namespace

PredictorRegistry::PredictorRegistry() {
  register_detailed("rollout", [](const PredictorSettings& s) {
    return std::make_unique<RolloutModel>(s.calibration_frames);
  });
  register_simplified("suffix", [](const PredictorSettings&) { return std::make_unique<SuffixModel>(); });
}

PredictorRegistry& PredictorRegistry::instance() {
  static PredictorRegistry registry;
  return registry;
}

void PredictorRegistry::register_detailed(std::string name, DetailedFactory factory) {
  detailed_[std::move(name)] = std::move(factory);
}

void PredictorRegistry::register_simplified(std::string name, SimplifiedFactory factory) {
  simplified_[std::move(name)] = std::move(factory);
}

bool PredictorRegistry::has_detailed(std::string_view name) const { return detailed_.find(name) != detailed_.end(); }

bool PredictorRegistry::has_simplified(std::string_view name) const {
  return simplified_.find(name) != simplified_.end();
}

std::unique_ptr<DetailedModel> PredictorRegistry::make_detailed(const PredictorSettings& settings) const {
  auto it = detailed_.find(settings.detailed);
  if (it == detailed_.end()) throw InputError("unknown detailed predictor '" + settings.detailed + "'");
  return it->second(settings);
}

std::unique_ptr<SimplifiedModel> PredictorRegistry::make_simplified(const PredictorSettings& settings) const {
  auto it = simplified_.find(settings.simplified);
  if (it == simplified_.end()) throw InputError("unknown simplified predictor '" + settings.simplified + "'");
  return it->second(settings);
}

DemandModel::DemandModel(ReferencePolicy policy, TraceMode mode, std::size_t frames_per_slot,
                         PredictorSettings settings)
    : frames_per_slot_(frames_per_slot),
      settings_(std::move(settings)),
      observer_(policy, mode, ObserverSettings{frames_per_slot, settings_.window_frames, settings_.edge_map_capacity}),
      history_(settings_.action_window, settings_.min_support),
      detailed_(PredictorRegistry::instance().make_detailed(settings_)),
      simplified_(PredictorRegistry::instance().make_simplified(settings_)) {}

PredictionVector DemandModel::predict_slot(ModelTag tag, std::size_t slot_index) const {
  if (slot_index * frames_per_slot_ != observer_.frames_seen()) {
    throw ContractViolation("predictions for slot " + std::to_string(slot_index) +
                            " must be made at its start");
  }
  PredictionVector out;
  out.slot_index = slot_index;
  out.model_tag = tag;
  switch (tag) {
    case ModelTag::detailed:
      out.values = detailed_->predict(observer_, frames_per_slot_);
      break;
    case ModelTag::simplified: {
      SState window = build_sstate(observer_.actions(), settings_.action_window);
      for (std::size_t j = 0; j < frames_per_slot_; ++j) {
        const bool action = simplified_->predict(window, history_);
        out.values.push_back(action ? 1 : 0);
        if (!window.actions.empty()) {
          std::rotate(window.actions.begin(), window.actions.begin() + 1, window.actions.end());
          window.actions.back() = action ? 1 : 0;
        }
      }
      break;
    }
    default:
      throw ContractViolation("unknown model tag");
  }
  return out;
}

void DemandModel::observe_slot(std::span<const FrameRecord> frames) {
  for (const auto& frame : frames) {
    history_.record(build_sstate(observer_.actions(), settings_.action_window), frame.is_key);
    observer_.observe(frame);
  }
}

}  // namespace kfp
