#pragma once

// Demand modeling: the reference key-frame selection policy, the detailed
// (graph-state) and simplified (action-window) predictors, and the dual-model
// front end used by the provisioning loop.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kfp/core_model.hpp"

namespace kfp {

struct ReferencePolicy {
  double theta_high = 0.9;  // at or above: redundant frame
  double theta_low = 0.2;   // below: tracking lost, relocalize
  int burst_len = 3;        // frames force-selected on relocalization

  void validate() const;
};

struct PolicyState {
  int burst_remaining = 0;

  friend bool operator==(const PolicyState&, const PolicyState&) = default;
};

// Core selection rule given the frame's best similarity to the device map.
// Mutates `state` (relocalization bursts).
bool reference_policy_decide(const ReferencePolicy& policy, PolicyState& state,
                             double max_map_similarity, bool map_empty);

// Same rule reading the similarities from the D-state's map graph.
bool reference_policy_step(const ReferencePolicy& policy, PolicyState& state, const DState& dstate);

struct ObserverSettings {
  std::size_t frames_per_slot = 10;
  std::size_t window_frames = kDefaultWindowFrames;  // X
  std::size_t edge_map_capacity = kDefaultEdgeMapCapacity;
};

// Replays one device's frames in order, maintaining the 3D maps, the
// reference policy state and the per-frame similarity to the device map.
class FrameObserver {
 public:
  FrameObserver(ReferencePolicy policy, TraceMode mode, ObserverSettings settings = {});

  // Feeds the next frame; its is_key flag is the realized action. Returns the
  // reference policy's own decision for the frame.
  bool observe(const FrameRecord& frame);

  // Sets frame.is_key to the reference policy's decision, then observes it.
  void label(FrameRecord& frame);

  std::size_t frames_seen() const noexcept { return actions_.size(); }
  const std::vector<std::uint8_t>& actions() const noexcept { return actions_; }
  const MapState& maps() const noexcept { return maps_; }
  const PolicyState& policy_state() const noexcept { return policy_state_; }
  const ReferencePolicy& policy() const noexcept { return policy_; }
  TraceMode mode() const noexcept { return mode_; }

  // Similarity of the last observed frame to the device map it was judged against.
  double last_max_similarity() const noexcept { return last_max_similarity_; }
  bool last_action() const noexcept { return !actions_.empty() && actions_.back() != 0; }

  const std::deque<FrameRecord>& window() const noexcept { return window_; }
  FrameGraph window_graph() const;

 private:
  bool advance(const FrameRecord& frame, bool follow_policy);
  double max_map_similarity(const FrameRecord& frame) const;

  ReferencePolicy policy_;
  TraceMode mode_;
  ObserverSettings settings_;
  MapState maps_;
  PolicyState policy_state_;
  SimilarityIndex index_;
  std::vector<FrameRecord> map_frames_;  // similarity-only mode needs the records
  std::deque<FrameRecord> window_;
  std::vector<std::uint8_t> actions_;
  FrameSet slot_uploads_;
  double last_max_similarity_ = 0.0;
};

// Geometric model of similarity decay versus frame distance.
struct LinkPredictor {
  double decay = 0.5;
  std::size_t calibration_window = kDefaultWindowFrames;
  bool degenerate = false;
};

inline constexpr double kMinDecay = 0.01;
inline constexpr double kMaxDecay = 0.99;

// Least-squares fit of log(mean similarity at distance d) = d * log(decay)
// over the window graph's pairs (node ids give the distance).
LinkPredictor fit_link_predictor(const FrameGraph& window_graph);
LinkPredictor fit_link_predictor(std::span<const FrameRecord> frames, TraceMode mode);

struct DetailedContext {
  FrameGraph window_graph;
  double last_max_similarity = 0.0;
  bool last_was_key = false;
  bool map_empty = true;
  PolicyState policy_state;
};

DetailedContext make_detailed_context(const FrameObserver& observer);

// Rolls the reference policy forward `horizon` synthetic frames on
// similarities extrapolated by the link predictor.
std::vector<std::uint8_t> predict_detailed(const DetailedContext& context, const LinkPredictor& link,
                                           const ReferencePolicy& policy, std::size_t horizon);

// Counts of outcomes following every suffix (length 0..window) of past S-states.
class SuffixHistory {
 public:
  explicit SuffixHistory(std::size_t window = kDefaultActionWindow, std::size_t min_support = 3);

  void record(const SState& pattern, bool outcome);

  std::size_t window() const noexcept { return window_; }
  std::size_t min_support() const noexcept { return min_support_; }
  std::size_t total() const noexcept;

  // Empirical P(outcome = 1) after the longest supported suffix of `pattern`.
  double probability_of_key(const SState& pattern) const;

 private:
  struct Counts {
    std::size_t seen = 0;
    std::size_t ones = 0;
  };
  static std::uint64_t key(std::size_t length, std::uint64_t bits) { return (std::uint64_t{length} << 40) | bits; }
  static std::uint64_t suffix_bits(const SState& pattern, std::size_t length);

  std::size_t window_;
  std::size_t min_support_;
  std::unordered_map<std::uint64_t, Counts> counts_;
};

// 1 iff probability_of_key(sstate) >= 0.5.
bool predict_simplified(const SState& sstate, const SuffixHistory& history);

enum class ModelTag : std::uint8_t { detailed = 1, simplified = 0 };

std::string_view to_string(ModelTag tag);
char tag_letter(ModelTag tag);

struct PredictionVector {
  std::size_t slot_index = 0;
  std::vector<std::uint8_t> values;
  ModelTag model_tag = ModelTag::detailed;

  std::size_t predicted_key_count() const;
};

class DetailedModel {
 public:
  virtual ~DetailedModel() = default;
  virtual std::vector<std::uint8_t> predict(const FrameObserver& observer, std::size_t horizon) const = 0;
};

class SimplifiedModel {
 public:
  virtual ~SimplifiedModel() = default;
  virtual bool predict(const SState& sstate, const SuffixHistory& history) const = 0;
};

struct PredictorSettings {
  std::string detailed = "rollout";
  std::string simplified = "suffix";
  std::size_t window_frames = kDefaultWindowFrames;  // X
  std::size_t calibration_frames = 10;  // most recent frames used to fit the link predictor
  std::size_t action_window = kDefaultActionWindow;  // Tʷ
  std::size_t min_support = 3;
  std::size_t edge_map_capacity = kDefaultEdgeMapCapacity;
};

// Name -> factory tables so alternative predictors can be plugged in.
class PredictorRegistry {
 public:
  using DetailedFactory = std::function<std::unique_ptr<DetailedModel>(const PredictorSettings&)>;
  using SimplifiedFactory = std::function<std::unique_ptr<SimplifiedModel>(const PredictorSettings&)>;

  static PredictorRegistry& instance();

  void register_detailed(std::string name, DetailedFactory factory);
  void register_simplified(std::string name, SimplifiedFactory factory);

  std::unique_ptr<DetailedModel> make_detailed(const PredictorSettings& settings) const;
  std::unique_ptr<SimplifiedModel> make_simplified(const PredictorSettings& settings) const;

  bool has_detailed(std::string_view name) const;
  bool has_simplified(std::string_view name) const;

 private:
  PredictorRegistry();

  std::map<std::string, DetailedFactory, std::less<>> detailed_;
  std::map<std::string, SimplifiedFactory, std::less<>> simplified_;
};

// The dual-model demand predictor for one device. Predictions for slot t only
// use frames of slots < t.
class DemandModel {
 public:
  DemandModel(ReferencePolicy policy, TraceMode mode, std::size_t frames_per_slot,
              PredictorSettings settings = {});

  PredictionVector predict_slot(ModelTag tag, std::size_t slot_index) const;

  // Feeds the realized frames of the next slot.
  void observe_slot(std::span<const FrameRecord> frames);

  const FrameObserver& observer() const noexcept { return observer_; }
  const SuffixHistory& suffix_history() const noexcept { return history_; }
  std::size_t frames_per_slot() const noexcept { return frames_per_slot_; }

 private:
  std::size_t frames_per_slot_;
  PredictorSettings settings_;
  FrameObserver observer_;
  SuffixHistory history_;
  std::unique_ptr<DetailedModel> detailed_;
  std::unique_ptr<SimplifiedModel> simplified_;
};

}  // namespace kfp
