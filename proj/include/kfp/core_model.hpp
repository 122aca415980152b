#pragma once

// Frames, slots, similarity graphs and 3D-map set dynamics of the key-frame
// traffic model.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kfp {

using FrameId = std::uint64_t;
using FeatureId = std::uint64_t;

// Sorted, duplicate-free feature-point identifiers.
using FeatureSet = std::vector<FeatureId>;

using FrameSet = std::set<FrameId>;

enum class TraceMode { feature_sets, similarity_only };

// Precomputed similarity from a frame to an earlier frame (similarity-only traces).
struct SimilarityLink {
  FrameId other = 0;
  double weight = 0.0;

  friend bool operator==(const SimilarityLink&, const SimilarityLink&) = default;
};

struct FrameRecord {
  FrameId id = 0;
  bool is_key = false;
  FeatureSet features;
  // Only populated in similarity-only mode; ascending by `other`, all < id.
  std::vector<SimilarityLink> links;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

FeatureSet make_feature_set(std::vector<FeatureId> ids);

// |a ∩ b| / |a ∪ b| over sorted sets. Two empty sets give 0.
double jaccard_similarity(std::span<const FeatureId> a, std::span<const FeatureId> b);

// Similarity between two frames of one trace. In similarity-only mode the
// weight is looked up in the later frame's links; a missing pair throws
// InputError.
double frame_similarity(const FrameRecord& a, const FrameRecord& b, TraceMode mode);

// F consecutive frames forming time slot `index`, i.e. frames [index*F, (index+1)*F).
class SlotWindow {
 public:
  SlotWindow(std::size_t index, std::span<const FrameRecord> frames, std::size_t frames_per_slot);

  std::size_t index() const noexcept { return index_; }
  std::span<const FrameRecord> frames() const noexcept { return frames_; }
  std::size_t frames_per_slot() const noexcept { return frames_.size(); }

 private:
  std::size_t index_;
  std::span<const FrameRecord> frames_;
};

// Number of key frames in the slot (realized demand k̃).
std::size_t slot_key_count(const SlotWindow& slot);

// Weighted undirected graph over frame ids. Weights live in [0,1]; no self edges.
class FrameGraph {
 public:
  using Edge = std::pair<FrameId, FrameId>;

  void add_node(FrameId id);
  void set_weight(FrameId a, FrameId b, double weight);

  bool contains(FrameId id) const { return nodes_.count(id) != 0; }
  std::optional<double> weight(FrameId a, FrameId b) const;

  const FrameSet& nodes() const noexcept { return nodes_; }
  const std::map<Edge, double>& edges() const noexcept { return weights_; }
  std::size_t edge_count() const noexcept { return weights_.size(); }

  // Largest weight on an edge incident to `id`; nullopt when it has none.
  std::optional<double> max_incident_weight(FrameId id) const;

 private:
  static Edge key(FrameId a, FrameId b) { return a < b ? Edge{a, b} : Edge{b, a}; }

  FrameSet nodes_;
  std::map<Edge, double> weights_;
};

// Complete graph over `frames` with pairwise frame_similarity weights.
FrameGraph build_frame_graph(std::span<const FrameRecord> frames, TraceMode mode);

struct MapState {
  FrameSet edge_map;
  FrameSet device_map;
  // Frames removed from the edge map by the most recent update.
  FrameSet cull_set;

  friend bool operator==(const MapState&, const MapState&) = default;
};

// Edge-map recurrence: (edge ∪ uploaded) \ culled. Throws ContractViolation
// unless culled ⊆ edge ∪ uploaded.
MapState update_edge_map(MapState state, const FrameSet& uploaded, const FrameSet& culled);

// Device-map recurrence for the arrival of frame f: frame f-1 joins the map
// when it was selected as a key frame.
MapState update_device_map(MapState state, FrameId f, bool previous_action);

// Oldest-first culling down to `capacity` key frames.
FrameSet cull_oldest(const FrameSet& edge_map, std::size_t capacity);

inline constexpr std::size_t kDefaultEdgeMapCapacity = 200;
inline constexpr std::size_t kDefaultWindowFrames = 20;
inline constexpr std::size_t kDefaultActionWindow = 30;

struct DState {
  FrameId frame = 0;
  // Over device_map ∪ {frame}.
  FrameGraph map_graph;
  // Over the (up to) window_length frames preceding `frame`.
  FrameGraph window_graph;
  std::size_t window_length = kDefaultWindowFrames;
};

// `history` holds every frame up to and including f (ids 0..f). The map graph
// gets all pairwise edges among device_map ∪ {f}.
DState build_dstate(std::span<const FrameRecord> history, const FrameSet& device_map, FrameId f,
                    std::size_t window_length, TraceMode mode);

struct SState {
  // Most recent action last.
  std::vector<std::uint8_t> actions;

  friend bool operator==(const SState&, const SState&) = default;
};

// Last `window` entries of `past_actions`, left-padded with zeros during warm-up.
SState build_sstate(std::span<const std::uint8_t> past_actions, std::size_t window);

// Inverted feature index over map frames for fast max-similarity queries.
class SimilarityIndex {
 public:
  void add(FrameId id, const FeatureSet& features);
  bool empty() const noexcept { return frames_.empty(); }
  std::size_t size() const noexcept { return frames_.size(); }

  // Largest Jaccard coefficient between `features` and any indexed frame (0 if none overlap).
  double max_similarity(const FeatureSet& features) const;

 private:
  struct Entry {
    FrameId id;
    std::size_t feature_count;
  };
  std::vector<Entry> frames_;
  std::unordered_map<FeatureId, std::vector<std::uint32_t>> postings_;
};

}  // namespace kfp
