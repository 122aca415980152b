#include "kfp/core_model.hpp"

#include <algorithm>
#include <iterator>
#include <string>

#include "kfp/errors.hpp"

namespace kfp {

FeatureSet make_feature_set(std::vector<FeatureId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

double jaccard_similarity(std::span<const FeatureId> a, std::span<const FeatureId> b) {
  std::size_t shared = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++shared;
      ++ia;
      ++ib;
    }
  }
  const std::size_t united = a.size() + b.size() - shared;
  if (united == 0) return 0.0;
  return static_cast<double>(shared) / static_cast<double>(united);
}

namespace {

std::optional<double> lookup_link(const FrameRecord& later, FrameId earlier) {
  auto it = std::lower_bound(later.links.begin(), later.links.end(), earlier,
                             [](const SimilarityLink& l, FrameId id) { return l.other < id; });
  if (it == later.links.end() || it->other != earlier) return std::nullopt;
  return it->weight;
}

}  // namespace

double frame_similarity(const FrameRecord& a, const FrameRecord& b, TraceMode mode) {
  if (mode == TraceMode::feature_sets) return jaccard_similarity(a.features, b.features);
  if (a.id == b.id) return 1.0;
  const FrameRecord& later = a.id > b.id ? a : b;
  const FrameRecord& earlier = a.id > b.id ? b : a;
  if (auto w = lookup_link(later, earlier.id)) return *w;
  throw InputError("missing similarity weight between frames " + std::to_string(earlier.id) +
                   " and " + std::to_string(later.id));
}

SlotWindow::SlotWindow(std::size_t index, std::span<const FrameRecord> frames,
                       std::size_t frames_per_slot)
    : index_(index), frames_(frames) {
  if (frames_per_slot == 0 || frames.size() != frames_per_slot) {
    throw ContractViolation("slot " + std::to_string(index) + " must hold exactly " +
                            std::to_string(frames_per_slot) + " frames");
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].id != index * frames_per_slot + i) {
      throw ContractViolation("slot " + std::to_string(index) + " frame ids are not contiguous");
    }
  }
}

std::size_t slot_key_count(const SlotWindow& slot) {
  return static_cast<std::size_t>(std::count_if(slot.frames().begin(), slot.frames().end(),
                                                [](const FrameRecord& f) { return f.is_key; }));
}

void FrameGraph::add_node(FrameId id) { nodes_.insert(id); }

void FrameGraph::set_weight(FrameId a, FrameId b, double weight) {
  if (a == b) throw ContractViolation("self edge on frame " + std::to_string(a));
  if (!contains(a) || !contains(b)) throw ContractViolation("edge endpoint is not a graph node");
  if (!(weight >= 0.0 && weight <= 1.0)) throw ContractViolation("edge weight outside [0,1]");
  weights_[key(a, b)] = weight;
}

std::optional<double> FrameGraph::weight(FrameId a, FrameId b) const {
  auto it = weights_.find(key(a, b));
  if (it == weights_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> FrameGraph::max_incident_weight(FrameId id) const {
  std::optional<double> best;
  for (const auto& [edge, w] : weights_) {
    if (edge.first == id || edge.second == id) {
      if (!best || w > *best) best = w;
    }
  }
  return best;
}

FrameGraph build_frame_graph(std::span<const FrameRecord> frames, TraceMode mode) {
  FrameGraph graph;
  for (const auto& f : frames) {
    if (mode == TraceMode::feature_sets && f.features.empty()) {
      throw InputError("frame " + std::to_string(f.id) + " has no feature points");
    }
    graph.add_node(f.id);
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t j = i + 1; j < frames.size(); ++j) {
      graph.set_weight(frames[i].id, frames[j].id, frame_similarity(frames[i], frames[j], mode));
    }
  }
  return graph;
}

MapState update_edge_map(MapState state, const FrameSet& uploaded, const FrameSet& culled) {
  for (FrameId id : culled) {
    if (!state.edge_map.count(id) && !uploaded.count(id)) {
      throw ContractViolation("culled frame " + std::to_string(id) +
                              " is neither in the edge map nor uploaded");
    }
  }
  state.edge_map.insert(uploaded.begin(), uploaded.end());
  for (FrameId id : culled) state.edge_map.erase(id);
  state.cull_set = culled;
  return state;
}

MapState update_device_map(MapState state, FrameId f, bool previous_action) {
  if (previous_action && f > 0) state.device_map.insert(f - 1);
  return state;
}

FrameSet cull_oldest(const FrameSet& edge_map, std::size_t capacity) {
  FrameSet culled;
  if (edge_map.size() <= capacity) return culled;
  auto it = edge_map.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(edge_map.size() - capacity));
  culled.insert(edge_map.begin(), it);
  return culled;
}

DState build_dstate(std::span<const FrameRecord> history, const FrameSet& device_map, FrameId f,
                    std::size_t window_length, TraceMode mode) {
  if (history.size() != f + 1) {
    throw ContractViolation("D-state history must contain frames 0..f");
  }
  DState state;
  state.frame = f;
  state.window_length = window_length;

  std::vector<FrameRecord> map_frames;
  for (FrameId id : device_map) {
    if (id >= f) throw ContractViolation("device map holds a frame not yet captured");
    map_frames.push_back(history[id]);
  }
  map_frames.push_back(history[f]);
  state.map_graph = build_frame_graph(map_frames, mode);

  const std::size_t start = f > window_length ? f - window_length : 0;
  state.window_graph = build_frame_graph(history.subspan(start, f - start), mode);
  return state;
}

SState build_sstate(std::span<const std::uint8_t> past_actions, std::size_t window) {
  SState s;
  s.actions.assign(window, 0);
  const std::size_t take = std::min(window, past_actions.size());
  std::copy(past_actions.end() - static_cast<std::ptrdiff_t>(take), past_actions.end(),
            s.actions.end() - static_cast<std::ptrdiff_t>(take));
  return s;
}

void SimilarityIndex::add(FrameId id, const FeatureSet& features) {
  const auto slot = static_cast<std::uint32_t>(frames_.size());
  frames_.push_back({id, features.size()});
  for (FeatureId fp : features) postings_[fp].push_back(slot);
}

double SimilarityIndex::max_similarity(const FeatureSet& features) const {
  if (frames_.empty()) return 0.0;
  std::vector<std::uint32_t> shared(frames_.size(), 0);
  for (FeatureId fp : features) {
    auto it = postings_.find(fp);
    if (it == postings_.end()) continue;
    for (std::uint32_t slot : it->second) ++shared[slot];
  }
  double best = 0.0;
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    if (shared[i] == 0) continue;
    const double united = static_cast<double>(features.size() + frames_[i].feature_count - shared[i]);
    best = std::max(best, shared[i] / united);
  }
  return best;
}

}  // namespace kfp
