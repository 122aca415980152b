#include "kfp/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <system_error>

#include "kfp/errors.hpp"

namespace kfp {

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::stable: return "stable";
    case Regime::walk: return "walk";
    case Regime::burst: return "burst";
  }
  throw ContractViolation("unknown regime");
}

Regime parse_regime(std::string_view name) {
  if (name == "stable") return Regime::stable;
  if (name == "walk") return Regime::walk;
  if (name == "burst") return Regime::burst;
  throw InputError("unknown regime '" + std::string(name) + "'");
}

std::size_t RegimeSchedule::total_slots() const {
  std::size_t total = 0;
  for (const auto& s : segments) total += s.duration_slots;
  return total;
}

std::vector<Regime> RegimeSchedule::per_slot() const {
  std::vector<Regime> out;
  out.reserve(total_slots());
  for (const auto& s : segments) out.insert(out.end(), s.duration_slots, s.regime);
  return out;
}

RegimeSchedule expand_schedule(const std::vector<RegimeSegment>& pattern, std::size_t slots, std::uint64_t seed) {
  RegimeSchedule schedule;
  schedule.seed = seed;
  if (slots == 0) return schedule;
  if (pattern.empty()) throw InputError("regime pattern is empty");
  for (const auto& s : pattern) {
    if (s.duration_slots == 0) throw InputError("regime segment durations must be positive");
  }
  std::size_t covered = 0;
  for (std::size_t i = 0; covered < slots; i = (i + 1) % pattern.size()) {
    RegimeSegment seg = pattern[i];
    seg.duration_slots = std::min(seg.duration_slots, slots - covered);
    covered += seg.duration_slots;
    schedule.segments.push_back(seg);
  }
  return schedule;
}

const StepLaw& WorldModel::law(Regime regime) const {
  switch (regime) {
    case Regime::stable: return stable;
    case Regime::walk: return walk;
    case Regime::burst: return burst;
  }
  throw ContractViolation("unknown regime");
}

void WorldModel::validate() const {
  if (fp_universe_size == 0 || view_width == 0) throw InputError("world sizes must be positive");
  if (view_width > fp_universe_size) throw InputError("view_width exceeds fp_universe_size");
  for (const StepLaw* law : {&stable, &walk, &burst}) {
    if (law->max_step < 0) throw InputError("step law max_step must be non-negative");
    if (!(law->pause_toggle_probability >= 0.0 && law->pause_toggle_probability <= 1.0)) {
      throw InputError("pause toggle probability outside [0,1]");
    }
    if (!(law->teleport_probability >= 0.0 && law->teleport_probability <= 1.0)) {
      throw InputError("teleport probability outside [0,1]");
    }
  }
}

SlotWindow Trace::slot(std::size_t index) const {
  if (index >= slot_count()) throw EndOfTrace("slot " + std::to_string(index) + " is past the end of the trace");
  return SlotWindow(index, std::span<const FrameRecord>(frames).subspan(index * frames_per_slot, frames_per_slot),
                    frames_per_slot);
}

std::vector<std::size_t> Trace::slot_key_counts() const {
  std::vector<std::size_t> out;
  out.reserve(slot_count());
  for (std::size_t t = 0; t < slot_count(); ++t) out.push_back(slot_key_count(slot(t)));
  return out;
}

Trace generate_trace(const WorldModel& world, const RegimeSchedule& schedule, const ReferencePolicy& policy,
                     std::size_t length_frames, std::size_t frames_per_slot, double frame_rate,
                     std::string device_id) {
  world.validate();
  if (length_frames == 0 || schedule.total_slots() == 0) throw InputError("cannot generate an empty trace");
  if (frames_per_slot == 0 || length_frames % frames_per_slot != 0) {
    throw InputError("trace length must be a multiple of the frames per slot");
  }
  if (schedule.total_slots() != length_frames / frames_per_slot) {
    throw InputError("regime schedule covers " + std::to_string(schedule.total_slots()) + " slots, trace needs " +
                     std::to_string(length_frames / frames_per_slot));
  }

  Trace trace;
  trace.device_id = std::move(device_id);
  trace.frame_rate = frame_rate;
  trace.mode = TraceMode::feature_sets;
  trace.frames_per_slot = frames_per_slot;
  trace.frames.reserve(length_frames);

  const auto universe = static_cast<std::int64_t>(world.fp_universe_size);
  const auto width = static_cast<std::int64_t>(world.view_width);
  std::mt19937_64 rng(schedule.seed);
  std::uniform_int_distribution<std::int64_t> anywhere(0, universe - 1);
  std::int64_t position = anywhere(rng);

  const std::vector<Regime> regimes = schedule.per_slot();
  FrameObserver observer(policy, TraceMode::feature_sets, ObserverSettings{frames_per_slot});

  bool paused = false;
  for (std::size_t f = 0; f < length_frames; ++f) {
    const std::size_t t = f / frames_per_slot;
    const StepLaw& law = world.law(regimes[t]);
    if (f % frames_per_slot == 0) {
      if (t == 0 || regimes[t] != regimes[t - 1]) {
        paused = false;
      } else if (law.pause_toggle_probability > 0.0 && std::bernoulli_distribution(law.pause_toggle_probability)(rng)) {
        paused = !paused;
      }
    }
    if (f > 0 && !paused) {
      if (law.teleport_probability > 0.0 && std::bernoulli_distribution(law.teleport_probability)(rng)) {
        position = anywhere(rng);
      } else {
        std::uniform_int_distribution<std::int64_t> step(-law.max_step, law.max_step);
        position = ((position + step(rng)) % universe + universe) % universe;
      }
    }
    std::vector<FeatureId> visible;
    visible.reserve(static_cast<std::size_t>(width));
    for (std::int64_t i = 0; i < width; ++i) {
      visible.push_back(static_cast<FeatureId>(((position - width / 2 + i) % universe + universe) % universe));
    }
    FrameRecord record;
    record.id = f;
    record.features = make_feature_set(std::move(visible));
    observer.label(record);
    trace.frames.push_back(std::move(record));
  }
  return trace;
}

std::string to_string(TraceMode mode) {
  return mode == TraceMode::feature_sets ? "feature-sets" : "similarity-only";
}

TraceMode parse_trace_mode(std::string_view name) {
  if (name == "feature-sets") return TraceMode::feature_sets;
  if (name == "similarity-only") return TraceMode::similarity_only;
  throw InputError("unknown trace mode '" + std::string(name) + "'");
}

namespace {

void append_double(std::string& out, double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw ContractViolation("cannot format number");
  out.append(buf, end);
}

template <class T>
void append_integer(std::string& out, T value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, end);
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

template <class T>
T parse_number(std::string_view text, std::size_t line, const char* what) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc{} || ptr != last) {
    throw ParseError(line, std::string("malformed ") + what + " '" + std::string(text) + "'");
  }
  return value;
}

std::string_view expect_field(std::string_view field, std::string_view key, std::size_t line) {
  if (field.substr(0, key.size()) != key || field.size() <= key.size() || field[key.size()] != '=') {
    throw ParseError(line, "expected header field '" + std::string(key) + "='");
  }
  return field.substr(key.size() + 1);
}

void check_device_id(const std::string& id) {
  if (id.empty() || id.find_first_of("\t\n\r") != std::string::npos) {
    throw ContractViolation("device id must be non-empty and free of tabs and line breaks");
  }
}

}  // namespace

void write_trace(const Trace& trace, std::ostream& out) { out << write_trace(trace); }

std::string write_trace(const Trace& trace) {
  check_device_id(trace.device_id);
  std::string doc;
  doc += "kftrace\tdevice=";
  doc += trace.device_id;
  doc += "\tframe_rate=";
  append_double(doc, trace.frame_rate);
  doc += "\tmode=";
  doc += to_string(trace.mode);
  doc += "\tF=";
  append_integer(doc, trace.frames_per_slot);
  doc += '\n';
  for (const auto& f : trace.frames) {
    append_integer(doc, f.id);
    doc += f.is_key ? "\t1\t" : "\t0\t";
    bool first = true;
    if (trace.mode == TraceMode::feature_sets) {
      for (FeatureId fp : f.features) {
        if (!first) doc += ',';
        append_integer(doc, fp);
        first = false;
      }
    } else {
      for (const auto& link : f.links) {
        if (!first) doc += ',';
        append_integer(doc, link.other);
        doc += ':';
        append_double(doc, link.weight);
        first = false;
      }
    }
    doc += '\n';
  }
  return doc;
}

void write_trace_file(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << write_trace(trace);
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

Trace read_trace(std::string_view document) {
  Trace trace;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;

  while (pos < document.size()) {
    std::size_t end = document.find('\n', pos);
    if (end == std::string_view::npos) end = document.size();
    const std::string_view line = document.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    const auto fields = split(line, '\t');
    if (!have_header) {
      if (fields.size() != 5 || fields[0] != "kftrace") throw ParseError(line_no, "missing kftrace header");
      trace.device_id = std::string(expect_field(fields[1], "device", line_no));
      if (trace.device_id.empty() || trace.device_id.find('\r') != std::string::npos) {
        throw ParseError(line_no, "invalid device id");
      }
      trace.frame_rate = parse_number<double>(expect_field(fields[2], "frame_rate", line_no), line_no, "frame rate");
      if (!(trace.frame_rate > 0.0)) throw ParseError(line_no, "frame rate must be positive");
      const std::string_view mode = expect_field(fields[3], "mode", line_no);
      if (mode == "feature-sets") {
        trace.mode = TraceMode::feature_sets;
      } else if (mode == "similarity-only") {
        trace.mode = TraceMode::similarity_only;
      } else {
        throw ParseError(line_no, "unknown mode '" + std::string(mode) + "'");
      }
      trace.frames_per_slot = parse_number<std::size_t>(expect_field(fields[4], "F", line_no), line_no, "F");
      if (trace.frames_per_slot == 0) throw ParseError(line_no, "F must be positive");
      have_header = true;
      continue;
    }

    if (fields.size() != 3) throw ParseError(line_no, "expected 3 tab-separated fields");
    FrameRecord record;
    record.id = parse_number<FrameId>(fields[0], line_no, "frame id");
    const FrameId expected = trace.frames.size();
    if (!trace.frames.empty() && record.id == trace.frames.back().id) {
      throw ParseError(line_no, "duplicate frame id " + std::to_string(record.id));
    }
    if (record.id < expected) throw ParseError(line_no, "frame ids are not increasing");
    if (record.id != expected) {
      throw ParseError(line_no, "gap in frame ids: expected " + std::to_string(expected) + ", found " +
                                    std::to_string(record.id));
    }
    if (fields[1] == "1") {
      record.is_key = true;
    } else if (fields[1] != "0") {
      throw ParseError(line_no, "key flag must be 0 or 1");
    }

    if (trace.mode == TraceMode::feature_sets) {
      if (fields[2].empty()) throw ParseError(line_no, "feature-sets frame without feature points");
      for (std::string_view item : split(fields[2], ',')) {
        const auto fp = parse_number<FeatureId>(item, line_no, "feature id");
        if (!record.features.empty() && fp <= record.features.back()) {
          throw ParseError(line_no, "feature ids must be strictly increasing");
        }
        record.features.push_back(fp);
      }
    } else if (!fields[2].empty()) {
      for (std::string_view item : split(fields[2], ',')) {
        const std::size_t colon = item.find(':');
        if (colon == std::string_view::npos) throw ParseError(line_no, "similarity entry needs id:weight");
        SimilarityLink link;
        link.other = parse_number<FrameId>(item.substr(0, colon), line_no, "frame reference");
        link.weight = parse_number<double>(item.substr(colon + 1), line_no, "similarity weight");
        if (link.other >= record.id) throw ParseError(line_no, "similarity must reference an earlier frame");
        if (!record.links.empty() && link.other <= record.links.back().other) {
          throw ParseError(line_no, "similarity references must be strictly increasing");
        }
        if (!(link.weight >= 0.0 && link.weight <= 1.0)) throw ParseError(line_no, "similarity outside [0,1]");
        record.links.push_back(link);
      }
    }
    trace.frames.push_back(std::move(record));
  }
  if (!have_header) throw ParseError(1, "missing kftrace header");
  return trace;
}

Trace read_trace(std::istream& in) {
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return read_trace(std::string_view(buffer.str()));
}

Trace read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open trace file '" + path.string() + "'");
  return read_trace(in);
}

}  // namespace kfp
