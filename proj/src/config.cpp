#include "kfp/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kfp/errors.hpp"

namespace kfp {

using json = nlohmann::ordered_json;

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::slam: return "slam";
    case SourceKind::bernoulli: return "bernoulli";
    case SourceKind::files: return "files";
  }
  throw ContractViolation("unknown source kind");
}

std::string_view to_string(ForecastKind kind) {
  switch (kind) {
    case ForecastKind::model: return "model";
    case ForecastKind::oracle: return "oracle";
    case ForecastKind::channel: return "channel";
  }
  throw ContractViolation("unknown forecast kind");
}

namespace {

SourceKind parse_source_kind(std::string_view s) {
  if (s == "slam") return SourceKind::slam;
  if (s == "bernoulli") return SourceKind::bernoulli;
  if (s == "files") return SourceKind::files;
  throw InputError("unknown source kind '" + std::string(s) + "'");
}

ForecastKind parse_forecast_kind(std::string_view s) {
  if (s == "model") return ForecastKind::model;
  if (s == "oracle") return ForecastKind::oracle;
  if (s == "channel") return ForecastKind::channel;
  throw InputError("unknown forecast kind '" + std::string(s) + "'");
}

LogBase parse_log_base(std::string_view s) {
  if (s == "2") return LogBase::two;
  if (s == "e") return LogBase::natural;
  throw InputError("log base must be \"2\" or \"e\"");
}

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw InputError("config key '" + key + "': " + what);
}

// Walks one JSON object, converting the keys it is asked for and rejecting the rest.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) bad(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const char* key) const { return node_.contains(key); }

  void get(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) bad(join(path_, key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
        bad(join(path_, key), "expected a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, std::uint64_t& out, int) {
    std::size_t tmp = out;
    get(key, tmp);
    out = tmp;
  }
  void get(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) bad(join(path_, key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) bad(join(path_, key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) bad(join(path_, key), "expected a string");
      out = v->get<std::string>();
    }
  }
  template <class Enum, class Parse>
  void get_enum(const char* key, Enum& out, Parse parse) {
    if (const json* v = take(key)) {
      if (!v->is_string()) bad(join(path_, key), "expected a string");
      try {
        out = parse(v->get<std::string>());
      } catch (const InputError& e) {
        bad(join(path_, key), e.what());
      }
    }
  }

  const json* take(const char* key) {
    auto it = node_.find(key);
    if (it == node_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string path(std::string_view key) const { return join(path_, key); }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!used_.count(item.key())) throw InputError("unknown config key '" + join(path_, item.key()) + "'");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

template <class Fn>
void with_object(Reader& parent, const char* key, Fn fn) {
  if (const json* v = parent.take(key)) {
    Reader child(*v, parent.path(key));
    fn(child);
    child.finish();
  }
}

json step_to_json(const StepLaw& law) {
  return json{{"max_step", law.max_step}, {"teleport_probability", law.teleport_probability},
              {"pause_toggle_probability", law.pause_toggle_probability}};
}

void read_step(Reader& r, StepLaw& law) {
  r.get("max_step", law.max_step);
  r.get("teleport_probability", law.teleport_probability);
  r.get("pause_toggle_probability", law.pause_toggle_probability);
}

std::string log_base_name(LogBase b) { return b == LogBase::two ? "2" : "e"; }

}  // namespace

double ExperimentConfig::snr_db_for(std::size_t device) const {
  return device_snr_db.empty() ? radio.snr_db : device_snr_db.at(device);
}

void ExperimentConfig::validate() const {
  auto wrap = [](const char* key, auto&& fn) {
    try {
      fn();
    } catch (const InputError& e) {
      bad(key, e.what());
    }
  };
  if (devices == 0) bad("devices", "must be positive");
  if (slots == 0) bad("slots", "must be positive");
  wrap("radio", [&] { radio.validate(); });
  if (!device_snr_db.empty() && device_snr_db.size() != devices) {
    bad("device_snr_db", "needs one entry per device");
  }
  for (double s : device_snr_db) {
    if (!std::isfinite(s)) bad("device_snr_db", "entries must be finite");
  }
  wrap("policy", [&] { policy.validate(); });
  if (edge_map_capacity == 0) bad("policy.edge_map_capacity", "must be positive");
  if (!PredictorRegistry::instance().has_detailed(predictor.detailed)) {
    bad("predictor.detailed", "no detailed predictor named '" + predictor.detailed + "'");
  }
  if (!PredictorRegistry::instance().has_simplified(predictor.simplified)) {
    bad("predictor.simplified", "no simplified predictor named '" + predictor.simplified + "'");
  }
  if (predictor.action_window == 0 || predictor.action_window > 32) {
    bad("predictor.action_window", "must lie in [1,32]");
  }
  if (predictor.window_frames < 2) bad("predictor.window_frames", "must be at least 2");
  if (predictor.calibration_frames < 2 || predictor.calibration_frames > predictor.window_frames) {
    bad("predictor.calibration_frames", "must lie in [2, predictor.window_frames]");
  }
  if (predictor.min_support == 0) bad("predictor.min_support", "must be positive");
  auto prob = [](const char* key, double v) {
    if (!(v >= 0.0 && v <= 1.0)) bad(key, "must lie in [0,1]");
  };
  prob("forecast.channel_p", forecast.channel_p);
  prob("forecast.channel_q", forecast.channel_q);
  prob("forecast.noise.stable", forecast.noise.stable);
  prob("forecast.noise.walk", forecast.noise.walk);
  prob("forecast.noise.burst", forecast.noise.burst);
  wrap("switching", [&] { switching.validate(); });
  if (estimation.tau == 0) bad("estimation.tau", "must be positive");
  wrap("estimation.prior", [&] { estimation.prior.validate(); });
  if (slicing.tau == 0) bad("slicing.tau", "must be positive");
  if (!(source.frame_rate > 0.0)) bad("source.frame_rate", "must be positive");
  wrap("source.world", [&] { source.world.validate(); });
  if (source.kind == SourceKind::slam && source.schedule.empty()) bad("source.schedule", "must not be empty");
  for (const auto& seg : source.schedule) {
    if (seg.duration_slots == 0) bad("source.schedule", "segment durations must be positive");
  }
  prob("source.lambda_min", source.lambda_min);
  prob("source.lambda_max", source.lambda_max);
  if (source.lambda_min > source.lambda_max) bad("source.lambda_min", "must not exceed source.lambda_max");
  if (source.kind == SourceKind::files) {
    if (source.trace_paths.size() != devices) bad("source.trace_paths", "needs one trace per device");
    for (const auto& p : source.trace_paths) {
      if (!std::filesystem::exists(p)) bad("source.trace_paths", "trace file '" + p + "' does not exist");
    }
  }
  if (source.kind == SourceKind::bernoulli && forecast.kind == ForecastKind::model) {
    bad("forecast.kind", "the bernoulli source carries no frame content; use 'channel' or 'oracle'");
  }
}

std::string config_to_json(const ExperimentConfig& c) {
  json schedule = json::array();
  for (const auto& seg : c.source.schedule) {
    schedule.push_back(json{{"regime", std::string(to_string(seg.regime))}, {"slots", seg.duration_slots}});
  }
  json doc = {
      {"seed", c.seed},
      {"devices", c.devices},
      {"slots", c.slots},
      {"output_dir", c.output_dir},
      {"radio",
       {{"frames_per_slot", c.radio.frames_per_slot},
        {"alpha_bits", c.radio.alpha_bits},
        {"upload_window_s", c.radio.upload_window_s},
        {"snr_db", c.radio.snr_db},
        {"epsilon", c.radio.epsilon},
        {"rb_bandwidth_hz", c.radio.rb_bandwidth_hz},
        {"rb_duration_s", c.radio.rb_duration_s},
        {"log_base", log_base_name(c.radio.log_base)}}},
      {"device_snr_db", c.device_snr_db},
      {"policy",
       {{"theta_high", c.policy.theta_high},
        {"theta_low", c.policy.theta_low},
        {"burst_len", c.policy.burst_len},
        {"edge_map_capacity", c.edge_map_capacity}}},
      {"predictor",
       {{"detailed", c.predictor.detailed},
        {"simplified", c.predictor.simplified},
        {"window_frames", c.predictor.window_frames},
        {"calibration_frames", c.predictor.calibration_frames},
        {"action_window", c.predictor.action_window},
        {"min_support", c.predictor.min_support}}},
      {"forecast",
       {{"kind", std::string(to_string(c.forecast.kind))},
        {"channel_p", c.forecast.channel_p},
        {"channel_q", c.forecast.channel_q},
        {"noise", {{"stable", c.forecast.noise.stable}, {"walk", c.forecast.noise.walk}, {"burst", c.forecast.noise.burst}}}}},
      {"switching", {{"upper", c.switching.upper}, {"lower", c.switching.lower}, {"trigger", c.switching.trigger}}},
      {"estimation",
       {{"mode", std::string(to_string(c.estimation.mode))},
        {"tau", c.estimation.tau},
        {"prior", {{"p", c.estimation.prior.p}, {"q", c.estimation.prior.q}, {"lambda", c.estimation.prior.lambda}}}}},
      {"slicing",
       {{"enabled", c.slicing.enabled}, {"mode", std::string(to_string(c.slicing.mode))}, {"tau", c.slicing.tau}}},
      {"source",
       {{"kind", std::string(to_string(c.source.kind))},
        {"frame_rate", c.source.frame_rate},
        {"world",
         {{"fp_universe_size", c.source.world.fp_universe_size},
          {"view_width", c.source.world.view_width},
          {"steps",
           {{"stable", step_to_json(c.source.world.stable)},
            {"walk", step_to_json(c.source.world.walk)},
            {"burst", step_to_json(c.source.world.burst)}}}}},
        {"schedule", schedule},
        {"trace_paths", c.source.trace_paths},
        {"lambda_min", c.source.lambda_min},
        {"lambda_max", c.source.lambda_max}}},
  };
  return doc.dump(2) + "\n";
}

ExperimentConfig config_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader root(doc, "");
  root.get("seed", c.seed, 0);
  root.get("devices", c.devices);
  root.get("slots", c.slots);
  root.get("output_dir", c.output_dir);
  with_object(root, "radio", [&](Reader& r) {
    r.get("frames_per_slot", c.radio.frames_per_slot);
    r.get("alpha_bits", c.radio.alpha_bits);
    r.get("upload_window_s", c.radio.upload_window_s);
    r.get("snr_db", c.radio.snr_db);
    r.get("epsilon", c.radio.epsilon);
    r.get("rb_bandwidth_hz", c.radio.rb_bandwidth_hz);
    r.get("rb_duration_s", c.radio.rb_duration_s);
    r.get_enum("log_base", c.radio.log_base, parse_log_base);
  });
  if (const json* v = root.take("device_snr_db")) {
    if (!v->is_array()) bad("device_snr_db", "expected an array of numbers");
    c.device_snr_db.clear();
    for (const auto& x : *v) {
      if (!x.is_number()) bad("device_snr_db", "expected an array of numbers");
      c.device_snr_db.push_back(x.get<double>());
    }
  }
  with_object(root, "policy", [&](Reader& r) {
    r.get("theta_high", c.policy.theta_high);
    r.get("theta_low", c.policy.theta_low);
    r.get("burst_len", c.policy.burst_len);
    r.get("edge_map_capacity", c.edge_map_capacity);
  });
  with_object(root, "predictor", [&](Reader& r) {
    r.get("detailed", c.predictor.detailed);
    r.get("simplified", c.predictor.simplified);
    r.get("window_frames", c.predictor.window_frames);
    r.get("calibration_frames", c.predictor.calibration_frames);
    r.get("action_window", c.predictor.action_window);
    r.get("min_support", c.predictor.min_support);
  });
  with_object(root, "forecast", [&](Reader& r) {
    r.get_enum("kind", c.forecast.kind, parse_forecast_kind);
    r.get("channel_p", c.forecast.channel_p);
    r.get("channel_q", c.forecast.channel_q);
    with_object(r, "noise", [&](Reader& n) {
      n.get("stable", c.forecast.noise.stable);
      n.get("walk", c.forecast.noise.walk);
      n.get("burst", c.forecast.noise.burst);
    });
  });
  with_object(root, "switching", [&](Reader& r) {
    r.get("upper", c.switching.upper);
    r.get("lower", c.switching.lower);
    r.get("trigger", c.switching.trigger);
  });
  with_object(root, "estimation", [&](Reader& r) {
    r.get_enum("mode", c.estimation.mode, parse_estimation_mode);
    r.get("tau", c.estimation.tau);
    with_object(r, "prior", [&](Reader& p) {
      p.get("p", c.estimation.prior.p);
      p.get("q", c.estimation.prior.q);
      p.get("lambda", c.estimation.prior.lambda);
    });
  });
  with_object(root, "slicing", [&](Reader& r) {
    r.get("enabled", c.slicing.enabled);
    r.get_enum("mode", c.slicing.mode, parse_slicing_mode);
    r.get("tau", c.slicing.tau);
  });
  with_object(root, "source", [&](Reader& r) {
    r.get_enum("kind", c.source.kind, parse_source_kind);
    r.get("frame_rate", c.source.frame_rate);
    with_object(r, "world", [&](Reader& w) {
      w.get("fp_universe_size", c.source.world.fp_universe_size, 0);
      w.get("view_width", c.source.world.view_width, 0);
      with_object(w, "steps", [&](Reader& s) {
        with_object(s, "stable", [&](Reader& l) { read_step(l, c.source.world.stable); });
        with_object(s, "walk", [&](Reader& l) { read_step(l, c.source.world.walk); });
        with_object(s, "burst", [&](Reader& l) { read_step(l, c.source.world.burst); });
      });
    });
    if (const json* v = r.take("schedule")) {
      const std::string key = r.path("schedule");
      if (!v->is_array()) bad(key, "expected an array of segments");
      c.source.schedule.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        Reader seg((*v)[i], key + "[" + std::to_string(i) + "]");
        RegimeSegment s;
        seg.get_enum("regime", s.regime, parse_regime);
        seg.get("slots", s.duration_slots);
        seg.finish();
        c.source.schedule.push_back(s);
      }
    }
    if (const json* v = r.take("trace_paths")) {
      if (!v->is_array()) bad(r.path("trace_paths"), "expected an array of paths");
      c.source.trace_paths.clear();
      for (const auto& x : *v) {
        if (!x.is_string()) bad(r.path("trace_paths"), "expected an array of paths");
        c.source.trace_paths.push_back(x.get<std::string>());
      }
    }
    r.get("lambda_min", c.source.lambda_min);
    r.get("lambda_max", c.source.lambda_max);
  });
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str());
}

std::string set_config_value(std::string_view text, std::string_view dotted_path, std::string_view value) {
  json doc = json::parse(text.begin(), text.end());
  json parsed;
  try {
    parsed = json::parse(value.begin(), value.end());
  } catch (const json::parse_error&) {
    parsed = std::string(value);
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_path.find('.', start);
    const std::string key(dotted_path.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
    if (key.empty() || !node->is_object() || !node->contains(key)) {
      throw InputError("unknown config key '" + std::string(dotted_path) + "'");
    }
    node = &(*node)[key];
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  *node = parsed;
  return doc.dump(2) + "\n";
}

}  // namespace kfp
