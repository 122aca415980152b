#include "kfp/simulator.hpp"

#include <algorithm>
#include <future>
#include <ostream>
#include <random>

#include <json.hpp>

#include "kfp/errors.hpp"

namespace kfp {

namespace {

constexpr std::uint64_t kStreamWorld = 1;
constexpr std::uint64_t kStreamTruth = 2;
constexpr std::uint64_t kStreamChannel = 3;
constexpr std::uint64_t kStreamNoise = 4;

std::size_t count_ones(const std::vector<std::uint8_t>& v) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](std::uint8_t x) { return x != 0; }));
}

std::vector<std::uint8_t> slot_actions(const Trace& trace, std::size_t slot) {
  std::vector<std::uint8_t> out;
  for (const auto& f : trace.slot(slot).frames()) out.push_back(f.is_key ? 1 : 0);
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::size_t device, std::uint64_t stream, std::uint64_t slot) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(device), static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(slot >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

DualModelForecaster::DualModelForecaster(const Trace& trace, ReferencePolicy policy, PredictorSettings settings)
    : trace_(trace), model_(policy, trace.mode, trace.frames_per_slot, std::move(settings)) {}

PredictionVector DualModelForecaster::forecast(ModelTag tag, std::size_t slot) { return model_.predict_slot(tag, slot); }

void DualModelForecaster::observe_slot(std::size_t slot) { model_.observe_slot(trace_.slot(slot).frames()); }

PredictionVector GroundTruthForecaster::forecast(ModelTag tag, std::size_t slot) {
  return PredictionVector{slot, slot_actions(trace_, slot), tag};
}

ChannelForecaster::ChannelForecaster(const Trace& trace, double p, double q, std::uint64_t seed, std::size_t device)
    : trace_(trace), p_(p), q_(q), seed_(seed), device_(device) {}

PredictionVector ChannelForecaster::forecast(ModelTag tag, std::size_t slot) {
  std::mt19937_64 rng(derive_seed(seed_, device_, kStreamChannel, slot));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PredictionVector pv{slot, slot_actions(trace_, slot), tag};
  for (auto& v : pv.values) {
    const double draw = u(rng);
    v = v ? (draw < p_ ? 1 : 0) : (draw < q_ ? 0 : 1);
  }
  return pv;
}

NoisyForecaster::NoisyForecaster(std::unique_ptr<Forecaster> inner, std::vector<double> flip_probability,
                                 std::uint64_t seed, std::size_t device)
    : inner_(std::move(inner)), flip_(std::move(flip_probability)), seed_(seed), device_(device) {}

PredictionVector NoisyForecaster::forecast(ModelTag tag, std::size_t slot) {
  PredictionVector pv = inner_->forecast(tag, slot);
  const double flip = slot < flip_.size() ? flip_[slot] : 0.0;
  std::mt19937_64 rng(derive_seed(seed_, device_, kStreamNoise, slot));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : pv.values) {
    if (u(rng) < flip) v = v ? 0 : 1;
  }
  return pv;
}

DeviceRun::DeviceRun(const DeviceInput& input, std::unique_ptr<Forecaster> forecaster, DeviceSettings settings)
    : input_(input), forecaster_(std::move(forecaster)), settings_(std::move(settings)) {
  settings_.radio.validate();
  settings_.switching.validate();
  if (input_.trace.frames_per_slot != settings_.radio.frames_per_slot) {
    throw InputError("trace '" + input_.trace.device_id + "' has " + std::to_string(input_.trace.frames_per_slot) +
                     " frames per slot, radio config expects " + std::to_string(settings_.radio.frames_per_slot));
  }
  if (input_.snr_db.size() < input_.trace.slot_count()) throw ContractViolation("missing per-slot SNR values");
  switch_.thresholds = settings_.switching;
  params_.detailed = params_.simplified = settings_.estimation.prior;
}

const ProvisionDecision& DeviceRun::run_slot(std::size_t t) {
  if (t != decisions_.size()) throw ContractViolation("slots must be simulated in order");
  if (t >= input_.trace.slot_count()) throw EndOfTrace("trace '" + input_.trace.device_id + "' exhausted");
  const RadioConfig& radio = settings_.radio;

  switch_ = msf_step(switch_, delta(switch_));
  const ModelTag tag = switch_.h == 1 ? ModelTag::detailed : ModelTag::simplified;

  PredictionVector prediction = forecaster_->forecast(tag, t);
  if (prediction.values.size() != radio.frames_per_slot) throw ContractViolation("prediction has the wrong length");

  ProvisionDecision d;
  d.slot_index = t;
  d.mode = ProvisionMode::user_centric;
  d.model_tag = tag;
  d.a_hat = prediction.predicted_key_count();
  const ChannelParams& c =
      settings_.estimation.mode == EstimationMode::fixed ? settings_.estimation.prior : params_.get(tag);
  d.k_star = k_star(d.a_hat, radio.frames_per_slot, c, radio.epsilon);
  const double snr = input_.snr_db[t];
  const Bandwidth reserved = bandwidth_for_k(d.k_star, radio, snr);
  d.bandwidth_hz = reserved.hz;
  d.rb_count = reserved.rbs;

  SlotOutcome outcome{tag, slot_actions(input_.trace, t), std::move(prediction.values)};
  d.k_true = count_ones(outcome.actual);
  d.timely = d.k_true <= d.k_star;
  d.rb_required = bandwidth_for_k(d.k_true, radio, snr).rbs;

  forecaster_->observe_slot(t);
  switch_ = record_count(switch_, d.k_true);

  const std::size_t tau = settings_.estimation.tau;
  auto push = [tau](std::deque<SlotOutcome>& q, const SlotOutcome& o) {
    q.push_back(o);
    while (q.size() > tau) q.pop_front();
  };
  push(recent_all_, outcome);
  push(tag == ModelTag::detailed ? recent_detailed_ : recent_simplified_, outcome);
  update_estimates(tag);

  decisions_.push_back(d);
  return decisions_.back();
}

void DeviceRun::update_estimates(ModelTag used) {
  switch (settings_.estimation.mode) {
    case EstimationMode::fixed:
      return;
    case EstimationMode::coarse: {
      const std::vector<SlotOutcome> window(recent_all_.begin(), recent_all_.end());
      params_.detailed = params_.simplified = estimate_channel(window);
      return;
    }
    case EstimationMode::fine: {
      const auto& recent = used == ModelTag::detailed ? recent_detailed_ : recent_simplified_;
      const std::vector<SlotOutcome> window(recent.begin(), recent.end());
      params_.get(used) = estimate_channel(window);
      return;
    }
  }
}

const ProvisionDecision& run_slot(DeviceRun& device, std::size_t t) { return device.run_slot(t); }

double aggregate_bandwidth(std::span<const ProvisionDecision> decisions) {
  double total = 0.0;
  for (const auto& d : decisions) total += d.bandwidth_hz;
  return total;
}

std::vector<std::vector<ProvisionDecision>> run_slicing(std::span<const DeviceInput> devices, const RadioConfig& radio,
                                                        const SlicingConfig& slicing, double prior_lambda) {
  if (devices.empty()) throw ContractViolation("slicing needs at least one device");
  const std::size_t slots = devices.front().trace.slot_count();
  for (const auto& d : devices) {
    if (d.trace.slot_count() != slots) throw InputError("all traces must cover the same number of slots");
    if (d.trace.frames_per_slot != radio.frames_per_slot) throw InputError("trace frames per slot differ from config");
  }
  const std::size_t n = devices.size();
  const double frames = static_cast<double>(radio.frames_per_slot);

  std::vector<std::vector<std::size_t>> counts(n);
  for (std::size_t i = 0; i < n; ++i) counts[i] = devices[i].trace.slot_key_counts();

  std::vector<std::vector<ProvisionDecision>> logs(n);
  std::vector<std::size_t> pooled;
  for (std::size_t t = 0; t < slots; ++t) {
    double mean = frames * prior_lambda;
    double variance = frames * prior_lambda * (1.0 - prior_lambda);
    if (t > 0) {
      pooled.clear();
      for (std::size_t s = t > slicing.tau ? t - slicing.tau : 0; s < t; ++s) {
        for (std::size_t i = 0; i < n; ++i) pooled.push_back(counts[i][s]);
      }
      const PopulationMoments m = estimate_population_moments(pooled);
      mean = m.mean;
      variance = m.variance;
    }
    double snr_sum = 0.0;
    for (const auto& d : devices) snr_sum += d.snr_db[t];
    const double mean_snr = snr_sum / static_cast<double>(n);
    const SlicingReservation s = slicing_bandwidth(mean, variance, n, radio.epsilon, radio, slicing.mode, mean_snr);

    for (std::size_t i = 0; i < n; ++i) {
      ProvisionDecision d;
      d.slot_index = t;
      d.mode = ProvisionMode::slicing;
      d.k_star = s.per_device_k;
      d.bandwidth_hz = s.per_device_hz;
      d.rb_count = s.per_device_rbs;
      d.k_true = counts[i][t];
      d.rb_required = bandwidth_for_k(d.k_true, radio, devices[i].snr_db[t]).rbs;
      d.timely = bandwidth_covers(d.k_true, s.per_device_hz, radio, devices[i].snr_db[t]);
      logs[i].push_back(d);
    }
  }
  return logs;
}

DeviceMetrics compute_device_metrics(std::span<const ProvisionDecision> log) {
  DeviceMetrics m;
  std::size_t detailed = 0;
  for (const auto& d : log) {
    const std::int64_t over = std::max<std::int64_t>(0, d.rb_count - d.rb_required);
    const std::int64_t under = std::max<std::int64_t>(0, d.rb_required - d.rb_count);
    if (d.rb_count != d.rb_required + over - under) throw ContractViolation("RB accounting identity violated");
    m.provisioned_rbs += d.rb_count;
    m.required_rbs += d.rb_required;
    m.over_provisioned_rbs += over;
    m.under_provisioned_rbs += under;
    m.key_frames += d.k_true;
    if (d.timely) m.timely_key_frames += d.k_true;
    if (d.mode == ProvisionMode::user_centric && d.model_tag == ModelTag::detailed) ++detailed;
  }
  m.slots = log.size();
  m.tukf = m.key_frames == 0 ? 1.0 : static_cast<double>(m.timely_key_frames) / static_cast<double>(m.key_frames);
  if (m.required_rbs > 0) {
    m.rp_ratio = static_cast<double>(m.provisioned_rbs) / static_cast<double>(m.required_rbs);
  } else if (m.provisioned_rbs == 0) {
    m.rp_ratio = 1.0;
  }
  if (m.slots > 0) {
    m.mean_rbs = static_cast<double>(m.provisioned_rbs) / static_cast<double>(m.slots);
    m.detailed_share = static_cast<double>(detailed) / static_cast<double>(m.slots);
  }
  return m;
}

MetricsReport compute_metrics(const std::vector<std::vector<ProvisionDecision>>& logs) {
  MetricsReport r;
  std::vector<ProvisionDecision> all;
  for (const auto& log : logs) {
    r.per_device.push_back(compute_device_metrics(log));
    all.insert(all.end(), log.begin(), log.end());
  }
  r.total = compute_device_metrics(all);
  for (const auto& d : r.per_device) r.min_device_tukf = std::min(r.min_device_tukf, d.tukf);
  return r;
}

namespace {

DeviceInput make_slam_input(const ExperimentConfig& c, std::size_t device) {
  DeviceInput in;
  const RegimeSchedule schedule =
      expand_schedule(c.source.schedule, c.slots, derive_seed(c.seed, device, kStreamWorld));
  in.trace = generate_trace(c.source.world, schedule, c.policy, c.slots * c.radio.frames_per_slot,
                            c.radio.frames_per_slot, c.source.frame_rate, "device-" + std::to_string(device));
  in.regimes = schedule.per_slot();
  return in;
}

DeviceInput make_bernoulli_input(const ExperimentConfig& c, std::size_t device) {
  DeviceInput in;
  const double span = c.source.lambda_max - c.source.lambda_min;
  in.lambda = c.devices > 1 ? c.source.lambda_min + span * static_cast<double>(device) / static_cast<double>(c.devices - 1)
                            : c.source.lambda_min;
  in.trace.device_id = "device-" + std::to_string(device);
  in.trace.frame_rate = c.source.frame_rate;
  in.trace.mode = TraceMode::similarity_only;
  in.trace.frames_per_slot = c.radio.frames_per_slot;
  std::mt19937_64 rng(derive_seed(c.seed, device, kStreamTruth));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t frames = c.slots * c.radio.frames_per_slot;
  in.trace.frames.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    FrameRecord r;
    r.id = f;
    r.is_key = u(rng) < in.lambda;
    in.trace.frames.push_back(std::move(r));
  }
  in.regimes.assign(c.slots, Regime::stable);
  return in;
}

DeviceInput make_file_input(const ExperimentConfig& c, std::size_t device) {
  const std::string& path = c.source.trace_paths.at(device);
  DeviceInput in;
  try {
    in.trace = read_trace_file(path);
  } catch (const InputError& e) {
    throw InputError("trace '" + path + "': " + e.what());
  }
  if (in.trace.frames_per_slot != c.radio.frames_per_slot) {
    throw InputError("trace '" + path + "' has F=" + std::to_string(in.trace.frames_per_slot) + ", config expects " +
                     std::to_string(c.radio.frames_per_slot));
  }
  if (in.trace.slot_count() < c.slots) {
    throw InputError("trace '" + path + "' holds " + std::to_string(in.trace.slot_count()) + " slots, config needs " +
                     std::to_string(c.slots));
  }
  in.trace.frames.resize(c.slots * c.radio.frames_per_slot);
  in.regimes.assign(c.slots, Regime::stable);
  return in;
}

std::unique_ptr<Forecaster> make_forecaster(const ExperimentConfig& c, const DeviceInput& in, std::size_t device) {
  std::unique_ptr<Forecaster> f;
  switch (c.forecast.kind) {
    case ForecastKind::model: {
      PredictorSettings settings = c.predictor;
      settings.edge_map_capacity = c.edge_map_capacity;
      f = std::make_unique<DualModelForecaster>(in.trace, c.policy, std::move(settings));
      break;
    }
    case ForecastKind::oracle:
      f = std::make_unique<GroundTruthForecaster>(in.trace);
      break;
    case ForecastKind::channel:
      f = std::make_unique<ChannelForecaster>(in.trace, c.forecast.channel_p, c.forecast.channel_q, c.seed, device);
      break;
  }
  const RegimeNoise& noise = c.forecast.noise;
  if (noise.stable > 0.0 || noise.walk > 0.0 || noise.burst > 0.0) {
    std::vector<double> flip;
    for (Regime r : in.regimes) flip.push_back(noise.get(r));
    f = std::make_unique<NoisyForecaster>(std::move(f), std::move(flip), c.seed, device);
  }
  return f;
}

}  // namespace

std::vector<DeviceInput> build_inputs(const ExperimentConfig& config) {
  config.validate();
  std::vector<std::future<DeviceInput>> jobs;
  for (std::size_t n = 0; n < config.devices; ++n) {
    jobs.push_back(std::async(std::launch::async, [&config, n] {
      DeviceInput in;
      switch (config.source.kind) {
        case SourceKind::slam: in = make_slam_input(config, n); break;
        case SourceKind::bernoulli: in = make_bernoulli_input(config, n); break;
        case SourceKind::files: in = make_file_input(config, n); break;
      }
      in.snr_db.assign(in.trace.slot_count(), config.snr_db_for(n));
      return in;
    }));
  }
  std::vector<DeviceInput> inputs;
  for (auto& j : jobs) inputs.push_back(j.get());
  return inputs;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult result;
  result.inputs = build_inputs(config);
  const DeviceSettings settings{config.radio, config.switching, config.estimation};

  std::vector<std::future<std::vector<ProvisionDecision>>> jobs;
  for (std::size_t n = 0; n < result.inputs.size(); ++n) {
    jobs.push_back(std::async(std::launch::async, [&, n] {
      const DeviceInput& in = result.inputs[n];
      DeviceRun run(in, make_forecaster(config, in, n), settings);
      for (std::size_t t = 0; t < in.trace.slot_count(); ++t) run.run_slot(t);
      return run.decisions();
    }));
  }
  for (auto& j : jobs) result.user_centric.push_back(j.get());
  result.user_centric_report = compute_metrics(result.user_centric);

  if (config.slicing.enabled) {
    result.slicing = run_slicing(result.inputs, config.radio, config.slicing, config.estimation.prior.lambda);
    result.slicing_report = compute_metrics(result.slicing);
  }
  return result;
}

void write_slot_csv(const std::vector<std::vector<ProvisionDecision>>& logs, const std::vector<DeviceInput>& inputs,
                    std::ostream& out) {
  out << "slot,device,model_tag,A_hat,k_true,k_star,rb_provisioned,rb_required,timely\n";
  std::size_t slots = 0;
  for (const auto& log : logs) slots = std::max(slots, log.size());
  for (std::size_t t = 0; t < slots; ++t) {
    for (std::size_t n = 0; n < logs.size(); ++n) {
      if (t >= logs[n].size()) continue;
      const ProvisionDecision& d = logs[n][t];
      out << t << ',' << inputs.at(n).trace.device_id << ',';
      if (d.mode == ProvisionMode::user_centric) {
        out << tag_letter(d.model_tag) << ',' << d.a_hat;
      } else {
        out << "-,-";
      }
      out << ',' << d.k_true << ',' << d.k_star << ',' << d.rb_count << ',' << d.rb_required << ','
          << (d.timely ? 1 : 0) << '\n';
    }
  }
}

namespace {

nlohmann::ordered_json metrics_json(const DeviceMetrics& m) {
  nlohmann::ordered_json j;
  j["tukf"] = m.tukf;
  j["rp_ratio"] = m.rp_ratio ? nlohmann::ordered_json(*m.rp_ratio) : nlohmann::ordered_json(nullptr);
  j["provisioned_rbs"] = m.provisioned_rbs;
  j["required_rbs"] = m.required_rbs;
  j["over_provisioned_rbs"] = m.over_provisioned_rbs;
  j["under_provisioned_rbs"] = m.under_provisioned_rbs;
  j["key_frames"] = m.key_frames;
  j["timely_key_frames"] = m.timely_key_frames;
  j["slots"] = m.slots;
  j["mean_rbs"] = m.mean_rbs;
  j["detailed_share"] = m.detailed_share;
  return j;
}

nlohmann::ordered_json report_json(const MetricsReport& r, const std::vector<DeviceInput>& inputs) {
  nlohmann::ordered_json j = metrics_json(r.total);
  j["min_device_tukf"] = r.min_device_tukf;
  auto devices = nlohmann::ordered_json::array();
  for (std::size_t n = 0; n < r.per_device.size(); ++n) {
    auto d = metrics_json(r.per_device[n]);
    d["device"] = inputs.at(n).trace.device_id;
    devices.push_back(std::move(d));
  }
  j["per_device"] = std::move(devices);
  return j;
}

}  // namespace

std::string summary_json(const ExperimentConfig& config, const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["seed"] = config.seed;
  j["devices"] = config.devices;
  j["slots"] = config.slots;
  j["epsilon"] = config.radio.epsilon;
  j["user_centric"] = report_json(result.user_centric_report, result.inputs);
  j["slicing"] = config.slicing.enabled ? report_json(result.slicing_report, result.inputs)
                                        : nlohmann::ordered_json(nullptr);
  return j.dump(2) + "\n";
}

}  // namespace kfp
