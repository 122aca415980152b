#include <doctest.h>

#include <random>
#include <sstream>

#include "kfp/errors.hpp"
#include "kfp/simulator.hpp"
#include "oracles.hpp"

using namespace kfp;

namespace {

using Bits = std::vector<std::uint8_t>;

class ScriptedForecaster final : public Forecaster {
 public:
  explicit ScriptedForecaster(std::vector<Bits> script) : script_(std::move(script)) {}
  PredictionVector forecast(ModelTag tag, std::size_t slot) override { return {slot, script_.at(slot), tag}; }
  void observe_slot(std::size_t) override {}

 private:
  std::vector<Bits> script_;
};

DeviceInput input_from_slots(const std::vector<Bits>& slots, double snr_db = 15.0) {
  DeviceInput in;
  in.trace.mode = TraceMode::similarity_only;
  in.trace.frames_per_slot = slots.front().size();
  for (const auto& s : slots) {
    for (auto a : s) {
      FrameRecord r;
      r.id = in.trace.frames.size();
      r.is_key = a != 0;
      in.trace.frames.push_back(r);
    }
  }
  in.regimes.assign(slots.size(), Regime::stable);
  in.snr_db.assign(slots.size(), snr_db);
  return in;
}

DeviceInput bernoulli_input(std::size_t slots, std::size_t F, double lambda, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution key(lambda);
  std::vector<Bits> out(slots, Bits(F));
  for (auto& s : out)
    for (auto& a : s) a = key(rng) ? 1 : 0;
  return input_from_slots(out);
}

DeviceSettings fixed_settings(std::size_t F, ChannelParams prior, double eps = 0.8) {
  DeviceSettings s;
  s.radio.frames_per_slot = F;
  s.radio.epsilon = eps;
  s.estimation.mode = EstimationMode::fixed;
  s.estimation.prior = prior;
  return s;
}

ProvisionDecision logged(std::size_t k_true, std::size_t k_star, std::int64_t rb, std::int64_t required) {
  ProvisionDecision d;
  d.k_true = k_true;
  d.k_star = k_star;
  d.rb_count = rb;
  d.rb_required = required;
  d.timely = k_true <= k_star;
  return d;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.devices = 3;
  c.slots = 140;
  return c;
}

}  // namespace

TEST_SUITE("simulator") {
  TEST_CASE("perfect channel provisions exactly the requirement") {
    const DeviceInput in = bernoulli_input(200, 10, 0.35, 4);
    DeviceRun run(in, std::make_unique<GroundTruthForecaster>(in.trace), fixed_settings(10, {1.0, 1.0, 0.35}));
    for (std::size_t t = 0; t < 200; ++t) {
      const ProvisionDecision& d = run_slot(run, t);
      CHECK(d.timely);
      CHECK(d.k_star == d.k_true);
      CHECK(d.rb_count == d.rb_required);
    }
    CHECK(run.decisions().size() == 200);
    CHECK_THROWS_AS(run.run_slot(200), EndOfTrace);
    const DeviceMetrics m = compute_device_metrics(run.decisions());
    CHECK(m.tukf == 1.0);
    CHECK(m.rp_ratio == 1.0);
    CHECK(m.over_provisioned_rbs == 0);
  }

  TEST_CASE("an unpredicted spike is dropped and counted") {
    const DeviceInput in = input_from_slots({{1, 1, 1, 1}, {0, 0, 0, 0}});
    DeviceRun run(in, std::make_unique<ScriptedForecaster>(std::vector<Bits>{{0, 0, 0, 0}, {0, 0, 0, 0}}),
                  fixed_settings(4, {0.99, 0.99, 0.1}));
    const ProvisionDecision first = run.run_slot(0);
    CHECK(first.k_star == 0);
    CHECK(first.rb_count == 0);
    CHECK(first.k_true == 4);
    CHECK_FALSE(first.timely);
    CHECK(run.run_slot(1).timely);
    CHECK(compute_device_metrics(run.decisions()).tukf == 0.0);
    CHECK_THROWS_AS(run.run_slot(3), ContractViolation);
  }

  TEST_CASE("scripted five-slot run") {
    // F=4, eps=0.8, tau=2, fine estimation from prior (0.9, 0.9, 0.25),
    // switching with upper 3, lower 2, trigger 2.
    //   t0: Δ=0, m=1 -> D. Prior.                  truth 1100, pred 1000.
    //   t1: Δ=0, m=2 -> S. Prior.                  truth 0000, pred 0000.
    //   t2: Δ=2 dead band -> S. S from {t1}: TN4 -> (1/2, 5/6, 1/6).
    //                                              truth 1111, pred 1110.
    //   t3: Δ=4 > 3 -> D. D from {t0}: TP1 FN1 TN2 -> (2/4, 3/4, 3/6).
    //                                              truth 0010, pred 0011.
    //   t4: Δ=3 dead band -> D. D from {t0,t3}: TP2 FN1 TN4 FP1 -> (3/5, 5/7, 4/10).
    //                                              truth 1011, pred 0000.
    // Afterwards D from {t3,t4}: TP1 FN3 TN3 FP1 -> (2/6, 4/6, 5/10);
    // S from {t1,t2}: TP3 FN1 TN4 -> (4/6, 5/6, 5/10).
    const std::vector<Bits> truth = {{1, 1, 0, 0}, {0, 0, 0, 0}, {1, 1, 1, 1}, {0, 0, 1, 0}, {1, 0, 1, 1}};
    const std::vector<Bits> pred = {{1, 0, 0, 0}, {0, 0, 0, 0}, {1, 1, 1, 0}, {0, 0, 1, 1}, {0, 0, 0, 0}};
    struct Expect {
      ModelTag tag;
      std::size_t a_hat;
      double p, q, l;
      std::size_t k_true;
    };
    const Expect expect[] = {{ModelTag::detailed, 1, 0.9, 0.9, 0.25, 2},
                             {ModelTag::simplified, 0, 0.9, 0.9, 0.25, 0},
                             {ModelTag::simplified, 3, 1.0 / 2, 5.0 / 6, 1.0 / 6, 4},
                             {ModelTag::detailed, 2, 2.0 / 4, 3.0 / 4, 3.0 / 6, 1},
                             {ModelTag::detailed, 0, 3.0 / 5, 5.0 / 7, 4.0 / 10, 3}};

    const DeviceInput in = input_from_slots(truth);
    DeviceSettings s;
    s.radio.frames_per_slot = 4;
    s.switching = SwitchThresholds{3, 2, 2};
    s.estimation.mode = EstimationMode::fine;
    s.estimation.tau = 2;
    s.estimation.prior = {0.9, 0.9, 0.25};
    DeviceRun run(in, std::make_unique<ScriptedForecaster>(pred), s);
    const double one = bandwidth_for_k(1, s.radio).hz;
    for (std::size_t t = 0; t < 5; ++t) {
      INFO("slot " << t);
      const ProvisionDecision& d = run.run_slot(t);
      const Expect& e = expect[t];
      const std::size_t k = oracle::enumerated_k_star(e.a_hat, 4, e.p, e.q, e.l, 0.8);
      CHECK(d.model_tag == e.tag);
      CHECK(d.a_hat == e.a_hat);
      CHECK(d.k_star == k);
      CHECK(d.k_true == e.k_true);
      CHECK(d.timely == (e.k_true <= k));
      CHECK(d.bandwidth_hz == doctest::Approx(one * static_cast<double>(k)).epsilon(1e-14));
      CHECK(d.rb_required == bandwidth_for_k(e.k_true, s.radio).rbs);
    }
    const auto& params = run.channel_params();
    CHECK(params.detailed.p == doctest::Approx(2.0 / 6));
    CHECK(params.detailed.q == doctest::Approx(4.0 / 6));
    CHECK(params.detailed.lambda == doctest::Approx(5.0 / 10));
    CHECK(params.simplified.p == doctest::Approx(4.0 / 6));
    CHECK(params.simplified.q == doctest::Approx(5.0 / 6));
    CHECK(params.simplified.lambda == doctest::Approx(5.0 / 10));
  }

  TEST_CASE("coarse estimation shares one estimate") {
    const std::vector<Bits> truth = {{1, 1, 0, 0}, {0, 0, 0, 0}, {1, 1, 1, 1}};
    const std::vector<Bits> pred = {{1, 0, 0, 0}, {0, 0, 0, 0}, {1, 1, 1, 0}};
    const DeviceInput in = input_from_slots(truth);
    DeviceSettings s;
    s.radio.frames_per_slot = 4;
    s.switching = SwitchThresholds{3, 2, 2};
    s.estimation.mode = EstimationMode::coarse;
    s.estimation.tau = 2;
    DeviceRun run(in, std::make_unique<ScriptedForecaster>(pred), s);
    for (std::size_t t = 0; t < 3; ++t) run.run_slot(t);
    // Window {t1, t2}: TP3 FN1 TN4.
    CHECK(run.channel_params().detailed == run.channel_params().simplified);
    CHECK(run.channel_params().detailed.p == doctest::Approx(4.0 / 6));
    CHECK(run.channel_params().detailed.q == doctest::Approx(5.0 / 6));
  }

  TEST_CASE("trace and radio must agree on frames per slot") {
    const DeviceInput in = input_from_slots({{1, 0, 0}});
    CHECK_THROWS_AS(DeviceRun(in, std::make_unique<GroundTruthForecaster>(in.trace), fixed_settings(4, {})),
                    InputError);
  }

  TEST_CASE("aggregate bandwidth") {
    CHECK(aggregate_bandwidth({}) == 0.0);
    const RadioConfig r;
    ProvisionDecision a;
    a.bandwidth_hz = bandwidth_for_k(1, r).hz;
    CHECK(aggregate_bandwidth(std::vector{a}) == a.bandwidth_hz);
    CHECK(aggregate_bandwidth(std::vector{a, a}) == 2 * a.bandwidth_hz);
    ProvisionDecision zero;
    CHECK(aggregate_bandwidth(std::vector{zero, zero, zero}) == 0.0);
  }

  TEST_CASE("single homogeneous device matches slicing once history exists") {
    // Three keys in every slot: pooled variance is zero from slot 1 on.
    std::vector<Bits> slots(60, Bits{1, 0, 1, 0, 0, 1, 0, 0, 0, 0});
    const DeviceInput in = input_from_slots(slots);
    DeviceRun run(in, std::make_unique<GroundTruthForecaster>(in.trace), fixed_settings(10, {1.0, 1.0, 0.3}));
    for (std::size_t t = 0; t < 60; ++t) run.run_slot(t);
    for (SlicingMode mode : {SlicingMode::variance_scaled, SlicingMode::clt_consistent}) {
      const auto slicing = run_slicing(std::vector{in}, RadioConfig{}, SlicingConfig{true, mode, 50}, 0.3);
      REQUIRE(slicing.size() == 1);
      std::int64_t user_rbs = 0, slice_rbs = 0;
      for (std::size_t t = 1; t < 60; ++t) {
        CHECK(slicing[0][t].rb_count == run.decisions()[t].rb_count);
        CHECK(slicing[0][t].timely);
        user_rbs += run.decisions()[t].rb_count;
        slice_rbs += slicing[0][t].rb_count;
      }
      CHECK(user_rbs == slice_rbs);
      // Slot 0 is sized from the prior mean 3 and variance 2.1.
      CHECK(slicing[0][0].k_star >= 3);
    }
  }

  TEST_CASE("slicing share and timeliness use each device's SNR") {
    DeviceInput near = input_from_slots({{1, 1, 0, 0}, {1, 1, 0, 0}}, 20.0);
    DeviceInput far = input_from_slots({{1, 1, 0, 0}, {1, 1, 0, 0}}, 10.0);
    RadioConfig r;
    r.frames_per_slot = 4;
    const auto logs = run_slicing(std::vector{near, far}, r, SlicingConfig{true, SlicingMode::clt_consistent, 5}, 0.5);
    // Slot 1: variance 0, mean 2 -> level 2 at the mean SNR of 15 dB.
    CHECK(logs[0][1].k_star == 2);
    CHECK(logs[0][1].bandwidth_hz == doctest::Approx(bandwidth_for_k(2, r, 15.0).hz));
    CHECK(logs[0][1].timely);
    CHECK_FALSE(logs[1][1].timely);
    CHECK(logs[1][1].rb_required == bandwidth_for_k(2, r, 10.0).rbs);
  }

  TEST_CASE("metric examples") {
    const std::vector<ProvisionDecision> exact = {logged(2, 2, 554, 554), logged(0, 0, 0, 0), logged(3, 3, 831, 831)};
    DeviceMetrics m = compute_device_metrics(exact);
    CHECK(m.tukf == 1.0);
    CHECK(m.rp_ratio == 1.0);
    CHECK(m.over_provisioned_rbs == 0);

    const std::vector<ProvisionDecision> spike = {logged(4, 2, 554, 1108), logged(1, 2, 554, 277)};
    m = compute_device_metrics(spike);
    CHECK(m.key_frames == 5);
    CHECK(m.timely_key_frames == 1);
    CHECK(m.tukf == doctest::Approx(0.2));

    // 2 timely of 6 keys; 1154 provisioned vs 1662 required; over 46 + 277, under 831.
    const std::vector<ProvisionDecision> three = {logged(2, 3, 600, 554), logged(4, 1, 277, 1108),
                                                  logged(0, 1, 277, 0)};
    m = compute_device_metrics(three);
    CHECK(m.tukf == doctest::Approx(1.0 / 3));
    CHECK(*m.rp_ratio == doctest::Approx(1154.0 / 1662.0));
    CHECK(m.over_provisioned_rbs == 323);
    CHECK(m.under_provisioned_rbs == 831);

    CHECK(compute_device_metrics(std::vector{logged(0, 0, 0, 0)}).tukf == 1.0);
    CHECK_FALSE(compute_device_metrics(std::vector{logged(0, 1, 277, 0)}).rp_ratio.has_value());

    const MetricsReport report = compute_metrics({exact, three});
    CHECK(report.per_device.size() == 2);
    CHECK(report.min_device_tukf == doctest::Approx(1.0 / 3));
    CHECK(report.total.key_frames == 11);
  }

  TEST_CASE("accounting identity on a full run") {
    ExperimentConfig c = small_config();
    const ExperimentResult r = run_experiment(c);
    for (const auto* logs : {&r.user_centric, &r.slicing}) {
      for (const auto& log : *logs) {
        REQUIRE(log.size() == c.slots);
        for (const auto& d : log) {
          const std::int64_t over = std::max<std::int64_t>(0, d.rb_count - d.rb_required);
          const std::int64_t under = std::max<std::int64_t>(0, d.rb_required - d.rb_count);
          CHECK(d.rb_count == d.rb_required + over - under);
          CHECK(d.k_star <= c.radio.frames_per_slot);
        }
      }
    }
    for (const auto* rep : {&r.user_centric_report, &r.slicing_report}) {
      CHECK(rep->total.provisioned_rbs ==
            rep->total.required_rbs + rep->total.over_provisioned_rbs - rep->total.under_provisioned_rbs);
      CHECK(rep->total.tukf >= 0.0);
      CHECK(rep->total.tukf <= 1.0);
    }
  }

  TEST_CASE("raising the reliability target never lowers timeliness or provisioning") {
    double last_tukf = -1.0, last_rp = -1.0;
    for (double eps : {0.6, 0.7, 0.8, 0.9}) {
      ExperimentConfig c = small_config();
      c.slicing.enabled = false;
      c.radio.epsilon = eps;
      const ExperimentResult r = run_experiment(c);
      CHECK(r.user_centric_report.total.tukf >= last_tukf);
      CHECK(*r.user_centric_report.total.rp_ratio >= last_rp);
      last_tukf = r.user_centric_report.total.tukf;
      last_rp = *r.user_centric_report.total.rp_ratio;
    }
  }

  TEST_CASE("runs are deterministic") {
    const ExperimentConfig c = small_config();
    const ExperimentResult a = run_experiment(c);
    const ExperimentResult b = run_experiment(c);
    CHECK(a.user_centric_report == b.user_centric_report);
    CHECK(a.slicing_report == b.slicing_report);
    std::ostringstream ca, cb;
    write_slot_csv(a.user_centric, a.inputs, ca);
    write_slot_csv(b.user_centric, b.inputs, cb);
    CHECK(ca.str() == cb.str());
    CHECK(summary_json(c, a) == summary_json(c, b));
    CHECK(derive_seed(7, 1, 2, 3) == derive_seed(7, 1, 2, 3));
    CHECK(derive_seed(7, 1, 2, 3) != derive_seed(7, 1, 2, 4));
    CHECK(derive_seed(7, 1, 2, 3) != derive_seed(7, 2, 2, 3));
  }

  TEST_CASE("slot CSV layout") {
    ExperimentConfig c = small_config();
    c.slots = 2;
    c.devices = 1;
    const ExperimentResult r = run_experiment(c);
    std::ostringstream out;
    write_slot_csv(r.user_centric, r.inputs, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "slot,device,model_tag,A_hat,k_true,k_star,rb_provisioned,rb_required,timely");
    std::getline(in, line);
    CHECK(line.rfind("0,device-0,D,", 0) == 0);
    std::ostringstream slicing;
    write_slot_csv(r.slicing, r.inputs, slicing);
    CHECK(slicing.str().find("0,device-0,-,-,") != std::string::npos);
  }
}
