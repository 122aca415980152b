#include <doctest.h>

#include <random>
#include <sstream>

#include "kfp/errors.hpp"
#include "kfp/trace_io.hpp"
#include "test_support.hpp"

using namespace kfp;

namespace {

double sample_variance(const std::vector<std::size_t>& xs) {
  double mean = 0.0;
  for (auto x : xs) mean += static_cast<double>(x);
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (auto x : xs) ss += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

Trace generate(Regime regime, std::size_t slots, std::uint64_t seed) {
  return generate_trace(WorldModel{}, expand_schedule({{regime, slots}}, slots, seed), ReferencePolicy{},
                        slots * 10);
}

std::size_t parse_error_line(const std::string& doc) {
  try {
    read_trace(std::string_view(doc));
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_SUITE("trace_io") {
  TEST_CASE("schedule expansion covers the run") {
    const RegimeSchedule s = expand_schedule({{Regime::stable, 50}, {Regime::burst, 20}}, 150, 3);
    CHECK(s.total_slots() == 150);
    const auto per_slot = s.per_slot();
    CHECK(per_slot[49] == Regime::stable);
    CHECK(per_slot[50] == Regime::burst);
    CHECK(per_slot[70] == Regime::stable);
    CHECK(per_slot[149] == Regime::stable);
    CHECK(expand_schedule({{Regime::walk, 4}}, 0, 1).segments.empty());
    CHECK_THROWS_AS(expand_schedule({{Regime::walk, 0}}, 3, 1), InputError);
  }

  TEST_CASE("stable traces vary less than walk traces on the same seed") {
    const Trace stable = generate(Regime::stable, 10, 7);
    const Trace walk = generate(Regime::walk, 10, 7);
    CHECK(sample_variance(stable.slot_key_counts()) < sample_variance(walk.slot_key_counts()));
  }

  TEST_CASE("generator rejects degenerate lengths") {
    CHECK_THROWS_AS(generate_trace(WorldModel{}, RegimeSchedule{}, ReferencePolicy{}, 0), InputError);
    CHECK_THROWS_AS(generate_trace(WorldModel{}, expand_schedule({{Regime::stable, 1}}, 1, 7), ReferencePolicy{}, 15),
                    InputError);
    CHECK_THROWS_AS(generate_trace(WorldModel{}, expand_schedule({{Regime::stable, 1}}, 3, 7), ReferencePolicy{}, 20),
                    InputError);
  }

  TEST_CASE("generation is deterministic") {
    const Trace a = generate(Regime::burst, 12, 7);
    const Trace b = generate(Regime::burst, 12, 7);
    CHECK(write_trace(a) == write_trace(b));
    CHECK(write_trace(a) != write_trace(generate(Regime::burst, 12, 8)));
  }

  TEST_CASE("generated frames see view_width consecutive feature points") {
    WorldModel w;
    w.fp_universe_size = 500;
    w.view_width = 40;
    const Trace t = generate_trace(w, expand_schedule({{Regime::burst, 5}}, 5, 2), ReferencePolicy{}, 50);
    for (const auto& f : t.frames) {
      CHECK(f.features.size() == 40);
      for (auto fp : f.features) CHECK(fp < 500);
    }
  }

  TEST_CASE("labels equal a replay of the reference policy") {
    const Trace t = generate_trace(WorldModel{}, expand_schedule({{Regime::stable, 5}, {Regime::burst, 5}}, 30, 4),
                                   ReferencePolicy{}, 300);
    FrameObserver replay(ReferencePolicy{}, TraceMode::feature_sets);
    for (const auto& f : t.frames) CHECK(replay.observe(f) == f.is_key);
  }

  TEST_CASE("burst slots carry more key frames than stable slots") {
    const Trace t = generate_trace(WorldModel{}, expand_schedule({{Regime::stable, 50}, {Regime::burst, 50}}, 300, 7),
                                   ReferencePolicy{}, 3000);
    const auto regimes = expand_schedule({{Regime::stable, 50}, {Regime::burst, 50}}, 300, 7).per_slot();
    const auto counts = t.slot_key_counts();
    double stable = 0, burst = 0;
    std::size_t ns = 0, nb = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (regimes[i] == Regime::stable) {
        stable += static_cast<double>(counts[i]);
        ++ns;
      } else {
        burst += static_cast<double>(counts[i]);
        ++nb;
      }
    }
    CHECK(ns >= 100);
    CHECK(nb >= 100);
    CHECK(burst / static_cast<double>(nb) > stable / static_cast<double>(ns));
  }

  TEST_CASE("hand-written three-frame document") {
    const std::string doc =
        "kftrace\tdevice=cam-a\tframe_rate=25\tmode=feature-sets\tF=3\n"
        "0\t1\t1,2,3\n"
        "1\t0\t2,3,4\n"
        "2\t1\t9\n";
    const Trace t = read_trace(std::string_view(doc));
    CHECK(t.device_id == "cam-a");
    CHECK(t.frame_rate == 25.0);
    CHECK(t.frames_per_slot == 3);
    REQUIRE(t.frames.size() == 3);
    CHECK(t.frames[0].is_key);
    CHECK_FALSE(t.frames[1].is_key);
    CHECK(t.frames[1].features == FeatureSet{2, 3, 4});
    CHECK(write_trace(t) == doc);
  }

  TEST_CASE("similarity-only document") {
    const std::string doc =
        "kftrace\tdevice=d\tframe_rate=30.5\tmode=similarity-only\tF=2\n"
        "0\t1\t\n"
        "1\t0\t0:0.95\n";
    const Trace t = read_trace(std::string_view(doc));
    CHECK(t.mode == TraceMode::similarity_only);
    REQUIRE(t.frames[1].links.size() == 1);
    CHECK(t.frames[1].links[0].weight == 0.95);
    CHECK(write_trace(t) == doc);
  }

  TEST_CASE("parse errors name the line") {
    const std::string head = "kftrace\tdevice=d\tframe_rate=25\tmode=feature-sets\tF=2\n";
    CHECK(parse_error_line(head + "0\t1\t1\n2\t0\t1\n") == 3);
    CHECK(parse_error_line(head + "0\t1\t1\n0\t0\t1\n") == 3);
    CHECK(parse_error_line(head + "0\t1\t1\n1\t0\n") == 3);
    CHECK(parse_error_line(head + "0\t2\t1\n") == 2);
    CHECK(parse_error_line(head + "0\t1\t\n") == 2);
    CHECK(parse_error_line(head + "0\t1\t3,x\n") == 2);
    CHECK(parse_error_line(head + "1\t1\t3\n") == 2);
    CHECK(parse_error_line("kftrace\tdevice=d\tframe_rate=25\tmode=pixels\tF=2\n") == 1);
    CHECK(parse_error_line("") == 1);
    CHECK(parse_error_line("hello\n") == 1);
    const std::string sim = "kftrace\tdevice=d\tframe_rate=25\tmode=similarity-only\tF=2\n";
    CHECK(parse_error_line(sim + "0\t1\t\n1\t0\t1:0.5\n") == 3);
    CHECK(parse_error_line(sim + "0\t1\t\n1\t0\t0:1.5\n") == 3);
  }

  TEST_CASE("round trip of generated traces is byte-identical") {
    const Trace t = generate(Regime::walk, 20, 5);
    const std::string doc = write_trace(t);
    const Trace back = read_trace(std::string_view(doc));
    CHECK(back == t);
    CHECK(write_trace(back) == doc);
  }

  TEST_CASE("round trip of random traces") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 200; ++i) {
      const Trace t = testing::random_trace(rng);
      const std::string doc = write_trace(t);
      const Trace back = read_trace(std::string_view(doc));
      CHECK(back == t);
      CHECK(write_trace(back) == doc);
    }
  }

  TEST_CASE("file round trip") {
    const Trace t = generate(Regime::stable, 3, 1);
    const auto path = std::filesystem::temp_directory_path() / "kfp_trace_io_test.kftrace";
    write_trace_file(t, path);
    CHECK(read_trace_file(path) == t);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_trace_file(path), InputError);
  }
}
