#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "kfp/cli.hpp"
#include "kfp/errors.hpp"

using namespace kfp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string error_of(std::string_view text) {
  try {
    config_from_json(text);
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "kfp");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.devices = 2;
  c.slots = 30;
  return c;
}

}  // namespace

TEST_SUITE("config_cli") {
  TEST_CASE("defaults carry the reference parameters") {
    const ExperimentConfig c;
    CHECK(c.radio.frames_per_slot == 10);
    CHECK(c.radio.upload_window_s == 0.02);
    CHECK(c.radio.alpha_bits == 5e6);
    CHECK(c.radio.snr_db == 15.0);
    CHECK(c.radio.epsilon == 0.8);
    CHECK(c.switching.trigger == 3);
    CHECK(c.switching.lower == 2);
    CHECK(c.switching.upper == 4);
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("config documents round trip") {
    ExperimentConfig c;
    c.seed = 99;
    c.radio.epsilon = 0.65;
    c.radio.log_base = LogBase::natural;
    c.slicing.mode = SlicingMode::variance_scaled;
    c.estimation.mode = EstimationMode::coarse;
    c.source.kind = SourceKind::bernoulli;
    c.forecast.kind = ForecastKind::channel;
    c.forecast.noise.burst = 0.25;
    c.device_snr_db = {10, 12.5};
    c.devices = 2;
    c.source.schedule = {{Regime::walk, 3}, {Regime::burst, 4}};
    const std::string text = config_to_json(c);
    CHECK(config_to_json(config_from_json(text)) == text);
    CHECK(config_to_json(config_from_json(config_to_json(ExperimentConfig{}))) == config_to_json(ExperimentConfig{}));
    CHECK(config_to_json(config_from_json("{}")) == config_to_json(ExperimentConfig{}));
  }

  TEST_CASE("round-tripped config reproduces the run") {
    const ExperimentConfig c = tiny();
    const ExperimentConfig back = config_from_json(config_to_json(c));
    CHECK(summary_json(c, run_experiment(c)) == summary_json(back, run_experiment(back)));
  }

  TEST_CASE("diagnostics name the offending key") {
    CHECK(error_of(R"({"radio": {"epsilonn": 0.8}})").find("radio.epsilonn") != std::string::npos);
    CHECK(error_of(R"({"radio": {"epsilon": 1.5}})").find("radio.epsilon") != std::string::npos);
    CHECK(error_of(R"({"radio": {"epsilon": "high"}})").find("radio.epsilon") != std::string::npos);
    CHECK(error_of(R"({"switching": {"upper": 1}})").find("switching") != std::string::npos);
    CHECK(error_of(R"({"estimation": {"mode": "medium"}})").find("estimation.mode") != std::string::npos);
    CHECK(error_of(R"({"devices": 0})").find("devices") != std::string::npos);
    CHECK(error_of("{not json").size() > 0);
  }

  TEST_CASE("missing trace path is named") {
    ExperimentConfig c = tiny();
    c.source.kind = SourceKind::files;
    c.source.trace_paths = {"/nonexistent/a.kftrace", "/nonexistent/b.kftrace"};
    try {
      c.validate();
      build_inputs(c);
      FAIL("expected an input error");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("/nonexistent/a.kftrace") != std::string::npos);
    }
  }

  TEST_CASE("dotted path edits") {
    const std::string base = config_to_json(ExperimentConfig{});
    CHECK(config_from_json(set_config_value(base, "radio.epsilon", "0.7")).radio.epsilon == 0.7);
    CHECK(config_from_json(set_config_value(base, "devices", "4")).devices == 4);
    CHECK(config_from_json(set_config_value(base, "slicing.mode", "variance-scaled")).slicing.mode ==
          SlicingMode::variance_scaled);
    CHECK_THROWS_AS(config_from_json(set_config_value(base, "radio.nope", "1")), InputError);
  }

  TEST_CASE("generated traces reload as a file source") {
    TempDir dir("kfp_cli_generate");
    const ExperimentConfig c = tiny();
    const auto paths = cmd_generate(c, dir.path);
    REQUIRE(paths.size() == 2);
    ExperimentConfig files = c;
    files.source.kind = SourceKind::files;
    for (const auto& p : paths) files.source.trace_paths.push_back(p.string());
    const auto a = build_inputs(c);
    const auto b = build_inputs(files);
    CHECK(a[0].trace == b[0].trace);
    CHECK(a[1].trace == b[1].trace);
    CHECK(fs::exists(dir.path / "config.json"));
  }

  TEST_CASE("run twice gives identical files") {
    TempDir one("kfp_cli_run_a"), two("kfp_cli_run_b");
    const ExperimentConfig c = tiny();
    cmd_run(c, one.path);
    cmd_run(c, two.path);
    for (const char* name : {"config.json", "summary.json", "slots_user_centric.csv", "slots_slicing.csv"}) {
      INFO(name);
      REQUIRE(fs::exists(one.path / name));
      CHECK(slurp(one.path / name) == slurp(two.path / name));
    }
  }

  TEST_CASE("sweep writes one row per value") {
    TempDir dir("kfp_cli_sweep");
    ExperimentConfig c = tiny();
    c.slicing.enabled = false;
    const auto rows = cmd_sweep(c, "radio.epsilon", {"0.6", "0.7", "0.8", "0.9"}, dir.path);
    REQUIRE(rows.size() == 4);
    std::istringstream csv(slurp(dir.path / "sweep.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "param_value,tukf,rp_ratio,over_rbs");
    std::size_t n = 0;
    while (std::getline(csv, line)) {
      CHECK(line.rfind(rows[n].value + ",", 0) == 0);
      ++n;
    }
    CHECK(n == 4);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].tukf >= rows[i - 1].tukf);
    CHECK(fs::exists(dir.path / "sweep_3.json"));
  }

  TEST_CASE("sweep failure names the value") {
    TempDir dir("kfp_cli_sweep_bad");
    try {
      cmd_sweep(tiny(), "radio.epsilon", {"0.7", "1.7"}, dir.path);
      FAIL("expected an input error");
    } catch (const InputError& e) {
      const std::string what = e.what();
      CHECK(what.find("1.7") != std::string::npos);
      CHECK(what.find("radio.epsilon") != std::string::npos);
    }
  }

  TEST_CASE("command line front end") {
    std::string out, err;
    CHECK(cli({"--print-defaults"}, &out) == 0);
    CHECK(config_to_json(config_from_json(out)) == config_to_json(ExperimentConfig{}));

    TempDir dir("kfp_cli_main");
    fs::create_directories(dir.path);
    const fs::path cfg = dir.path / "in.json";
    std::ofstream(cfg) << R"({"devices": 1, "slots": 20})";
    CHECK(cli({"run", "--config", cfg.string(), "--seed", "3", "--out", (dir.path / "o").string()}, &out) == 0);
    CHECK(out.find("user-centric tukf=") != std::string::npos);
    CHECK(config_from_json(slurp(dir.path / "o" / "config.json")).seed == 3);

    std::ofstream(cfg) << R"({"slots": -4})";
    CHECK(cli({"run", "--config", cfg.string()}, &out, &err) == 1);
    CHECK(err.find("slots") != std::string::npos);
    CHECK(cli({"run", "--config", (dir.path / "missing.json").string()}, &out, &err) == 1);
    CHECK(err.find("missing.json") != std::string::npos);
    CHECK(cli({"frobnicate"}, &out, &err) != 0);
    CHECK(cli({"sweep", "--param", "radio.epsilon"}, &out, &err) != 0);
  }

  TEST_CASE("number formatting") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(1.0) == "1");
    CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
  }
}
