#include "kfp/cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "kfp/errors.hpp"

namespace kfp {

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

void prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

}  // namespace

std::string format_number(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

std::vector<std::filesystem::path> cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  prepare_dir(out_dir);
  const auto inputs = build_inputs(config);
  std::vector<std::filesystem::path> paths;
  for (const auto& in : inputs) {
    paths.push_back(out_dir / (in.trace.device_id + ".kftrace"));
    write_trace_file(in.trace, paths.back());
  }
  write_file(out_dir / "config.json", config_to_json(config));
  return paths;
}

ExperimentResult cmd_run(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  prepare_dir(out_dir);
  ExperimentResult result = run_experiment(config);
  write_file(out_dir / "config.json", config_to_json(config));
  write_file(out_dir / "summary.json", summary_json(config, result));
  {
    std::ofstream csv(out_dir / "slots_user_centric.csv", std::ios::binary);
    write_slot_csv(result.user_centric, result.inputs, csv);
  }
  if (config.slicing.enabled) {
    std::ofstream csv(out_dir / "slots_slicing.csv", std::ios::binary);
    write_slot_csv(result.slicing, result.inputs, csv);
  }
  return result;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, const std::string& parameter,
                                const std::vector<std::string>& values, const std::filesystem::path& out_dir) {
  if (values.empty()) throw InputError("sweep needs at least one value");
  prepare_dir(out_dir);
  const std::string base = config_to_json(config);
  std::vector<SweepRow> rows;
  std::string csv = "param_value,tukf,rp_ratio,over_rbs\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string& value = values[i];
    ExperimentConfig variant;
    ExperimentResult result;
    try {
      variant = config_from_json(set_config_value(base, parameter, value));
      result = run_experiment(variant);
    } catch (const std::exception& e) {
      throw InputError("sweep of " + parameter + " failed at value " + value + ": " + e.what());
    }
    const DeviceMetrics& m = result.user_centric_report.total;
    rows.push_back(SweepRow{value, m.tukf, m.rp_ratio, m.over_provisioned_rbs});
    csv += value + "," + format_number(m.tukf) + "," +
           (m.rp_ratio ? format_number(*m.rp_ratio) : std::string("inf")) + "," +
           std::to_string(m.over_provisioned_rbs) + "\n";
    write_file(out_dir / ("sweep_" + std::to_string(i) + ".json"), summary_json(variant, result));
  }
  write_file(out_dir / "sweep.csv", csv);
  return rows;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Key-frame upload traffic simulator with robust spectrum reservation"};
  app.require_subcommand(0, 1);

  bool print_defaults = false;
  app.add_flag("--print-defaults", print_defaults, "Print the default config and exit");

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string parameter;
  std::vector<std::string> values;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config document (JSON); defaults apply to missing keys");
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  };
  CLI::App* generate = app.add_subcommand("generate", "Write one trace file per device");
  CLI::App* run = app.add_subcommand("run", "Run the experiment and write reports");
  CLI::App* sweep = app.add_subcommand("sweep", "Run once per value of one parameter");
  add_common(generate);
  add_common(run);
  add_common(sweep);
  sweep->add_option("--param", parameter, "Dotted config key, e.g. radio.epsilon")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (print_defaults) {
      out << config_to_json(ExperimentConfig{});
      return 0;
    }
    if (app.get_subcommands().empty()) {
      err << app.help();
      return 2;
    }
    ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.output_dir = out_dir;
    config.validate();
    const std::filesystem::path dir = config.output_dir;

    if (generate->parsed()) {
      for (const auto& p : cmd_generate(config, dir)) out << p.string() << '\n';
    } else if (run->parsed()) {
      const ExperimentResult r = cmd_run(config, dir);
      const DeviceMetrics& m = r.user_centric_report.total;
      out << "user-centric tukf=" << format_number(m.tukf)
          << " rp_ratio=" << (m.rp_ratio ? format_number(*m.rp_ratio) : std::string("inf")) << '\n';
      if (config.slicing.enabled) {
        const DeviceMetrics& s = r.slicing_report.total;
        out << "slicing tukf=" << format_number(s.tukf)
            << " rp_ratio=" << (s.rp_ratio ? format_number(*s.rp_ratio) : std::string("inf")) << '\n';
      }
    } else if (sweep->parsed()) {
      for (const auto& row : cmd_sweep(config, parameter, values, dir)) {
        out << parameter << '=' << row.value << " tukf=" << format_number(row.tukf) << '\n';
      }
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace kfp
