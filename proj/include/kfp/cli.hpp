#pragma once

// Batch front end: `generate`, `run` and `sweep` over an experiment config.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kfp/config.hpp"
#include "kfp/simulator.hpp"

namespace kfp {

// Writes one trace file per device plus the effective config. Returns the trace paths.
std::vector<std::filesystem::path> cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// Writes summary.json, the per-slot CSVs and the effective config.
ExperimentResult cmd_run(const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct SweepRow {
  std::string value;
  double tukf = 0.0;
  std::optional<double> rp_ratio;
  std::int64_t over_rbs = 0;
};

// Runs `config` once per value of the dotted parameter and writes sweep.csv.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, const std::string& parameter,
                                const std::vector<std::string>& values, const std::filesystem::path& out_dir);

std::string format_number(double value);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kfp
