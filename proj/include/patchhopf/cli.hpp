// Config-file driven front end: JSON in, CSV + stdout report out.
// Commands: validate, analyze, hopf-curve, simulate, topology.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "patchhopf/model.hpp"
#include "patchhopf/types.hpp"

namespace patchhopf::cli {

// Raised on malformed configs (JSON syntax, unknown keys, wrong types,
// missing fields). Maps to exit code 2.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct NamedMatrix {
  std::string name;
  Mat entries;
};

// Parsed configuration. The raw matrix is kept unvalidated so `validate`
// can report violations instead of refusing to load them.
struct RunConfig {
  std::string command;           // validate | analyze | hopf-curve | simulate | topology
  Mat matrix;                    // model.matrix, unvalidated
  Vec m, a_hat, b_hat;           // logistic law coefficients

  // analyze
  std::vector<double> d_values;

  // hopf-curve
  std::vector<double> d_grid;    // explicit grid, or generated from:
  double d_min = 0.0, d_max = 0.0;
  int d_count = 0;
  std::string spacing = "linear";  // linear | geometric

  // simulate
  struct Run {
    double d = 0.0;
    double tau = 0.0;
  };
  std::vector<Run> runs;
  double t_end = 0.0;            // 0 = auto
  double step = 0.0;             // 0 = tau/64
  double history_scale = 1.01;   // history = scale * equilibrium
  std::optional<Vec> history_value;  // overrides the scaled equilibrium

  // topology
  std::vector<NamedMatrix> matrices;
  std::optional<double> topology_d;  // when set, compute the threshold at d

  int threads = 1;
};

// Reads and checks the JSON file. Unknown keys anywhere are rejected.
RunConfig load_config(const std::filesystem::path& path);

// Builds the validated model from a loaded config. Throws ValidationError.
ModelConfig build_model(const RunConfig& cfg);

// Executes the command; writes CSVs under out_dir (created if needed) and
// a report to `out`. Returns the process exit code: 0 success (possibly with
// per-row error cells), 1 validation/verdict failure, 2 config error.
int run_command(const RunConfig& cfg, const std::filesystem::path& out_dir,
                std::ostream& out);

// Full entry point used by main(): parse args, load config, run.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

// 17-significant-digit decimal, the canonical CSV cell format.
std::string csv_num(double x);

}  // namespace patchhopf::cli
