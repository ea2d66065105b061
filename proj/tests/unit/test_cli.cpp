// End-to-end checks of the patch-hopf binary: config parsing, CSV layout,
// verdict tokens, exit codes, and determinism across worker-thread counts.
// The binary path comes in through PATCH_HOPF_BIN so the tests exercise the
// same executable a user would run.

#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#ifndef _WIN32
#include <sys/wait.h>
#endif

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "patchhopf-cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the installed binary with the given argument string, captures both
// streams, and unpacks the exit code from std::system's wait status.
CliRun run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out_file = scratch / "_stdout.txt";
  const fs::path err_file = scratch / "_stderr.txt";
  const std::string cmd = std::string("\"") + PATCH_HOPF_BIN + "\" " + args +
                          " > \"" + out_file.string() + "\" 2> \"" +
                          err_file.string() + "\"";
  const int rc = std::system(cmd.c_str());
  CliRun res;
#ifdef _WIN32
  res.code = rc;
#else
  res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
#endif
  res.out = slurp(out_file);
  res.err = slurp(err_file);
  return res;
}

std::vector<std::vector<std::string>> parse_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(std::move(cells));
  }
  return rows;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// Two-patch cyclic model used throughout: thresholds for it are pinned in
// the solver tests, so the CLI checks only have to match those values.
const char* kCyclicModel = R"("model": {
    "matrix": [[-2.0, 1.0], [0.9, -1.0]],
    "law": {"name": "logistic", "m": [1.0, 2.0]}
  })";

}  // namespace

TEST_CASE("validate reports a clean model and flags a lossy-column violation") {
  const fs::path dir = fresh_dir("validate");

  const fs::path good = dir / "good.json";
  write_text(good, std::string("{\n  \"command\": \"validate\",\n  ") +
                       kCyclicModel + "\n}\n");
  CliRun r = run_cli("validate --config \"" + good.string() + "\" --out \"" +
                         (dir / "out_good").string() + "\"",
                     dir);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "dispersal matrix: ok"));
  CHECK(contains(r.out, "growth law: ok"));
  CHECK(contains(r.out, "valid"));

  // Column 1 sums to +0.5: mass is created in transit, which the model
  // forbids. The report should name the failing column and exit nonzero.
  const fs::path bad = dir / "bad.json";
  write_text(bad, R"({
  "command": "validate",
  "model": {
    "matrix": [[-1.0, 1.0], [1.5, -1.0]],
    "law": {"name": "logistic", "m": [1.0, 2.0]}
  }
})");
  r = run_cli("validate --config \"" + bad.string() + "\" --out \"" +
                  (dir / "out_bad").string() + "\"",
              dir);
  CHECK(r.code == 1);
  CHECK(contains(r.out, "column-loss"));
  CHECK(contains(r.out, "invalid"));
}

TEST_CASE("analyze writes threshold rows and an extinction row past d*") {
  const fs::path dir = fresh_dir("analyze");
  const fs::path cfg = dir / "config.json";
  // d* for this model is about 4.102, so d = 5 lands in the extinction
  // regime while 0.1 and 0.3 sit firmly in the small-dispersal range.
  write_text(cfg, std::string("{\n  \"command\": \"analyze\",\n  ") +
                      kCyclicModel +
                      ",\n  \"params\": {\"d_values\": [0.1, 0.3, 5.0]}\n}\n");

  const fs::path out1 = dir / "out1";
  CliRun r = run_cli("analyze --config \"" + cfg.string() + "\" --out \"" +
                         out1.string() + "\"",
                     dir);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "(3 rows, 0 failed)"));

  const auto rows = parse_csv(out1 / "analysis.csv");
  REQUIRE(rows.size() == 4);
  REQUIRE(rows[0].size() == 11);
  CHECK(rows[0] == std::vector<std::string>{"d", "s_of_d", "u_1", "u_2",
                                            "regime", "verdict", "tau0", "nu",
                                            "theta", "transversality",
                                            "S_abs"});

  // Both small-d rows carry a full Hopf record with the pinned thresholds.
  const double tau_expected[2] = {0.8230118725, 0.9177015206};
  for (int i = 0; i < 2; ++i) {
    const auto& row = rows[1 + i];
    CHECK(std::stod(row[1]) > 0.0);
    CHECK(std::stod(row[2]) > 0.0);
    CHECK(std::stod(row[3]) > 0.0);
    CHECK(row[4] == "small-d");
    CHECK(row[5] == "hopf");
    CHECK(std::stod(row[6]) == doctest::Approx(tau_expected[i]).epsilon(1e-6));
    CHECK(std::stod(row[7]) > 0.0);
    const double theta = std::stod(row[8]);
    CHECK(theta > 0.0);
    CHECK(theta < 2.0 * std::numbers::pi);
    CHECK(std::stod(row[9]) > 0.0);
    CHECK(std::stod(row[10]) > 0.0);
  }

  // Past d* the population dies out: zero equilibrium, negative spectral
  // bound, and no threshold data.
  const auto& ext = rows[3];
  CHECK(std::stod(ext[1]) < 0.0);
  CHECK(std::stod(ext[2]) == 0.0);
  CHECK(std::stod(ext[3]) == 0.0);
  CHECK(ext[4] == "extinction");
  CHECK(ext[5] == "extinction");
  CHECK(ext[6] == "error:extinction");

  // Same rows regardless of the worker-thread count.
  const fs::path out2 = dir / "out2";
  r = run_cli("analyze --config \"" + cfg.string() + "\" --out \"" +
                  out2.string() + "\" --threads 4",
              dir);
  CHECK(r.code == 0);
  CHECK(slurp(out1 / "analysis.csv") == slurp(out2 / "analysis.csv"));
}

TEST_CASE("hopf-curve writes curve and expansion files with stable bytes") {
  const fs::path dir = fresh_dir("curve");
  const fs::path cfg = dir / "config.json";
  write_text(cfg,
             std::string("{\n  \"command\": \"hopf-curve\",\n  ") +
                 kCyclicModel +
                 ",\n  \"params\": {\"d_grid\": [0.001, 0.1, 0.3]}\n}\n");

  const fs::path out1 = dir / "out1";
  CliRun r = run_cli("hopf-curve --config \"" + cfg.string() + "\" --out \"" +
                         out1.string() + "\"",
                     dir);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "topology index T(A) = "));
  CHECK(contains(r.out, "threshold limit"));
  CHECK(contains(r.out, "(3 of 3 grid points)"));

  const auto rows = parse_csv(out1 / "hopf_curve.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] ==
        std::vector<std::string>{"d", "tau0", "nu", "theta", "branch"});
  const double tau_expected[3] = {0.7857271249, 0.8230118725, 0.9177015206};
  for (int i = 0; i < 3; ++i) {
    CHECK(std::stod(rows[1 + i][1]) ==
          doctest::Approx(tau_expected[i]).epsilon(1e-6));
    CHECK(rows[1 + i][4] == "patch-2");
  }

  // The first-order expansion file covers the same grid; at d = 0.001 it
  // should be within a few 1e-6 of the computed threshold.
  const auto exp_rows = parse_csv(out1 / "expansion.csv");
  REQUIRE(exp_rows.size() == 4);
  CHECK(exp_rows[0] == std::vector<std::string>{"d", "tau_expansion"});
  CHECK(std::stod(exp_rows[1][1]) ==
        doctest::Approx(tau_expected[0]).epsilon(1e-5));

  const fs::path out2 = dir / "out2";
  r = run_cli("hopf-curve --config \"" + cfg.string() + "\" --out \"" +
                  out2.string() + "\" --threads 4",
              dir);
  CHECK(r.code == 0);
  CHECK(slurp(out1 / "hopf_curve.csv") == slurp(out2 / "hopf_curve.csv"));
  CHECK(slurp(out1 / "expansion.csv") == slurp(out2 / "expansion.csv"));
}

TEST_CASE("simulate reports converged below threshold and periodic above") {
  const fs::path dir = fresh_dir("simulate");
  const fs::path cfg = dir / "config.json";
  // Symmetric two-patch model at d = 0.5: the threshold is pi, so 15%
  // below converges and 15% above settles onto the bifurcating orbit.
  const double tau0 = std::numbers::pi;
  std::ostringstream body;
  body.precision(17);
  body << R"({
  "command": "simulate",
  "model": {
    "matrix": [[-2.0, 1.0], [1.0, -2.0]],
    "law": {"name": "logistic", "m": [1.0, 1.0]}
  },
  "params": {
    "runs": [{"d": 0.5, "tau": )"
       << 0.85 * tau0 << R"(}, {"d": 0.5, "tau": )" << 1.15 * tau0 << R"(}],
    "t_end": 600.0,
    "step": 0.02
  }
})";
  write_text(cfg, body.str());

  const fs::path out = dir / "out";
  CliRun r = run_cli("simulate --config \"" + cfg.string() + "\" --out \"" +
                         out.string() + "\"",
                     dir);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "(2 runs, 0 failed)"));

  const auto rows = parse_csv(out / "verdicts.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"run", "d", "tau", "verdict",
                                            "rate", "amplitude", "period"});
  CHECK(rows[1][0] == "1");
  CHECK(rows[1][3] == "converged");
  CHECK(std::stod(rows[1][4]) > 0.0);
  CHECK(rows[1][5] == "error:not-applicable");

  CHECK(rows[2][3] == "periodic");
  CHECK(rows[2][4] == "error:not-applicable");
  CHECK(std::stod(rows[2][5]) > 0.0);
  // Near threshold the orbit period tracks 2*pi/nu = 4*pi, stretched a bit
  // by the finite amplitude at 15% past critical.
  const double period = std::stod(rows[2][6]);
  CHECK(period > 10.0);
  CHECK(period < 20.0);

  // One trajectory file per run, node times in the first column. The
  // integrator rounds its step down to divide the delay, so the final node
  // may overshoot t_end by at most one step.
  for (int k = 1; k <= 2; ++k) {
    const auto traj =
        parse_csv(out / ("trajectory_" + std::to_string(k) + ".csv"));
    REQUIRE(traj.size() > 100);
    CHECK(traj[0] == std::vector<std::string>{"t", "u1", "u2"});
    const double t_last = std::stod(traj.back()[0]);
    CHECK(t_last >= 600.0);
    CHECK(t_last <= 600.05);
  }
}

TEST_CASE("topology compares the index ordering against measured thresholds") {
  const fs::path dir = fresh_dir("topology");
  const fs::path cfg = dir / "config.json";
  // Same rates, two different networks. The cyclic one has a positive
  // index (threshold rises with d), the steep one a negative index, so at
  // d = 0.3 the measured thresholds must straddle the shared d -> 0 limit.
  write_text(cfg, R"({
  "command": "topology",
  "model": {"law": {"name": "logistic", "m": [1.0, 2.0]}},
  "params": {
    "matrices": [
      {"name": "cyclic", "entries": [[-2.0, 1.0], [0.9, -1.0]]},
      {"name": "steep", "entries": [[-20.0, 1.0], [15.0, -1.0]]}
    ],
    "d": 0.3
  }
})");

  const fs::path out = dir / "out";
  CliRun r = run_cli("topology --config \"" + cfg.string() + "\" --out \"" +
                         out.string() + "\"",
                     dir);
  CHECK(r.code == 0);

  const auto rows = parse_csv(out / "topology.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"name", "T_of_A", "q_hat",
                                            "tau_limit",
                                            "predicted_slope_sign",
                                            "tau_at_d"});
  CHECK(rows[1][0] == "cyclic");
  CHECK(std::stod(rows[1][1]) == doctest::Approx(1.313938).epsilon(1e-4));
  CHECK(rows[1][2] == "2");
  CHECK(std::stod(rows[1][3]) ==
        doctest::Approx(std::numbers::pi / 4.0).epsilon(1e-9));
  CHECK(std::stod(rows[1][4]) == 1.0);
  CHECK(std::stod(rows[1][5]) == doctest::Approx(0.9177015206).epsilon(1e-6));

  CHECK(rows[2][0] == "steep");
  CHECK(std::stod(rows[2][1]) == doctest::Approx(-2.710176).epsilon(1e-4));
  CHECK(std::stod(rows[2][4]) == -1.0);
  // The negative index only pins the slope as d -> 0; by d = 0.3 this
  // network's threshold has already turned around and sits back above the
  // pi/4 limit, though still below the cyclic one. The value is frozen
  // from an independent characteristic-root sweep.
  CHECK(std::stod(rows[2][5]) == doctest::Approx(0.8421400390).epsilon(1e-6));

  CHECK(contains(r.out, "cyclic: T(A) = "));
  CHECK(contains(r.out,
                 "index ordering (by T(A), larger first): cyclic > steep"));
  CHECK(contains(r.out, "measured threshold ordering at d = 0.3"));
  CHECK(contains(r.out, "cyclic > steep\n"));
  CHECK(contains(r.out,
                 "the index ordering matches the measured threshold ordering"));
}

TEST_CASE("config and usage errors exit with code 2") {
  const fs::path dir = fresh_dir("errors");

  const fs::path unknown_cmd = dir / "unknown_cmd.json";
  write_text(unknown_cmd,
             std::string("{\n  \"command\": \"frobnicate\",\n  ") +
                 kCyclicModel + "\n}\n");
  CliRun r = run_cli("frobnicate --config \"" + unknown_cmd.string() +
                         "\" --out \"" + (dir / "o1").string() + "\"",
                     dir);
  CHECK(r.code == 2);
  CHECK(contains(r.err, "config error"));
  CHECK(contains(r.err, "unknown command"));

  const fs::path extra_key = dir / "extra_key.json";
  write_text(extra_key, std::string("{\n  \"command\": \"validate\",\n  ") +
                            kCyclicModel + ",\n  \"extra\": 1\n}\n");
  r = run_cli("validate --config \"" + extra_key.string() + "\" --out \"" +
                  (dir / "o2").string() + "\"",
              dir);
  CHECK(r.code == 2);
  CHECK(contains(r.err, "unknown key 'extra'"));

  // Config says validate but the invocation says analyze.
  const fs::path mismatch = dir / "mismatch.json";
  write_text(mismatch, std::string("{\n  \"command\": \"validate\",\n  ") +
                           kCyclicModel + "\n}\n");
  r = run_cli("analyze --config \"" + mismatch.string() + "\" --out \"" +
                  (dir / "o3").string() + "\"",
              dir);
  CHECK(r.code == 2);
  CHECK(contains(r.err, "declares command"));

  r = run_cli("validate --out \"" + (dir / "o4").string() + "\"", dir);
  CHECK(r.code == 2);
  CHECK(contains(r.err, "usage error"));

  r = run_cli("validate --config \"" + (dir / "no_such.json").string() +
                  "\" --out \"" + (dir / "o5").string() + "\"",
              dir);
  CHECK(r.code == 2);
  CHECK(contains(r.err, "cannot open config file"));

  r = run_cli("--help", dir);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "patch-hopf"));
}

TEST_CASE("model failures surface as kind-tagged errors with exit code 1") {
  const fs::path dir = fresh_dir("model_errors");
  // Block-diagonal network: no path between the patches, so the dispersal
  // matrix is rejected when the model is built, not at config parse time.
  const fs::path cfg = dir / "reducible.json";
  write_text(cfg, R"({
  "command": "analyze",
  "model": {
    "matrix": [[-1.0, 0.0], [0.0, -1.0]],
    "law": {"name": "logistic", "m": [1.0, 2.0]}
  },
  "params": {"d_values": [0.5]}
})");
  CliRun r = run_cli("analyze --config \"" + cfg.string() + "\" --out \"" +
                         (dir / "out").string() + "\"",
                     dir);
  CHECK(r.code == 1);
  CHECK(contains(r.err, "validation error:"));
}
