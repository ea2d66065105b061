#include "patchhopf/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "patchhopf/ddesim.hpp"
#include "patchhopf/equilibrium.hpp"
#include "patchhopf/hopf.hpp"
#include "patchhopf/spectral.hpp"

namespace patchhopf::cli {

std::string csv_num(double x) {
  // Shortest representation that parses back to the same double, so CSV
  // cells round-trip and prose like "d = 0.3" stays readable.
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kPi = std::numbers::pi;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

const json& require_key(const json& j, const char* key,
                        const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end())
    throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  return *it;
}

double read_num(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  return j.get<double>();
}

int read_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + " must be an integer");
  return j.get<int>();
}

std::string read_str(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be a string");
  return j.get<std::string>();
}

Vec read_vec(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty())
    throw ConfigError(where + " must be a nonempty array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] =
        read_num(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

std::vector<double> read_list(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty())
    throw ConfigError(where + " must be a nonempty array of numbers");
  std::vector<double> v;
  v.reserve(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    v.push_back(read_num(j[i], where + "[" + std::to_string(i) + "]"));
  return v;
}

Mat read_mat(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty())
    throw ConfigError(where + " must be a nonempty array of rows");
  const size_t rows = j.size();
  size_t cols = 0;
  for (size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].empty())
      throw ConfigError(where + "[" + std::to_string(i) +
                        "] must be a nonempty array of numbers");
    if (i == 0)
      cols = j[i].size();
    else if (j[i].size() != cols)
      throw ConfigError(where + " rows have different lengths");
  }
  Mat M(rows, cols);
  for (size_t i = 0; i < rows; ++i)
    for (size_t k = 0; k < cols; ++k)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          read_num(j[i][k], where + "[" + std::to_string(i) + "][" +
                                std::to_string(k) + "]");
  return M;
}

// Runs `work(i)` for i in [0, count) on a bounded pool. `work` must not
// throw; row functions record their own errors.
void parallel_rows(int count, int threads,
                   const std::function<void(int)>& work) {
  threads = std::min(std::max(threads, 1), std::max(count, 1));
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) work(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1))
        work(i);
    });
  for (auto& th : pool) th.join();
}

void write_csv_file(const fs::path& path,
                    const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path);
  if (!f) throw SolverError("io", "cannot open " + path.string());
  for (size_t c = 0; c < header.size(); ++c)
    f << (c ? "," : "") << header[c];
  f << "\n";
  for (const auto& row : rows) {
    for (size_t c = 0; c < row.size(); ++c) f << (c ? "," : "") << row[c];
    f << "\n";
  }
  if (!f) throw SolverError("io", "write to " + path.string() + " failed");
}

bool pure_delay_logistic(const RunConfig& cfg) {
  return cfg.a_hat.cwiseAbs().maxCoeff() == 0.0 &&
         (cfg.b_hat.array() - 1.0).abs().maxCoeff() == 0.0;
}

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  bool ok = true;
  try {
    const ValidationReport rep = validate_dispersion(cfg.matrix);
    if (rep.valid()) {
      out << "dispersal matrix: ok\n";
    } else {
      ok = false;
      for (const auto& v : rep.violations) out << "dispersal matrix: " << v << "\n";
    }
  } catch (const Error& e) {
    ok = false;
    out << "dispersal matrix: " << e.what() << "\n";
  }
  try {
    const Logistic law(cfg.m, cfg.a_hat, cfg.b_hat);
    const ValidationReport rep = validate_growth(law);
    if (rep.valid()) {
      out << "growth law: ok\n";
    } else {
      ok = false;
      for (const auto& v : rep.violations) out << "growth law: " << v << "\n";
    }
  } catch (const Error& e) {
    ok = false;
    out << "growth law: " << e.what() << "\n";
  }
  out << (ok ? "valid\n" : "invalid\n");
  return ok ? 0 : 1;
}

int cmd_analyze(const RunConfig& cfg, const fs::path& out_dir,
                std::ostream& out) {
  const ModelConfig model = build_model(cfg);
  const int n = model.n();
  const PerronData P = find_dstar(model.A, model.m());
  const Vec u0 = solve_u0(*model.law);
  Vec near_guess_dir = P.eta;
  double near_beta = 0.0;
  try {
    near_beta = dstar_expansion(*model.law, P).beta_star;
  } catch (const Error&) {
    near_beta = 0.0;  // fall back to the uncoupled guess
  }

  const int ncols = n + 9;
  struct Row {
    std::vector<std::string> cells;
    std::string note;
    bool failed = false;
  };
  std::vector<Row> rows(cfg.d_values.size());

  auto work = [&](int i) {
    Row& row = rows[i];
    row.cells.assign(ncols, "");
    const double d = cfg.d_values[i];
    row.cells[0] = csv_num(d);
    auto fill_error = [&](const std::string& kind, int from) {
      for (int c = from; c < ncols; ++c) row.cells[c] = "error:" + kind;
    };
    try {
      row.cells[1] = csv_num(spectral_bound(model.A, model.m(), d));
      if (d >= P.d_star) {
        for (int j = 0; j < n; ++j) row.cells[2 + j] = csv_num(0.0);
        row.cells[2 + n] = "extinction";
        row.cells[3 + n] = "extinction";
        fill_error("extinction", 4 + n);
        return;
      }
      const Regime regime =
          d <= 0.5 * P.d_star ? Regime::SmallD : Regime::NearDstar;
      Vec guess = u0;
      if (regime == Regime::NearDstar && near_beta > 0.0)
        guess = near_beta * (P.d_star - d) * near_guess_dir;
      const Vec u = solve_equilibrium(model, d, guess).u;
      for (int j = 0; j < n; ++j) row.cells[2 + j] = csv_num(u[j]);
      row.cells[2 + n] = regime == Regime::SmallD ? "small-d" : "near-dstar";
      const StabilityVerdict verdict = classify(model, d, regime);
      if (std::holds_alternative<StableAllDelays>(verdict)) {
        row.cells[3 + n] = "stable-all-delays";
        fill_error("not-applicable", 4 + n);
      } else if (const auto* hopf = std::get_if<HopfAt>(&verdict)) {
        row.cells[3 + n] = "hopf";
        row.cells[4 + n] = csv_num(hopf->tau0);
        row.cells[5 + n] = csv_num(hopf->point.nu);
        row.cells[6 + n] = csv_num(hopf->point.theta);
        row.cells[7 + n] = csv_num(hopf->point.transversality);
        row.cells[8 + n] = csv_num(std::abs(hopf->point.S.at(0)));
      } else {
        row.cells[3 + n] = "inconclusive";
        fill_error("inconclusive", 4 + n);
        row.note = "d = " + csv_num(d) + ": " +
                   std::get<Inconclusive>(verdict).reason;
      }
    } catch (const Error& e) {
      row.failed = true;
      for (int c = 1; c < ncols; ++c)
        if (row.cells[c].empty()) row.cells[c] = "error:" + e.kind();
      row.note = "d = " + csv_num(d) + ": " + e.what();
    }
  };
  parallel_rows(static_cast<int>(rows.size()), cfg.threads, work);

  std::vector<std::string> header = {"d", "s_of_d"};
  for (int j = 1; j <= n; ++j) header.push_back("u_" + std::to_string(j));
  for (const char* c : {"regime", "verdict", "tau0", "nu", "theta",
                        "transversality", "S_abs"})
    header.push_back(c);
  std::vector<std::vector<std::string>> cells;
  cells.reserve(rows.size());
  int failed = 0;
  for (auto& row : rows) {
    cells.push_back(std::move(row.cells));
    if (!row.note.empty()) out << "note: " << row.note << "\n";
    if (row.failed) ++failed;
  }
  write_csv_file(out_dir / "analysis.csv", header, cells);
  out << "wrote " << (out_dir / "analysis.csv").string() << " (" << rows.size()
      << " rows, " << failed << " failed)\n";
  return failed == static_cast<int>(rows.size()) && failed > 0 ? 1 : 0;
}

std::vector<double> curve_grid(const RunConfig& cfg) {
  if (!cfg.d_grid.empty()) return cfg.d_grid;
  std::vector<double> grid(cfg.d_count);
  for (int k = 0; k < cfg.d_count; ++k) {
    const double s = static_cast<double>(k) / (cfg.d_count - 1);
    grid[k] = cfg.spacing == "geometric"
                  ? cfg.d_min * std::pow(cfg.d_max / cfg.d_min, s)
                  : cfg.d_min + s * (cfg.d_max - cfg.d_min);
  }
  return grid;
}

int cmd_hopf_curve(const RunConfig& cfg, const fs::path& out_dir,
                   std::ostream& out) {
  const ModelConfig model = build_model(cfg);
  const std::vector<double> grid = curve_grid(cfg);
  const HopfCurve curve = hopf_curve(model, grid);

  std::vector<std::vector<std::string>> cells;
  {
    // Successful rows plus failed grid points, merged in grid order.
    size_t ir = 0, irf = 0;
    for (double d : grid) {
      if (ir < curve.rows.size() &&
          std::abs(curve.rows[ir].d - d) <= 1e-12 * std::max(1.0, d)) {
        const auto& r = curve.rows[ir++];
        cells.push_back({csv_num(r.d), csv_num(r.tau0), csv_num(r.nu),
                         csv_num(r.theta), r.branch});
      } else if (irf < curve.failed.size() &&
                 std::abs(curve.failed[irf].first - d) <=
                     1e-12 * std::max(1.0, d)) {
        const std::string tok = "error:" + curve.failed[irf++].second;
        cells.push_back({csv_num(d), tok, tok, tok, tok});
      }
    }
  }
  write_csv_file(out_dir / "hopf_curve.csv",
                 {"d", "tau0", "nu", "theta", "branch"}, cells);

  std::vector<std::vector<std::string>> exp_cells;
  const bool pure = pure_delay_logistic(cfg);
  std::string exp_err = pure ? "" : "unsupported-law";
  if (pure) {
    try {
      (void)topology_index(model.A, model.m());
    } catch (const Error& e) {
      exp_err = e.kind();
    }
  }
  for (double d : grid) {
    if (exp_err.empty()) {
      exp_cells.push_back(
          {csv_num(d), csv_num(tau_expansion(model.A, model.m(), d).tau)});
    } else {
      exp_cells.push_back({csv_num(d), "error:" + exp_err});
    }
  }
  write_csv_file(out_dir / "expansion.csv", {"d", "tau_expansion"}, exp_cells);

  try {
    const TopologyIndex T = topology_index(model.A, model.m());
    out << "topology index T(A) = " << csv_num(T.value)
        << ", threshold limit at d -> 0 = pi/(2 m_" << T.q_hat + 1
        << ") = " << csv_num(T.tau_limit) << "\n";
    if (!pure)
      out << "note: the first-order threshold expansion assumes the "
             "pure-delay logistic law (a_hat = 0, b_hat = 1); expansion.csv "
             "carries error cells\n";
  } catch (const Error& e) {
    out << "note: topology index unavailable: " << e.what() << "\n";
  }
  for (const auto& w : curve.warnings) out << "warning: " << w << "\n";
  out << "wrote " << (out_dir / "hopf_curve.csv").string() << " ("
      << curve.rows.size() << " of " << grid.size() << " grid points)\n";
  return curve.rows.empty() ? 1 : 0;
}

int cmd_simulate(const RunConfig& cfg, const fs::path& out_dir,
                 std::ostream& out) {
  const ModelConfig model = build_model(cfg);
  const int n = model.n();
  const PerronData P = find_dstar(model.A, model.m());
  const Vec u0 = solve_u0(*model.law);
  const double m_min = model.m().minCoeff();

  struct RunResult {
    std::vector<std::string> cells;
    std::vector<std::string> notes;
    bool wrote_file = false;
    bool failed = false;
  };
  std::vector<RunResult> results(cfg.runs.size());

  auto work = [&](int k) {
    RunResult& res = results[k];
    const double d = cfg.runs[k].d;
    const double tau = cfg.runs[k].tau;
    res.cells = {std::to_string(k + 1), csv_num(d), csv_num(tau),
                 "", "", "", ""};
    const fs::path traj_path =
        out_dir / ("trajectory_" + std::to_string(k + 1) + ".csv");
    try {
      const bool extinct = d >= P.d_star;
      const Vec u_eq = extinct ? Vec(Vec::Zero(n))
                               : solve_equilibrium(model, d, u0).u;
      Vec hist_value = cfg.history_value
                           ? *cfg.history_value
                           : Vec(cfg.history_scale * (extinct ? u0 : u_eq));
      const History hist = History::constant(std::move(hist_value));
      const double t_end =
          cfg.t_end > 0.0 ? cfg.t_end : 100.0 * std::max(tau, 1.0 / m_min);
      const double step =
          cfg.step > 0.0 ? cfg.step : (tau > 0.0 ? tau / 64.0 : t_end / 4096.0);
      const Trajectory traj = integrate(model, d, tau, hist, t_end, step);
      traj.write_csv(traj_path.string());
      res.wrote_file = true;
      for (const auto& w : traj.warnings())
        res.notes.push_back("run " + std::to_string(k + 1) + ": " + w);
      const Asymptotics verdict = detect_asymptotics(traj, u_eq);
      if (const auto* c = std::get_if<Converged>(&verdict)) {
        res.cells[3] = "converged";
        res.cells[4] = csv_num(c->rate);
        res.cells[5] = "error:not-applicable";
        res.cells[6] = "error:not-applicable";
      } else if (const auto* p = std::get_if<Periodic>(&verdict)) {
        res.cells[3] = "periodic";
        res.cells[4] = "error:not-applicable";
        res.cells[5] = csv_num(p->amplitude);
        res.cells[6] = csv_num(p->period);
      } else {
        res.cells[3] = "undetermined";
        res.cells[4] = res.cells[5] = res.cells[6] = "error:undetermined";
        res.notes.push_back("run " + std::to_string(k + 1) + ": " +
                            std::get<Undetermined>(verdict).reason);
      }
    } catch (const Error& e) {
      res.failed = true;
      for (int c = 3; c < 7; ++c)
        if (res.cells[c].empty()) res.cells[c] = "error:" + e.kind();
      res.notes.push_back("run " + std::to_string(k + 1) + ": " + e.what());
    }
  };
  parallel_rows(static_cast<int>(results.size()), cfg.threads, work);

  std::vector<std::vector<std::string>> cells;
  int failed = 0;
  for (auto& res : results) {
    cells.push_back(std::move(res.cells));
    for (const auto& note : res.notes) out << "note: " << note << "\n";
    if (res.failed) ++failed;
    if (res.wrote_file) {
      // nothing further; the path is implied by the run number
    }
  }
  write_csv_file(out_dir / "verdicts.csv",
                 {"run", "d", "tau", "verdict", "rate", "amplitude", "period"},
                 cells);
  out << "wrote " << (out_dir / "verdicts.csv").string() << " ("
      << results.size() << " runs, " << failed << " failed)\n";
  return failed == static_cast<int>(results.size()) && failed > 0 ? 1 : 0;
}

int cmd_topology(const RunConfig& cfg, const fs::path& out_dir,
                 std::ostream& out) {
  if (!pure_delay_logistic(cfg))
    throw ValidationError(
        "the topology command assumes the pure-delay logistic law "
        "(a_hat = 0, b_hat = 1)");
  const auto law = std::make_shared<Logistic>(cfg.m, cfg.a_hat, cfg.b_hat);
  {
    const ValidationReport rep = validate_growth(*law);
    if (!rep.valid()) throw ValidationError(rep.violations.front());
  }

  struct Row {
    std::vector<std::string> cells;
    std::string note;
    bool has_T = false, has_tau = false;
    double T = 0.0, tau = 0.0;
    bool failed = false;
  };
  const bool with_tau = cfg.topology_d.has_value();
  const int ncols = with_tau ? 6 : 5;
  std::vector<Row> rows(cfg.matrices.size());

  auto work = [&](int i) {
    Row& row = rows[i];
    row.cells.assign(ncols, "");
    row.cells[0] = cfg.matrices[i].name;
    try {
      const DispersionMatrix A(cfg.matrices[i].entries);
      const TopologyIndex T = topology_index(A, cfg.m);
      row.cells[1] = csv_num(T.value);
      row.cells[2] = std::to_string(T.q_hat + 1);
      row.cells[3] = csv_num(T.tau_limit);
      row.cells[4] = csv_num(T.value > 0.0 ? 1.0 : (T.value < 0.0 ? -1.0 : 0.0));
      row.has_T = true;
      row.T = T.value;
      if (with_tau) {
        const ModelConfig model(A, law);
        const HopfCurve curve = hopf_curve(model, {*cfg.topology_d});
        const auto fam = curve.families.find(T.q_hat);
        if (fam == curve.families.end() || fam->second.empty())
          throw SolverError("continuation-failed",
                            "the dominant-patch crossing family did not reach "
                            "d = " + csv_num(*cfg.topology_d));
        row.cells[5] = csv_num(fam->second.front().tau0());
        row.has_tau = true;
        row.tau = fam->second.front().tau0();
      }
    } catch (const Error& e) {
      row.failed = !row.has_T;
      for (int c = 1; c < ncols; ++c)
        if (row.cells[c].empty()) row.cells[c] = "error:" + e.kind();
      row.note = cfg.matrices[i].name + ": " + e.what();
    }
  };
  parallel_rows(static_cast<int>(rows.size()), cfg.threads, work);

  std::vector<std::string> header = {"name", "T_of_A", "q_hat", "tau_limit",
                                     "predicted_slope_sign"};
  if (with_tau) header.push_back("tau_at_d");
  std::vector<std::vector<std::string>> cells;
  int failed = 0;
  for (auto& row : rows) {
    cells.push_back(row.cells);
    if (!row.note.empty()) out << "note: " << row.note << "\n";
    if (row.failed) ++failed;
  }
  write_csv_file(out_dir / "topology.csv", header, cells);

  for (const auto& row : rows)
    if (row.has_T) {
      out << row.cells[0] << ": T(A) = " << csv_num(row.T)
          << ", dominant patch " << row.cells[2]
          << ", threshold limit " << row.cells[3];
      if (row.has_tau)
        out << ", measured threshold at d = " << csv_num(*cfg.topology_d)
            << ": " << csv_num(row.tau);
      out << "\n";
    }

  // The index predicts the ordering of small-d thresholds: a larger T(A)
  // means a larger first threshold. Report both orderings side by side so
  // disagreements are visible rather than silently absorbed.
  if (with_tau) {
    std::vector<const Row*> both;
    for (const auto& row : rows)
      if (row.has_T && row.has_tau) both.push_back(&row);
    if (both.size() >= 2) {
      auto order_names = [&](auto key) {
        std::vector<const Row*> sorted = both;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [&](const Row* a, const Row* b) {
                           return key(a) > key(b);
                         });
        std::string s;
        for (size_t i = 0; i < sorted.size(); ++i)
          s += (i ? " > " : "") + sorted[i]->cells[0];
        return s;
      };
      const std::string by_T = order_names([](const Row* r) { return r->T; });
      const std::string by_tau =
          order_names([](const Row* r) { return r->tau; });
      out << "prediction: a larger index implies a larger threshold at small "
             "dispersal\n";
      out << "index ordering (by T(A), larger first): " << by_T << "\n";
      out << "measured threshold ordering at d = " << csv_num(*cfg.topology_d)
          << " (larger first): " << by_tau << "\n";
      if (by_T == by_tau)
        out << "the index ordering matches the measured threshold ordering\n";
      else
        out << "NOTE: the index ordering and the measured threshold ordering "
               "disagree; at this d the first-order prediction does not "
               "determine the comparison\n";
    }
  }
  return failed == static_cast<int>(rows.size()) && failed > 0 ? 1 : 0;
}

}  // namespace

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("top level must be an object");
  check_keys(j, {"command", "model", "params"}, "top level");

  RunConfig cfg;
  cfg.command = read_str(require_key(j, "command", "top level"), "'command'");
  const bool known_command =
      cfg.command == "validate" || cfg.command == "analyze" ||
      cfg.command == "hopf-curve" || cfg.command == "simulate" ||
      cfg.command == "topology";
  if (!known_command)
    throw ConfigError("unknown command '" + cfg.command + "'");

  const json& jm = require_key(j, "model", "top level");
  if (!jm.is_object()) throw ConfigError("'model' must be an object");
  check_keys(jm, {"matrix", "law"}, "model");
  if (jm.contains("matrix"))
    cfg.matrix = read_mat(jm.at("matrix"), "model.matrix");
  else if (cfg.command != "topology")
    throw ConfigError("missing key 'matrix' in model");

  const json& jl = require_key(jm, "law", "model");
  if (!jl.is_object()) throw ConfigError("'model.law' must be an object");
  check_keys(jl, {"name", "m", "a_hat", "b_hat"}, "model.law");
  const std::string law_name =
      read_str(require_key(jl, "name", "model.law"), "model.law.name");
  if (law_name != "logistic")
    throw ConfigError("unknown growth law '" + law_name +
                      "' (only 'logistic' is available)");
  cfg.m = read_vec(require_key(jl, "m", "model.law"), "model.law.m");
  const Eigen::Index n = cfg.m.size();
  cfg.a_hat = jl.contains("a_hat") ? read_vec(jl.at("a_hat"), "model.law.a_hat")
                                   : Vec(Vec::Zero(n));
  cfg.b_hat = jl.contains("b_hat") ? read_vec(jl.at("b_hat"), "model.law.b_hat")
                                   : Vec(Vec::Ones(n));
  if (cfg.a_hat.size() != n || cfg.b_hat.size() != n)
    throw ConfigError("model.law coefficient arrays must match m in length");

  const bool has_params = j.contains("params");
  const json empty_params = json::object();
  const json& jp = has_params ? j.at("params") : empty_params;
  if (has_params && !jp.is_object())
    throw ConfigError("'params' must be an object");

  if (cfg.command == "validate") {
    check_keys(jp, {}, "params");
  } else if (cfg.command == "analyze") {
    if (!has_params) throw ConfigError("missing key 'params' in top level");
    check_keys(jp, {"d_values"}, "params");
    cfg.d_values = read_list(require_key(jp, "d_values", "params"),
                             "params.d_values");
    for (double d : cfg.d_values)
      if (!(d > 0.0))
        throw ConfigError("params.d_values entries must be positive");
  } else if (cfg.command == "hopf-curve") {
    if (!has_params) throw ConfigError("missing key 'params' in top level");
    check_keys(jp, {"d_grid", "d_min", "d_max", "d_count", "spacing"},
               "params");
    if (jp.contains("d_grid")) {
      if (jp.contains("d_min") || jp.contains("d_max") ||
          jp.contains("d_count") || jp.contains("spacing"))
        throw ConfigError(
            "params.d_grid excludes d_min/d_max/d_count/spacing");
      cfg.d_grid = read_list(jp.at("d_grid"), "params.d_grid");
      if (!std::is_sorted(cfg.d_grid.begin(), cfg.d_grid.end()))
        throw ConfigError("params.d_grid must be sorted ascending");
      for (double d : cfg.d_grid)
        if (!(d > 0.0)) throw ConfigError("params.d_grid entries must be positive");
    } else {
      cfg.d_min = read_num(require_key(jp, "d_min", "params"), "params.d_min");
      cfg.d_max = read_num(require_key(jp, "d_max", "params"), "params.d_max");
      cfg.d_count =
          read_int(require_key(jp, "d_count", "params"), "params.d_count");
      if (jp.contains("spacing"))
        cfg.spacing = read_str(jp.at("spacing"), "params.spacing");
      if (cfg.spacing != "linear" && cfg.spacing != "geometric")
        throw ConfigError("params.spacing must be 'linear' or 'geometric'");
      if (!(cfg.d_min > 0.0) || !(cfg.d_max > cfg.d_min))
        throw ConfigError("need 0 < d_min < d_max");
      if (cfg.d_count < 2) throw ConfigError("params.d_count must be >= 2");
    }
  } else if (cfg.command == "simulate") {
    if (!has_params) throw ConfigError("missing key 'params' in top level");
    check_keys(jp, {"runs", "t_end", "step", "history_scale", "history_value"},
               "params");
    const json& jruns = require_key(jp, "runs", "params");
    if (!jruns.is_array() || jruns.empty())
      throw ConfigError("params.runs must be a nonempty array");
    for (size_t k = 0; k < jruns.size(); ++k) {
      const std::string where = "params.runs[" + std::to_string(k) + "]";
      if (!jruns[k].is_object()) throw ConfigError(where + " must be an object");
      check_keys(jruns[k], {"d", "tau"}, where);
      RunConfig::Run run;
      run.d = read_num(require_key(jruns[k], "d", where), where + ".d");
      run.tau = read_num(require_key(jruns[k], "tau", where), where + ".tau");
      if (run.d < 0.0 || run.tau < 0.0)
        throw ConfigError(where + " needs d >= 0 and tau >= 0");
      cfg.runs.push_back(run);
    }
    if (jp.contains("t_end")) {
      cfg.t_end = read_num(jp.at("t_end"), "params.t_end");
      if (!(cfg.t_end > 0.0)) throw ConfigError("params.t_end must be positive");
    }
    if (jp.contains("step")) {
      cfg.step = read_num(jp.at("step"), "params.step");
      if (!(cfg.step > 0.0)) throw ConfigError("params.step must be positive");
    }
    if (jp.contains("history_scale")) {
      cfg.history_scale = read_num(jp.at("history_scale"), "params.history_scale");
      if (!(cfg.history_scale > 0.0))
        throw ConfigError("params.history_scale must be positive");
    }
    if (jp.contains("history_value")) {
      cfg.history_value = read_vec(jp.at("history_value"), "params.history_value");
      if (cfg.history_value->size() != n)
        throw ConfigError("params.history_value length must match m");
    }
  } else {  // topology
    if (!has_params) throw ConfigError("missing key 'params' in top level");
    check_keys(jp, {"matrices", "d"}, "params");
    const json& jmats = require_key(jp, "matrices", "params");
    if (!jmats.is_array() || jmats.empty())
      throw ConfigError("params.matrices must be a nonempty array");
    for (size_t i = 0; i < jmats.size(); ++i) {
      const std::string where = "params.matrices[" + std::to_string(i) + "]";
      if (!jmats[i].is_object()) throw ConfigError(where + " must be an object");
      check_keys(jmats[i], {"name", "entries"}, where);
      NamedMatrix nm;
      nm.name = read_str(require_key(jmats[i], "name", where), where + ".name");
      if (nm.name.empty()) throw ConfigError(where + ".name must be nonempty");
      nm.entries = read_mat(require_key(jmats[i], "entries", where),
                            where + ".entries");
      cfg.matrices.push_back(std::move(nm));
    }
    if (jp.contains("d")) {
      const double d = read_num(jp.at("d"), "params.d");
      if (!(d > 0.0)) throw ConfigError("params.d must be positive");
      cfg.topology_d = d;
    }
  }
  return cfg;
}

ModelConfig build_model(const RunConfig& cfg) {
  if (cfg.matrix.size() == 0)
    throw ValidationError("the config has no dispersal matrix");
  DispersionMatrix A(cfg.matrix);
  auto law = std::make_shared<Logistic>(cfg.m, cfg.a_hat, cfg.b_hat);
  const ValidationReport rep = validate_growth(*law);
  if (!rep.valid()) {
    std::string msg = "growth law invalid:";
    for (const auto& v : rep.violations) msg += " " + v + ";";
    throw ValidationError(msg);
  }
  return ModelConfig(std::move(A), std::move(law));
}

int run_command(const RunConfig& cfg, const std::filesystem::path& out_dir,
                std::ostream& out) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw ConfigError("cannot create output directory " + out_dir.string() +
                      ": " + ec.message());
  if (cfg.command == "validate") return cmd_validate(cfg, out);
  if (cfg.command == "analyze") return cmd_analyze(cfg, out_dir, out);
  if (cfg.command == "hopf-curve") return cmd_hopf_curve(cfg, out_dir, out);
  if (cfg.command == "simulate") return cmd_simulate(cfg, out_dir, out);
  if (cfg.command == "topology") return cmd_topology(cfg, out_dir, out);
  throw ConfigError("unknown command '" + cfg.command + "'");
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Delayed patch-model analysis: equilibria, Hopf thresholds, "
               "topology index, and direct simulation"};
  app.name("patch-hopf");
  std::string command, config_path, out_dir;
  int threads = 1;
  app.add_option("command", command,
                 "one of: validate, analyze, hopf-curve, simulate, topology")
      ->required();
  app.add_option("--config", config_path, "JSON config file")->required();
  app.add_option("--out", out_dir, "output directory for CSV files")
      ->required();
  app.add_option("--threads", threads, "worker threads for grid rows")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (cfg.command != command)
      throw ConfigError("config declares command '" + cfg.command +
                        "' but '" + command + "' was invoked");
    cfg.threads = threads;
    return run_command(cfg, out_dir, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << e.kind() << " error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace patchhopf::cli
