// Command-line driver: generate branching topologies, optimize them by level
// continuation, sweep the interfacial-energy coefficient, render patterns and
// build scheme-comparison reports.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "branchopt/automaton.hpp"
#include "branchopt/energy.hpp"
#include "branchopt/geometry.hpp"
#include "branchopt/optimizer.hpp"
#include "branchopt/report.hpp"

namespace fs = std::filesystem;
using namespace branchopt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDegenerate = 2;
constexpr int kExitNoConvergence = 3;

struct RunConfig {
  std::string scheme = "new";
  double epsilon = std::nan("");
  double eps_tilde = std::nan("");
  double sigma = std::nan("");
  double L = 0.5;
  std::string N = "fixed:2";
  int K = 0;  // generate-only level count; 0 = use K_start
  int K_start = 4;
  int K_max = 14;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::string window;
  bool timings = false;
  double g_tol = 1e-9;
  int max_iters = 5000;
  double delta_geom = 1e-9;
  std::string preset;
  std::string eps_list = "0.004,0.008,0.016,0.032";
  std::string geometry;  // input geometry file for render
};

// Flat key=value files with optional [scheme] sections; section keys apply
// when that scheme is selected and override the global ones.
std::map<std::string, std::string> parse_config_file(const std::string& path,
                                                     const std::string& scheme_sel) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> global, scoped;
  std::string line, section;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("config line without '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (section.empty())
      global[key] = val;
    else if (section == scheme_sel)
      scoped[key] = val;
  }
  for (auto& [k, v] : scoped) global[k] = v;
  return global;
}

void apply_config_map(const std::map<std::string, std::string>& kv, RunConfig& rc,
                      const std::vector<std::string>& cli_set) {
  auto overridden = [&](const std::string& key) {
    for (const auto& s : cli_set)
      if (s == key) return true;
    return false;
  };
  for (const auto& [k, v] : kv) {
    if (overridden(k)) continue;  // flags win
    if (k == "scheme") rc.scheme = v;
    else if (k == "epsilon") rc.epsilon = std::stod(v);
    else if (k == "eps_tilde") rc.eps_tilde = std::stod(v);
    else if (k == "sigma") rc.sigma = std::stod(v);
    else if (k == "L") rc.L = std::stod(v);
    else if (k == "N") rc.N = v;
    else if (k == "K") rc.K = std::stoi(v);
    else if (k == "K_start") rc.K_start = std::stoi(v);
    else if (k == "K_max") rc.K_max = std::stoi(v);
    else if (k == "out") rc.out = v;
    else if (k == "seed") rc.seed = std::stoull(v);
    else if (k == "window") rc.window = v;
    else if (k == "timings") rc.timings = v == "1" || v == "true";
    else if (k == "g_tol") rc.g_tol = std::stod(v);
    else if (k == "max_iters") rc.max_iters = std::stoi(v);
    else if (k == "delta_geom") rc.delta_geom = std::stod(v);
    else if (k == "preset") rc.preset = v;
    else if (k == "eps_list") rc.eps_list = v;
    else if (k == "geometry") rc.geometry = v;
    else throw std::runtime_error("unknown config key: " + k);
  }
}

void apply_preset(RunConfig& rc) {
  if (rc.preset.empty()) return;
  if (rc.preset != "paper") throw std::runtime_error("unknown preset: " + rc.preset);
  rc.eps_tilde = 2.0 * std::sqrt(5.0) * 1e-3;
  rc.sigma = 10.0;
  rc.epsilon = std::nan("");
  rc.L = 0.5;
  rc.N = "fixed:2";
  rc.K_start = 4;
  rc.K_max = 14;
}

double resolve_epsilon(const RunConfig& rc) {
  const bool has_eps = !std::isnan(rc.epsilon);
  const bool has_diffuse = !std::isnan(rc.eps_tilde) || !std::isnan(rc.sigma);
  if (has_eps && has_diffuse)
    throw std::runtime_error("give either epsilon or (eps_tilde, sigma), not both");
  if (has_eps) return rc.epsilon;
  if (std::isnan(rc.eps_tilde) || std::isnan(rc.sigma))
    throw std::runtime_error("epsilon unspecified: need epsilon or both eps_tilde and sigma");
  return epsilon_from_diffuse(rc.eps_tilde, rc.sigma);
}

OptimizerConfig make_optimizer_config(const RunConfig& rc) {
  OptimizerConfig cfg;
  if (rc.N == "free") {
    cfg.n_mode = OptimizerConfig::NMode::Free;
  } else if (rc.N.rfind("fixed:", 0) == 0) {
    cfg.n_mode = OptimizerConfig::NMode::Fixed;
    cfg.N_fixed = std::stod(rc.N.substr(6));
  } else {
    throw std::runtime_error("N must be 'free' or 'fixed:<value>'");
  }
  cfg.K_start = rc.K_start;
  cfg.K_max = rc.K_max;
  cfg.g_tol = rc.g_tol;
  cfg.max_iters = rc.max_iters;
  cfg.delta_geom = rc.delta_geom;
  cfg.seed = rc.seed;
  return cfg;
}

Window parse_window(const std::string& s) {
  Window w;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf", &w.x0, &w.x1, &w.y0, &w.y1) != 4)
    throw std::runtime_error("window must be x0,x1,y0,y1");
  return w;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
  return vals;
}

int cmd_generate(const RunConfig& rc) {
  const SchemeName sn = scheme_from_string(rc.scheme);
  const Scheme& sch = scheme(sn);
  const int K = rc.K > 0 ? rc.K : rc.K_start;
  const Topology top = build_topology(sch, K);

  std::string words;
  for (int k = 0; k <= K; ++k) words += top.word(k).str() + "\n";
  write_file(fs::path(rc.out) / "words.txt", words);

  std::string cells;
  for (int k = 0; k <= K; ++k) cells += periodic_cell_word(top, k).str() + "\n";
  write_file(fs::path(rc.out) / "cell_words.txt", cells);

  GeometrySpec spec;
  spec.scheme = sn;
  spec.K = K;
  spec.theta = std::sqrt(sch.theta_min * sch.theta_max);
  spec.L = rc.L;
  spec.l = 0.5 * rc.L;
  spec.N = rc.N.rfind("fixed:", 0) == 0 ? std::stod(rc.N.substr(6)) : 2.0;
  spec.epsilon = resolve_epsilon(rc);
  const DofVector y = initial_geometry(top, spec);
  write_file(fs::path(rc.out) / "geometry.json", geometry_to_json(top, spec, y));
  return kExitOk;
}

int cmd_optimize(const RunConfig& rc) {
  const SchemeName sn = scheme_from_string(rc.scheme);
  const OptimizerConfig cfg = make_optimizer_config(rc);
  const double eps = resolve_epsilon(rc);

  const OptimizationTrace trace = continuation(sn, cfg, eps, rc.L);
  write_file(fs::path(rc.out) / "trace.csv", trace_to_csv(trace, rc.timings));
  write_file(fs::path(rc.out) / "trace.json", trace_to_json(trace, rc.timings));

  if (!trace.final_Y.lines.empty()) {
    const GeometrySpec spec = trace.final_spec;
    const Topology top = build_topology(scheme(sn), spec.K);
    write_file(fs::path(rc.out) / "geometry.json", geometry_to_json(top, spec, trace.final_Y));
    Window win;
    if (!rc.window.empty()) {
      win = parse_window(rc.window);
    } else {
      win = Window{spec.x(spec.K), spec.x(0), 3.0 / 8.0, 5.0 / 8.0};
    }
    write_file(fs::path(rc.out) / "pattern.svg", render_svg(top, spec, trace.final_Y, win));
  }
  if (trace.degenerate) return kExitDegenerate;
  if (!trace.converged) return kExitNoConvergence;
  return kExitOk;
}

int cmd_sweep(const RunConfig& rc) {
  const SchemeName sn = scheme_from_string(rc.scheme);
  const OptimizerConfig cfg = make_optimizer_config(rc);
  const std::vector<double> eps_list = parse_list(rc.eps_list);

  const SweepResult sweep = scaling_sweep(sn, cfg, eps_list, rc.L);
  write_file(fs::path(rc.out) / "sweep.csv", sweep_to_csv(sweep));
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const OptimizationTrace tr = continuation(sn, cfg, eps_list[i], rc.L);
    write_file(fs::path(rc.out) / ("trace_eps" + std::to_string(i) + ".csv"),
               trace_to_csv(tr, rc.timings));
  }
  if (!sweep.valid) return kExitNoConvergence;
  return kExitOk;
}

int cmd_render(const RunConfig& rc) {
  const fs::path src = rc.geometry.empty() ? fs::path(rc.out) / "geometry.json" : fs::path(rc.geometry);
  std::ifstream in(src);
  if (!in) throw std::runtime_error("cannot open geometry file: " + src.string());
  std::stringstream buf;
  buf << in.rdbuf();
  GeometrySpec spec;
  DofVector y;
  geometry_from_json(buf.str(), spec, y);
  const Topology top = build_topology(scheme(spec.scheme), spec.K);
  Window win = rc.window.empty() ? Window{spec.x(spec.K), spec.x(0), 3.0 / 8.0, 5.0 / 8.0}
                                 : parse_window(rc.window);
  write_file(fs::path(rc.out) / "render.svg", render_svg(top, spec, y, win));
  return kExitOk;
}

int cmd_report(const RunConfig& rc) {
  const OptimizerConfig cfg = make_optimizer_config(rc);
  const double eps = resolve_epsilon(rc);
  std::vector<SchemeName> schemes;
  if (rc.scheme == "all") {
    schemes = {SchemeName::NEW, SchemeName::L, SchemeName::KM};
  } else {
    std::stringstream ss(rc.scheme);
    std::string item;
    while (std::getline(ss, item, ',')) schemes.push_back(scheme_from_string(item));
  }
  const ComparisonReport rep = compare(schemes, cfg, eps, rc.L);
  write_file(fs::path(rc.out) / "report.csv", comparison_to_csv(rep));
  write_file(fs::path(rc.out) / "report.json", comparison_to_json(rep, rc.timings));
  bool any_degenerate = false, all_ok = true;
  for (const auto& row : rep.rows) {
    any_degenerate = any_degenerate || row.degenerate;
    all_ok = all_ok && (row.ok || row.degenerate);
  }
  if (!all_ok) return kExitNoConvergence;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"branchopt: optimal branching patterns of a reduced sharp-interface model"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string config_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key=value config file ([scheme] sections)");
    cmd->add_option("--scheme", rc.scheme, "new | km | l (report: comma list or 'all')");
    cmd->add_option("--epsilon", rc.epsilon, "interfacial energy coefficient");
    cmd->add_option("--eps-tilde", rc.eps_tilde, "diffuse-model coefficient");
    cmd->add_option("--sigma", rc.sigma, "diffuse-model well depth");
    cmd->add_option("--L", rc.L, "domain length");
    cmd->add_option("--N", rc.N, "'fixed:<v>' or 'free'");
    cmd->add_option("--K", rc.K, "level count (generate)");
    cmd->add_option("--K-start", rc.K_start, "continuation start level");
    cmd->add_option("--K-max", rc.K_max, "continuation end level");
    cmd->add_option("--out", rc.out, "output directory");
    cmd->add_option("--seed", rc.seed, "run seed (recorded in outputs)");
    cmd->add_option("--window", rc.window, "render window x0,x1,y0,y1");
    cmd->add_flag("--timings", rc.timings, "write wall times into trace files");
    cmd->add_option("--g-tol", rc.g_tol, "gradient tolerance (relative)");
    cmd->add_option("--max-iters", rc.max_iters, "iteration cap per level");
    cmd->add_option("--delta-geom", rc.delta_geom, "ordering margin");
    cmd->add_option("--preset", rc.preset, "'paper' experiment preset");
    cmd->add_option("--eps-list", rc.eps_list, "sweep epsilons, comma separated");
    cmd->add_option("--geometry", rc.geometry, "input geometry file (render)");
  };

  CLI::App* generate = app.add_subcommand("generate", "emit words and an initial geometry");
  CLI::App* optimize = app.add_subcommand("optimize", "level-continuation optimization");
  CLI::App* sweep = app.add_subcommand("sweep", "epsilon sweep with scaling fit");
  CLI::App* render = app.add_subcommand("render", "render a stored geometry to SVG");
  CLI::App* report = app.add_subcommand("report", "scheme comparison report");
  for (CLI::App* cmd : {generate, optimize, sweep, render, report}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    std::vector<std::string> cli_set;
    for (const auto* opt : cmd->get_options())
      if (opt->count() > 0 && opt->get_name().size() > 2)
        cli_set.push_back(opt->get_name().substr(2));
    if (!config_path.empty())
      apply_config_map(parse_config_file(config_path, rc.scheme), rc, cli_set);
    apply_preset(rc);

    if (cmd == generate) return cmd_generate(rc);
    if (cmd == optimize) return cmd_optimize(rc);
    if (cmd == sweep) return cmd_sweep(rc);
    if (cmd == render) return cmd_render(rc);
    if (cmd == report) return cmd_report(rc);
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
