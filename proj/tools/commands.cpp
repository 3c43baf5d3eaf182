#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "gridcert/assess.hpp"
#include "gridcert/certify.hpp"
#include "gridcert/digest.hpp"
#include "gridcert/errors.hpp"
#include "gridcert/gridmodel.hpp"
#include "gridcert/protocol.hpp"
#include "gridcert/sim.hpp"

namespace gridcert::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct CommonOptions {
  std::string grid_file;
  std::string out_dir;
  std::string variant = "transformed";
  double poles_scale = 1.0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput(path.string() + ": cannot write file");
  out << text;
}

std::vector<Variant> variants_for(const std::string& v) {
  if (v == "both") return {Variant::Transformed, Variant::Original};
  return {parse_variant(v)};
}

ordered_json complex_json(const Complex& z) {
  if (z.imag() == 0.0) return z.real();
  return ordered_json::array({z.real(), z.imag()});
}

ordered_json vector_json(const Vector& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

ordered_json report_json(const ConditionReport& r) { return ordered_json::parse(to_json(r).dump()); }

ordered_json manifest(const std::string& command, const std::string& input, const std::string& bytes,
                      ordered_json options) {
  ordered_json m;
  m["command"] = command;
  m["input"] = input;
  m["input_sha256"] = sha256_hex(bytes);
  m["options"] = std::move(options);
  m["version"] = GRIDCERT_VERSION;
  return m;
}

ordered_json oracle_json(const Matrix& full) {
  ordered_json o;
  ordered_json eig = ordered_json::array();
  for (const auto& z : eigenvalues(full)) eig.push_back(ordered_json::array({z.real(), z.imag()}));
  o["max_real_part"] = spectral_abscissa(full);
  o["hurwitz"] = is_hurwitz(full);
  o["eigenvalues"] = std::move(eig);
  return o;
}

void emit(std::ostream& out, const ordered_json& doc, const std::string& out_dir, const std::string& name) {
  const std::string text = doc.dump(2) + "\n";
  out << text;
  if (!out_dir.empty()) write_file(fs::path(out_dir) / name, text);
}

int exit_for(Verdict v) { return v == Verdict::Stable ? kExitCertified : kExitInconclusive; }

// ---------------------------------------------------------------- assess

int cmd_assess(const CommonOptions& opt, bool use_global, std::ostream& out) {
  const std::string bytes = read_file(opt.grid_file);
  const GridSpec grid = parse_grid(bytes);
  const auto poles = poles_from_grid(grid, opt.poles_scale);
  const Assessment a = assess_grid(grid, poles, use_global, variants_for(opt.variant));

  ordered_json options{{"global", use_global}, {"variant", opt.variant}, {"poles_scale", opt.poles_scale},
                       {"out", opt.out_dir}};
  ordered_json doc;
  doc["manifest"] = manifest("assess", opt.grid_file, bytes, std::move(options));

  ordered_json designs = ordered_json::object();
  for (const auto& [id, d] : a.designs) {
    ordered_json p = ordered_json::array();
    for (const auto& z : d.poles.poles()) p.push_back(complex_json(z));
    designs[std::to_string(id)] = {{"poles", std::move(p)}, {"K", vector_json(d.K)}, {"sigma_M", d.modal.sigma_M}};
  }
  doc["designs"] = std::move(designs);

  ordered_json vs = ordered_json::array();
  for (const auto& v : a.variants) {
    ordered_json reports = ordered_json::array();
    for (const auto& r : v.s.reports) reports.push_back(report_json(r));
    vs.push_back({{"variant", to_string(v.variant)},
                  {"S", matrix_json(v.s.S)},
                  {"reports", std::move(reports)},
                  {"verdict", to_string(v.verdict)}});
  }
  doc["variants"] = std::move(vs);
  doc["verdict"] = to_string(a.verdict);
  doc["oracle"] = oracle_json(assemble_full(a.subsystems, feedback_of(a.final_gains())));
  emit(out, doc, opt.out_dir, "assess.json");
  return exit_for(a.verdict);
}

// ---------------------------------------------------------------- protocol

struct ProtocolOptions {
  int max_retries = 3;
  bool no_global = false;
  bool trace_full = false;
  bool selective = false;
  int max_rounds = 200;
};

DsaOptions dsa_options(const CommonOptions& opt, const ProtocolOptions& p) {
  DsaOptions o;
  if (opt.variant == "both") throw InvalidInput("protocol agents evaluate a single variant; use original or transformed");
  o.agent.variant = parse_variant(opt.variant);
  o.agent.max_retries = p.max_retries;
  o.agent.allow_global = !p.no_global;
  o.agent.selective_escalation = p.selective;
  o.max_rounds = p.max_rounds;
  return o;
}

ordered_json protocol_options_json(const CommonOptions& opt, const ProtocolOptions& p, const DsaOptions& o) {
  return {{"max_retries", p.max_retries},
          {"global", !p.no_global},
          {"selective_escalation", p.selective},
          {"max_rounds", p.max_rounds},
          {"variant", opt.variant},
          {"poles_scale", opt.poles_scale},
          {"retry_pole_scale", o.agent.retry.pole_scale},
          {"trace_full", p.trace_full},
          {"out", opt.out_dir}};
}

ordered_json protocol_summary(const DsaResult& r, const std::vector<SubsystemModel>& subsystems) {
  ordered_json s;
  s["verdict"] = to_string(r.verdict);
  s["rounds"] = r.rounds;
  std::map<std::string, int> counts;
  for (const auto& m : r.trace) counts[to_string(m.kind())]++;
  ordered_json c = ordered_json::object();
  for (const auto& [k, v] : counts) c[k] = v;
  s["message_counts"] = std::move(c);
  ordered_json agents = ordered_json::array();
  for (const auto& [id, a] : r.agents) {
    ordered_json history = ordered_json::array();
    for (const auto& rep : a.report_history) history.push_back(report_json(rep));
    agents.push_back({{"agent", id},
                      {"escalated", a.escalated},
                      {"retries", a.retry_count},
                      {"met", a.met},
                      {"phase", to_string(a.phase)},
                      {"history", std::move(history)}});
  }
  s["agents"] = std::move(agents);
  s["oracle"] = oracle_json(assemble_full(subsystems, feedback_of(r.gains())));
  return s;
}

int cmd_protocol(const CommonOptions& opt, const ProtocolOptions& p, std::ostream& out) {
  const std::string bytes = read_file(opt.grid_file);
  const GridSpec grid = parse_grid(bytes);
  const auto poles = poles_from_grid(grid, opt.poles_scale);
  const DsaOptions o = dsa_options(opt, p);
  const auto subsystems = build_subsystems(grid);
  const DsaResult r = run_dsa(subsystems, poles, o);

  const std::string dir = opt.out_dir.empty() ? "." : opt.out_dir;
  write_file(fs::path(dir) / "trace.jsonl", serialize_trace(r.trace, p.trace_full));

  ordered_json doc;
  doc["manifest"] = manifest("protocol", opt.grid_file, bytes, protocol_options_json(opt, p, o));
  const ordered_json summary = protocol_summary(r, subsystems);
  for (const auto& [k, v] : summary.items()) doc[k] = v;
  doc["trace"] = (fs::path(dir) / "trace.jsonl").string();
  emit(out, doc, dir, "protocol.json");
  return exit_for(r.verdict);
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  double dt = 1e-3;
  double t_end = 10.0;
  std::optional<double> step_pu;
  bool force = false;
  int sample_stride = 1;
};

int cmd_simulate(const CommonOptions& opt, const ProtocolOptions& p, const SimulateOptions& so, std::ostream& out,
                 std::ostream& err) {
  const std::string bytes = read_file(opt.grid_file);
  const GridSpec grid = parse_grid(bytes);
  const auto poles = poles_from_grid(grid, opt.poles_scale);
  const DsaOptions o = dsa_options(opt, p);
  const auto subsystems = build_subsystems(grid);
  const DsaResult dsa = run_dsa(subsystems, poles, o);
  if (dsa.verdict != Verdict::Stable && !so.force) {
    err << "gridcert: design is not certified stable; pass --force to simulate anyway\n";
    return kExitInconclusive;
  }

  SimConfig cfg;
  cfg.dt = so.dt;
  cfg.t_end = so.t_end;
  cfg.disturbances = grid.disturbances;
  if (so.step_pu) {
    for (auto& d : cfg.disturbances) d.delta_PL = *so.step_pu;
  }
  const ClosedLoopSystem sys = make_closed_loop_system(subsystems, feedback_of(dsa.gains()));
  const SimResult res = simulate(sys, cfg);
  const SteadyStateReport ss = steady_state_check(res, grid);
  double last_step = 0.0;
  for (const auto& d : cfg.disturbances) last_step = std::max(last_step, d.t_step);
  const auto settle = settling_time(res, 1e-4, last_step);
  const auto samples = state_sample_messages(res, dsa, so.sample_stride);

  const std::string dir = opt.out_dir.empty() ? "." : opt.out_dir;
  write_file(fs::path(dir) / "simulation.csv", simulation_csv(res));
  write_file(fs::path(dir) / "state_samples.jsonl", serialize_trace(samples, p.trace_full));

  ordered_json options = protocol_options_json(opt, p, o);
  options["dt"] = so.dt;
  options["t_end"] = so.t_end;
  options["step_pu"] = so.step_pu ? ordered_json(*so.step_pu) : ordered_json("from-file");
  options["force"] = so.force;
  options["sample_stride"] = so.sample_stride;
  ordered_json dist = ordered_json::array();
  for (const auto& d : cfg.disturbances) dist.push_back({{"bus", d.bus}, {"delta_PL", d.delta_PL}, {"t_step", d.t_step}});
  options["disturbances"] = std::move(dist);

  ordered_json doc;
  doc["manifest"] = manifest("simulate", opt.grid_file, bytes, std::move(options));
  doc["protocol_verdict"] = to_string(dsa.verdict);
  ordered_json omega = ordered_json::object();
  for (const auto& [b, w] : ss.omega_abs) omega[std::to_string(b)] = w;
  doc["steady_state"] = {{"omega_abs_t_end", std::move(omega)},
                         {"max_omega_abs_t_end", ss.max_omega_abs},
                         {"max_state_derivative_t_end", ss.max_derivative},
                         {"sum_Pm_t_end", ss.sum_Pm},
                         {"sum_PL_t_end", ss.sum_PL},
                         {"power_balance_residual", ss.power_balance_residual}};
  doc["settling_time_s"] = settle ? ordered_json(*settle) : ordered_json(nullptr);
  doc["samples"] = res.samples();
  doc["state_sample_messages"] = samples.size();
  doc["csv"] = (fs::path(dir) / "simulation.csv").string();
  emit(out, doc, dir, "simulation_summary.json");
  return kExitCertified;
}

// ---------------------------------------------------------------- report

struct CsvScan {
  std::optional<double> settling_time;
  double t_end = 0.0;
  double last_disturbance_change = 0.0;
};

CsvScan scan_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::map<int, double> last_d;
  CsvScan scan;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 8) throw ParseError("simulation.csv: malformed row");
    const double t = v[0];
    if (times.empty() || times.back() != t) {
      times.push_back(t);
      rows.emplace_back();
    }
    rows.back().insert(rows.back().end(), {v[2], v[3], v[4]});
    const int bus = static_cast<int>(v[1]);
    auto it = last_d.find(bus);
    if (it != last_d.end() && it->second != v[7]) scan.last_disturbance_change = t;
    last_d[bus] = v[7];
  }
  if (times.empty()) return scan;
  scan.t_end = times.back();
  const auto& final_row = rows.back();
  for (std::size_t k = times.size(); k-- > 0;) {
    if (times[k] < scan.last_disturbance_change) break;
    if (rows[k].size() != final_row.size()) break;
    double d2 = 0.0;
    for (std::size_t c = 0; c < final_row.size(); ++c) d2 += (rows[k][c] - final_row[c]) * (rows[k][c] - final_row[c]);
    if (std::sqrt(d2) < 1e-4) {
      scan.settling_time = times[k];
    } else {
      break;
    }
  }
  return scan;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss << std::setprecision(prec) << std::fixed << v;
  return ss.str();
}

std::string sci(double v) {
  std::ostringstream ss;
  ss << std::setprecision(3) << std::scientific << v;
  return ss.str();
}

void render_reports(std::ostream& md, const nlohmann::json& reports) {
  md << "| agent | diagonal | sum offdiag | margin | met |\n|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    double sum = 0.0;
    for (const auto& [k, v] : r.at("offdiag").items()) sum += std::abs(v.get<double>());
    md << "| " << r.at("agent").get<int>() << " | " << fmt(r.at("diagonal").get<double>()) << " | " << fmt(sum)
       << " | " << fmt(r.at("margin").get<double>()) << " | " << (r.at("met").get<bool>() ? "yes" : "no") << " |\n";
  }
  md << "\n";
}

void render_oracle(std::ostream& md, const nlohmann::json& oracle) {
  md << "Full closed-loop eigenvalues (max real part " << fmt(oracle.at("max_real_part").get<double>())
     << ", Hurwitz: " << (oracle.at("hurwitz").get<bool>() ? "yes" : "no") << ")\n\n";
  md << "| # | real | imag |\n|---|---|---|\n";
  int k = 1;
  for (const auto& z : oracle.at("eigenvalues")) {
    md << "| " << k++ << " | " << fmt(z[0].get<double>()) << " | " << fmt(z[1].get<double>()) << " |\n";
  }
  md << "\n";
}

int cmd_report(const std::string& dir, std::ostream& out, std::ostream& err) {
  const fs::path root(dir);
  const bool has_assess = fs::exists(root / "assess.json");
  const bool has_protocol = fs::exists(root / "protocol.json");
  const bool has_sim = fs::exists(root / "simulation_summary.json");
  if (!has_assess && !has_protocol && !has_sim) {
    err << "gridcert: no run artifacts (assess.json, protocol.json, simulation_summary.json) in " << dir << "\n";
    return kExitError;
  }
  std::ostringstream md;
  md << "# gridcert report\n\n";
  if (has_assess) {
    const auto doc = nlohmann::json::parse(read_file((root / "assess.json").string()));
    md << "## Assessment (" << doc.at("manifest").at("input").get<std::string>() << ")\n\n";
    for (const auto& v : doc.at("variants")) {
      md << "### Variant " << v.at("variant").get<std::string>() << ": " << v.at("verdict").get<std::string>()
         << "\n\n";
      render_reports(md, v.at("reports"));
    }
    md << "Verdict: **" << doc.at("verdict").get<std::string>() << "**\n\n";
    render_oracle(md, doc.at("oracle"));
  }
  if (has_protocol) {
    const auto doc = nlohmann::json::parse(read_file((root / "protocol.json").string()));
    md << "## Protocol\n\n";
    md << "Verdict: **" << doc.at("verdict").get<std::string>() << "** after " << doc.at("rounds").get<int>()
       << " rounds\n\n";
    md << "| message kind | count |\n|---|---|\n";
    for (const auto& [k, v] : doc.at("message_counts").items()) md << "| " << k << " | " << v.get<int>() << " |\n";
    md << "\n| agent | retries | escalated | met |\n|---|---|---|---|\n";
    nlohmann::json finals = nlohmann::json::array();
    for (const auto& a : doc.at("agents")) {
      md << "| " << a.at("agent").get<int>() << " | " << a.at("retries").get<int>() << " | "
         << (a.at("escalated").get<bool>() ? "yes" : "no") << " | " << (a.at("met").get<bool>() ? "yes" : "no")
         << " |\n";
      if (!a.at("history").empty()) finals.push_back(a.at("history").back());
    }
    md << "\nFinal condition rows:\n\n";
    render_reports(md, finals);
    render_oracle(md, doc.at("oracle"));
  }
  if (has_sim) {
    const auto doc = nlohmann::json::parse(read_file((root / "simulation_summary.json").string()));
    const auto& ss = doc.at("steady_state");
    md << "## Simulation\n\n";
    md << "| quantity | value |\n|---|---|\n";
    md << "| max abs omega at t_end (rad/s) | " << sci(ss.at("max_omega_abs_t_end").get<double>()) << " |\n";
    md << "| max abs state derivative at t_end | " << sci(ss.at("max_state_derivative_t_end").get<double>()) << " |\n";
    md << "| sum Pm at t_end (pu) | " << fmt(ss.at("sum_Pm_t_end").get<double>(), 6) << " |\n";
    md << "| sum PL at t_end (pu) | " << fmt(ss.at("sum_PL_t_end").get<double>(), 6) << " |\n";
    md << "| power balance residual (pu) | " << sci(ss.at("power_balance_residual").get<double>()) << " |\n";
    if (fs::exists(root / "simulation.csv")) {
      const CsvScan scan = scan_csv(read_file((root / "simulation.csv").string()));
      md << "| settling time, norm(x - x(t_end)) < 1e-4 (s) | "
         << (scan.settling_time ? fmt(*scan.settling_time, 3) : std::string("not settled")) << " |\n";
    }
    md << "\n";
  }
  out << md.str();
  return kExitCertified;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compositional small-signal stability certification for interconnected grids", "gridcert"};
  app.require_subcommand(1);
  app.set_version_flag("--version", GRIDCERT_VERSION);

  CommonOptions common;
  ProtocolOptions proto;
  SimulateOptions simopt;
  bool use_global = false;
  bool no_global_flag = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("grid", common.grid_file, "Grid description (JSON)")->required();
    sub->add_option("--variant", common.variant, "original | transformed | both")
        ->check(CLI::IsMember({"original", "transformed", "both"}));
    sub->add_option("--poles-scale", common.poles_scale, "Uniform scale applied to every desired pole");
    sub->add_option("--out", common.out_dir, "Directory for artifacts");
  };

  auto* assess = app.add_subcommand("assess", "Design local (and optionally global) control and certify");
  add_common(assess);
  auto* g1 = assess->add_flag("--global", use_global, "Add interconnection-minimising global gains");
  auto* ng1 = assess->add_flag("--no-global", no_global_flag, "Local control only (default)");
  g1->excludes(ng1);

  auto add_protocol = [&](CLI::App* sub) {
    add_common(sub);
    sub->add_option("--max-retries", proto.max_retries, "Local redesign attempts before escalation")
        ->check(CLI::NonNegativeNumber);
    auto* ng = sub->add_flag("--no-global", proto.no_global, "Never escalate to global control");
    auto* g = sub->add_flag("--global", "Allow escalation to global control (default)");
    g->excludes(ng);
    sub->add_flag("--selective", proto.selective, "Escalate one neighbour coupling at a time");
  };

  auto* protocol = app.add_subcommand("protocol", "Run the distributed assessment protocol");
  add_protocol(protocol);
  protocol->add_flag("--trace-full", proto.trace_full, "Include full payloads in the trace");
  protocol->add_option("--max-rounds", proto.max_rounds, "Round limit for the scheduler")->check(CLI::PositiveNumber);

  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate the certified closed loop under load steps");
  add_protocol(simulate_cmd);
  simulate_cmd->add_option("--dt", simopt.dt, "Integration step (s)")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--t-end", simopt.t_end, "End time (s)")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--step-pu", simopt.step_pu, "Override every load-step magnitude (pu)");
  simulate_cmd->add_flag("--force", simopt.force, "Simulate even if not certified");
  simulate_cmd->add_flag("--trace-full", proto.trace_full, "Include full payloads in state_samples.jsonl");
  simulate_cmd->add_option("--sample-stride", simopt.sample_stride, "Steps between recorded state samples")
      ->check(CLI::PositiveNumber);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Summarise artifacts of earlier runs");
  report->add_option("dir", report_dir, "Artifact directory")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitCertified : kExitError;
  }

  try {
    if (assess->parsed()) return cmd_assess(common, use_global, out);
    if (protocol->parsed()) return cmd_protocol(common, proto, out);
    if (simulate_cmd->parsed()) return cmd_simulate(common, proto, simopt, out, err);
    if (report->parsed()) return cmd_report(report_dir, out, err);
  } catch (const DivergedSimulation& e) {
    err << "gridcert: " << e.what() << "\n";
    return kExitError;
  } catch (const Error& e) {
    err << "gridcert: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "gridcert: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace gridcert::cli
