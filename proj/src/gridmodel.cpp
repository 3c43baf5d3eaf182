#include "gridcert/gridmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridcert/errors.hpp"

namespace gridcert {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ParseError(path + ": " + msg);
}

double number_at(const json& obj, const std::string& key, const std::string& path) {
  const std::string here = path + "." + key;
  auto it = obj.find(key);
  if (it == obj.end()) fail(here, "missing required field");
  if (!it->is_number()) fail(here, "expected a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) fail(here, "non-finite value");
  return v;
}

int integer_at(const json& obj, const std::string& key, const std::string& path) {
  const std::string here = path + "." + key;
  auto it = obj.find(key);
  if (it == obj.end()) fail(here, "missing required field");
  if (!it->is_number_integer()) fail(here, "expected an integer");
  return it->get<int>();
}

const json& array_at(const json& obj, const std::string& key, const std::string& path, bool required) {
  static const json empty = json::array();
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) fail(path + "." + key, "missing required field");
    return empty;
  }
  if (!it->is_array()) fail(path + "." + key, "expected an array");
  return *it;
}

Complex parse_pole(const json& v, const std::string& path) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
    return {v[0].get<double>(), v[1].get<double>()};
  }
  fail(path, "pole must be a number or a [re, im] pair");
}

json pole_to_json(const Complex& z) {
  if (z.imag() == 0.0) return z.real();
  return json::array({z.real(), z.imag()});
}

void validate_poles(const std::vector<Complex>& poles, const std::string& path) {
  if (poles.size() != 3) fail(path, "expected 3 desired poles (one per state)");
  for (std::size_t k = 0; k < poles.size(); ++k) {
    if (!std::isfinite(poles[k].real()) || !std::isfinite(poles[k].imag())) fail(path, "non-finite pole");
    if (!(poles[k].real() < 0.0)) fail(path + "[" + std::to_string(k) + "]", "pole must have negative real part");
  }
  for (const auto& z : poles) {
    if (z.imag() == 0.0) continue;
    const bool has_conjugate = std::any_of(poles.begin(), poles.end(), [&](const Complex& w) {
      return std::abs(w - std::conj(z)) <= 1e-12 * std::max(1.0, std::abs(z));
    });
    if (!has_conjugate) fail(path, "pole set is not closed under conjugation");
  }
}

}  // namespace

double GridSpec::omega_b() const { return 2.0 * std::numbers::pi * base_frequency_hz; }

const Generator& GridSpec::generator(BusId bus) const {
  auto it = std::find_if(generators.begin(), generators.end(), [&](const Generator& g) { return g.bus == bus; });
  if (it == generators.end()) throw InvalidInput("no generator at bus " + std::to_string(bus));
  return *it;
}

std::vector<BusId> GridSpec::buses() const {
  std::vector<BusId> ids;
  for (const auto& g : generators) ids.push_back(g.bus);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::map<BusId, double> GridSpec::neighbours(BusId bus) const {
  std::map<BusId, double> out;
  for (const auto& l : lines) {
    if (l.from == bus) out[l.to] = l.X;
    if (l.to == bus) out[l.from] = l.X;
  }
  return out;
}

void validate_grid(const GridSpec& grid) {
  if (!(grid.base_frequency_hz > 0.0) || !std::isfinite(grid.base_frequency_hz)) {
    fail("$.base_frequency_hz", "base frequency must be positive");
  }
  if (grid.generators.empty()) fail("$.generators", "at least one generator is required");
  std::set<BusId> ids;
  for (std::size_t k = 0; k < grid.generators.size(); ++k) {
    const auto& g = grid.generators[k];
    const std::string path = "$.generators[" + std::to_string(k) + "]";
    if (!ids.insert(g.bus).second) fail(path + ".bus", "duplicate generator bus " + std::to_string(g.bus));
    if (!(g.M > 0.0)) fail(path + ".M", "nonpositive inertia");
    if (!(g.T_T > 0.0)) fail(path + ".T_T", "nonpositive turbine time constant");
    if (!(g.D >= 0.0)) fail(path + ".D", "negative damping");
    if (g.poles) validate_poles(*g.poles, path + ".control");
  }
  std::set<std::pair<BusId, BusId>> pairs;
  for (std::size_t k = 0; k < grid.lines.size(); ++k) {
    const auto& l = grid.lines[k];
    const std::string path = "$.lines[" + std::to_string(k) + "]";
    if (!ids.count(l.from)) fail(path + ".from", "dangling bus reference " + std::to_string(l.from));
    if (!ids.count(l.to)) fail(path + ".to", "dangling bus reference " + std::to_string(l.to));
    if (l.from == l.to) fail(path, "self-loop on bus " + std::to_string(l.from));
    if (!(l.X > 0.0)) fail(path + ".X", "nonpositive reactance");
    if (!pairs.insert({std::min(l.from, l.to), std::max(l.from, l.to)}).second) {
      fail(path, "duplicate line between buses " + std::to_string(l.from) + " and " + std::to_string(l.to));
    }
  }
  for (std::size_t k = 0; k < grid.disturbances.size(); ++k) {
    const auto& d = grid.disturbances[k];
    const std::string path = "$.disturbances[" + std::to_string(k) + "]";
    if (!ids.count(d.bus)) fail(path + ".bus", "dangling bus reference " + std::to_string(d.bus));
    if (!(d.t_step >= 0.0)) fail(path + ".t_step", "negative step time");
  }
}

GridSpec parse_grid(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("$", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("$", "expected an object");

  GridSpec grid;
  if (doc.contains("base_frequency_hz")) grid.base_frequency_hz = number_at(doc, "base_frequency_hz", "$");

  const json& gens = array_at(doc, "generators", "$", true);
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const std::string path = "$.generators[" + std::to_string(k) + "]";
    const json& g = gens[k];
    if (!g.is_object()) fail(path, "expected an object");
    Generator gen;
    gen.bus = integer_at(g, "bus", path);
    gen.M = number_at(g, "M", path);
    gen.D = number_at(g, "D", path);
    gen.T_T = number_at(g, "T_T", path);
    if (auto it = g.find("control"); it != g.end()) {
      if (!it->is_array()) fail(path + ".control", "expected a list of desired poles");
      std::vector<Complex> poles;
      for (std::size_t p = 0; p < it->size(); ++p) {
        poles.push_back(parse_pole((*it)[p], path + ".control[" + std::to_string(p) + "]"));
      }
      gen.poles = std::move(poles);
    }
    grid.generators.push_back(std::move(gen));
  }

  const json& lines = array_at(doc, "lines", "$", false);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const std::string path = "$.lines[" + std::to_string(k) + "]";
    const json& l = lines[k];
    if (!l.is_object()) fail(path, "expected an object");
    grid.lines.push_back(Line{integer_at(l, "from", path), integer_at(l, "to", path), number_at(l, "X", path)});
  }

  const json& dist = array_at(doc, "disturbances", "$", false);
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const std::string path = "$.disturbances[" + std::to_string(k) + "]";
    const json& d = dist[k];
    if (!d.is_object()) fail(path, "expected an object");
    Disturbance dd;
    dd.bus = integer_at(d, "bus", path);
    dd.delta_PL = number_at(d, "delta_PL", path);
    if (d.contains("t_step")) dd.t_step = number_at(d, "t_step", path);
    grid.disturbances.push_back(dd);
  }

  validate_grid(grid);
  return grid;
}

GridSpec load_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open grid file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_grid(ss.str());
}

std::string serialize_grid(const GridSpec& grid) {
  json doc;
  doc["base_frequency_hz"] = grid.base_frequency_hz;
  doc["generators"] = json::array();
  for (const auto& g : grid.generators) {
    json j{{"bus", g.bus}, {"M", g.M}, {"D", g.D}, {"T_T", g.T_T}};
    if (g.poles) {
      json poles = json::array();
      for (const auto& z : *g.poles) poles.push_back(pole_to_json(z));
      j["control"] = std::move(poles);
    }
    doc["generators"].push_back(std::move(j));
  }
  doc["lines"] = json::array();
  for (const auto& l : grid.lines) doc["lines"].push_back({{"from", l.from}, {"to", l.to}, {"X", l.X}});
  doc["disturbances"] = json::array();
  for (const auto& d : grid.disturbances) {
    doc["disturbances"].push_back({{"bus", d.bus}, {"delta_PL", d.delta_PL}, {"t_step", d.t_step}});
  }
  return doc.dump(2);
}

std::vector<SubsystemModel> build_subsystems(const GridSpec& grid) {
  validate_grid(grid);
  const double wb = grid.omega_b();
  std::vector<SubsystemModel> out;
  for (BusId bus : grid.buses()) {
    const Generator& g = grid.generator(bus);
    const auto nbrs = grid.neighbours(bus);
    double line_sum = 0.0;
    for (const auto& [j, X] : nbrs) line_sum += 1.0 / X;

    SubsystemModel m;
    m.bus = bus;
    m.A_hat = Matrix::Zero(3, 3);
    m.A_hat(0, 1) = 1.0;
    m.A_hat(1, 0) = -(wb / g.M) * line_sum;
    m.A_hat(1, 1) = -g.D / g.M;
    m.A_hat(1, 2) = wb / g.M;
    m.A_hat(2, 2) = -1.0 / g.T_T;
    m.B = Vector::Zero(3);
    m.B(2) = 1.0 / g.T_T;
    m.F = Vector::Zero(3);
    m.F(1) = -wb / g.M;
    for (const auto& [j, X] : nbrs) {
      Matrix c = Matrix::Zero(3, 3);
      c(1, 0) = (wb / g.M) / X;
      m.couplings.emplace(j, std::move(c));
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::map<BusId, Eigen::Index> state_offsets(const std::vector<SubsystemModel>& subsystems) {
  std::map<BusId, Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& s : subsystems) {
    if (!offsets.emplace(s.bus, at).second) throw InvalidInput("duplicate subsystem " + std::to_string(s.bus));
    at += s.order();
  }
  return offsets;
}

Matrix assemble_full(const std::vector<SubsystemModel>& subsystems, const std::map<BusId, FeedbackGains>& gains) {
  const auto offsets = state_offsets(subsystems);
  Eigen::Index n = 0;
  for (const auto& s : subsystems) n += s.order();
  std::map<BusId, Eigen::Index> orders;
  for (const auto& s : subsystems) orders[s.bus] = s.order();

  Matrix full = Matrix::Zero(n, n);
  for (const auto& s : subsystems) {
    const Eigen::Index ni = s.order();
    const Eigen::Index oi = offsets.at(s.bus);
    if (s.B.size() != ni) throw InvalidInput("assemble_full: B has wrong length at bus " + std::to_string(s.bus));
    Matrix Ai = s.A_hat;
    const auto g = gains.find(s.bus);
    if (g != gains.end() && g->second.local.size() != 0) {
      if (g->second.local.size() != ni) {
        throw InvalidInput("assemble_full: local gain length mismatch at bus " + std::to_string(s.bus));
      }
      Ai -= s.B * g->second.local.transpose();
    }
    full.block(oi, oi, ni, ni) = Ai;

    std::set<BusId> touched;
    for (const auto& [j, c] : s.couplings) touched.insert(j);
    if (g != gains.end()) {
      for (const auto& [j, k] : g->second.global) touched.insert(j);
    }
    for (BusId j : touched) {
      auto oj = offsets.find(j);
      if (oj == offsets.end()) {
        throw InvalidInput("assemble_full: bus " + std::to_string(s.bus) + " references missing neighbour " +
                           std::to_string(j));
      }
      const Eigen::Index nj = orders.at(j);
      Matrix Aij = Matrix::Zero(ni, nj);
      if (auto c = s.couplings.find(j); c != s.couplings.end()) {
        if (c->second.rows() != ni || c->second.cols() != nj) {
          throw InvalidInput("assemble_full: coupling dimension mismatch");
        }
        Aij = c->second;
      }
      if (g != gains.end()) {
        if (auto k = g->second.global.find(j); k != g->second.global.end()) {
          if (k->second.size() != nj) throw InvalidInput("assemble_full: global gain length mismatch");
          Aij -= s.B * k->second.transpose();
        }
      }
      full.block(oi, oj->second, ni, nj) = Aij;
    }
  }
  return full;
}

Matrix assemble_disturbance_input(const std::vector<SubsystemModel>& subsystems) {
  const auto offsets = state_offsets(subsystems);
  Eigen::Index n = 0;
  for (const auto& s : subsystems) n += s.order();
  Matrix F = Matrix::Zero(n, static_cast<Eigen::Index>(subsystems.size()));
  for (std::size_t k = 0; k < subsystems.size(); ++k) {
    const auto& s = subsystems[k];
    F.block(offsets.at(s.bus), static_cast<Eigen::Index>(k), s.order(), 1) = s.F;
  }
  return F;
}

}  // namespace gridcert
