#include "physprior/cli/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "physprior/error.hpp"
#include "physprior/numkit/random.hpp"
#include "physprior/parallel.hpp"
#include "physprior/train/metrics.hpp"

namespace physprior::cli {

namespace nk = numkit;
using hyperbolic::GridField1D;
using numkit::Tensor;
using train::PairDataset;
using train::FieldDataset;
using train::VortexDataset;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& s, std::size_t line) {
  const char* b = s.c_str();
  char* end = nullptr;
  double v = std::strtod(b, &end);
  if (s.empty() || end != b + s.size())
    throw IoError("dataset line " + std::to_string(line) + ": '" + s + "' is not a number");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

hamiltonian::AnalyticSystem analytic_system(const std::string& name) {
  if (name == "pendulum") return hamiltonian::AnalyticSystem::pendulum();
  if (name == "spring") return hamiltonian::AnalyticSystem::spring();
  if (name == "nonseparable") return hamiltonian::AnalyticSystem::nonseparable();
  throw ConfigError("system '" + name + "' is not a phase-space system (expected pendulum, spring or nonseparable)");
}

train::FieldProblem field_problem(const std::string& name) {
  if (name == "linear") return train::FieldProblem::Linear1C;
  if (name == "euler") return train::FieldProblem::Sod;
  throw ConfigError("system '" + name + "' is not a field problem (expected linear or euler)");
}

std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    char* end = nullptr;
    unsigned long long v = std::strtoull(item.c_str(), &end, 10);
    if (*end != '\0' || v == 0) throw ConfigError("field_hidden: '" + s + "' is not a list of positive widths");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

train::TrainConfig train_config(const RunConfig& cfg, std::uint64_t shuffle_seed) {
  train::TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch = cfg.batch;
  tc.schedule = {cfg.lr, cfg.lr_step, cfg.lr_gamma};
  tc.seed = shuffle_seed;
  tc.clip_norm = cfg.clip_norm;
  return tc;
}

train::FieldDataConfig field_config(const RunConfig& cfg) {
  train::FieldDataConfig fc;
  fc.problem = field_problem(cfg.system);
  fc.n_samples = cfg.n_train + cfg.n_val;
  fc.t_span = cfg.t_train;
  fc.val_fraction = static_cast<double>(cfg.n_val) / static_cast<double>(fc.n_samples);
  fc.noise = cfg.noise_sigma;
  fc.noise_inputs = cfg.noise_inputs;
  fc.noise_targets = cfg.noise_targets;
  fc.seed = stream_seed(cfg, SeedStream::Data);
  fc.threads = cfg.threads;
  fc.speed = cfg.speed;
  fc.cells = cfg.cells;
  fc.dx = cfg.dx;
  fc.window = cfg.window;
  fc.sod_dx = cfg.dx;
  fc.t0_max = cfg.t0_max;
  fc.jitter = cfg.jitter;
  return fc;
}

train::VortexDataConfig vortex_config(const RunConfig& cfg) {
  train::VortexDataConfig vc;
  vc.n_samples = cfg.n_train + cfg.n_val;
  vc.val_fraction = static_cast<double>(cfg.n_val) / static_cast<double>(vc.n_samples);
  vc.t_span = cfg.t_train;
  vc.min_vortices = cfg.vortex_min;
  vc.max_vortices = cfg.vortex_max;
  vc.spread = cfg.spread;
  vc.min_separation = cfg.min_separation;
  vc.forcing.amplitude = cfg.forcing;
  vc.grid.n = cfg.grid_cells;
  vc.seed = stream_seed(cfg, SeedStream::Data);
  vc.threads = cfg.threads;
  return vc;
}

std::string series_csv(const std::string& column, const std::vector<double>& t, const std::vector<double>& v) {
  std::ostringstream os;
  train::write_eval_csv(os, column, t, v);
  return os.str();
}

}  // namespace

ExperimentKind family_kind(const std::string& family) {
  if (family == "taylor-net" || family == "ode-rk4" || family == "nssnn" || family == "hrk")
    return ExperimentKind::Hamiltonian;
  if (family == "roenet" || family == "roe") return ExperimentKind::Field;
  if (family == "vortex-dynamics" || family == "lvm") return ExperimentKind::Vortex;
  throw ConfigError("unknown model family '" + family + "'");
}

std::string kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Hamiltonian: return "hamiltonian";
    case ExperimentKind::Field: return "field";
    case ExperimentKind::Vortex: return "vortex";
  }
  return "?";
}

std::uint64_t stream_seed(const RunConfig& cfg, SeedStream s) {
  return nk::derive_seed(cfg.seed, static_cast<std::uint64_t>(s));
}

RunConfig resolve_config(const std::string& preset, const std::vector<std::pair<std::string, std::string>>& ini,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::string name = preset;
  if (name.empty()) {
    for (const auto& [k, v] : ini)
      if (k == "preset") name = v;
  }
  if (name.empty()) throw ConfigError("no preset given (use --preset or a configuration file with a preset key)");
  RunConfig c = preset_config(name);
  auto apply = [&](const std::vector<std::pair<std::string, std::string>>& kvs) {
    for (const auto& [k, v] : kvs) {
      if (k == "preset") {
        if (v != name) throw ConfigError("configuration is for preset '" + v + "', not '" + name + "'");
        continue;
      }
      set_config_value(c, k, v);
      c.explicit_keys.insert(k);
    }
  };
  apply(ini);
  apply(overrides);
  finalize_config(c);
  validate_config(c);
  return c;
}

std::string config_text(const RunConfig& cfg) {
  std::ostringstream os;
  echo_config(os, cfg);
  return os.str();
}

void Artifacts::add(const std::string& name, std::string content) {
  for (auto& [n, c] : files) {
    if (n == name) {
      c = std::move(content);
      return;
    }
  }
  files.emplace_back(name, std::move(content));
}

const std::string& Artifacts::get(const std::string& name) const {
  for (const auto& [n, c] : files)
    if (n == name) return c;
  throw Error("no artifact named '" + name + "'");
}

bool Artifacts::has(const std::string& name) const {
  for (const auto& f : files)
    if (f.first == name) return true;
  return false;
}

// ---------------------------------------------------------------- datasets

Dataset generate_dataset(const RunConfig& cfg) {
  switch (family_kind(cfg.family)) {
    case ExperimentKind::Hamiltonian: {
      train::HamiltonianDataConfig dc;
      dc.system = analytic_system(cfg.system);
      dc.n_train = cfg.n_train;
      dc.n_val = cfg.n_val;
      dc.t_span = cfg.t_train;
      dc.reference_dt = cfg.reference_dt;
      dc.noise = cfg.noise_sigma;
      dc.box_lo = -cfg.box;
      dc.box_hi = cfg.box;
      dc.seed = stream_seed(cfg, SeedStream::Data);
      return train::make_hamiltonian_dataset(dc);
    }
    case ExperimentKind::Field:
      return train::make_roenet_dataset(field_config(cfg));
    case ExperimentKind::Vortex:
      return train::make_vortex_dataset(vortex_config(cfg));
  }
  throw ConfigError("unreachable");
}

std::string dataset_text(const RunConfig& cfg, const Dataset& data) {
  std::ostringstream os;
  auto meta = [&](const std::string& k, const std::string& v) { os << "# @" << k << " = " << v << '\n'; };
  if (const auto* d = std::get_if<PairDataset>(&data)) {
    if (family_kind(cfg.family) != ExperimentKind::Hamiltonian) throw ConfigError("dataset kind does not match family");
    os << "# dataset = hamiltonian\n";
    meta("n_train", std::to_string(d->n_train));
    meta("n_val", std::to_string(d->n_val));
    meta("dim", std::to_string(d->dim()));
    meta("t_span", fmt(d->t_span));
    meta("noise", fmt(d->noise));
    for (const auto& key : config_keys()) os << "# " << key << " = " << get_config_value(cfg, key) << '\n';
    std::size_t n = d->dim();
    os << "split";
    for (const char* col : {"q0", "p0", "q1", "p1"})
      for (std::size_t i = 1; i <= n; ++i) os << ',' << col << '_' << i;
    os << '\n';
    for (std::size_t r = 0; r < d->rows(); ++r) {
      os << (r < d->n_train ? "train" : "val");
      for (const Tensor* t : {&d->q0, &d->p0, &d->q1, &d->p1})
        for (std::size_t i = 0; i < n; ++i) os << ',' << fmt(t->at(r, i));
      os << '\n';
    }
  } else if (const auto* d = std::get_if<FieldDataset>(&data)) {
    os << "# dataset = field\n";
    meta("n_train", std::to_string(d->n_train));
    meta("n_val", std::to_string(d->n_val));
    meta("cells", std::to_string(d->cells));
    meta("comps", std::to_string(d->comps));
    meta("dx", fmt(d->dx));
    meta("bc", d->bc == hyperbolic::Boundary::Periodic ? "periodic" : "replicate");
    meta("t_span", fmt(d->t_span));
    meta("noise", fmt(d->noise));
    for (const auto& key : config_keys()) os << "# " << key << " = " << get_config_value(cfg, key) << '\n';
    os << "sample,j";
    for (const char* col : {"u0", "u1"})
      for (std::size_t c = 1; c <= d->comps; ++c) os << ',' << col << '_' << c;
    os << '\n';
    std::size_t samples = d->n_train + d->n_val;
    for (std::size_t s = 0; s < samples; ++s) {
      for (std::size_t j = 0; j < d->cells; ++j) {
        std::size_t r = s * d->cells + j;
        os << s << ',' << j;
        for (const Tensor* t : {&d->u0, &d->u1})
          for (std::size_t c = 0; c < d->comps; ++c) os << ',' << fmt(t->at(r, c));
        os << '\n';
      }
    }
  } else {
    const auto& v = std::get<VortexDataset>(data);
    os << "# dataset = vortex\n";
    meta("n_train", std::to_string(v.n_train));
    meta("n_val", std::to_string(v.n_val));
    meta("t_span", fmt(v.t_span));
    meta("generated", std::to_string(v.generated));
    meta("rejected", std::to_string(v.rejected));
    double reg = v.samples.empty() ? 0.1 : v.samples.front().start.reg;
    meta("reg", fmt(reg));
    for (const auto& key : config_keys()) os << "# " << key << " = " << get_config_value(cfg, key) << '\n';
    os << "sample,role,particle,x,y,gamma,target_x,target_y\n";
    for (std::size_t s = 0; s < v.samples.size(); ++s) {
      const auto& smp = v.samples[s];
      for (std::size_t i = 0; i < smp.start.size(); ++i)
        os << s << ",start," << i << ',' << fmt(smp.start.X.at(i, 0)) << ',' << fmt(smp.start.X.at(i, 1)) << ','
           << fmt(smp.start.gamma[i]) << ',' << fmt(smp.target.at(i, 0)) << ',' << fmt(smp.target.at(i, 1)) << '\n';
      for (std::size_t i = 0; i < smp.truth.size(); ++i)
        os << s << ",truth," << i << ',' << fmt(smp.truth.X.at(i, 0)) << ',' << fmt(smp.truth.X.at(i, 1)) << ','
           << fmt(smp.truth.gamma[i]) << ",,\n";
    }
  }
  return os.str();
}

Dataset parse_dataset(const std::string& text, RunConfig& cfg) {
  std::istringstream is(text);
  std::string line, kind;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, std::string>> echo;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = trim(line.substr(1));
      auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      std::string k = trim(body.substr(0, eq)), v = trim(body.substr(eq + 1));
      if (k == "dataset") {
        kind = v;
      } else if (!k.empty() && k[0] == '@') {
        meta[k.substr(1)] = v;
      } else {
        echo.emplace_back(k, v);
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    rows.push_back(split_csv(line));
    row_lines.push_back(lineno);
  }
  if (kind.empty()) throw IoError("dataset: missing '# dataset = <kind>' line");
  cfg = RunConfig{};
  for (const auto& [k, v] : echo) {
    set_config_value(cfg, k, v);
    cfg.explicit_keys.insert(k);
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = meta.find(k);
    if (it == meta.end()) throw IoError("dataset: missing '@" + k + "' entry");
    return it->second;
  };
  auto count = [&](const std::string& k) { return static_cast<std::size_t>(parse_number(need(k), 0)); };

  if (kind == "hamiltonian") {
    PairDataset d;
    d.n_train = count("n_train");
    d.n_val = count("n_val");
    std::size_t n = count("dim");
    d.t_span = parse_number(need("t_span"), 0);
    d.noise = parse_number(need("noise"), 0);
    std::size_t total = d.n_train + d.n_val;
    if (rows.size() != total) throw IoError("dataset: expected " + std::to_string(total) + " rows");
    d.q0 = Tensor({total, n});
    d.p0 = Tensor({total, n});
    d.q1 = Tensor({total, n});
    d.p1 = Tensor({total, n});
    for (std::size_t r = 0; r < total; ++r) {
      const auto& f = rows[r];
      if (f.size() != 1 + 4 * n) throw IoError("dataset line " + std::to_string(row_lines[r]) + ": wrong field count");
      Tensor* ts[4] = {&d.q0, &d.p0, &d.q1, &d.p1};
      for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t i = 0; i < n; ++i) ts[b]->at(r, i) = parse_number(f[1 + b * n + i], row_lines[r]);
    }
    return d;
  }
  if (kind == "field") {
    FieldDataset d;
    d.n_train = count("n_train");
    d.n_val = count("n_val");
    d.cells = count("cells");
    d.comps = count("comps");
    d.dx = parse_number(need("dx"), 0);
    const auto& bc = need("bc");
    if (bc != "periodic" && bc != "replicate") throw IoError("dataset: unknown boundary '" + bc + "'");
    d.bc = bc == "periodic" ? hyperbolic::Boundary::Periodic : hyperbolic::Boundary::Replicate;
    d.t_span = parse_number(need("t_span"), 0);
    d.noise = parse_number(need("noise"), 0);
    std::size_t total = (d.n_train + d.n_val) * d.cells;
    if (rows.size() != total) throw IoError("dataset: expected " + std::to_string(total) + " rows");
    d.u0 = Tensor({total, d.comps});
    d.u1 = Tensor({total, d.comps});
    for (std::size_t r = 0; r < total; ++r) {
      const auto& f = rows[r];
      if (f.size() != 2 + 2 * d.comps)
        throw IoError("dataset line " + std::to_string(row_lines[r]) + ": wrong field count");
      for (std::size_t c = 0; c < d.comps; ++c) {
        d.u0.at(r, c) = parse_number(f[2 + c], row_lines[r]);
        d.u1.at(r, c) = parse_number(f[2 + d.comps + c], row_lines[r]);
      }
    }
    return d;
  }
  if (kind == "vortex") {
    VortexDataset d;
    d.n_train = count("n_train");
    d.n_val = count("n_val");
    d.t_span = parse_number(need("t_span"), 0);
    d.generated = count("generated");
    d.rejected = count("rejected");
    double reg = parse_number(need("reg"), 0);
    struct Acc {
      std::vector<vortex::Vec2> pos, truth_pos, target;
      std::vector<double> gamma, truth_gamma;
    };
    std::vector<Acc> acc;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& f = rows[r];
      std::size_t ln = row_lines[r];
      if (f.size() != 8) throw IoError("dataset line " + std::to_string(ln) + ": wrong field count");
      auto s = static_cast<std::size_t>(parse_number(f[0], ln));
      if (s > acc.size()) throw IoError("dataset line " + std::to_string(ln) + ": samples out of order");
      if (s == acc.size()) acc.emplace_back();
      vortex::Vec2 x{parse_number(f[3], ln), parse_number(f[4], ln)};
      double g = parse_number(f[5], ln);
      if (f[1] == "start") {
        acc[s].pos.push_back(x);
        acc[s].gamma.push_back(g);
        acc[s].target.push_back({parse_number(f[6], ln), parse_number(f[7], ln)});
      } else if (f[1] == "truth") {
        acc[s].truth_pos.push_back(x);
        acc[s].truth_gamma.push_back(g);
      } else {
        throw IoError("dataset line " + std::to_string(ln) + ": unknown role '" + f[1] + "'");
      }
    }
    if (acc.size() != d.n_train + d.n_val) throw IoError("dataset: sample count does not match the split");
    for (auto& a : acc) {
      if (a.pos.empty()) throw IoError("dataset: sample without detected vortices");
      train::VortexSample smp;
      smp.start = vortex::make_system(a.pos, a.gamma, reg, true);
      smp.target = Tensor({a.target.size(), 2});
      for (std::size_t i = 0; i < a.target.size(); ++i) {
        smp.target.at(i, 0) = a.target[i][0];
        smp.target.at(i, 1) = a.target[i][1];
      }
      if (!a.truth_pos.empty()) smp.truth = vortex::make_system(a.truth_pos, a.truth_gamma, reg, true);
      d.samples.push_back(std::move(smp));
    }
    return d;
  }
  throw IoError("dataset: unknown kind '" + kind + "'");
}

// ------------------------------------------------------------------ models

TrainedModel build_model(const RunConfig& cfg, const std::string& family, std::uint64_t init_seed) {
  TrainedModel tm;
  tm.cfg = cfg;
  tm.family = family;
  nk::Rng rng(init_seed);
  switch (family_kind(family)) {
    case ExperimentKind::Hamiltonian: {
      train::HamiltonianModelConfig mc;
      mc.family = train::parse_family(family);
      mc.dim = 1;
      mc.terms = cfg.terms;
      mc.taylor_hidden = cfg.taylor_hidden;
      mc.energy_hidden = cfg.energy_hidden;
      mc.energy_layers = cfg.energy_layers;
      mc.field_hidden = parse_widths(cfg.field_hidden);
      mc.omega = cfg.omega;
      tm.model = train::make_hamiltonian_model(tm.ps, mc, rng);
      break;
    }
    case ExperimentKind::Field: {
      if (family != "roenet") throw ConfigError("'" + family + "' is a classical solver, not a trainable family");
      std::size_t nc = field_problem(cfg.system) == train::FieldProblem::Sod ? 3 : 1;
      auto m = hyperbolic::make_roenet(tm.ps, nc, cfg.roenet_hidden_dim, rng, cfg.roenet_width, cfg.roenet_blocks);
      m.form = cfg.roenet_form == "fluctuation" ? hyperbolic::RoeNetForm::Fluctuation
                                                : hyperbolic::RoeNetForm::FluxSplit;
      tm.model = m;
      break;
    }
    case ExperimentKind::Vortex: {
      if (family != "vortex-dynamics")
        throw ConfigError("'" + family + "' is a classical solver, not a trainable family");
      auto net = vortex::make_dynamics_net(tm.ps, rng, cfg.vortex_width, cfg.vortex_blocks);
      net.use_local = cfg.vortex_local;
      tm.model = net;
      break;
    }
  }
  return tm;
}

TrainedModel train_model(const RunConfig& cfg, const std::string& family, const Dataset& data,
                         std::uint64_t init_seed, std::uint64_t shuffle_seed,
                         const std::function<void(const train::EpochRecord&)>& on_epoch) {
  TrainedModel tm = build_model(cfg, family, init_seed);
  auto tc = train_config(cfg, shuffle_seed);
  if (auto* m = std::get_if<train::HamiltonianModel>(&tm.model)) {
    const auto* d = std::get_if<PairDataset>(&data);
    if (!d) throw ConfigError("family '" + family + "' needs a phase-space pair dataset");
    tm.result = train::train_hamiltonian(*m, tm.ps, *d, cfg.dt, tc, on_epoch);
  } else if (auto* m = std::get_if<hyperbolic::RoeNetModel>(&tm.model)) {
    const auto* d = std::get_if<FieldDataset>(&data);
    if (!d) throw ConfigError("family roenet needs a field dataset");
    if (d->comps != m->nc) throw ConfigError("field dataset component count does not match the model");
    tm.result = train::train_roenet(*m, tm.ps, *d, cfg.dt, tc, on_epoch);
  } else {
    const auto* d = std::get_if<VortexDataset>(&data);
    if (!d) throw ConfigError("family vortex-dynamics needs a vortex dataset");
    tm.result = train::train_vortex_dynamics(std::get<vortex::DynamicsNet>(tm.model), tm.ps, *d, cfg.dt, tc, on_epoch);
  }
  return tm;
}

Checkpoint to_checkpoint(const TrainedModel& m) {
  KeyValues hyper;
  for (const auto& key : config_keys())
    hyper.emplace_back(key, key == "family" ? m.family : get_config_value(m.cfg, key));
  KeyValues meta;
  meta.emplace_back("producer", "physprior");
  meta.emplace_back("epochs_completed", std::to_string(m.result.history.size()));
  meta.emplace_back("diverged", m.result.diverged ? "1" : "0");
  meta.emplace_back("final_loss_train", m.result.history.empty() ? "nan" : fmt(m.result.history.back().loss_train));
  return make_checkpoint(family_tag(m.family), std::move(hyper), m.ps, m.cfg.seed, std::move(meta));
}

TrainedModel from_checkpoint(const Checkpoint& ck) {
  RunConfig cfg;
  for (const auto& [k, v] : ck.hyperparameters) {
    set_config_value(cfg, k, v);
    cfg.explicit_keys.insert(k);
  }
  std::string family = family_from_tag(ck.family);
  if (cfg.family != family) throw IoError("checkpoint: family tag and stored family disagree");
  TrainedModel tm = build_model(cfg, family, 0);
  restore_parameters(ck, tm.ps);
  return tm;
}

// --------------------------------------------------------------- evaluation

void Scalars::set(const std::string& name, double v) {
  for (auto& [n, x] : values) {
    if (n == name) {
      x = v;
      return;
    }
  }
  values.emplace_back(name, v);
}

double Scalars::get(const std::string& name) const {
  for (const auto& [n, x] : values)
    if (n == name) return x;
  throw Error("no scalar named '" + name + "'");
}

bool Scalars::has(const std::string& name) const {
  for (const auto& v : values)
    if (v.first == name) return true;
  return false;
}

namespace {

using integrate::PhaseState;

// Initial states of the evaluation orbits.
PhaseState<Tensor> hamiltonian_test_states(const RunConfig& cfg) {
  std::size_t n = std::max<std::size_t>(1, cfg.test_samples);
  Tensor q({n, 1}), p({n, 1});
  if (cfg.system == "spring") {
    // orbits on the radius-3 circle at evenly spaced phases
    for (std::size_t i = 0; i < n; ++i) {
      double th = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
      q[i] = 3.0 * std::sin(th);
      p[i] = -3.0 * std::cos(th);
    }
    return {q, p};
  }
  nk::Rng rng(stream_seed(cfg, SeedStream::Test));
  for (std::size_t i = 0; i < n;) {
    double a = rng.uniform(-cfg.box, cfg.box), b = rng.uniform(-cfg.box, cfg.box);
    // pendulum orbits restricted to librations that stay inside the box
    if (cfg.system == "pendulum" && 0.5 * b * b - std::cos(a) > -std::cos(cfg.box)) continue;
    q[i] = a;
    p[i] = b;
    ++i;
  }
  return {q, p};
}

Evaluation evaluate_hamiltonian(const train::HamiltonianModel& m, const numkit::ParameterSet& ps,
                                const RunConfig& cfg) {
  Evaluation ev;
  auto sys = analytic_system(cfg.system);
  auto s0 = hamiltonian_test_states(cfg);
  std::size_t steps = integrate::step_count(cfg.t_predict, cfg.dt);
  std::vector<double> times;
  for (std::size_t k = 0; k <= steps; ++k) times.push_back(static_cast<double>(k) * cfg.dt);

  std::vector<PhaseState<Tensor>> ref{s0};
  double ref_dt = std::min(1e-3, cfg.dt);
  for (std::size_t k = 0; k < steps; ++k) ref.push_back(train::reference_flow(sys, ref.back(), cfg.dt, ref_dt));

  std::vector<PhaseState<Tensor>> pred;
  bool failed = false;
  try {
    pred = m.predict(ps, s0.q, s0.p, cfg.dt, steps);
    for (const auto& s : pred) failed = failed || !s.q.all_finite() || !s.p.all_finite();
  } catch (const Error&) {
    failed = true;
  }
  ev.scalars.set("rollout_failed", failed ? 1.0 : 0.0);
  if (failed) {
    ev.scalars.set("eps_p", kInf);
    ev.scalars.set("eps_p_final", kInf);
    if (cfg.system == "spring") ev.scalars.set("max_radius_error", kInf);
    ev.files.add("eval.csv", series_csv("eps_p", {}, {}));
    return ev;
  }
  auto mt = train::metric_eps_p(pred, ref);
  ev.scalars.set("eps_p", mt.mean);
  ev.scalars.set("eps_p_final", mt.per_step.back());
  ev.files.add("eval.csv", series_csv("eps_p", times, mt.per_step));

  if (cfg.system == "spring") {
    double worst = 0.0, first = -1.0;
    std::vector<double> radius_err;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      double e = 0.0;
      for (std::size_t i = 0; i < s0.q.dim(0); ++i) {
        double r0 = std::hypot(s0.q.at(i, 0), s0.p.at(i, 0));
        e = std::max(e, std::abs(std::hypot(pred[k].q.at(i, 0), pred[k].p.at(i, 0)) - r0));
      }
      radius_err.push_back(e);
      worst = std::max(worst, e);
      if (e > 0.5 && first < 0.0) first = times[k];
    }
    ev.scalars.set("max_radius_error", worst);
    ev.scalars.set("first_exceed_time", first < 0.0 ? kInf : first);
    ev.files.add("radius_error.csv", series_csv("radius_error", times, radius_err));
  }

  std::ostringstream tr;
  tr << "t,q,p,q_ref,p_ref\n";
  for (std::size_t k = 0; k < pred.size(); ++k)
    tr << fmt(times[k]) << ',' << fmt(pred[k].q.at(0, 0)) << ',' << fmt(pred[k].p.at(0, 0)) << ','
       << fmt(ref[k].q.at(0, 0)) << ',' << fmt(ref[k].p.at(0, 0)) << '\n';
  ev.files.add("trajectory.csv", tr.str());
  return ev;
}

// Initial field and exact solution of the evaluation problem.
struct FieldCase {
  GridField1D f0;
  std::function<GridField1D(double)> exact;
  bool linear = true;
};

FieldCase field_case(const RunConfig& cfg) {
  FieldCase fc;
  if (field_problem(cfg.system) == train::FieldProblem::Linear1C) {
    double lo = -0.5, hi = lo + static_cast<double>(cfg.cells) * cfg.dx, a = cfg.speed;
    constexpr double kPulse = 300.0;
    auto profile = [lo, hi](double x) { return hyperbolic::gaussian_pulse(x, 0.0, kPulse, lo, hi); };
    fc.f0.u = Tensor({cfg.cells, 1});
    fc.f0.dx = cfg.dx;
    fc.f0.x0 = lo;
    fc.f0.bc = hyperbolic::Boundary::Periodic;
    for (std::size_t j = 0; j < cfg.cells; ++j) fc.f0.u.at(j, 0) = profile(fc.f0.x(j));
    GridField1D base = fc.f0;
    fc.exact = [base, a, lo, hi, profile](double t) {
      GridField1D g = base;
      g.t = t;
      for (std::size_t j = 0; j < g.cells(); ++j) g.u.at(j, 0) = hyperbolic::advection_exact(g.x(j), t, a, profile, lo, hi);
      return g;
    };
    fc.linear = true;
  } else {
    hyperbolic::SodProblem prob;
    hyperbolic::EulerGas gas;
    fc.f0 = hyperbolic::sod_initial(prob, gas, cfg.dx);
    double dx = cfg.dx;
    fc.exact = [prob, gas, dx](double t) { return hyperbolic::sod_exact(prob, gas, dx, t); };
    fc.linear = false;
  }
  return fc;
}

Evaluation evaluate_field(const std::function<GridField1D(const GridField1D&)>& step, const RunConfig& cfg) {
  Evaluation ev;
  FieldCase fc = field_case(cfg);
  std::size_t steps = integrate::step_count(cfg.t_predict, cfg.dt);
  std::vector<std::size_t> snap_at;
  if (fc.linear) {
    for (std::size_t k = 0; k <= 3; ++k) snap_at.push_back(integrate::step_count(cfg.t_predict * k / 3.0, cfg.dt));
  } else {
    snap_at = {0, steps};
  }
  std::vector<double> times, err;
  std::vector<GridField1D> snaps, exact_snaps;
  GridField1D f = fc.f0;
  bool failed = false;
  for (std::size_t k = 0; k <= steps; ++k) {
    if (k > 0) {
      try {
        f = step(f);
        f.t = static_cast<double>(k) * cfg.dt;
        if (!f.u.all_finite()) failed = true;
      } catch (const Error&) {
        failed = true;
      }
      if (failed) break;
    }
    GridField1D ex = fc.exact(f.t);
    times.push_back(f.t);
    err.push_back(fc.linear ? train::field_l2(f, ex) : hyperbolic::density_l1(f, ex));
    if (std::find(snap_at.begin(), snap_at.end(), k) != snap_at.end()) {
      snaps.push_back(f);
      exact_snaps.push_back(ex);
    }
  }
  ev.scalars.set("rollout_failed", failed ? 1.0 : 0.0);
  const char* column = fc.linear ? "l2_error" : "density_l1";
  ev.files.add("eval.csv", series_csv(column, times, err));
  if (failed) {
    ev.scalars.set(column, kInf);
    if (fc.linear) ev.scalars.set("max_error", kInf);
    return ev;
  }
  GridField1D ex = fc.exact(f.t);
  ev.scalars.set(column, err.back());
  if (fc.linear) ev.scalars.set("max_error", train::field_max(f, ex));
  std::ostringstream fs, es;
  hyperbolic::write_field_csv(fs, snaps);
  hyperbolic::write_field_csv(es, exact_snaps);
  ev.files.add("fields.csv", fs.str());
  ev.files.add("exact_fields.csv", es.str());
  return ev;
}

std::vector<vortex::VortexSystem> vortex_test_systems(const RunConfig& cfg) {
  std::vector<vortex::VortexSystem> out;
  if (cfg.preset == "leapfrog") {
    // two same-axis vortex pairs of different widths; the inner pair passes through the outer one
    double c = vortex::kTwoPi / 2.0, x = c - 1.5;
    out.push_back(vortex::make_system({{x, c + 0.5}, {x, c - 0.5}, {x, c + 1.0}, {x, c - 1.0}}, {-1.0, 1.0, -1.0, 1.0},
                                      0.1, true));
    return out;
  }
  auto vc = vortex_config(cfg);
  nk::Rng rng(stream_seed(cfg, SeedStream::Test));
  for (std::size_t i = 0; i < std::max<std::size_t>(1, cfg.test_samples); ++i)
    out.push_back(train::random_vortex_system(2, vc, rng));
  return out;
}

// Regularized velocity induced at the probe points by the particles of one state.
void induced_velocity(const vortex::VortexSystem& like, const Tensor& X, const std::vector<vortex::Vec2>& probes,
                      Tensor& out, std::size_t row0) {
  vortex::VortexSystem s = like;
  s.X = X;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    double u = 0.0, v = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      auto d = vortex::displacement(s, probes[k], s.pos(j));
      double w = s.gamma[j] / (vortex::kTwoPi * (d[0] * d[0] + d[1] * d[1] + s.reg * s.reg));
      u -= w * d[1];
      v += w * d[0];
    }
    out.at(row0 + k, 0) = u;
    out.at(row0 + k, 1) = v;
  }
}

Evaluation evaluate_vortex(const std::function<vortex::Trajectory(const vortex::VortexSystem&)>& rollout,
                           const RunConfig& cfg) {
  Evaluation ev;
  auto tests = vortex_test_systems(cfg);
  train::ForcingSpec forcing{cfg.forcing};
  auto drift = forcing.field();
  std::vector<vortex::Trajectory> refs(tests.size()), preds(tests.size());
  std::vector<int> failed(tests.size(), 0);
  parallel_for(tests.size(), cfg.threads, [&](std::size_t i) {
    refs[i] = vortex::reference_trajectory(tests[i], cfg.t_predict, 1e-4, cfg.dt, drift);
    try {
      preds[i] = rollout(tests[i]);
      for (const auto& x : preds[i].X) failed[i] = failed[i] || !x.all_finite();
    } catch (const Error&) {
      failed[i] = 1;
    }
  });
  bool any_failed = std::find(failed.begin(), failed.end(), 1) != failed.end();
  ev.scalars.set("rollout_failed", any_failed ? 1.0 : 0.0);
  if (any_failed) {
    ev.scalars.set("max_position_error", kInf);
    ev.scalars.set("final_position_error", kInf);
    ev.files.add("eval.csv", series_csv("eps_u", {}, {}));
    return ev;
  }
  const auto& times = refs.front().t;
  std::size_t nt = times.size();
  std::vector<double> pos_err(nt, 0.0);
  for (std::size_t i = 0; i < tests.size(); ++i) {
    auto e = vortex::position_error(preds[i], refs[i], tests[i].length, tests[i].periodic);
    for (std::size_t k = 0; k < nt; ++k) pos_err[k] += e[k] / static_cast<double>(tests.size());
  }
  // velocity on a coarse probe grid covering the box
  constexpr std::size_t kProbe = 32;
  std::vector<vortex::Vec2> probes;
  double h = tests.front().length / kProbe;
  for (std::size_t a = 0; a < kProbe; ++a)
    for (std::size_t b = 0; b < kProbe; ++b) probes.push_back({(a + 0.5) * h, (b + 0.5) * h});
  std::vector<double> eps_u(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    Tensor up({probes.size() * tests.size(), 2}), ur({probes.size() * tests.size(), 2});
    for (std::size_t i = 0; i < tests.size(); ++i) {
      induced_velocity(tests[i], preds[i].X[k], probes, up, i * probes.size());
      induced_velocity(tests[i], refs[i].X[k], probes, ur, i * probes.size());
    }
    eps_u[k] = train::metric_eps_u(up, ur);
  }
  ev.scalars.set("max_position_error", *std::max_element(pos_err.begin(), pos_err.end()));
  ev.scalars.set("final_position_error", pos_err.back());
  ev.scalars.set("eps_u_final", eps_u.back());
  ev.files.add("eval.csv", series_csv("eps_u", times, eps_u));
  ev.files.add("position_error.csv", series_csv("position_error", times, pos_err));
  std::ostringstream p, r;
  vortex::write_trajectory_csv(p, preds.front());
  vortex::write_trajectory_csv(r, refs.front());
  ev.files.add("trajectory.csv", p.str());
  ev.files.add("reference_trajectory.csv", r.str());
  return ev;
}

}  // namespace

Evaluation evaluate_model(const TrainedModel& m, const RunConfig& cfg) {
  if (!(cfg.t_predict > 0.0)) throw ConfigError("evaluation horizon must be positive");
  if (family_kind(m.family) != family_kind(cfg.family))
    throw ConfigError("model family '" + m.family + "' does not fit preset '" + cfg.preset + "'");
  if (const auto* hm = std::get_if<train::HamiltonianModel>(&m.model)) return evaluate_hamiltonian(*hm, m.ps, cfg);
  if (const auto* rm = std::get_if<hyperbolic::RoeNetModel>(&m.model)) {
    double dt = cfg.dt;
    return evaluate_field([&](const GridField1D& f) { return hyperbolic::roenet_step(*rm, m.ps, f, dt); }, cfg);
  }
  const auto& net = std::get<vortex::DynamicsNet>(m.model);
  return evaluate_vortex(
      [&](const vortex::VortexSystem& s) { return vortex::nvm_rollout(net, m.ps, s, cfg.t_predict, cfg.dt); }, cfg);
}

Evaluation evaluate_classical(const std::string& baseline, const RunConfig& cfg) {
  if (!(cfg.t_predict > 0.0)) throw ConfigError("evaluation horizon must be positive");
  if (baseline == "roe") {
    if (family_kind(cfg.family) != ExperimentKind::Field) throw ConfigError("baseline roe needs a field preset");
    hyperbolic::EulerGas gas;
    bool linear = field_problem(cfg.system) == train::FieldProblem::Linear1C;
    double a = cfg.speed, dt = cfg.dt;
    return evaluate_field(
        [&](const GridField1D& f) {
          return linear ? hyperbolic::roe_step_linear(f, a, dt) : hyperbolic::roe_step_euler(f, gas, dt);
        },
        cfg);
  }
  if (baseline == "lvm") {
    if (family_kind(cfg.family) != ExperimentKind::Vortex) throw ConfigError("baseline lvm needs a vortex preset");
    // Biot–Savart only: the external forcing is unknown to the classical method
    return evaluate_vortex([&](const vortex::VortexSystem& s) { return vortex::lvm_rollout(s, cfg.t_predict, cfg.dt); },
                           cfg);
  }
  throw ConfigError("'" + baseline + "' is not a classical baseline");
}

// ------------------------------------------------------------------ report

ReportRow make_row(const std::string& check, double value, const std::string& relation, double threshold) {
  ReportRow r{check, value, relation, threshold, false};
  if (relation == "<") r.pass = value < threshold;
  else if (relation == "<=") r.pass = value <= threshold;
  else if (relation == ">") r.pass = value > threshold;
  else if (relation == ">=") r.pass = value >= threshold;
  else throw Error("unknown relation '" + relation + "'");
  return r;
}

std::vector<ReportRow> report_rows(const RunConfig& cfg, const Scalars& model, const Scalars* base) {
  std::vector<ReportRow> rows;
  const std::string& b = cfg.baseline;
  auto vs = [&](const std::string& metric) { return metric + "_vs_" + b; };
  if (cfg.preset == "pendulum" || cfg.preset == "nonseparable") {
    if (cfg.preset == "pendulum" && cfg.noise_sigma == 0.0) rows.push_back(make_row("eps_p", model.get("eps_p"), "<=", 0.5));
    if (base) rows.push_back(make_row(vs("eps_p"), model.get("eps_p"), "<", base->get("eps_p")));
  } else if (cfg.preset == "spring") {
    rows.push_back(make_row("max_radius_error", model.get("max_radius_error"), "<=", 0.5));
    if (base) rows.push_back(make_row(b + "_max_radius_error", base->get("max_radius_error"), ">", 0.5));
  } else if (cfg.preset == "1c-linear") {
    if (base) rows.push_back(make_row("l2_ratio_vs_" + b, model.get("l2_error") / base->get("l2_error"), "<", 0.5));
    rows.push_back(make_row("max_error", model.get("max_error"), "<", 0.05));
  } else if (cfg.preset == "sod") {
    if (base) rows.push_back(make_row(vs("density_l1"), model.get("density_l1"), "<=", base->get("density_l1")));
  } else if (cfg.preset == "vortex-pair" || cfg.preset == "leapfrog") {
    if (cfg.forcing == 0.0) {
      rows.push_back(make_row("max_position_error", model.get("max_position_error"), "<", 0.05));
    } else if (base) {
      rows.push_back(make_row("final_error_ratio_" + b, base->get("final_position_error") / model.get("final_position_error"),
                              ">=", 2.0));
    }
  }
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "check,value,relation,threshold,pass\n";
  for (const auto& r : rows)
    os << r.check << ',' << fmt(r.value) << ',' << r.relation << ',' << fmt(r.threshold) << ','
       << (r.pass ? "true" : "false") << '\n';
  return os.str();
}

std::string scalars_csv(const Scalars& s) {
  std::ostringstream os;
  os << "name,value\n";
  for (const auto& [n, v] : s.values) os << n << ',' << fmt(v) << '\n';
  return os.str();
}

Reproduction reproduce(const RunConfig& cfg, std::ostream* log) {
  auto say = [&](const std::string& msg) {
    if (log) *log << msg << std::endl;
  };
  auto stage = [&](const std::string& name, auto&& fn) {
    say("[" + name + "]");
    try {
      return fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  };
  auto progress = [&](const std::string& who) {
    return [&, who](const train::EpochRecord& r) {
      if (log && (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == cfg.epochs))
        *log << "  " << who << " epoch " << r.epoch << " loss " << fmt(r.loss_train) << " val " << fmt(r.loss_val)
             << std::endl;
    };
  };
  auto add_eval = [](Artifacts& out, const Evaluation& ev, const std::string& prefix) {
    for (const auto& [n, c] : ev.files.files) out.add(prefix + n, c);
    out.add(prefix + "summary.csv", scalars_csv(ev.scalars));
  };

  Reproduction rep;
  rep.files.add("config.ini", config_text(cfg));
  Dataset data = stage("gen-data", [&] { return generate_dataset(cfg); });
  rep.files.add("dataset.csv", dataset_text(cfg, data));

  TrainedModel model = stage("train", [&] {
    return train_model(cfg, cfg.family, data, stream_seed(cfg, SeedStream::Init), stream_seed(cfg, SeedStream::Shuffle),
                       progress(cfg.family));
  });
  rep.files.add("checkpoint.bin", serialize_checkpoint(to_checkpoint(model)));
  {
    std::ostringstream os;
    train::write_metrics_csv(os, model.result.history);
    rep.files.add("metrics.csv", os.str());
  }
  Evaluation ev = stage("eval", [&] { return evaluate_model(model, cfg); });
  add_eval(rep.files, ev, "");

  std::optional<Evaluation> base;
  const std::string& b = cfg.baseline;
  if (!b.empty() && b != "none") {
    base = stage("baseline", [&] {
      if (b == "roe" || b == "lvm") return evaluate_classical(b, cfg);
      TrainedModel bm = train_model(cfg, b, data, stream_seed(cfg, SeedStream::Baseline),
                                    stream_seed(cfg, SeedStream::Shuffle), progress(b));
      rep.files.add("baseline_checkpoint.bin", serialize_checkpoint(to_checkpoint(bm)));
      std::ostringstream os;
      train::write_metrics_csv(os, bm.result.history);
      rep.files.add("baseline_metrics.csv", os.str());
      return evaluate_model(bm, cfg);
    });
    add_eval(rep.files, *base, "baseline_");
  }
  rep.rows = stage("compare", [&] { return report_rows(cfg, ev.scalars, base ? &base->scalars : nullptr); });
  rep.files.add("report.csv", report_csv(rep.rows));
  rep.all_pass = std::all_of(rep.rows.begin(), rep.rows.end(), [](const ReportRow& r) { return r.pass; });
  return rep;
}

}  // namespace physprior::cli
