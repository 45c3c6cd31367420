#include "physprior/cli/config.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "physprior/error.hpp"

namespace physprior::cli {

std::vector<ConfigField> config_fields(RunConfig& c) {
  return {
      {"preset", &c.preset},
      {"family", &c.family},
      {"baseline", &c.baseline},
      {"system", &c.system},
      {"seed", &c.seed},
      {"threads", &c.threads},
      {"epochs", &c.epochs},
      {"batch", &c.batch},
      {"lr", &c.lr},
      {"lr_step", &c.lr_step},
      {"lr_gamma", &c.lr_gamma},
      {"clip_norm", &c.clip_norm},
      {"n_train", &c.n_train},
      {"n_val", &c.n_val},
      {"t_train", &c.t_train},
      {"dt", &c.dt},
      {"noise_sigma", &c.noise_sigma},
      {"noise_inputs", &c.noise_inputs},
      {"noise_targets", &c.noise_targets},
      {"box", &c.box},
      {"reference_dt", &c.reference_dt},
      {"t_predict", &c.t_predict},
      {"test_samples", &c.test_samples},
      {"terms", &c.terms},
      {"taylor_hidden", &c.taylor_hidden},
      {"energy_hidden", &c.energy_hidden},
      {"energy_layers", &c.energy_layers},
      {"field_hidden", &c.field_hidden},
      {"omega", &c.omega},
      {"roenet_hidden_dim", &c.roenet_hidden_dim},
      {"roenet_width", &c.roenet_width},
      {"roenet_blocks", &c.roenet_blocks},
      {"roenet_form", &c.roenet_form},
      {"speed", &c.speed},
      {"cells", &c.cells},
      {"dx", &c.dx},
      {"window", &c.window},
      {"jitter", &c.jitter},
      {"t0_max", &c.t0_max},
      {"vortex_width", &c.vortex_width},
      {"vortex_blocks", &c.vortex_blocks},
      {"vortex_local", &c.vortex_local},
      {"vortex_min", &c.vortex_min},
      {"vortex_max", &c.vortex_max},
      {"spread", &c.spread},
      {"min_separation", &c.min_separation},
      {"forcing", &c.forcing},
      {"grid_cells", &c.grid_cells},
  };
}

std::vector<std::string> config_keys() {
  RunConfig c;
  std::vector<std::string> keys;
  for (const auto& f : config_fields(c)) keys.push_back(f.key);
  return keys;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + what);
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (auto& f : config_fields(cfg)) {
    if (f.key != key) continue;
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::string*>) {
            (void)p;
          } else if constexpr (std::is_same_v<T, std::string>) {
            *p = value;
          } else if constexpr (std::is_same_v<T, bool>) {
            if (value == "true" || value == "1" || value == "yes" || value == "on") {
              *p = true;
            } else if (value == "false" || value == "0" || value == "no" || value == "off") {
              *p = false;
            } else {
              bad_value(key, value, "a boolean");
            }
          } else if constexpr (std::is_same_v<T, double>) {
            std::size_t used = 0;
            double v = 0.0;
            try {
              v = std::stod(value, &used);
            } catch (const std::exception&) {
              bad_value(key, value, "a number");
            }
            if (used != value.size() || !std::isfinite(v)) bad_value(key, value, "a finite number");
            *p = v;
          } else {
            if (value.empty() || value[0] == '-') bad_value(key, value, "a non-negative integer");
            std::size_t used = 0;
            unsigned long long v = 0;
            try {
              v = std::stoull(value, &used);
            } catch (const std::exception&) {
              bad_value(key, value, "a non-negative integer");
            }
            if (used != value.size()) bad_value(key, value, "a non-negative integer");
            *p = static_cast<T>(v);
          }
        },
        f.ref);
    cfg.explicit_keys.insert(key);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  RunConfig& c = const_cast<RunConfig&>(cfg);
  for (auto& f : config_fields(c)) {
    if (f.key != key) continue;
    return std::visit(
        [](auto* p) -> std::string {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::string*>) {
            return {};
          } else if constexpr (std::is_same_v<T, std::string>) {
            return *p;
          } else if constexpr (std::is_same_v<T, bool>) {
            return *p ? "true" : "false";
          } else if constexpr (std::is_same_v<T, double>) {
            return format_double(*p);
          } else {
            return std::to_string(*p);
          }
        },
        f.ref);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_ini(std::istream& in, const std::string& source) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& it : items) {
    // section open/close markers
    if (it.name == "++" || it.name == "--") continue;
    std::string value;
    for (std::size_t i = 0; i < it.inputs.size(); ++i) value += (i ? "," : "") + it.inputs[i];
    out.emplace_back(it.name, value);
  }
  return out;
}

void echo_config(std::ostream& os, const RunConfig& cfg) {
  for (const auto& key : config_keys()) os << key << " = " << get_config_value(cfg, key) << "\n";
}

std::vector<std::string> preset_names() {
  return {"pendulum", "spring", "nonseparable", "vortex-pair", "leapfrog", "1c-linear", "sod"};
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "pendulum") {
    c.family = "taylor-net";
    c.baseline = "ode-rk4";
    c.system = "pendulum";
    c.n_train = 15;
    c.n_val = 100;
    c.t_train = 0.01;
    c.dt = 0.01;
    c.epochs = 100;
    c.batch = 1;
    c.lr = 3e-3;
    c.lr_step = 10;
    c.lr_gamma = 0.8;
    c.box = 2.0;
    c.t_predict = 20.0 * M_PI;
    c.test_samples = 100;
  } else if (name == "spring" || name == "nonseparable") {
    c.family = "nssnn";
    c.baseline = "hrk";
    c.system = name;
    c.n_train = 1152;
    c.n_val = 128;
    c.epochs = 100;
    c.batch = 512;
    c.lr = 0.05;
    c.lr_step = 10;
    c.lr_gamma = 0.8;
    c.omega = 10.0;
    if (name == "spring") {
      c.t_train = 1.0;
      c.dt = 0.2;
      c.box = 4.0;
      c.t_predict = 200.0;
      c.test_samples = 1;
    } else {
      c.t_train = 0.01;
      c.dt = 0.01;
      c.box = 2.0;
      c.t_predict = 20.0;
      c.test_samples = 100;
    }
  } else if (name == "1c-linear" || name == "sod") {
    c.family = "roenet";
    c.baseline = "roe";
    c.epochs = 100;
    c.batch = 16;
    c.lr = 1e-3;
    c.lr_step = 10;
    c.lr_gamma = 0.9;
    if (name == "1c-linear") {
      c.system = "linear";
      c.n_train = 450;
      c.n_val = 50;
      c.t_train = 0.04;
      c.dt = 0.02;
      c.dx = 0.01;
      c.cells = 100;
      c.speed = 0.25;
      c.roenet_hidden_dim = 1;
      c.t_predict = 1.2;
    } else {
      c.system = "euler";
      c.n_train = 1800;
      c.n_val = 200;
      c.t_train = 0.06;
      c.dt = 0.001;
      c.dx = 0.005;
      c.roenet_hidden_dim = 64;
      c.t_predict = 0.1;
    }
  } else if (name == "vortex-pair" || name == "leapfrog") {
    c.family = "vortex-dynamics";
    c.baseline = "lvm";
    c.system = "point-vortex";
    c.n_train = 1600;
    c.n_val = 400;
    c.epochs = 500;
    c.batch = 64;
    c.lr = 1e-3;
    c.lr_step = 20;
    c.lr_gamma = 0.8;
    if (name == "vortex-pair") {
      c.t_train = 0.2;
      c.dt = 0.1;
      c.t_predict = 2.0;
      c.test_samples = 20;
    } else {
      c.t_train = 1.0;
      c.dt = 0.001;
      c.t_predict = 10.0;
      c.test_samples = 1;
    }
  } else {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (expected one of: " + names + ")");
  }
  return c;
}

void finalize_config(RunConfig& cfg) {
  if (cfg.preset == "pendulum" && cfg.noise_sigma > 0.0 && !cfg.is_explicit("t_train"))
    cfg.t_train = cfg.noise_sigma <= 0.1 ? 0.5 : 1.0;
  if ((cfg.family == "taylor-net" || cfg.family == "ode-rk4") && !cfg.is_explicit("lr") && cfg.dt > 0.0 &&
      cfg.t_train / cfg.dt >= 50.0 - 1e-9)
    cfg.lr = 1e-3;
}

void validate_config(const RunConfig& c) {
  bool known = false;
  for (const auto& n : preset_names()) known = known || n == c.preset;
  if (!known) throw ConfigError("unknown preset '" + c.preset + "'");
  static const std::set<std::string> families{"taylor-net", "ode-rk4", "nssnn", "hrk", "roenet", "vortex-dynamics"};
  if (!families.count(c.family)) throw ConfigError("unknown model family '" + c.family + "'");
  static const std::set<std::string> baselines{"", "none", "ode-rk4", "hrk", "roe", "lvm"};
  if (!baselines.count(c.baseline))
    throw ConfigError("unknown baseline '" + c.baseline + "' (expected ode-rk4, hrk, roe or lvm)");
  bool hamiltonian = c.family == "taylor-net" || c.family == "ode-rk4" || c.family == "nssnn" || c.family == "hrk";
  if (hamiltonian && (c.baseline == "roe" || c.baseline == "lvm"))
    throw ConfigError("baseline '" + c.baseline + "' does not apply to family '" + c.family + "'");
  if (c.family == "roenet" && !(c.baseline.empty() || c.baseline == "none" || c.baseline == "roe"))
    throw ConfigError("baseline '" + c.baseline + "' does not apply to family roenet");
  if (c.family == "vortex-dynamics" && !(c.baseline.empty() || c.baseline == "none" || c.baseline == "lvm"))
    throw ConfigError("baseline '" + c.baseline + "' does not apply to family vortex-dynamics");
  if (c.threads == 0) throw ConfigError("threads must be at least 1");
  if (c.batch == 0) throw ConfigError("batch must be at least 1");
  if (!(c.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(c.t_train > 0.0)) throw ConfigError("t_train must be positive");
  if (c.t_train + 1e-12 < c.dt) throw ConfigError("dt exceeds t_train");
  if (!(c.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(c.lr_gamma > 0.0 && c.lr_gamma <= 1.0)) throw ConfigError("lr_gamma must lie in (0, 1]");
  if (c.lr_step == 0) throw ConfigError("lr_step must be at least 1");
  if (c.noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  if (c.n_train == 0) throw ConfigError("n_train must be at least 1");
  if (c.family == "nssnn" && !(c.omega > 0.0)) throw ConfigError("omega must be positive");
  if (c.roenet_form != "flux-split" && c.roenet_form != "fluctuation")
    throw ConfigError("roenet_form must be flux-split or fluctuation");
  if (c.vortex_min == 0 || c.vortex_max < c.vortex_min) throw ConfigError("bad vortex count range");
}

}  // namespace physprior::cli
