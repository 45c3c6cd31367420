#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace physprior::cli {

// Every tunable of an experiment. Presets fill it, then INI files and
// command-line options override individual keys.
struct RunConfig {
  std::string preset = "pendulum";
  std::string family = "taylor-net";
  std::string baseline;  // empty: no baseline
  std::string system = "pendulum";
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // optimization
  std::size_t epochs = 100;
  std::size_t batch = 1;
  double lr = 3e-3;
  std::size_t lr_step = 10;
  double lr_gamma = 0.8;
  double clip_norm = 0.0;

  // data
  std::size_t n_train = 15;
  std::size_t n_val = 100;
  double t_train = 0.01;
  double dt = 0.01;
  double noise_sigma = 0.0;
  bool noise_inputs = true;
  bool noise_targets = true;
  double box = 2.0;
  double reference_dt = 1e-4;

  // evaluation
  double t_predict = 0.0;
  std::size_t test_samples = 100;

  // Hamiltonian models
  std::size_t terms = 8;
  std::size_t taylor_hidden = 16;
  std::size_t energy_hidden = 64;
  std::size_t energy_layers = 6;
  std::string field_hidden = "32,32";
  double omega = 10.0;

  // RoeNet
  std::size_t roenet_hidden_dim = 1;
  std::size_t roenet_width = 0;
  std::size_t roenet_blocks = 3;
  std::string roenet_form = "flux-split";
  double speed = 0.25;
  std::size_t cells = 100;
  double dx = 0.01;
  std::size_t window = 72;
  double jitter = 0.1;
  double t0_max = 0.04;

  // vortex dynamics
  std::size_t vortex_width = 32;
  std::size_t vortex_blocks = 3;
  bool vortex_local = true;  // include the local-vorticity branch
  std::size_t vortex_min = 2;
  std::size_t vortex_max = 6;
  double spread = 1.2;
  double min_separation = 0.5;
  double forcing = 0.0;
  std::size_t grid_cells = 200;

  // keys set explicitly (file or command line) rather than by the preset
  std::set<std::string> explicit_keys;

  bool is_explicit(const std::string& key) const { return explicit_keys.count(key) != 0; }
};

// std::uint64_t and std::size_t coincide on some platforms.
using SeedRef = std::conditional_t<std::is_same_v<std::uint64_t, std::size_t>, std::string**, std::uint64_t*>;
using FieldRef = std::variant<std::string*, SeedRef, std::size_t*, double*, bool*>;

struct ConfigField {
  std::string key;
  FieldRef ref;
};

// Keys in echo order.
std::vector<ConfigField> config_fields(RunConfig& cfg);
std::vector<std::string> config_keys();

// Parses and stores one value; unknown keys and malformed values throw ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// `key = value` lines; `#` and `;` start comments; `[section]` headers are ignored.
std::vector<std::pair<std::string, std::string>> parse_ini(std::istream& in, const std::string& source);

// Writes every key as `key = value` in a fixed order; doubles with 17 significant digits.
void echo_config(std::ostream& os, const RunConfig& cfg);

std::vector<std::string> preset_names();
// Paper settings of the named experiment.
RunConfig preset_config(const std::string& name);
// Applies the defaults that depend on other keys (noisy pendulum time span,
// learning rate for long unrolls, evaluation horizon) unless set explicitly.
void finalize_config(RunConfig& cfg);
void validate_config(const RunConfig& cfg);

}  // namespace physprior::cli
