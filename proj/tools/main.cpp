// physprior command-line driver: dataset generation, training, evaluation,
// one-command reproduction and the invariant self-test.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <thread>

#include "physprior/cli/checkpoint.hpp"
#include "physprior/cli/config.hpp"
#include "physprior/cli/experiments.hpp"
#include "physprior/cli/selftest.hpp"
#include "physprior/error.hpp"

namespace fs = std::filesystem;
using namespace physprior;
using namespace physprior::cli;

namespace {

enum Exit { kOk = 0, kThresholds = 1, kUsage = 2, kFailure = 3 };

struct Common {
  std::string preset;
  std::string config;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> dt;
  std::optional<double> omega;
  std::optional<double> noise_sigma;
  std::optional<std::size_t> threads;
  std::optional<std::string> baseline;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c, bool preset = true) {
  if (preset) {
    app->add_option("--preset", c.preset, "experiment preset")
        ->check(CLI::IsMember(preset_names()));
  }
  app->add_option("--config", c.config, "key = value configuration file (sections ignored)")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "root directory of run directories")->capture_default_str();
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--epochs", c.epochs, "training epochs");
  app->add_option("--dt", c.dt, "integration step");
  app->add_option("--omega", c.omega, "binding strength of the extended phase space");
  app->add_option("--noise-sigma", c.noise_sigma, "standard deviation of the endpoint noise");
  app->add_option("--threads", c.threads, "worker cap for data generation and evaluation")->check(CLI::PositiveNumber);
  app->add_option("--baseline", c.baseline, "comparison method")
      ->check(CLI::IsMember({"ode-rk4", "hrk", "roe", "lvm", "none"}));
  app->add_option("--set", c.sets, "override any configuration key (key=value), repeatable");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::pair<std::string, std::string>> overrides(const Common& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  if (c.seed) kv.emplace_back("seed", std::to_string(*c.seed));
  if (c.epochs) kv.emplace_back("epochs", std::to_string(*c.epochs));
  if (c.dt) kv.emplace_back("dt", num(*c.dt));
  if (c.omega) kv.emplace_back("omega", num(*c.omega));
  if (c.noise_sigma) kv.emplace_back("noise_sigma", num(*c.noise_sigma));
  kv.emplace_back("threads", std::to_string(c.threads ? *c.threads : std::max(1u, std::thread::hardware_concurrency())));
  if (c.baseline) kv.emplace_back("baseline", *c.baseline == "none" ? "" : *c.baseline);
  for (const auto& s : c.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return kv;
}

std::vector<std::pair<std::string, std::string>> read_ini(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  return parse_ini(is, path);
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

// A fresh `<command>-<preset>-seed<seed>-NNN` directory; existing runs are never reused.
fs::path new_run_dir(const std::string& out, const std::string& command, const RunConfig& cfg) {
  fs::create_directories(out);
  std::string stem = command + "-" + cfg.preset + "-seed" + std::to_string(cfg.seed) + "-";
  for (int i = 1; i < 100000; ++i) {
    char idx[16];
    std::snprintf(idx, sizeof idx, "%03d", i);
    fs::path dir = fs::path(out) / (stem + idx);
    if (fs::create_directory(dir)) return dir;
  }
  throw IoError("no free run directory under " + out);
}

void publish(const fs::path& dir, const Artifacts& files) {
  for (const auto& [name, content] : files.files) write_atomic(dir / name, content);
  write_atomic(dir.parent_path() / "latest", dir.filename().string() + "\n");
  std::cout << "wrote " << dir.string() << "\n";
}

void print_scalars(const Scalars& s, const std::string& prefix) {
  for (const auto& [n, v] : s.values) std::cout << prefix << n << " = " << num(v) << "\n";
}

int cmd_gen_data(const Common& c) {
  RunConfig cfg = resolve_config(c.preset, read_ini(c.config), overrides(c));
  Artifacts files;
  files.add("config.ini", config_text(cfg));
  Dataset data = generate_dataset(cfg);
  files.add("dataset.csv", dataset_text(cfg, data));
  publish(new_run_dir(c.out, "gen-data", cfg), files);
  return kOk;
}

int cmd_train(const Common& c, const std::string& data_path) {
  RunConfig cfg;
  Dataset data;
  if (!data_path.empty()) {
    RunConfig echoed;
    data = parse_dataset(read_file(data_path), echoed);
    if (!c.preset.empty()) {
      RunConfig want = preset_config(c.preset);
      if (family_kind(want.family) != family_kind(echoed.family) || want.system != echoed.system)
        throw ConfigError("dataset of family '" + echoed.family + "' (system '" + echoed.system +
                          "') does not fit preset '" + c.preset + "' (family '" + want.family + "', system '" +
                          want.system + "')");
    }
    std::vector<std::pair<std::string, std::string>> base;
    for (const auto& key : config_keys()) base.emplace_back(key, get_config_value(echoed, key));
    auto ini = read_ini(c.config);
    base.insert(base.end(), ini.begin(), ini.end());
    cfg = resolve_config(echoed.preset, base, overrides(c));
  } else {
    cfg = resolve_config(c.preset, read_ini(c.config), overrides(c));
    data = generate_dataset(cfg);
  }
  auto log = [&](const train::EpochRecord& r) {
    if (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == cfg.epochs)
      std::cout << "epoch " << r.epoch << " loss " << num(r.loss_train) << " val " << num(r.loss_val) << std::endl;
  };
  TrainedModel m = train_model(cfg, cfg.family, data, stream_seed(cfg, SeedStream::Init),
                               stream_seed(cfg, SeedStream::Shuffle), log);
  if (m.result.diverged) std::cerr << "warning: " << m.result.message << " (kept the last finite epoch)\n";
  Artifacts files;
  files.add("config.ini", config_text(cfg));
  files.add("checkpoint.bin", serialize_checkpoint(to_checkpoint(m)));
  std::ostringstream os;
  train::write_metrics_csv(os, m.result.history);
  files.add("metrics.csv", os.str());
  publish(new_run_dir(c.out, "train", cfg), files);
  return kOk;
}

int cmd_eval(const Common& c, const std::string& ckpt_path, std::optional<double> horizon) {
  if (horizon && !(*horizon > 0.0)) throw CLI::ValidationError("--horizon", "must be positive");
  Checkpoint ck = load_checkpoint(ckpt_path);
  TrainedModel m = from_checkpoint(ck);
  if (!c.preset.empty()) {
    RunConfig want = preset_config(c.preset);
    if (family_kind(want.family) != family_kind(m.family))
      throw ConfigError("checkpoint family '" + m.family + "' does not fit preset '" + c.preset + "' (family '" +
                        want.family + "')");
    if (c.preset != m.cfg.preset)
      throw ConfigError("checkpoint was trained for preset '" + m.cfg.preset + "', not '" + c.preset + "'");
  }
  KeyValues base = ck.hyperparameters;
  auto ini = read_ini(c.config);
  base.insert(base.end(), ini.begin(), ini.end());
  auto ov = overrides(c);
  if (horizon) ov.emplace_back("t_predict", num(*horizon));
  RunConfig cfg = resolve_config(m.cfg.preset, base, ov);
  Evaluation ev = evaluate_model(m, cfg);
  Artifacts files;
  files.add("config.ini", config_text(cfg));
  for (const auto& [n, content] : ev.files.files) files.add(n, content);
  files.add("summary.csv", scalars_csv(ev.scalars));
  print_scalars(ev.scalars, "");
  publish(new_run_dir(c.out, "eval", cfg), files);
  return kOk;
}

int cmd_reproduce(const Common& c, const std::string& name) {
  std::string preset = !name.empty() ? name : c.preset;
  if (!name.empty() && !c.preset.empty() && name != c.preset)
    throw CLI::ValidationError("reproduce", "positional name and --preset disagree");
  RunConfig cfg = resolve_config(preset, read_ini(c.config), overrides(c));
  Reproduction rep;
  try {
    rep = reproduce(cfg, &std::cout);
  } catch (const StageError& e) {
    std::cerr << "reproduce failed in stage " << e.stage << ": " << e.what() << "\n";
    return kFailure;
  }
  publish(new_run_dir(c.out, "reproduce", cfg), rep.files);
  for (const auto& r : rep.rows)
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.check << ": " << num(r.value) << " " << r.relation << " "
              << num(r.threshold) << "\n";
  return rep.all_pass ? kOk : kThresholds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physics-prior models: generate data, train, evaluate and reproduce the experiments"};
  app.require_subcommand(1);

  Common gen, trn, evl, rep;
  auto* g = app.add_subcommand("gen-data", "write a dataset for a preset");
  add_common(g, gen);
  g->get_option("--preset")->required();

  std::string data_path;
  auto* t = app.add_subcommand("train", "train the preset's model; writes checkpoint.bin and metrics.csv");
  add_common(t, trn);
  t->add_option("--data", data_path, "dataset written by gen-data (default: generate it)")->check(CLI::ExistingFile);

  std::string ckpt;
  std::optional<double> horizon;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint; writes eval.csv and prediction CSVs");
  add_common(e, evl);
  e->add_option("--checkpoint", ckpt, "checkpoint written by train")->required()->check(CLI::ExistingFile);
  e->add_option("--horizon", horizon, "prediction horizon T_predict");

  std::string name;
  auto* r = app.add_subcommand("reproduce", "gen -> train -> eval -> baseline; writes report.csv");
  add_common(r, rep);
  r->add_option("name", name, "experiment preset")->check(CLI::IsMember(preset_names()));

  auto* s = app.add_subcommand("selftest", "run the invariant suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int rc = app.exit(err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) {
      if (trn.preset.empty() && data_path.empty() && trn.config.empty())
        throw CLI::ValidationError("train", "needs --preset, --data or --config");
      return cmd_train(trn, data_path);
    }
    if (*e) return cmd_eval(evl, ckpt, horizon);
    if (*r) {
      if (name.empty() && rep.preset.empty() && rep.config.empty())
        throw CLI::ValidationError("reproduce", "needs an experiment name");
      return cmd_reproduce(rep, name);
    }
    if (*s) return run_selftest(std::cout) ? kOk : kThresholds;
  } catch (const CLI::Error& err) {
    app.exit(err);
    return kUsage;
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
