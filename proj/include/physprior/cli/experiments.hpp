#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "physprior/cli/checkpoint.hpp"
#include "physprior/cli/config.hpp"
#include "physprior/hyperbolic/hyperbolic.hpp"
#include "physprior/train/hamiltonian_models.hpp"
#include "physprior/train/roenet_training.hpp"
#include "physprior/train/vortex_training.hpp"

namespace physprior::cli {

enum class ExperimentKind { Hamiltonian, Field, Vortex };

ExperimentKind family_kind(const std::string& family);
std::string kind_name(ExperimentKind k);

// Independent random streams of one run, all derived from the master seed.
enum class SeedStream : std::uint64_t { Data = 1, Init = 2, Shuffle = 3, Baseline = 4, Test = 5 };
std::uint64_t stream_seed(const RunConfig& cfg, SeedStream s);

// Resolves a configuration: preset values, then INI entries, then overrides
// (both applied in order and marked explicit), then the derived defaults.
RunConfig resolve_config(const std::string& preset, const std::vector<std::pair<std::string, std::string>>& ini,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

std::string config_text(const RunConfig& cfg);

// Named output files, kept in memory so they can be compared byte for byte.
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;
  void add(const std::string& name, std::string content);
  const std::string& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

using Dataset = std::variant<train::PairDataset, train::FieldDataset, train::VortexDataset>;

Dataset generate_dataset(const RunConfig& cfg);
// Self-describing CSV: `# key = value` lines echo the configuration, then a header row.
std::string dataset_text(const RunConfig& cfg, const Dataset& data);
// Parses dataset_text output; the echoed configuration is returned through cfg.
Dataset parse_dataset(const std::string& text, RunConfig& cfg);

using Model = std::variant<train::HamiltonianModel, hyperbolic::RoeNetModel, vortex::DynamicsNet>;

struct TrainedModel {
  RunConfig cfg;
  std::string family;
  numkit::ParameterSet ps;
  Model model;
  train::TrainResult result;
};

// Fresh initialization of `family` under cfg's architecture keys.
TrainedModel build_model(const RunConfig& cfg, const std::string& family, std::uint64_t init_seed);
// Zero epochs return the initialization unchanged.
TrainedModel train_model(const RunConfig& cfg, const std::string& family, const Dataset& data,
                         std::uint64_t init_seed, std::uint64_t shuffle_seed,
                         const std::function<void(const train::EpochRecord&)>& on_epoch = {});

Checkpoint to_checkpoint(const TrainedModel& m);
// Rebuilds the model from the stored configuration and loads the parameters.
TrainedModel from_checkpoint(const Checkpoint& ck);

// Scalars of one evaluation, in insertion order.
struct Scalars {
  std::vector<std::pair<std::string, double>> values;
  void set(const std::string& name, double v);
  double get(const std::string& name) const;
  bool has(const std::string& name) const;
};

struct Evaluation {
  Artifacts files;
  Scalars scalars;
};

// Rolls the model out over cfg.t_predict and compares it with the oracle.
// A rollout that leaves the finite range yields infinite errors.
Evaluation evaluate_model(const TrainedModel& m, const RunConfig& cfg);
// Classical solver of the experiment ("roe" or "lvm") under the same protocol.
Evaluation evaluate_classical(const std::string& baseline, const RunConfig& cfg);

struct ReportRow {
  std::string check;
  double value = 0.0;
  std::string relation;  // "<", "<=", ">" or ">="
  double threshold = 0.0;
  bool pass = false;
};

ReportRow make_row(const std::string& check, double value, const std::string& relation, double threshold);
// Pass/fail checks of the experiment from the model and baseline evaluations.
std::vector<ReportRow> report_rows(const RunConfig& cfg, const Scalars& model, const Scalars* baseline);
std::string report_csv(const std::vector<ReportRow>& rows);
std::string scalars_csv(const Scalars& s);

struct Reproduction {
  Artifacts files;
  std::vector<ReportRow> rows;
  bool all_pass = false;
};

// Failure inside a stage, tagged with the stage name.
struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string stage_name, const std::string& what)
      : std::runtime_error(stage_name + ": " + what), stage(std::move(stage_name)) {}
};

// gen -> train -> eval -> baseline -> compare; progress lines go to log when given.
Reproduction reproduce(const RunConfig& cfg, std::ostream* log = nullptr);

}  // namespace physprior::cli
