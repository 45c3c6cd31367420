#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "physprior/numkit/autodiff.hpp"
#include "physprior/numkit/nn.hpp"

namespace physprior::train {

using numkit::ParameterSet;
using numkit::Tensor;
using numkit::Var;
using numkit::Rng;

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;
};

AdamState make_adam(const ParameterSet& ps, AdamConfig cfg = {});

// One bias-corrected step; alpha overrides cfg.alpha when positive.
void adam_update(AdamState& st, ParameterSet& ps, const std::vector<Tensor>& grads, double alpha = -1.0);

struct LrSchedule {
  double base = 1e-3;
  std::size_t step_size = 10;
  double gamma = 0.8;
  void validate() const;
  // base · gamma^floor(epoch / step_size), epoch counted from 0
  double rate(std::size_t epoch) const;
};

// Σ_c |pred - target| averaged over rows (subgradient 0 at ties).
Var loss_l1(const Var& pred, const Var& target);
// Mean over all entries of (pred - target)².
Var loss_mse(const Var& pred, const Var& target);

struct LossValue {
  double value = 0.0;
  Tensor grad;  // d value / d probs
};

constexpr double kProbFloor = 1e-12;

// probs, labels: rows x M; mean over rows of -Σ_k y_k ln max(p_k, floor).
LossValue loss_cross_entropy(const Tensor& probs, const Tensor& labels);
// -[y ln p + (1-y) ln(1-p)] averaged over entries.
LossValue loss_binary_cross_entropy(const Tensor& probs, const Tensor& labels);
// Mean over rows of -Σ_k α (1 - p_k)^γ y_k ln max(p_k, floor).
LossValue loss_focal(const Tensor& probs, const Tensor& labels, double alpha, double gamma);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_train = 0.0;
  double loss_val = 0.0;
  double lr = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 16;
  LrSchedule schedule;
  AdamConfig adam;
  std::uint64_t seed = 0;
  // Cap on the global gradient norm; 0 disables clipping.
  double clip_norm = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  bool diverged = false;
  std::string message;
};

// Loss of the samples `idx` for the given parameter leaves.
using BatchLoss = std::function<Var(const std::vector<Var>& params, const std::vector<std::size_t>& idx, bool val)>;

// Minibatch Adam over n_train samples with a per-epoch shuffle derived from the seed.
// A non-finite loss restores the parameters of the last completed epoch and stops.
TrainResult train_loop(ParameterSet& ps, std::size_t n_train, std::size_t n_val, const BatchLoss& loss,
                       const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

// Fisher–Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

void write_metrics_csv(std::ostream& os, const std::vector<EpochRecord>& history);

}  // namespace physprior::train
