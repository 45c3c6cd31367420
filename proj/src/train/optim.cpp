#include "physprior/train/optim.hpp"

#include <cmath>
#include <cstdio>

#include "physprior/error.hpp"
#include "physprior/numkit/random.hpp"

namespace physprior::train {

namespace nk = numkit;

AdamState make_adam(const ParameterSet& ps, AdamConfig cfg) {
  AdamState st;
  st.cfg = cfg;
  for (const auto& t : ps.values()) {
    st.m.emplace_back(t.shape());
    st.v.emplace_back(t.shape());
  }
  return st;
}

void adam_update(AdamState& st, ParameterSet& ps, const std::vector<Tensor>& grads, double alpha) {
  if (grads.size() != ps.size() || st.m.size() != ps.size()) throw ShapeError("adam_update: parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (grads[i].shape() != ps[i].shape()) throw ShapeError("adam_update: gradient shape mismatch for " + ps.name(i));
    if (!grads[i].all_finite()) throw NumericError("adam_update: non-finite gradient for parameter " + ps.name(i));
  }
  const auto& c = st.cfg;
  double a = alpha > 0.0 ? alpha : c.alpha;
  st.t += 1;
  double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.t));
  double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    double* th = ps[i].data();
    double* m = st.m[i].data();
    double* v = st.v[i].data();
    const double* g = grads[i].data();
    for (std::size_t k = 0; k < ps[i].size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      double mh = m[k] / bc1;
      double vh = v[k] / bc2;
      th[k] -= a * mh / (std::sqrt(vh) + c.epsilon);
    }
  }
}

void LrSchedule::validate() const {
  if (!(base > 0.0)) throw ConfigError("schedule: base rate must be positive");
  if (step_size == 0) throw ConfigError("schedule: step_size must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("schedule: gamma must be in (0, 1]");
}

double LrSchedule::rate(std::size_t epoch) const {
  double r = base;
  for (std::size_t k = 0; k < epoch / step_size; ++k) r *= gamma;
  return r;
}

Var loss_l1(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape()) throw ShapeError("loss_l1: shape mismatch");
  double rows = pred.shape().empty() ? 1.0 : static_cast<double>(pred.shape()[0]);
  return nk::sum(nk::abs(pred - target)) * (1.0 / rows);
}

Var loss_mse(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape()) throw ShapeError("loss_mse: shape mismatch");
  Var d = pred - target;
  return nk::mean(d * d);
}

namespace {

void check_probs(const Tensor& probs, const Tensor& labels, const char* where) {
  if (probs.shape() != labels.shape() || probs.rank() != 2) throw ShapeError(std::string(where) + ": rows x M expected");
}

}  // namespace

LossValue loss_cross_entropy(const Tensor& probs, const Tensor& labels) { return loss_focal(probs, labels, 1.0, 0.0); }

LossValue loss_binary_cross_entropy(const Tensor& probs, const Tensor& labels) {
  if (probs.shape() != labels.shape()) throw ShapeError("loss_binary_cross_entropy: shape mismatch");
  LossValue out;
  out.grad = Tensor(probs.shape());
  double n = static_cast<double>(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = std::min(std::max(probs[i], kProbFloor), 1.0 - kProbFloor);
    double y = labels[i];
    out.value -= (y * std::log(p) + (1.0 - y) * std::log(1.0 - p)) / n;
    out.grad[i] = (-(y / p) + (1.0 - y) / (1.0 - p)) / n;
  }
  return out;
}

LossValue loss_focal(const Tensor& probs, const Tensor& labels, double alpha, double gamma) {
  check_probs(probs, labels, "loss_focal");
  LossValue out;
  out.grad = Tensor(probs.shape());
  double rows = static_cast<double>(probs.dim(0));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double y = labels[i];
    if (y == 0.0) continue;
    bool clamped = probs[i] < kProbFloor;
    double p = clamped ? kProbFloor : probs[i];
    double w = std::pow(1.0 - p, gamma);
    double lp = std::log(p);
    out.value -= alpha * w * y * lp / rows;
    if (!clamped) {
      double dw = gamma == 0.0 ? 0.0 : -gamma * std::pow(1.0 - p, gamma - 1.0);
      out.grad[i] = -alpha * y * (dw * lp + w / p) / rows;
    }
  }
  return out;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  nk::Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
  return idx;
}

TrainResult train_loop(ParameterSet& ps, std::size_t n_train, std::size_t n_val, const BatchLoss& loss,
                       const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (n_train == 0) throw ConfigError("train: empty training set");
  if (cfg.batch == 0) throw ConfigError("train: batch size must be positive");
  cfg.schedule.validate();
  TrainResult res;
  AdamState adam = make_adam(ps, cfg.adam);
  auto run_batches = [&](const std::vector<std::size_t>& order, std::size_t offset, std::size_t count, bool val,
                         double lr, bool& bad) {
    double total = 0.0;
    for (std::size_t s = 0; s < count; s += cfg.batch) {
      std::size_t e = std::min(count, s + cfg.batch);
      std::vector<std::size_t> idx;
      for (std::size_t k = s; k < e; ++k) idx.push_back(order[k] + offset);
      double value;
      if (val) {
        nk::NoGradGuard ng;
        value = loss(ps.bind(false), idx, true).value().item();
      } else {
        auto p = ps.bind(true);
        Var l = loss(p, idx, false);
        value = l.value().item();
        if (std::isfinite(value)) {
          auto grads = nk::collect_grads(nk::backward_grad(l), p);
          bool finite = true;
          for (const auto& g : grads) finite = finite && g.all_finite();
          if (!finite) {
            bad = true;
            return total;
          }
          if (cfg.clip_norm > 0.0) {
            double sq = 0.0;
            for (const auto& g : grads)
              for (double x : g.values()) sq += x * x;
            double norm = std::sqrt(sq);
            if (norm > cfg.clip_norm)
              for (auto& g : grads) g *= cfg.clip_norm / norm;
          }
          adam_update(adam, ps, grads, lr);
        }
      }
      if (!std::isfinite(value)) {
        bad = true;
        return total;
      }
      total += value * static_cast<double>(e - s);
    }
    return total / static_cast<double>(count);
  };

  std::vector<std::size_t> val_order(n_val);
  for (std::size_t i = 0; i < n_val; ++i) val_order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Tensor> snapshot = ps.values();
    AdamState adam_snapshot = adam;
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = cfg.schedule.rate(epoch);
    bool bad = false;
    auto order = permutation(n_train, nk::derive_seed(cfg.seed, epoch));
    try {
      rec.loss_train = run_batches(order, 0, n_train, false, rec.lr, bad);
      if (!bad && n_val > 0) rec.loss_val = run_batches(val_order, n_train, n_val, true, rec.lr, bad);
    } catch (const NumericError& e) {
      bad = true;
      res.message = e.what();
    } catch (const SingularMatrixError& e) {
      bad = true;
      res.message = e.what();
    }
    if (bad) {
      ps.values() = snapshot;
      adam = adam_snapshot;
      res.diverged = true;
      if (res.message.empty()) res.message = "non-finite loss in epoch " + std::to_string(rec.epoch);
      break;
    }
    res.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return res;
}

void write_metrics_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
  os << "epoch,loss_train,loss_val,lr\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.loss_train, r.loss_val, r.lr);
    os << buf;
  }
}

}  // namespace physprior::train
