#include "physprior/train/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "physprior/error.hpp"

namespace physprior::train {

Metrics metric_eps_p(const std::vector<integrate::PhaseState<numkit::Tensor>>& pred,
                     const std::vector<integrate::PhaseState<numkit::Tensor>>& ref) {
  if (pred.size() != ref.size()) throw ShapeError("metric_eps_p: trajectory lengths differ");
  Metrics m;
  m.per_step.reserve(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const auto& a = pred[k];
    const auto& b = ref[k];
    if (a.q.shape() != b.q.shape() || a.p.shape() != b.p.shape() || a.q.shape() != a.p.shape())
      throw ShapeError("metric_eps_p: state shapes differ at index " + std::to_string(k));
    std::size_t rows = a.q.dim(0);
    if (rows == 0) throw ShapeError("metric_eps_p: no samples");
    double s = 0.0;
    for (std::size_t i = 0; i < a.q.size(); ++i) s += std::abs(a.q[i] - b.q[i]) + std::abs(a.p[i] - b.p[i]);
    m.per_step.push_back(s / static_cast<double>(rows));
  }
  if (m.per_step.size() > 1) {
    double s = 0.0;
    for (std::size_t k = 1; k < m.per_step.size(); ++k) s += m.per_step[k];
    m.mean = s / static_cast<double>(m.per_step.size() - 1);
  } else if (!m.per_step.empty()) {
    m.mean = m.per_step[0];
  }
  return m;
}

double metric_eps_u(const numkit::Tensor& pred, const numkit::Tensor& ref) {
  if (pred.shape() != ref.shape()) throw ShapeError("metric_eps_u: shapes differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += (pred[i] - ref[i]) * (pred[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  if (den == 0.0) throw NumericError("metric_eps_u: reference field is zero");
  return std::sqrt(num / den);
}

void write_eval_csv(std::ostream& os, const std::string& column, const std::vector<double>& times,
                    const std::vector<double>& values) {
  if (times.size() != values.size()) throw ShapeError("write_eval_csv: times and values differ in length");
  os << "t," << column << "\n";
  char buf[64];
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,", times[i]);
    os << buf;
    std::snprintf(buf, sizeof buf, "%.17g\n", values[i]);
    os << buf;
  }
}

}  // namespace physprior::train
