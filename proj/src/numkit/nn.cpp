#include "physprior/numkit/nn.hpp"

#include <cmath>

#include "physprior/error.hpp"

namespace physprior::numkit {

std::size_t ParameterSet::add(std::string name, Tensor value) {
  for (const auto& n : names_)
    if (n == name) throw ConfigError("duplicate parameter name " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw ConfigError("no parameter named " + name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::vector<Var> ParameterSet::bind(bool requires_grad) const {
  std::vector<Var> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(requires_grad ? parameter(v) : constant(v));
  return out;
}

std::vector<Tensor> collect_grads(const GradMap& gm, const std::vector<Var>& leaves) {
  std::vector<Tensor> g;
  g.reserve(leaves.size());
  for (const auto& l : leaves) g.push_back(gm.get(l));
  return g;
}

Dense add_dense(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t out, Init init, Rng& rng) {
  Dense d;
  d.in = in;
  d.out = out;
  Tensor w(Shape{in, out});
  Tensor b(Shape{out});
  if (init == Init::XavierUniform) {
    double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : w.values()) v = rng.uniform(-a, a);
  } else if (init == Init::FanIn) {
    double a = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.values()) v = rng.uniform(-a, a);
    for (double& v : b.values()) v = rng.uniform(-a, a);
  }
  d.w = ps.add(prefix + ".w", std::move(w));
  d.b = ps.add(prefix + ".b", std::move(b));
  return d;
}

Var apply(const std::vector<Var>& p, const Dense& d, const Var& x) { return affine(x, p.at(d.w), p.at(d.b)); }

Var Mlp::forward(const std::vector<Var>& p, const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = apply(p, layers[i], h);
    if (i + 1 < layers.size()) h = act == Activation::Sigmoid ? sigmoid(h) : relu(h);
  }
  return h;
}

Mlp make_mlp(ParameterSet& ps, const std::string& prefix, const std::vector<std::size_t>& widths, Activation act,
             Init init, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("mlp needs at least input and output widths");
  Mlp m;
  m.act = act;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    m.layers.push_back(add_dense(ps, prefix + "." + std::to_string(i), widths[i], widths[i + 1], init, rng));
  return m;
}

Var ResNet::forward(const std::vector<Var>& p, const Var& x) const {
  Var h = apply(p, lift, x);
  for (const auto& blk : blocks) h = h + apply(p, blk.second, relu(apply(p, blk.first, h)));
  return apply(p, head, h);
}

ResNet make_resnet(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t width,
                   std::size_t blocks, std::size_t out, Rng& rng) {
  ResNet r;
  r.lift = add_dense(ps, prefix + ".lift", in, width, Init::FanIn, rng);
  for (std::size_t i = 0; i < blocks; ++i) {
    ResBlock b;
    b.first = add_dense(ps, prefix + ".block" + std::to_string(i) + ".a", width, width, Init::FanIn, rng);
    b.second = add_dense(ps, prefix + ".block" + std::to_string(i) + ".b", width, width, Init::FanIn, rng);
    r.blocks.push_back(b);
  }
  r.head = add_dense(ps, prefix + ".head", width, out, Init::FanIn, rng);
  return r;
}

}  // namespace physprior::numkit
