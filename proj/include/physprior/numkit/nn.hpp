#pragma once

#include <string>
#include <vector>

#include "physprior/numkit/autodiff.hpp"
#include "physprior/numkit/random.hpp"

namespace physprior::numkit {

// Named parameter tensors in declaration order.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& operator[](std::size_t i) { return values_.at(i); }
  const Tensor& operator[](std::size_t i) const { return values_.at(i); }
  std::size_t index_of(const std::string& name) const;
  std::size_t scalar_count() const;

  // Fresh leaves for one forward/backward pass.
  std::vector<Var> bind(bool requires_grad = true) const;

  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

std::vector<Tensor> collect_grads(const GradMap& gm, const std::vector<Var>& leaves);

enum class Init {
  Zero,
  XavierUniform,  // weights U(-a, a), a = sqrt(6/(in+out)); zero bias
  FanIn,          // weights and bias U(-1/sqrt(in), 1/sqrt(in))
};

struct Dense {
  std::size_t w = 0;
  std::size_t b = 0;
  std::size_t in = 0;
  std::size_t out = 0;
};

Dense add_dense(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t out, Init init, Rng& rng);
Var apply(const std::vector<Var>& p, const Dense& d, const Var& x);

enum class Activation { Sigmoid, Relu };

// Affine layers with an activation between them (none after the last).
struct Mlp {
  std::vector<Dense> layers;
  Activation act = Activation::Sigmoid;
  Var forward(const std::vector<Var>& p, const Var& x) const;
};

Mlp make_mlp(ParameterSet& ps, const std::string& prefix, const std::vector<std::size_t>& widths, Activation act,
             Init init, Rng& rng);

// h + W2·relu(W1·h + b1) + b2
struct ResBlock {
  Dense first;
  Dense second;
};

// Lift to the block width, a chain of residual blocks, then an affine head.
struct ResNet {
  Dense lift;
  std::vector<ResBlock> blocks;
  Dense head;
  Var forward(const std::vector<Var>& p, const Var& x) const;
};

ResNet make_resnet(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t width,
                   std::size_t blocks, std::size_t out, Rng& rng);

}  // namespace physprior::numkit
