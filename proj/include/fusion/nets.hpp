#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fusion/common.hpp"
#include "fusion/rng.hpp"

namespace fusion {

enum class Activation { kIdentity, kTanh, kRelu };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation act);

struct LayerSpec {
  int fan_in = 0;
  int fan_out = 0;
  Activation act = Activation::kIdentity;
  bool operator==(const LayerSpec&) const = default;
};

using Layout = std::vector<LayerSpec>;

// Flat parameter block plus the layer descriptors that give it meaning.
// Per layer the block holds W (fan_out x fan_in, column-major), then b.
struct ParamVector {
  Eigen::VectorXd values;
  Layout layout;

  static long size_of(const Layout& layout);
  // Throws DimensionError on an inconsistent layer chain or length mismatch.
  void validate() const;
};

enum class InitScheme { kZeros, kScaledUniform };

// kScaledUniform draws every entry of a layer (weights and biases) from
// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
ParamVector init_params(const Layout& layout, InitScheme scheme, Rng& rng);

// Multilayer perceptron over batches; rows are samples. forward() caches
// per-layer inputs and pre-activations, backward() consumes that cache.
// Parameters change only through set_params / set_param_values / step.
class Mlp {
 public:
  explicit Mlp(Layout layout);
  Mlp(Layout layout, InitScheme scheme, Rng& rng);

  int in_dim() const { return layout_.front().fan_in; }
  int out_dim() const { return layout_.back().fan_out; }
  long n_params() const { return params_.values.size(); }
  const Layout& layout() const { return layout_; }
  const ParamVector& params() const { return params_; }

  void set_params(const ParamVector& p);
  void set_param_values(const Eigen::VectorXd& values);
  // params += scale * direction
  void step(const Eigen::VectorXd& direction, double scale);

  const Eigen::MatrixXd& forward(const Eigen::MatrixXd& x);
  Eigen::VectorXd forward_one(const Eigen::VectorXd& x);

  struct Backprop {
    Eigen::VectorXd param_grad;  // gradient of sum_i <upstream_i, out_i>
    Eigen::MatrixXd input_grad;  // n x in_dim
  };
  // upstream must match the cached forward batch (n x out_dim).
  Backprop backward(const Eigen::MatrixXd& upstream) const;

 private:
  Layout layout_;
  ParamVector params_;
  std::vector<Eigen::MatrixXd> inputs_;   // inputs_[l] feeds layer l
  std::vector<Eigen::MatrixXd> preacts_;  // preacts_[l] = inputs_[l] W_l^T + b_l
  Eigen::MatrixXd out_;
  bool has_cache_ = false;
};

// Central-difference oracle; calls only f, never any analytic gradient path.
Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& at, double h = 1e-5);

// Architecture knobs shared by the factories below.
struct NetSizes {
  std::vector<int> rep_hidden{64, 64};
  int rep_out = 8;
  std::vector<int> pred_hidden{64};
  std::vector<int> critic_hidden{64, 64};
  Activation hidden_act = Activation::kTanh;
};

// Representation x -> z: hidden layers + linear output.
Layout rep_layout(int d_in, const NetSizes& sizes);
// Predictor z -> (arms) scalar heads: shared trunk, one linear head per arm.
// Head t never reads another head's parameters (separate output rows).
Layout predictor_layout(int d_z, int arms, const NetSizes& sizes);
// Critic on (z, one-hot t) with bounded (tanh) output.
Layout critic_layout(int d_z, int arms, const NetSizes& sizes);

// Composition used by the estimators: optional representation followed by a
// multi-head predictor. Parameter packing order is [predictor, representation].
struct RepPredictor {
  std::optional<Mlp> rep;
  Mlp pred;
  int arms = 2;

  RepPredictor(std::optional<Mlp> rep_net, Mlp pred_net, int n_arms);

  bool has_rep() const { return rep.has_value(); }
  int in_dim() const { return has_rep() ? rep->in_dim() : pred.in_dim(); }
  long n_params() const { return pred.n_params() + (has_rep() ? rep->n_params() : 0); }

  // z = rep(x) (or x itself); mutates forward caches.
  Eigen::MatrixXd features(const Eigen::MatrixXd& x);
  // m(x_i, t_i) for each row.
  Eigen::VectorXd m_values(const Eigen::MatrixXd& x, const std::vector<int>& t);
  // All heads at once, n x arms.
  Eigen::MatrixXd m_all(const Eigen::MatrixXd& x);
  // tau_hat = m(x, arm) - m(x, 0)
  Eigen::VectorXd tau_hat(const Eigen::MatrixXd& x, int arm = 1);

  // Gradient of sum_i coef_i * m(x_i, t_i) in packed order; one forward must
  // have been run on exactly this batch (the caches are reused).
  Eigen::VectorXd m_grad(const Eigen::MatrixXd& x, const std::vector<int>& t,
                         const Eigen::VectorXd& coef);

  void step(const Eigen::VectorXd& direction, double scale);
  Eigen::VectorXd packed_params() const;
  void set_packed_params(const Eigen::VectorXd& values);
};

}  // namespace fusion
