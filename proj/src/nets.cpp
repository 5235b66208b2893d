#include "fusion/nets.hpp"

#include <cmath>
#include <utility>

namespace fusion {

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation: " + name);
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  throw ConfigError("unhandled activation");
}

long ParamVector::size_of(const Layout& layout) {
  long total = 0;
  for (const auto& l : layout) {
    total += static_cast<long>(l.fan_in) * l.fan_out + l.fan_out;
  }
  return total;
}

void ParamVector::validate() const {
  if (layout.empty()) throw DimensionError("ParamVector: empty layout");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].fan_in <= 0 || layout[i].fan_out <= 0) {
      throw DimensionError("ParamVector: non-positive layer dimension");
    }
    if (i > 0 && layout[i].fan_in != layout[i - 1].fan_out) {
      throw DimensionError("ParamVector: layer chain mismatch");
    }
  }
  if (values.size() != size_of(layout)) {
    throw DimensionError("ParamVector: values length does not match layout");
  }
}

ParamVector init_params(const Layout& layout, InitScheme scheme, Rng& rng) {
  ParamVector p;
  p.layout = layout;
  p.values = Eigen::VectorXd::Zero(ParamVector::size_of(layout));
  p.validate();
  if (scheme == InitScheme::kScaledUniform) {
    long off = 0;
    for (const auto& l : layout) {
      const double a = std::sqrt(6.0 / (l.fan_in + l.fan_out));
      const long count = static_cast<long>(l.fan_in) * l.fan_out + l.fan_out;
      for (long i = 0; i < count; ++i) p.values[off + i] = rng.uniform(-a, a);
      off += count;
    }
  }
  return p;
}

namespace {

inline void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::kIdentity: return;
    case Activation::kTanh:
      z = z.array().tanh().matrix();
      return;
    case Activation::kRelu:
      z = z.cwiseMax(0.0);
      return;
  }
}

}  // namespace

Mlp::Mlp(Layout layout) : layout_(std::move(layout)) {
  params_.layout = layout_;
  params_.values = Eigen::VectorXd::Zero(ParamVector::size_of(layout_));
  params_.validate();
  inputs_.resize(layout_.size());
  preacts_.resize(layout_.size());
}

Mlp::Mlp(Layout layout, InitScheme scheme, Rng& rng) : Mlp(std::move(layout)) {
  params_ = init_params(layout_, scheme, rng);
}

void Mlp::set_params(const ParamVector& p) {
  p.validate();
  if (p.layout != layout_) throw DimensionError("Mlp::set_params: layout mismatch");
  params_ = p;
  has_cache_ = false;
}

void Mlp::set_param_values(const Eigen::VectorXd& values) {
  if (values.size() != params_.values.size()) {
    throw DimensionError("Mlp::set_param_values: wrong length");
  }
  params_.values = values;
  has_cache_ = false;
}

void Mlp::step(const Eigen::VectorXd& direction, double scale) {
  if (direction.size() != params_.values.size()) {
    throw DimensionError("Mlp::step: wrong direction length");
  }
  params_.values += scale * direction;
  has_cache_ = false;
}

const Eigen::MatrixXd& Mlp::forward(const Eigen::MatrixXd& x) {
  if (x.cols() != in_dim()) throw DimensionError("Mlp::forward: input dim mismatch");
  Eigen::MatrixXd cur = x;
  long off = 0;
  for (std::size_t l = 0; l < layout_.size(); ++l) {
    const auto& spec = layout_[l];
    Eigen::Map<const Eigen::MatrixXd> w(params_.values.data() + off, spec.fan_out, spec.fan_in);
    Eigen::Map<const Eigen::VectorXd> b(params_.values.data() + off + static_cast<long>(spec.fan_in) * spec.fan_out,
                                        spec.fan_out);
    inputs_[l] = std::move(cur);
    Eigen::MatrixXd z = inputs_[l] * w.transpose();
    z.rowwise() += b.transpose();
    preacts_[l] = z;
    apply_activation(spec.act, z);
    cur = std::move(z);
    off += static_cast<long>(spec.fan_in) * spec.fan_out + spec.fan_out;
  }
  out_ = std::move(cur);
  has_cache_ = true;
  return out_;
}

Eigen::VectorXd Mlp::forward_one(const Eigen::VectorXd& x) {
  Eigen::MatrixXd row(1, x.size());
  row.row(0) = x.transpose();
  return forward(row).row(0).transpose();
}

Mlp::Backprop Mlp::backward(const Eigen::MatrixXd& upstream) const {
  if (!has_cache_) throw StateError("Mlp::backward: no cached forward pass");
  if (upstream.rows() != out_.rows() || upstream.cols() != out_.cols()) {
    throw DimensionError("Mlp::backward: upstream shape mismatch");
  }
  Backprop result;
  result.param_grad = Eigen::VectorXd::Zero(params_.values.size());

  // Parameter offsets per layer.
  std::vector<long> offsets(layout_.size());
  long off = 0;
  for (std::size_t l = 0; l < layout_.size(); ++l) {
    offsets[l] = off;
    off += static_cast<long>(layout_[l].fan_in) * layout_[l].fan_out + layout_[l].fan_out;
  }

  Eigen::MatrixXd grad = upstream;
  for (std::size_t li = layout_.size(); li-- > 0;) {
    const auto& spec = layout_[li];
    // d(activation)/d(preact), using cached values; tanh output is the next
    // layer's cached input (or out_ for the last layer).
    switch (spec.act) {
      case Activation::kIdentity:
        break;
      case Activation::kTanh: {
        const Eigen::MatrixXd& act_out = (li + 1 < layout_.size()) ? inputs_[li + 1] : out_;
        grad = grad.cwiseProduct((1.0 - act_out.array().square()).matrix());
        break;
      }
      case Activation::kRelu:
        grad = grad.cwiseProduct((preacts_[li].array() > 0.0).cast<double>().matrix());
        break;
    }
    Eigen::Map<const Eigen::MatrixXd> w(params_.values.data() + offsets[li], spec.fan_out, spec.fan_in);
    Eigen::Map<Eigen::MatrixXd> gw(result.param_grad.data() + offsets[li], spec.fan_out, spec.fan_in);
    Eigen::Map<Eigen::VectorXd> gb(result.param_grad.data() + offsets[li] + static_cast<long>(spec.fan_in) * spec.fan_out,
                                   spec.fan_out);
    gw = grad.transpose() * inputs_[li];
    gb = grad.colwise().sum().transpose();
    if (li > 0) {
      grad = grad * w;
    } else {
      result.input_grad = grad * w;
    }
  }
  return result;
}

Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& at, double h) {
  if (h <= 0.0) throw ConfigError("finite_diff_grad: h must be positive");
  Eigen::VectorXd grad(at.size());
  Eigen::VectorXd probe = at;
  for (long i = 0; i < at.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double dn = f(probe);
    probe[i] = orig;
    grad[i] = (up - dn) / (2.0 * h);
  }
  return grad;
}

Layout rep_layout(int d_in, const NetSizes& sizes) {
  if (d_in <= 0 || sizes.rep_out <= 0) throw ConfigError("rep_layout: bad dimensions");
  Layout layout;
  int cur = d_in;
  for (int h : sizes.rep_hidden) {
    layout.push_back({cur, h, sizes.hidden_act});
    cur = h;
  }
  layout.push_back({cur, sizes.rep_out, Activation::kIdentity});
  return layout;
}

Layout predictor_layout(int d_z, int arms, const NetSizes& sizes) {
  if (d_z <= 0 || arms < 2) throw ConfigError("predictor_layout: bad dimensions");
  Layout layout;
  int cur = d_z;
  for (int h : sizes.pred_hidden) {
    layout.push_back({cur, h, sizes.hidden_act});
    cur = h;
  }
  layout.push_back({cur, arms, Activation::kIdentity});
  return layout;
}

Layout critic_layout(int d_z, int arms, const NetSizes& sizes) {
  if (d_z <= 0 || arms < 2) throw ConfigError("critic_layout: bad dimensions");
  Layout layout;
  int cur = d_z + arms;
  for (int h : sizes.critic_hidden) {
    layout.push_back({cur, h, sizes.hidden_act});
    cur = h;
  }
  layout.push_back({cur, 1, Activation::kTanh});
  return layout;
}

RepPredictor::RepPredictor(std::optional<Mlp> rep_net, Mlp pred_net, int n_arms)
    : rep(std::move(rep_net)), pred(std::move(pred_net)), arms(n_arms) {
  if (arms < 2) throw ConfigError("RepPredictor: need at least two arms");
  if (pred.out_dim() != arms) throw DimensionError("RepPredictor: predictor head count != arms");
  if (rep.has_value() && rep->out_dim() != pred.in_dim()) {
    throw DimensionError("RepPredictor: representation/predictor dim mismatch");
  }
}

Eigen::MatrixXd RepPredictor::features(const Eigen::MatrixXd& x) {
  return has_rep() ? rep->forward(x) : x;
}

Eigen::MatrixXd RepPredictor::m_all(const Eigen::MatrixXd& x) {
  return pred.forward(features(x));
}

Eigen::VectorXd RepPredictor::m_values(const Eigen::MatrixXd& x, const std::vector<int>& t) {
  if (static_cast<long>(t.size()) != x.rows()) {
    throw DimensionError("RepPredictor::m_values: t length mismatch");
  }
  const Eigen::MatrixXd heads = m_all(x);
  Eigen::VectorXd out(x.rows());
  for (long i = 0; i < x.rows(); ++i) {
    if (t[i] < 0 || t[i] >= arms) throw DataError("RepPredictor: arm id out of range");
    out[i] = heads(i, t[i]);
  }
  return out;
}

Eigen::VectorXd RepPredictor::tau_hat(const Eigen::MatrixXd& x, int arm) {
  if (arm <= 0 || arm >= arms) throw DataError("RepPredictor::tau_hat: bad arm");
  const Eigen::MatrixXd heads = m_all(x);
  return heads.col(arm) - heads.col(0);
}

Eigen::VectorXd RepPredictor::m_grad(const Eigen::MatrixXd& x, const std::vector<int>& t,
                                     const Eigen::VectorXd& coef) {
  if (coef.size() != x.rows()) throw DimensionError("RepPredictor::m_grad: coef length mismatch");
  m_values(x, t);  // refresh caches for exactly this batch
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(x.rows(), arms);
  for (long i = 0; i < x.rows(); ++i) upstream(i, t[i]) = coef[i];
  const auto pred_bp = pred.backward(upstream);
  Eigen::VectorXd grad(n_params());
  grad.head(pred.n_params()) = pred_bp.param_grad;
  if (has_rep()) {
    const auto rep_bp = rep->backward(pred_bp.input_grad);
    grad.tail(rep->n_params()) = rep_bp.param_grad;
  }
  return grad;
}

void RepPredictor::step(const Eigen::VectorXd& direction, double scale) {
  if (direction.size() != n_params()) throw DimensionError("RepPredictor::step: wrong length");
  pred.step(direction.head(pred.n_params()), scale);
  if (has_rep()) rep->step(direction.tail(rep->n_params()), scale);
}

Eigen::VectorXd RepPredictor::packed_params() const {
  Eigen::VectorXd out(n_params());
  out.head(pred.n_params()) = pred.params().values;
  if (has_rep()) out.tail(rep->n_params()) = rep->params().values;
  return out;
}

void RepPredictor::set_packed_params(const Eigen::VectorXd& values) {
  if (values.size() != n_params()) throw DimensionError("RepPredictor::set_packed_params: wrong length");
  pred.set_param_values(values.head(pred.n_params()));
  if (has_rep()) rep->set_param_values(values.tail(rep->n_params()));
}

}  // namespace fusion
