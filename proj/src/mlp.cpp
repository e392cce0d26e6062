#include "fclsim/mlp.hpp"

#include <cmath>
#include <string>

namespace fclsim {

namespace {

std::size_t linear_layer_index(std::size_t i) { return 2 * i; }
std::size_t bn_layer_index(std::size_t i) { return 2 * i + 1; }

template <class Fn>
void for_each_tensor(const ModelShape &shape, Fn &&fn) {
  std::size_t in = shape.inputs;
  for (std::size_t i = 0; i < shape.hidden.size(); ++i) {
    const std::size_t out = shape.hidden[i];
    fn(linear_layer_index(i), TensorRole::weight, out * in);
    fn(linear_layer_index(i), TensorRole::bias, out);
    fn(bn_layer_index(i), TensorRole::gamma, out);
    fn(bn_layer_index(i), TensorRole::beta, out);
    fn(bn_layer_index(i), TensorRole::running_mean, out);
    fn(bn_layer_index(i), TensorRole::running_var, out);
    in = out;
  }
  const std::size_t head = linear_layer_index(shape.hidden.size());
  fn(head, TensorRole::weight, shape.outputs * in);
  fn(head, TensorRole::bias, shape.outputs);
}

}  // namespace

LayoutPtr build_layout(const ModelShape &shape) {
  std::vector<TensorSlice> slices;
  std::size_t offset = 0;
  for_each_tensor(shape, [&](std::size_t layer, TensorRole role,
                             std::size_t n) {
    slices.push_back({layer, role, offset, n});
    offset += n;
  });
  return std::make_shared<const ParamLayout>(std::move(slices));
}

Mlp::Mlp(ModelShape shape) : shape_(std::move(shape)) {
  if (shape_.inputs == 0 || shape_.outputs == 0)
    throw ShapeError("model needs nonzero input and output widths");
  std::size_t in = shape_.inputs;
  for (std::size_t h : shape_.hidden) {
    linears_.emplace_back(in, h);
    bns_.emplace_back(h, shape_.bn_momentum, shape_.bn_epsilon);
    in = h;
  }
  linears_.emplace_back(in, shape_.outputs);
  layout_ = build_layout(shape_);
}

Mlp Mlp::initialized(const ModelShape &shape, Rng &rng) {
  Mlp m(shape);
  for (auto &l : m.linears_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_features()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double &w : l.weight.data()) w = u(rng);
    for (double &b : l.bias) b = u(rng);
  }
  return m;
}

void Mlp::check_input(const Matrix &x, Mode mode) const {
  if (x.cols() != shape_.inputs)
    throw ShapeError("forward: expected " + std::to_string(shape_.inputs) +
                     " input columns, got " + std::to_string(x.cols()));
  if (x.rows() == 0) throw ShapeError("forward: empty batch");
  if (mode == Mode::train && !bns_.empty() && x.rows() < 2)
    throw ShapeError(
        "forward: train-mode batch normalization needs at least 2 samples");
}

ForwardTrace Mlp::trace(const Matrix &x, Mode mode) const {
  check_input(x, mode);
  ForwardTrace t;
  t.mode = mode;
  const std::size_t batch = x.rows();
  Matrix h = x;
  for (std::size_t i = 0; i < bns_.size(); ++i) {
    const auto &bn = bns_[i];
    ForwardTrace::Block b;
    Matrix z = linears_[i].forward(h);
    b.input = std::move(h);
    const std::size_t n = bn.features();
    b.mean.assign(n, 0.0);
    b.var.assign(n, 0.0);
    b.inv_std.assign(n, 0.0);
    if (mode == Mode::train) {
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < n; ++c) b.mean[c] += z(r, c);
      for (auto &m : b.mean) m /= static_cast<double>(batch);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < n; ++c) {
          const double d = z(r, c) - b.mean[c];
          b.var[c] += d * d;
        }
      for (auto &v : b.var) v /= static_cast<double>(batch);
    } else {
      b.mean = bn.running_mean;
      b.var = bn.running_var;
    }
    for (std::size_t c = 0; c < n; ++c)
      b.inv_std[c] = 1.0 / std::sqrt(b.var[c] + bn.epsilon);
    b.normalized = Matrix(batch, n);
    b.bn_out = Matrix(batch, n);
    h = Matrix(batch, n);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const double xhat = (z(r, c) - b.mean[c]) * b.inv_std[c];
        const double y = bn.gamma[c] * xhat + bn.beta[c];
        b.normalized(r, c) = xhat;
        b.bn_out(r, c) = y;
        h(r, c) = (shape_.activation == Activation::relu && y < 0.0) ? 0.0 : y;
      }
    t.blocks.push_back(std::move(b));
  }
  t.output = linears_.back().forward(h);
  t.head_input = std::move(h);
  return t;
}

void Mlp::commit_running_stats(const ForwardTrace &trace) {
  if (trace.mode != Mode::train) return;
  for (std::size_t i = 0; i < bns_.size(); ++i) {
    auto &bn = bns_[i];
    const auto &b = trace.blocks.at(i);
    const double batch = static_cast<double>(b.input.rows());
    const double unbias = batch / (batch - 1.0);
    for (std::size_t c = 0; c < bn.features(); ++c) {
      bn.running_mean[c] =
          (1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * b.mean[c];
      bn.running_var[c] = (1.0 - bn.momentum) * bn.running_var[c] +
                          bn.momentum * b.var[c] * unbias;
    }
  }
}

Matrix Mlp::forward(const Matrix &x, Mode mode) {
  ForwardTrace t = trace(x, mode);
  commit_running_stats(t);
  return std::move(t.output);
}

Matrix Mlp::predict(const Matrix &x) const {
  return trace(x, Mode::eval).output;
}

GradientVector Mlp::backward(const ForwardTrace &t,
                             const Matrix &grad_out) const {
  if (grad_out.rows() != t.output.rows() || grad_out.cols() != t.output.cols())
    throw ShapeError("backward: output gradient shape mismatch");
  GradientVector g(layout_);
  const std::size_t batch = grad_out.rows();
  auto slot = [&](std::size_t layer, TensorRole role) {
    const auto &s = layout_->find(layer, role);
    return std::span<double>(g.values.data() + s.offset, s.size);
  };

  // Gradient of a linear layer's weight/bias; returns gradient w.r.t. input
  // when wanted.
  auto linear_backward = [&](std::size_t li, const Matrix &in,
                             const Matrix &dout, bool want_input) {
    const auto &lin = linears_[li];
    auto dw = slot(linear_layer_index(li), TensorRole::weight);
    auto db = slot(linear_layer_index(li), TensorRole::bias);
    const std::size_t nin = lin.in_features();
    const std::size_t nout = lin.out_features();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t o = 0; o < nout; ++o) {
        const double d = dout(r, o);
        db[o] += d;
        for (std::size_t i = 0; i < nin; ++i) dw[o * nin + i] += d * in(r, i);
      }
    Matrix din;
    if (want_input) {
      din = Matrix(batch, nin);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t o = 0; o < nout; ++o) {
          const double d = dout(r, o);
          for (std::size_t i = 0; i < nin; ++i)
            din(r, i) += d * lin.weight(o, i);
        }
    }
    return din;
  };

  const std::size_t nh = bns_.size();
  Matrix dh = linear_backward(nh, t.head_input, grad_out, nh > 0);
  for (std::size_t k = nh; k-- > 0;) {
    const auto &bn = bns_[k];
    const auto &b = t.blocks.at(k);
    const std::size_t n = bn.features();
    if (shape_.activation == Activation::relu)
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < n; ++c)
          if (b.bn_out(r, c) < 0.0) dh(r, c) = 0.0;
    auto dgamma = slot(bn_layer_index(k), TensorRole::gamma);
    auto dbeta = slot(bn_layer_index(k), TensorRole::beta);
    Matrix dz(batch, n);
    for (std::size_t c = 0; c < n; ++c) {
      double sum_dxhat = 0.0;
      double sum_dxhat_xhat = 0.0;
      for (std::size_t r = 0; r < batch; ++r) {
        const double dy = dh(r, c);
        dgamma[c] += dy * b.normalized(r, c);
        dbeta[c] += dy;
        const double dxhat = dy * bn.gamma[c];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * b.normalized(r, c);
      }
      if (t.mode == Mode::train) {
        const double inv_b = 1.0 / static_cast<double>(batch);
        for (std::size_t r = 0; r < batch; ++r) {
          const double dxhat = dh(r, c) * bn.gamma[c];
          dz(r, c) = inv_b * b.inv_std[c] *
                     (static_cast<double>(batch) * dxhat - sum_dxhat -
                      b.normalized(r, c) * sum_dxhat_xhat);
        }
      } else {
        for (std::size_t r = 0; r < batch; ++r)
          dz(r, c) = dh(r, c) * bn.gamma[c] * b.inv_std[c];
      }
    }
    dh = linear_backward(k, b.input, dz, k > 0);
  }
  return g;
}

ParameterVector Mlp::extract_params() const {
  ParameterVector p(layout_);
  for (const auto &s : layout_->slices()) {
    double *dst = p.values.data() + s.offset;
    auto copy = [&](std::span<const double> src) {
      std::copy(src.begin(), src.end(), dst);
    };
    if (s.layer % 2 == 0) {
      const auto &lin = linears_[s.layer / 2];
      copy(s.role == TensorRole::weight ? lin.weight.data()
                                        : std::span<const double>(lin.bias));
    } else {
      const auto &bn = bns_[s.layer / 2];
      switch (s.role) {
        case TensorRole::gamma: copy(bn.gamma); break;
        case TensorRole::beta: copy(bn.beta); break;
        case TensorRole::running_mean: copy(bn.running_mean); break;
        case TensorRole::running_var: copy(bn.running_var); break;
        default: break;
      }
    }
  }
  return p;
}

void Mlp::inject_params(const ParameterVector &params) {
  static const std::vector<std::uint8_t> none;
  inject_params(params, none);
}

void Mlp::inject_params(const ParameterVector &params,
                        const std::vector<std::uint8_t> &skip_mask) {
  if (params.size() != layout_->size() ||
      (params.layout && !(*params.layout == *layout_)))
    throw ShapeError("inject_params: parameter layout mismatch");
  if (!skip_mask.empty() && skip_mask.size() != layout_->size())
    throw ShapeError("inject_params: mask length mismatch");
  for (const auto &s : layout_->slices()) {
    auto put = [&](std::span<double> dst) {
      for (std::size_t i = 0; i < s.size; ++i)
        if (skip_mask.empty() || !skip_mask[s.offset + i])
          dst[i] = params.values[s.offset + i];
    };
    if (s.layer % 2 == 0) {
      auto &lin = linears_[s.layer / 2];
      put(s.role == TensorRole::weight ? lin.weight.data()
                                       : std::span<double>(lin.bias));
    } else {
      auto &bn = bns_[s.layer / 2];
      switch (s.role) {
        case TensorRole::gamma: put(bn.gamma); break;
        case TensorRole::beta: put(bn.beta); break;
        case TensorRole::running_mean: put(bn.running_mean); break;
        case TensorRole::running_var: put(bn.running_var); break;
        default: break;
      }
    }
  }
}

}  // namespace fclsim
