#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fclsim/matrix.hpp"
#include "fclsim/params.hpp"
#include "fclsim/rng.hpp"

namespace fclsim {

inline constexpr std::size_t kFeatureCount = 29;
inline constexpr std::size_t kActionCount = 8;
inline constexpr std::size_t kHiddenUnits = 16;

enum class Mode { train, eval };
enum class Activation { identity, relu };

struct LinearLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;

  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out)
      : weight(out, in), bias(out, 0.0) {}

  std::size_t in_features() const noexcept { return weight.cols(); }
  std::size_t out_features() const noexcept { return weight.rows(); }

  Matrix forward(const Matrix &x) const { return affine(x, weight, bias); }
};

struct BatchNormLayer {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t n, double momentum_ = 0.1,
                          double epsilon_ = 1e-5)
      : gamma(n, 1.0),
        beta(n, 0.0),
        running_mean(n, 0.0),
        running_var(n, 1.0),
        momentum(momentum_),
        epsilon(epsilon_) {}

  std::size_t features() const noexcept { return gamma.size(); }
};

struct ModelShape {
  std::size_t inputs = kFeatureCount;
  std::vector<std::size_t> hidden{kHiddenUnits, kHiddenUnits};
  std::size_t outputs = kActionCount;
  Activation activation = Activation::identity;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  friend bool operator==(const ModelShape &, const ModelShape &) = default;
};

// Intermediate values of one forward pass, kept for the backward pass.
struct ForwardTrace {
  struct Block {
    Matrix input;       // input to the linear layer
    Matrix normalized;  // x-hat
    Matrix bn_out;      // gamma * x-hat + beta (pre-activation)
    std::vector<double> mean;
    std::vector<double> var;  // biased batch variance (train) or running var
    std::vector<double> inv_std;
  };
  Mode mode = Mode::eval;
  std::vector<Block> blocks;
  Matrix head_input;
  Matrix output;
};

// Fixed-topology perceptron: [Linear -> BatchNorm -> activation] per hidden
// width, then a linear head. Layer indices in the parameter layout count
// linear and batch-norm layers separately, in forward order.
class Mlp {
 public:
  explicit Mlp(ModelShape shape = {});

  // Weights and biases uniform in +-1/sqrt(fan_in); BN at identity.
  static Mlp initialized(const ModelShape &shape, Rng &rng);

  const ModelShape &shape() const noexcept { return shape_; }
  const LayoutPtr &layout() const noexcept { return layout_; }

  std::size_t hidden_count() const noexcept { return bns_.size(); }
  LinearLayer &linear(std::size_t i) { return linears_.at(i); }
  const LinearLayer &linear(std::size_t i) const { return linears_.at(i); }
  BatchNormLayer &batch_norm(std::size_t i) { return bns_.at(i); }
  const BatchNormLayer &batch_norm(std::size_t i) const { return bns_.at(i); }

  // Train mode normalizes with batch statistics and folds them into the
  // running statistics; eval mode reads the running statistics only.
  Matrix forward(const Matrix &x, Mode mode);
  Matrix predict(const Matrix &x) const;

  // Pure forward pass; nothing is written back to the model.
  ForwardTrace trace(const Matrix &x, Mode mode) const;
  void commit_running_stats(const ForwardTrace &trace);

  // Reverse-mode gradient of a scalar whose gradient w.r.t. the output is
  // grad_out. Running-statistic slots receive zero.
  GradientVector backward(const ForwardTrace &trace,
                          const Matrix &grad_out) const;

  ParameterVector extract_params() const;
  void inject_params(const ParameterVector &params);
  // Writes only the slots where skip_mask is 0.
  void inject_params(const ParameterVector &params,
                     const std::vector<std::uint8_t> &skip_mask);

 private:
  void check_input(const Matrix &x, Mode mode) const;

  ModelShape shape_;
  std::vector<LinearLayer> linears_;  // hidden_count() + 1
  std::vector<BatchNormLayer> bns_;
  LayoutPtr layout_;
};

LayoutPtr build_layout(const ModelShape &shape);

}  // namespace fclsim
