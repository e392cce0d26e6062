#include "fclsim/params.hpp"

#include <algorithm>

namespace fclsim {

const char *to_string(TensorRole role) noexcept {
  switch (role) {
    case TensorRole::weight: return "weight";
    case TensorRole::bias: return "bias";
    case TensorRole::gamma: return "gamma";
    case TensorRole::beta: return "beta";
    case TensorRole::running_mean: return "running_mean";
    case TensorRole::running_var: return "running_var";
  }
  return "?";
}

ParamLayout::ParamLayout(std::vector<TensorSlice> slices)
    : slices_(std::move(slices)) {
  for (const auto &s : slices_) {
    if (s.offset != total_)
      throw ShapeError("parameter layout slices must be contiguous");
    total_ += s.size;
  }
  bn_.assign(total_, 0);
  trainable_.assign(total_, 1);
  for (const auto &s : slices_) {
    const bool bn = s.role == TensorRole::gamma || s.role == TensorRole::beta ||
                    s.role == TensorRole::running_mean ||
                    s.role == TensorRole::running_var;
    const bool stat = s.role == TensorRole::running_mean ||
                      s.role == TensorRole::running_var;
    for (std::size_t i = s.offset; i < s.offset + s.size; ++i) {
      bn_[i] = bn;
      trainable_[i] = !stat;
    }
  }
}

std::size_t ParamLayout::bn_count() const noexcept {
  return static_cast<std::size_t>(std::count(bn_.begin(), bn_.end(), 1));
}

std::size_t ParamLayout::trainable_count() const noexcept {
  return static_cast<std::size_t>(
      std::count(trainable_.begin(), trainable_.end(), 1));
}

const TensorSlice &ParamLayout::find(std::size_t layer,
                                     TensorRole role) const {
  for (const auto &s : slices_)
    if (s.layer == layer && s.role == role) return s;
  throw ShapeError("no tensor '" + std::string(to_string(role)) +
                   "' in layer " + std::to_string(layer));
}

void accumulate(GradientVector &a, const GradientVector &b) {
  require_same_layout(a, b, "accumulate");
  for (std::size_t i = 0; i < a.size(); ++i) a.values[i] += b.values[i];
}

}  // namespace fclsim
