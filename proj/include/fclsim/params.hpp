#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fclsim/error.hpp"

namespace fclsim {

enum class TensorRole : std::uint8_t {
  weight,
  bias,
  gamma,
  beta,
  running_mean,
  running_var,
};

const char *to_string(TensorRole role) noexcept;

struct TensorSlice {
  std::size_t layer = 0;
  TensorRole role = TensorRole::weight;
  std::size_t offset = 0;
  std::size_t size = 0;

  friend bool operator==(const TensorSlice &, const TensorSlice &) = default;
};

// Ordered description of where each tensor of a model lives inside the flat
// parameter vector. Built once per architecture and shared by every vector
// taken from a model of that architecture.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<TensorSlice> slices);

  const std::vector<TensorSlice> &slices() const noexcept { return slices_; }
  std::size_t size() const noexcept { return total_; }

  // Slots that belong to a batch-norm layer: gamma, beta and running stats.
  const std::vector<std::uint8_t> &bn_mask() const noexcept { return bn_; }
  // Slots updated by gradient descent (everything except running stats).
  const std::vector<std::uint8_t> &trainable_mask() const noexcept {
    return trainable_;
  }
  std::size_t bn_count() const noexcept;
  std::size_t trainable_count() const noexcept;

  const TensorSlice &find(std::size_t layer, TensorRole role) const;

  friend bool operator==(const ParamLayout &a, const ParamLayout &b) {
    return a.slices_ == b.slices_;
  }

 private:
  std::vector<TensorSlice> slices_;
  std::size_t total_ = 0;
  std::vector<std::uint8_t> bn_;
  std::vector<std::uint8_t> trainable_;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

inline bool same_layout(const LayoutPtr &a, const LayoutPtr &b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

// Flat f64 vector tagged with the layout it was taken from. The tag keeps
// parameters and gradients from being mixed up at compile time.
template <class Tag>
struct FlatVector {
  std::vector<double> values;
  LayoutPtr layout;

  FlatVector() = default;
  explicit FlatVector(LayoutPtr l)
      : values(l ? l->size() : 0, 0.0), layout(std::move(l)) {}
  FlatVector(std::vector<double> v, LayoutPtr l)
      : values(std::move(v)), layout(std::move(l)) {
    if (layout && values.size() != layout->size())
      throw ShapeError("flat vector length " + std::to_string(values.size()) +
                       " does not match layout size " +
                       std::to_string(layout->size()));
  }

  std::size_t size() const noexcept { return values.size(); }
  std::span<double> span() noexcept { return values; }
  std::span<const double> span() const noexcept { return values; }
  double &operator[](std::size_t i) noexcept { return values[i]; }
  double operator[](std::size_t i) const noexcept { return values[i]; }

  // Exact value equality; layouts must also match.
  friend bool operator==(const FlatVector &a, const FlatVector &b) {
    return a.values == b.values && same_layout(a.layout, b.layout);
  }
};

struct ParamTag {};
struct GradTag {};
using ParameterVector = FlatVector<ParamTag>;
using GradientVector = FlatVector<GradTag>;

template <class A, class B>
void require_same_layout(const FlatVector<A> &a, const FlatVector<B> &b,
                         const char *what) {
  if (a.size() != b.size() || !same_layout(a.layout, b.layout))
    throw ShapeError(std::string(what) + ": parameter layout mismatch");
}

// Elementwise a += b.
void accumulate(GradientVector &a, const GradientVector &b);

}  // namespace fclsim
