#include "fclsim/matrix.hpp"

#include <cmath>

namespace fclsim {

bool Matrix::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix affine(const Matrix &in, const Matrix &weight,
              std::span<const double> bias) {
  if (in.cols() != weight.cols())
    throw ShapeError("affine: input width " + std::to_string(in.cols()) +
                     " does not match weight width " +
                     std::to_string(weight.cols()));
  if (bias.size() != weight.rows())
    throw ShapeError("affine: bias length does not match weight rows");
  Matrix out(in.rows(), weight.rows());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto x = in.row(r);
    for (std::size_t o = 0; o < weight.rows(); ++o) {
      auto w = weight.row(o);
      double acc = bias[o];
      for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
      out(r, o) = acc;
    }
  }
  return out;
}

}  // namespace fclsim
