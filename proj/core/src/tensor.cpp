#include "spade/tensor.hpp"

#include <cmath>
#include <sstream>

#include "spade/errors.hpp"

namespace spade {

int numel(const Shape& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
  }
  values.assign(static_cast<std::size_t>(numel(shape)), fill);
}

Tensor::Tensor(Shape s, std::vector<double> vals) : shape(std::move(s)), values(std::move(vals)) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
  }
  if (static_cast<int>(values.size()) != numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  }
}

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor matrix(int rows, int cols, std::vector<double> vals) {
  return Tensor(Shape{rows, cols}, std::move(vals));
}

Tensor row_vector(std::vector<double> vals) {
  const int n = static_cast<int>(vals.size());
  return Tensor(Shape{1, n}, std::move(vals));
}

Tensor col_vector(std::vector<double> vals) {
  const int n = static_cast<int>(vals.size());
  return Tensor(Shape{n, 1}, std::move(vals));
}

Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

}  // namespace spade
