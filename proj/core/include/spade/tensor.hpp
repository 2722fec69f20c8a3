#pragma once

#include <optional>
#include <string>
#include <vector>

namespace spade {

using Shape = std::vector<int>;

int numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. Matrices are [rows x cols];
// the time axis is always the last (contiguous) axis.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> vals);

  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  int size() const { return static_cast<int>(values.size()); }

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }

  bool all_finite() const;
};

Tensor matrix(int rows, int cols, std::vector<double> vals);
Tensor row_vector(std::vector<double> vals);
Tensor col_vector(std::vector<double> vals);
Tensor scalar(double v);

}  // namespace spade
