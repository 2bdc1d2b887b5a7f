#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mtcrf {

// Parameters and gradients are exposed to the optimizer as flat spans in a
// fixed order; the model and its gradient container must produce matching
// lists.
using TensorSpans = std::vector<std::span<double>>;

inline std::span<double> as_span(Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
inline std::span<double> as_span(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline double squared_norm(const TensorSpans& spans) {
  double s = 0.0;
  for (auto span : spans) {
    for (double v : span) s += v * v;
  }
  return s;
}

}  // namespace mtcrf
