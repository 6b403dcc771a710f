#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dsd/matrix.hpp"

namespace dsd {

// Parameter with a same-shape gradient accumulator. Training code fills
// `grad` analytically, then hands the tensor to an Optimizer.
struct ParamTensor {
  Matrix values;
  Matrix grad;
  std::string name;

  ParamTensor() = default;
  ParamTensor(std::size_t rows, std::size_t cols, std::string n)
      : values(rows, cols), grad(rows, cols), name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0); }
};

enum class OptimizerKind { sgd, adam };

// SGD and bias-corrected Adam (beta1=0.9, beta2=0.999, eps=1e-8), updating a
// fixed parameter list in place. Single-threaded and deterministic.
class Optimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  Optimizer(OptimizerKind kind, double lr, std::vector<ParamTensor*> params);

  // One update from the currently accumulated gradients. Non-finite gradients
  // abort the step (divergence error naming the offending parameter).
  void step();

  OptimizerKind kind() const { return kind_; }
  double lr() const { return lr_; }
  std::uint64_t step_count() const { return steps_; }

  // Bit-exact binary round trip (moment buffers, step count, config).
  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<ParamTensor*> params_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst_param;
  bool pass = false;
};

// Central finite differences against the analytic gradients currently stored
// in the params' grad fields. `loss` must be a deterministic pure function of
// the param values. Relative error uses max(|analytic|, |numeric|, 1e-6) as
// the denominator.
GradCheckReport grad_check(const std::function<double()>& loss,
                           std::span<ParamTensor* const> params, double tol, double h = 1e-4);

}  // namespace dsd
