#include "dsd/grad.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "dsd/error.hpp"

namespace dsd {

Optimizer::Optimizer(OptimizerKind kind, double lr, std::vector<ParamTensor*> params)
    : kind_(kind), lr_(lr), params_(std::move(params)) {
  if (lr_ <= 0.0) fail_usage("optimizer: learning rate must be positive");
  if (kind_ == OptimizerKind::adam) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i]->values.flat().size(), 0.0);
      v_[i].assign(params_[i]->values.flat().size(), 0.0);
    }
  }
}

void Optimizer::step() {
  for (const auto* p : params_) {
    auto g = p->grad.flat();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        fail_divergence("non-finite gradient in parameter '" + p->name + "' at index " +
                        std::to_string(i) + " (step " + std::to_string(steps_ + 1) + ")");
  }
  ++steps_;
  if (kind_ == OptimizerKind::sgd) {
    for (auto* p : params_) {
      auto val = p->values.flat();
      auto g = p->grad.flat();
      for (std::size_t i = 0; i < val.size(); ++i) val[i] -= lr_ * g[i];
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto val = params_[pi]->values.flat();
    auto g = params_[pi]->grad.flat();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

namespace {

template <typename T>
void write_pod(std::ostream& out, const T& x) {
  out.write(reinterpret_cast<const char*>(&x), sizeof x);
}

template <typename T>
void read_pod(std::istream& in, T& x) {
  in.read(reinterpret_cast<char*>(&x), sizeof x);
  if (!in) fail_data("optimizer state: truncated stream");
}

}  // namespace

void Optimizer::save(std::ostream& out) const {
  const char magic[8] = {'D', 'S', 'D', 'O', 'P', 'T', '0', '1'};
  out.write(magic, sizeof magic);
  write_pod(out, static_cast<std::uint32_t>(kind_));
  write_pod(out, lr_);
  write_pod(out, steps_);
  write_pod(out, static_cast<std::uint64_t>(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::uint64_t n = params_[i]->values.flat().size();
    write_pod(out, n);
    if (kind_ == OptimizerKind::adam) {
      out.write(reinterpret_cast<const char*>(m_[i].data()), sizeof(double) * n);
      out.write(reinterpret_cast<const char*>(v_[i].data()), sizeof(double) * n);
    }
  }
}

void Optimizer::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::string_view(magic, 8) != "DSDOPT01")
    fail_data("optimizer state: bad magic");
  std::uint32_t kind;
  read_pod(in, kind);
  if (kind != static_cast<std::uint32_t>(kind_)) fail_data("optimizer state: kind mismatch");
  read_pod(in, lr_);
  read_pod(in, steps_);
  std::uint64_t count;
  read_pod(in, count);
  if (count != params_.size()) fail_data("optimizer state: parameter count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::uint64_t n;
    read_pod(in, n);
    if (n != params_[i]->values.flat().size())
      fail_data("optimizer state: shape mismatch for '" + params_[i]->name + "'");
    if (kind_ == OptimizerKind::adam) {
      in.read(reinterpret_cast<char*>(m_[i].data()), sizeof(double) * n);
      in.read(reinterpret_cast<char*>(v_[i].data()), sizeof(double) * n);
      if (!in) fail_data("optimizer state: truncated moment buffers");
    }
  }
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           std::span<ParamTensor* const> params, double tol, double h) {
  GradCheckReport report;
  for (auto* p : params) {
    auto val = p->values.flat();
    auto g = p->grad.flat();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double saved = val[i];
      val[i] = saved + h;
      const double up = loss();
      val[i] = saved - h;
      const double down = loss();
      val[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g[i];
      const double abs_err = std::fabs(numeric - analytic);
      const double rel_err =
          abs_err / std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
      if (rel_err > report.max_rel_err) {
        report.max_rel_err = rel_err;
        report.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace dsd
