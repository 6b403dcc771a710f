#include "dsd/baseline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dsd/error.hpp"

namespace dsd {
namespace {

// One-sided Jacobi: rotate column pairs of A until mutually orthogonal,
// accumulating the rotations into V. Then A_in = B V^T with B = A_out,
// sigma_j = ||B_j||. Deterministic and accurate enough for the factored-loss
// identity checks (tested to 1e-10 on random inputs).
struct JacobiOut {
  Matrix b;  // rotated copy of the input, orthogonal columns
  Matrix v;  // n x n accumulated rotations
  std::vector<double> sigma;
};

JacobiOut one_sided_jacobi(const Matrix& a) {
  const std::size_t m = a.rows(), n = a.cols();
  JacobiOut out{a, Matrix::identity(n), std::vector<double>(n, 0.0)};
  Matrix& b = out.b;
  Matrix& v = out.v;

  const double tol = 1e-14;
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = b(i, p), y = b(i, q);
          app += x * x;
          aqq += y * y;
          apq += x * y;
        }
        if (std::fabs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
        rotated = true;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = b(i, p), y = b(i, q);
          b(i, p) = c * x - s * y;
          b(i, q) = s * x + c * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = v(i, p), y = v(i, q);
          v(i, p) = c * x - s * y;
          v(i, q) = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += b(i, j) * b(i, j);
    out.sigma[j] = std::sqrt(s);
  }
  return out;
}

}  // namespace

SvdFactors factor(const Matrix& rows) {
  if (!all_finite(rows)) fail_data("factor: non-finite input matrix");
  const std::size_t d = rows.cols();
  JacobiOut jac = one_sided_jacobi(rows);

  // Sort singular values descending, permuting the basis columns along.
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return jac.sigma[i] > jac.sigma[j]; });

  SvdFactors f;
  f.s.resize(d);
  f.u = Matrix(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    f.s[j] = jac.sigma[order[j]];
    for (std::size_t i = 0; i < d; ++i) f.u(i, j) = jac.v(i, order[j]);
  }
  f.t1 = Matrix(d, d);  // diag(s) u^T
  f.t2 = Matrix(d, d);  // u diag(s)
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      f.t1(i, j) = f.s[i] * f.u(j, i);
      f.t2(i, j) = f.u(i, j) * f.s[j];
    }
  f.s_norm_sq = 0.0;
  for (double s : f.s) f.s_norm_sq += s * s;

  // Reconstruction check: rows == B V^T with the unsorted factors, which is
  // equivalent to rows u diag(s)^-1 having orthonormal nonzero columns. Use
  // || rows - (rows u) u^T ||_F / ||rows||_F, exact when u spans the row space.
  const Matrix proj = matmul(matmul(rows, f.u), transpose(f.u));
  const double denom = frobenius(rows);
  f.recon_error = denom == 0.0 ? 0.0 : frobenius_diff(rows, proj) / denom;
  if (f.recon_error > 1e-6)
    fail_data("factor: SVD reconstruction error " + std::to_string(f.recon_error) +
              " exceeds 1e-6");
  return f;
}

SvdFactors factor(const EmbeddingSet& set) { return factor(set.matrix()); }

namespace {

double norm2_scale(const Matrix& neutral, const Matrix& basis) {
  const double mk = static_cast<double>(neutral.rows()) * static_cast<double>(basis.rows());
  return mk > 0.0 ? std::sqrt(mk) : 1.0;
}

}  // namespace

BaselineLossParts baseline_loss(const Matrix& t, const SvdFactors& f, const Matrix& neutral,
                                const Matrix& basis, double lambda,
                                bool bias_through_transform) {
  if (lambda < 0.0 || lambda > 1.0) fail_usage("baseline_loss: lambda must be in [0, 1]");
  const std::size_t d = t.rows();
  if (t.cols() != d || f.u.rows() != d || neutral.cols() != d || basis.cols() != d)
    fail_data("baseline_loss: shape mismatch");

  Matrix m = matmul_tn(t, t);  // T^T T
  for (std::size_t i = 0; i < d; ++i) m(i, i) -= 1.0;
  const double norm1 = frobenius(matmul(matmul(f.t1, m), f.t2));

  const Matrix nt = matmul_nt(neutral, t);  // N T^T
  const Matrix f2 = bias_through_transform ? matmul_nt(nt, matmul_nt(basis, t))
                                           : matmul_nt(nt, basis);
  const double norm2v = frobenius(f2);

  const double total = (1.0 - lambda) * norm1 / (f.s_norm_sq > 0 ? f.s_norm_sq : 1.0) +
                       lambda * norm2v / norm2_scale(neutral, basis);
  return {total, norm1, norm2v};
}

BaselineLossParts baseline_loss_grad(const Matrix& t, const SvdFactors& f, const Matrix& neutral,
                                     const Matrix& basis, double lambda, Matrix& grad,
                                     bool bias_through_transform) {
  if (lambda < 0.0 || lambda > 1.0) fail_usage("baseline_loss: lambda must be in [0, 1]");
  const std::size_t d = t.rows();
  if (grad.rows() != d || grad.cols() != d) fail_data("baseline_loss_grad: bad grad shape");

  // norm1 = || t1 (T^T T - I) t2 ||_F with F1 = t1 M t2:
  //   d norm1 / dT = T t2 G1^T t1 + T t1^T G1 t2^T,  G1 = F1 / ||F1||.
  Matrix m = matmul_tn(t, t);
  for (std::size_t i = 0; i < d; ++i) m(i, i) -= 1.0;
  const Matrix f1 = matmul(matmul(f.t1, m), f.t2);
  const double norm1 = frobenius(f1);
  const double s_scale = f.s_norm_sq > 0 ? f.s_norm_sq : 1.0;
  if (norm1 > 0.0) {
    const double w = (1.0 - lambda) / (s_scale * norm1);
    const Matrix left = matmul(matmul(matmul(t, f.t2), transpose(f1)), f.t1);
    const Matrix right = matmul(matmul(matmul(t, transpose(f.t1)), f1), transpose(f.t2));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) grad(i, j) += w * (left(i, j) + right(i, j));
  }

  const Matrix nt = matmul_nt(neutral, t);
  double norm2v;
  if (!bias_through_transform) {
    // F2 = N T^T B^T : d norm2 / dT = B^T G2^T N.
    const Matrix f2 = matmul_nt(nt, basis);
    norm2v = frobenius(f2);
    if (norm2v > 0.0) {
      const double w = lambda / (norm2_scale(neutral, basis) * norm2v);
      const Matrix bt_g2t = matmul(transpose(basis), transpose(f2));  // d x m
      const Matrix full = matmul(bt_g2t, neutral);                    // d x d
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) grad(i, j) += w * full(i, j);
    }
  } else {
    // F2 = N T^T T B^T : d norm2 / dT = T B^T G2^T N + T N^T G2 B.
    const Matrix bt = matmul_nt(basis, t);  // B T^T
    const Matrix f2 = matmul_nt(nt, bt);
    norm2v = frobenius(f2);
    if (norm2v > 0.0) {
      const double w = lambda / (norm2_scale(neutral, basis) * norm2v);
      const Matrix term1 = matmul(matmul(matmul(t, transpose(basis)), transpose(f2)), neutral);
      const Matrix term2 = matmul(matmul(matmul(t, transpose(neutral)), f2), basis);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) grad(i, j) += w * (term1(i, j) + term2(i, j));
    }
  }

  const double total = (1.0 - lambda) * norm1 / s_scale +
                       lambda * norm2v / norm2_scale(neutral, basis);
  return {total, norm1, norm2v};
}

BaselineResult train_baseline(const EmbeddingSet& set, const BiasSubspace& subspace,
                              const NeutralSet& neutral, TrainConfig cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg = cfg.resolved(static_cast<int>(set.dim()));
  if (neutral.indices.empty()) fail_data("train_baseline: empty neutral set");

  const Matrix x = normalize_rows(set.matrix());
  const SvdFactors f = factor(x);
  const Matrix n = take_rows(x, neutral.indices);
  const std::size_t d = set.dim();

  ParamTensor t(d, d, "transform");
  t.values = Matrix::identity(d);
  Optimizer opt(cfg.optimizer, cfg.lr, {&t});

  RunManifest man;
  man.seed = cfg.seed;
  man.method = "baseline";
  man.optimizer = cfg.optimizer == OptimizerKind::sgd ? "sgd" : "adam";
  man.lambda = cfg.lambda;
  man.lr = cfg.lr;
  man.batch_size = static_cast<int>(set.size());  // full batch
  man.epochs = cfg.epochs;
  man.blocks = 0;
  man.vocab = set.size();
  man.dim = d;
  man.neutral_count = neutral.indices.size();
  man.subspace_k = subspace.k();

  Matrix last_good = t.values;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    t.zero_grad();
    BaselineLossParts parts =
        baseline_loss_grad(t.values, f, n, subspace.basis, cfg.lambda, t.grad,
                           cfg.bias_through_transform);
    if (!std::isfinite(parts.total)) {
      t.values = last_good;
      if (!cfg.divergence_checkpoint_path.empty())
        save_baseline_checkpoint(t.values, cfg.lambda, cfg.seed, man.epoch_total,
                                 cfg.divergence_checkpoint_path);
      fail_divergence("train_baseline: non-finite loss at epoch " + std::to_string(epoch) +
                      " (last good transform restored)");
    }
    last_good = t.values;
    try {
      opt.step();
    } catch (const Error&) {
      t.values = last_good;
      if (!cfg.divergence_checkpoint_path.empty())
        save_baseline_checkpoint(t.values, cfg.lambda, cfg.seed, man.epoch_total,
                                 cfg.divergence_checkpoint_path);
      throw;
    }
    man.epoch_total.push_back(parts.total);
    man.epoch_norm1.push_back(parts.norm1);
    man.epoch_norm2.push_back(parts.norm2);
  }
  if (!all_finite(t.values)) {
    t.values = last_good;
    fail_divergence("train_baseline: non-finite transform after training");
  }

  EmbeddingSet debiased(set.vocab(), normalize_rows(matmul_nt(x, t.values)), set.name());
  man.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(t.values), std::move(debiased), std::move(man)};
}

void save_baseline_checkpoint(const Matrix& transform, double lambda, std::uint64_t seed,
                              const std::vector<double>& loss_history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot write checkpoint: " + path);
  const char magic[8] = {'D', 'S', 'D', 'T', 'M', 'A', 'T', '1'};
  out.write(magic, sizeof magic);
  const std::uint64_t d = transform.rows();
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(reinterpret_cast<const char*>(&lambda), sizeof(double));
  out.write(reinterpret_cast<const char*>(&seed), sizeof(std::uint64_t));
  auto flat = transform.flat();
  out.write(reinterpret_cast<const char*>(flat.data()), sizeof(double) * flat.size());
  const std::uint64_t hist = loss_history.size();
  out.write(reinterpret_cast<const char*>(&hist), sizeof hist);
  out.write(reinterpret_cast<const char*>(loss_history.data()), sizeof(double) * hist);
  if (!out) fail_data("write failed: " + path);
}

Matrix load_baseline_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::string_view(magic, 8) != "DSDTMAT1") fail_data(path + ": bad magic");
  std::uint64_t d;
  in.read(reinterpret_cast<char*>(&d), sizeof d);
  double lambda;
  std::uint64_t seed;
  in.read(reinterpret_cast<char*>(&lambda), sizeof lambda);
  in.read(reinterpret_cast<char*>(&seed), sizeof seed);
  Matrix t(d, d);
  in.read(reinterpret_cast<char*>(t.flat().data()), sizeof(double) * d * d);
  if (!in) fail_data(path + ": truncated checkpoint");
  return t;
}

}  // namespace dsd
