#pragma once

#include <string>
#include <vector>

#include "dsd/bias_space.hpp"
#include "dsd/embedding.hpp"
#include "dsd/matrix.hpp"
#include "dsd/train.hpp"

namespace dsd {

// SVD factors of the (column-word) embedding matrix, precomputed so the
// Gram-preservation loss is independent of vocabulary size:
//   || X (T^T T - I) X^T ||_F == || t1 (T^T T - I) t2 ||_F
// with t1 = diag(s) u^T and t2 = u diag(s).
struct SvdFactors {
  Matrix u;               // d x d, orthogonal
  std::vector<double> s;  // descending, >= 0; zero-padded when V < d
  Matrix t1, t2;          // d x d
  double recon_error = 0.0;  // relative reconstruction error of the input
  double s_norm_sq = 0.0;    // ||s||^2, the norm1 scale normalizer
};

// One-sided Jacobi factorization of the row matrix. V < d is allowed (the
// trailing singular values come out as zeros).
SvdFactors factor(const Matrix& rows);
SvdFactors factor(const EmbeddingSet& set);

struct BaselineLossParts {
  double total;
  double norm1;  // || t1 (T^T T - I) t2 ||_F, unnormalized
  double norm2;  // || (N T^T) B^T ||_F, unnormalized
};

// total = (1-lambda) * norm1 / ||s||^2 + lambda * norm2 / sqrt(m k).
BaselineLossParts baseline_loss(const Matrix& t, const SvdFactors& f, const Matrix& neutral,
                                const Matrix& basis, double lambda,
                                bool bias_through_transform = false);

// Same value, plus d(total)/dT accumulated into grad (which must be d x d).
BaselineLossParts baseline_loss_grad(const Matrix& t, const SvdFactors& f, const Matrix& neutral,
                                     const Matrix& basis, double lambda, Matrix& grad,
                                     bool bias_through_transform = false);

struct BaselineResult {
  Matrix transform;      // the learned d x d T
  EmbeddingSet debiased; // normalized rows of X T^T
  RunManifest manifest;
};

// Full-batch training of T (initialized to the identity) on the factored
// loss. Inputs are row-normalized first; outputs are row-normalized after.
BaselineResult train_baseline(const EmbeddingSet& set, const BiasSubspace& subspace,
                              const NeutralSet& neutral, TrainConfig cfg);

// Checkpoint: versioned header, T, lambda, seed, loss history.
void save_baseline_checkpoint(const Matrix& transform, double lambda, std::uint64_t seed,
                              const std::vector<double>& loss_history, const std::string& path);
inline void save_baseline_checkpoint(const BaselineResult& result, const std::string& path) {
  save_baseline_checkpoint(result.transform, result.manifest.lambda, result.manifest.seed,
                           result.manifest.epoch_total, path);
}
Matrix load_baseline_checkpoint(const std::string& path);

}  // namespace dsd
