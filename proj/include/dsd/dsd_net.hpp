#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsd/bias_space.hpp"
#include "dsd/embedding.hpp"
#include "dsd/grad.hpp"
#include "dsd/rng.hpp"
#include "dsd/train.hpp"

namespace dsd {

// Residual block over row vectors: y = x + relu(x W1^T + b1) W2^T + b2.
// W2 and b2 start at zero, so a fresh net is exactly the identity map.
struct ResidualBlock {
  ParamTensor w1, b1, w2, b2;
  ResidualBlock(std::size_t dim, int index);
};

class DebiasNet {
 public:
  DebiasNet(std::size_t dim, int blocks, SeededRng& init_rng);
  // All-zero parameters; used by checkpoint loading.
  DebiasNet(std::size_t dim, int blocks);

  std::size_t dim() const { return dim_; }
  int block_count() const { return static_cast<int>(blocks_.size()); }

  Matrix forward(const Matrix& x) const;

  struct Cache {
    std::vector<Matrix> input, pre, hidden;  // one entry per block
  };
  Matrix forward(const Matrix& x, Cache& cache) const;

  // Backprop `g_out` (dL/d output) through the stack, accumulating into the
  // parameter grads. Call zero_grads() first when starting a fresh step.
  void backward(const Cache& cache, const Matrix& g_out);

  std::vector<ParamTensor*> params();
  void zero_grads();

  std::vector<ResidualBlock>& blocks() { return blocks_; }
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }

 private:
  std::size_t dim_ = 0;
  std::vector<ResidualBlock> blocks_;
};

struct LossParts {
  double total;
  double norm1;  // Gram-preservation term (already scale-normalized)
  double norm2;  // bias-projection term (already scale-normalized)
};

// Weight of in-subspace displacement in the anchored norm1; movement along
// the bias directions costs this fraction of movement elsewhere.
inline constexpr double kSubspaceDiscount = 0.25;

// total = (1-lambda) * norm1 + lambda * norm2 with
//   norm1 = || (O - X)(I - (1 - mu) P_B) ||_F / sqrt(b)   (anchored)
//         = || O O^T - X X^T ||_F / b                      (batch_gram)
//         = || O^T O - I ||_F / b                          (literal_orthonormal)
//   norm2 = || On B^T ||_F / sqrt(m k)
LossParts dsd_loss(const DebiasNet& net, const Matrix& batch, const Matrix& neutral_batch,
                   const Matrix& basis, double lambda, GramLoss mode = GramLoss::anchored);

// Same value; accumulates parameter gradients (zeroes them first).
LossParts dsd_loss_grad(DebiasNet& net, const Matrix& batch, const Matrix& neutral_batch,
                        const Matrix& basis, double lambda,
                        GramLoss mode = GramLoss::anchored);

struct DsdResult {
  DebiasNet net;
  EmbeddingSet debiased;
  RunManifest manifest;
};

// Minibatch training per the config (unset fields resolved from
// default_hypers). Vocabulary order is shuffled per epoch and the neutral
// rows are re-subsampled per step, all from the run seed. The returned set is
// the row-normalized forward pass of the whole (normalized) vocabulary.
DsdResult train_dsd(const EmbeddingSet& set, const BiasSubspace& subspace,
                    const NeutralSet& neutral, TrainConfig cfg);

// Relative Gram drift || O O^T - X X^T ||_F / || X X^T ||_F over given rows.
double gram_drift(const DebiasNet& net, const Matrix& rows);

// Checkpoint: versioned header, dims, block count, raw float64 parameters,
// optimizer state, seed, config echo.
void save_dsd_checkpoint(const DebiasNet& net, const Optimizer* opt, const TrainConfig& cfg,
                         const std::string& path);
struct DsdCheckpoint {
  DebiasNet net;
  TrainConfig config;
};
DsdCheckpoint load_dsd_checkpoint(const std::string& path);

}  // namespace dsd
