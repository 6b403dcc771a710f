#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "dsd/grad.hpp"

namespace dsd {

// Which embedding-preservation form the deep trainer optimizes.
//   anchored (default): || (O - X)(I - (1-mu) P_B) ||_F / sqrt(b), a
//     displacement penalty that is cheap inside the bias subspace (weight mu)
//     and full price outside it: minimal alteration of the embeddings except
//     along the directions being debiased. The pairwise-Gram form admits
//     global isometries that relocate the bias out of the fixed subspace
//     without removing any association, so it cannot drive MAC upward; the
//     anchored form pins the complement and makes removal the optimum.
//   batch_gram: || O O^T - X X^T ||_F / b, pairwise within-batch Gram.
//   literal_orthonormal: || O^T O - I ||_F / b.
enum class GramLoss { anchored, batch_gram, literal_orthonormal };

struct Hypers {
  int blocks;
  double lr;
  int batch;
  int epochs;
};

// Default hyperparameters as a function of embedding dimension.
//   d < 768          -> (1, 1e-3, 2048, 400)   (desk-scale dims below the
//                       benchmarked range; small embeddings take the larger
//                       rates)
//   768  <= d <=1024 -> (1, 5e-5, 2048, 100)
//   1024 <  d <=3072 -> (2, 5e-5, 1024, 200 or 250 above 2304)
//   d > 3072         -> (3, 1e-5, 1024, 300)
Hypers default_hypers(int dim);

// SGD consumes raw gradient magnitudes where Adam normalizes per coordinate,
// so an unset lr is scaled up by this factor when optimizer == sgd.
inline constexpr double kSgdLrScale = 40.0;

struct TrainConfig {
  double lambda = 0.2;  // bias-projection loss weight
  double lr = 0.0;      // 0 -> schedule default (x kSgdLrScale for sgd)
  int batch_size = 0;   // 0 -> schedule default
  int epochs = -1;      // <0 -> schedule default
  int blocks = 0;       // 0 -> schedule default
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
  int neutral_sample = 0;  // per-step neutral rows; 0 -> min(batch, |N|)
  GramLoss gram_loss = GramLoss::anchored;
  // Project the transformed bias basis rather than the fixed one in the
  // baseline's second loss term (off by default).
  bool bias_through_transform = false;
  // When set, a diverging run writes its restored last-good parameters here
  // before aborting.
  std::string divergence_checkpoint_path;

  void validate() const;
  // Fill unset fields from default_hypers(dim).
  TrainConfig resolved(int dim) const;
};

struct RunManifest {
  std::uint64_t seed = 0;
  std::string method;     // "baseline" | "dsd"
  std::string optimizer;  // "sgd" | "adam"
  double lambda = 0.0;
  double lr = 0.0;
  int batch_size = 0;
  int epochs = 0;
  int blocks = 0;
  int neutral_sample = 0;
  std::size_t vocab = 0;
  std::size_t dim = 0;
  std::size_t neutral_count = 0;
  std::size_t subspace_k = 0;
  std::vector<double> epoch_total, epoch_norm1, epoch_norm2;
  double wall_seconds = 0.0;
  double gram_drift = 0.0;  // relative Gram error on a seeded row sample
  int threads = 1;
};

}  // namespace dsd
