#include "dsd/train.hpp"

#include "dsd/error.hpp"

namespace dsd {

Hypers default_hypers(int dim) {
  if (dim < 1) fail_usage("default_hypers: dimension must be >= 1");
  if (dim < 768) return {1, 1e-3, 2048, 400};
  if (dim <= 1024) return {1, 5e-5, 2048, 100};
  if (dim <= 3072) return {2, 5e-5, 1024, dim > 2304 ? 250 : 200};
  return {3, 1e-5, 1024, 300};
}

void TrainConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0) fail_usage("lambda must be in [0, 1]");
  if (lr < 0.0) fail_usage("lr must be positive");
  if (batch_size < 0) fail_usage("batch size must be positive");
  if (blocks < 0) fail_usage("blocks must be positive");
  if (neutral_sample < 0) fail_usage("neutral-sample must be positive");
}

TrainConfig TrainConfig::resolved(int dim) const {
  validate();
  const Hypers h = default_hypers(dim);
  TrainConfig out = *this;
  if (out.lr == 0.0)
    out.lr = optimizer == OptimizerKind::sgd ? h.lr * kSgdLrScale : h.lr;
  if (out.batch_size == 0) out.batch_size = h.batch;
  if (out.epochs < 0) out.epochs = h.epochs;
  if (out.blocks == 0) out.blocks = h.blocks;
  return out;
}

}  // namespace dsd
