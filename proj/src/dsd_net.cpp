#include "dsd/dsd_net.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dsd/error.hpp"

namespace dsd {

ResidualBlock::ResidualBlock(std::size_t dim, int index)
    : w1(dim, dim, "block" + std::to_string(index) + ".w1"),
      b1(1, dim, "block" + std::to_string(index) + ".b1"),
      w2(dim, dim, "block" + std::to_string(index) + ".w2"),
      b2(1, dim, "block" + std::to_string(index) + ".b2") {}

DebiasNet::DebiasNet(std::size_t dim, int blocks) : dim_(dim) {
  if (blocks < 1) fail_usage("DebiasNet: block count must be >= 1");
  blocks_.reserve(blocks);
  for (int i = 0; i < blocks; ++i) blocks_.emplace_back(dim, i);
}

DebiasNet::DebiasNet(std::size_t dim, int blocks, SeededRng& init_rng) : DebiasNet(dim, blocks) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& block : blocks_) {
    for (double& w : block.w1.values.flat()) w = init_rng.uniform(-bound, bound);
    // b1, w2 and b2 stay zero: every block is the identity map at step 0.
  }
}

namespace {

Matrix block_forward(const ResidualBlock& blk, const Matrix& x, Matrix* pre_out,
                     Matrix* hidden_out) {
  const std::size_t b = x.rows(), d = x.cols();
  Matrix pre = matmul_nt(x, blk.w1.values);
  for (std::size_t i = 0; i < b; ++i) {
    auto row = pre.row(i);
    auto bias = blk.b1.values.row(0);
    for (std::size_t j = 0; j < d; ++j) row[j] += bias[j];
  }
  Matrix hidden = pre;
  for (double& v : hidden.flat()) v = v > 0.0 ? v : 0.0;
  Matrix y = matmul_nt(hidden, blk.w2.values);
  for (std::size_t i = 0; i < b; ++i) {
    auto row = y.row(i);
    auto xin = x.row(i);
    auto bias = blk.b2.values.row(0);
    for (std::size_t j = 0; j < d; ++j) row[j] += xin[j] + bias[j];
  }
  if (pre_out) *pre_out = std::move(pre);
  if (hidden_out) *hidden_out = std::move(hidden);
  return y;
}

}  // namespace

Matrix DebiasNet::forward(const Matrix& x) const {
  if (x.cols() != dim_) fail_data("DebiasNet::forward: dimension mismatch");
  if (x.rows() == 0) return Matrix(0, dim_);
  Matrix cur = x;
  for (const auto& blk : blocks_) cur = block_forward(blk, cur, nullptr, nullptr);
  return cur;
}

Matrix DebiasNet::forward(const Matrix& x, Cache& cache) const {
  if (x.cols() != dim_) fail_data("DebiasNet::forward: dimension mismatch");
  cache.input.clear();
  cache.pre.clear();
  cache.hidden.clear();
  Matrix cur = x;
  for (const auto& blk : blocks_) {
    cache.input.push_back(cur);
    Matrix pre, hidden;
    cur = block_forward(blk, cur, &pre, &hidden);
    cache.pre.push_back(std::move(pre));
    cache.hidden.push_back(std::move(hidden));
  }
  return cur;
}

void DebiasNet::backward(const Cache& cache, const Matrix& g_out) {
  Matrix g = g_out;
  for (int bi = static_cast<int>(blocks_.size()) - 1; bi >= 0; --bi) {
    auto& blk = blocks_[bi];
    const Matrix& x = cache.input[bi];
    const Matrix& pre = cache.pre[bi];
    const Matrix& hidden = cache.hidden[bi];
    const std::size_t b = x.rows(), d = x.cols();

    // y = x + hidden W2^T + b2
    const Matrix gw2 = matmul_tn(g, hidden);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) blk.w2.grad(i, j) += gw2(i, j);
    for (std::size_t i = 0; i < b; ++i) {
      auto gi = g.row(i);
      auto gb2 = blk.b2.grad.row(0);
      for (std::size_t j = 0; j < d; ++j) gb2[j] += gi[j];
    }

    Matrix gpre = matmul(g, blk.w2.values);  // dL/d hidden
    for (std::size_t i = 0; i < b; ++i) {
      auto gp = gpre.row(i);
      auto pr = pre.row(i);
      for (std::size_t j = 0; j < d; ++j)
        if (pr[j] <= 0.0) gp[j] = 0.0;
    }

    const Matrix gw1 = matmul_tn(gpre, x);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) blk.w1.grad(i, j) += gw1(i, j);
    for (std::size_t i = 0; i < b; ++i) {
      auto gp = gpre.row(i);
      auto gb1 = blk.b1.grad.row(0);
      for (std::size_t j = 0; j < d; ++j) gb1[j] += gp[j];
    }

    // dL/dx = g (skip connection) + gpre W1
    const Matrix gx = matmul(gpre, blk.w1.values);
    for (std::size_t i = 0; i < b; ++i) {
      auto gi = g.row(i);
      auto gxi = gx.row(i);
      for (std::size_t j = 0; j < d; ++j) gi[j] += gxi[j];
    }
  }
}

std::vector<ParamTensor*> DebiasNet::params() {
  std::vector<ParamTensor*> out;
  out.reserve(blocks_.size() * 4);
  for (auto& blk : blocks_) {
    out.push_back(&blk.w1);
    out.push_back(&blk.b1);
    out.push_back(&blk.w2);
    out.push_back(&blk.b2);
  }
  return out;
}

void DebiasNet::zero_grads() {
  for (auto* p : params()) p->zero_grad();
}

namespace {

double norm2_scale(std::size_t m, std::size_t k) {
  const double mk = static_cast<double>(m) * static_cast<double>(k);
  return mk > 0.0 ? std::sqrt(mk) : 1.0;
}

struct Norm1Grad {
  double value = 0.0;
  Matrix g_out;  // dL/dO, unweighted
};

// Orthonormal basis of the bias subspace (Gram-Schmidt over the rows;
// rank-deficient rows dropped).
Matrix orthonormal_rows(const Matrix& basis) {
  const std::size_t d = basis.cols();
  std::vector<std::vector<double>> q;
  for (std::size_t i = 0; i < basis.rows(); ++i) {
    std::vector<double> v(basis.row(i).begin(), basis.row(i).end());
    for (const auto& prev : q) {
      double proj = 0.0;
      for (std::size_t j = 0; j < d; ++j) proj += v[j] * prev[j];
      for (std::size_t j = 0; j < d; ++j) v[j] -= proj * prev[j];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-10) continue;
    for (double& x : v) x /= n;
    q.push_back(std::move(v));
  }
  Matrix out(q.size(), d);
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = q[i][j];
  return out;
}

// Delta - c * (Delta Q^T) Q : shrink the span(Q) part of each row by (1-c).
Matrix discount_subspace(const Matrix& delta, const Matrix& q, double c) {
  Matrix out = delta;
  if (q.rows() == 0 || c == 0.0) return out;
  const Matrix proj = matmul_nt(delta, q);  // b x r
  const Matrix back = matmul(proj, q);      // b x d
  for (std::size_t i = 0; i < out.flat().size(); ++i) out.flat()[i] -= c * back.flat()[i];
  return out;
}

Norm1Grad norm1_term(const Matrix& x, const Matrix& o, GramLoss mode, const Matrix& ortho_basis,
                     bool want_grad) {
  Norm1Grad out;
  const std::size_t b = x.rows();
  if (b == 0) return out;

  if (mode == GramLoss::anchored) {
    // F = (O - X) W with W = I - (1-mu) P_B; norm1 = ||F||_F / sqrt(b).
    const double mu = kSubspaceDiscount;
    Matrix delta(b, x.cols());
    for (std::size_t i = 0; i < delta.flat().size(); ++i)
      delta.flat()[i] = o.flat()[i] - x.flat()[i];
    const Matrix f = discount_subspace(delta, ortho_basis, 1.0 - mu);
    const double scale = std::sqrt(static_cast<double>(b));
    const double fn = frobenius(f);
    out.value = fn / scale;
    if (want_grad && fn > 0.0) {
      // d||F||/dO = Delta W^2 / ||F|| with W^2 = I - (1 - mu^2) P_B.
      out.g_out = discount_subspace(delta, ortho_basis, 1.0 - mu * mu);
      const double w = 1.0 / (scale * fn);
      for (double& v : out.g_out.flat()) v *= w;
    }
    return out;
  }

  const double scale = static_cast<double>(b);
  if (mode == GramLoss::batch_gram) {
    Matrix d = matmul_nt(o, o);
    const Matrix gx = matmul_nt(x, x);
    for (std::size_t i = 0; i < d.flat().size(); ++i) d.flat()[i] -= gx.flat()[i];
    const double f = frobenius(d);
    out.value = f / scale;
    if (want_grad && f > 0.0) {
      // d||D||/dO = 2 D O / ||D|| (D symmetric), divided by the batch size.
      out.g_out = matmul(d, o);
      const double w = 2.0 / (scale * f);
      for (double& v : out.g_out.flat()) v *= w;
    }
    return out;
  }

  Matrix m = matmul_tn(o, o);
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) -= 1.0;
  const double f = frobenius(m);
  out.value = f / scale;
  if (want_grad && f > 0.0) {
    out.g_out = matmul(o, m);
    const double w = 2.0 / (scale * f);
    for (double& v : out.g_out.flat()) v *= w;
  }
  return out;
}

struct Norm2Grad {
  double value = 0.0;
  Matrix g_out;
};

Norm2Grad norm2_term(const Matrix& on, const Matrix& basis, bool want_grad) {
  Norm2Grad out;
  if (on.rows() == 0 || basis.rows() == 0) return out;
  const double scale = norm2_scale(on.rows(), basis.rows());
  const Matrix p = matmul_nt(on, basis);  // m x k
  const double f = frobenius(p);
  out.value = f / scale;
  if (want_grad && f > 0.0) {
    out.g_out = matmul(p, basis);
    const double w = 1.0 / (scale * f);
    for (double& v : out.g_out.flat()) v *= w;
  }
  return out;
}

}  // namespace

LossParts dsd_loss(const DebiasNet& net, const Matrix& batch, const Matrix& neutral_batch,
                   const Matrix& basis, double lambda, GramLoss mode) {
  if (lambda < 0.0 || lambda > 1.0) fail_usage("dsd_loss: lambda must be in [0, 1]");
  const Matrix o = net.forward(batch);
  const Matrix on = net.forward(neutral_batch);
  const Matrix ortho = mode == GramLoss::anchored ? orthonormal_rows(basis) : Matrix();
  const double n1 = norm1_term(batch, o, mode, ortho, false).value;
  const double n2 = norm2_term(on, basis, false).value;
  return {(1.0 - lambda) * n1 + lambda * n2, n1, n2};
}

LossParts dsd_loss_grad(DebiasNet& net, const Matrix& batch, const Matrix& neutral_batch,
                        const Matrix& basis, double lambda, GramLoss mode) {
  if (lambda < 0.0 || lambda > 1.0) fail_usage("dsd_loss: lambda must be in [0, 1]");
  net.zero_grads();
  const Matrix ortho = mode == GramLoss::anchored ? orthonormal_rows(basis) : Matrix();

  DebiasNet::Cache cache;
  const Matrix o = net.forward(batch, cache);
  Norm1Grad n1 = norm1_term(batch, o, mode, ortho, true);
  if (!n1.g_out.empty()) {
    for (double& v : n1.g_out.flat()) v *= (1.0 - lambda);
    net.backward(cache, n1.g_out);
  }

  DebiasNet::Cache ncache;
  const Matrix on = net.forward(neutral_batch, ncache);
  Norm2Grad n2 = norm2_term(on, basis, true);
  if (!n2.g_out.empty()) {
    for (double& v : n2.g_out.flat()) v *= lambda;
    net.backward(ncache, n2.g_out);
  }

  return {(1.0 - lambda) * n1.value + lambda * n2.value, n1.value, n2.value};
}

double gram_drift(const DebiasNet& net, const Matrix& rows) {
  if (rows.rows() == 0) return 0.0;
  const Matrix o = net.forward(rows);
  const Matrix go = matmul_nt(o, o);
  const Matrix gx = matmul_nt(rows, rows);
  const double denom = frobenius(gx);
  return denom == 0.0 ? 0.0 : frobenius_diff(go, gx) / denom;
}

DsdResult train_dsd(const EmbeddingSet& set, const BiasSubspace& subspace,
                    const NeutralSet& neutral, TrainConfig cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg = cfg.resolved(static_cast<int>(set.dim()));
  if (neutral.indices.empty()) fail_data("train_dsd: empty neutral set");
  if (subspace.dim() != set.dim()) fail_data("train_dsd: subspace dimension mismatch");

  const Matrix x = normalize_rows(set.matrix());
  const Matrix n = take_rows(x, neutral.indices);
  const std::size_t v = x.rows();

  SeededRng root(cfg.seed);
  SeededRng rng_init = root.derive("init");
  SeededRng rng_batch = root.derive("batch");
  SeededRng rng_neutral = root.derive("neutral");

  DebiasNet net(set.dim(), cfg.blocks, rng_init);
  Optimizer opt(cfg.optimizer, cfg.lr, net.params());

  RunManifest man;
  man.seed = cfg.seed;
  man.method = "dsd";
  man.optimizer = cfg.optimizer == OptimizerKind::sgd ? "sgd" : "adam";
  man.lambda = cfg.lambda;
  man.lr = cfg.lr;
  man.batch_size = cfg.batch_size;
  man.epochs = cfg.epochs;
  man.blocks = cfg.blocks;
  man.neutral_sample = cfg.neutral_sample;
  man.vocab = v;
  man.dim = set.dim();
  man.neutral_count = neutral.indices.size();
  man.subspace_k = subspace.k();

  const std::size_t per_step_neutral =
      cfg.neutral_sample > 0
          ? std::min<std::size_t>(cfg.neutral_sample, n.rows())
          : std::min<std::size_t>(cfg.batch_size, n.rows());

  std::vector<std::size_t> order(v);
  std::iota(order.begin(), order.end(), 0);

  std::vector<Matrix> snapshot;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    snapshot.clear();
    for (auto* p : net.params()) snapshot.push_back(p->values);

    rng_batch.shuffle(order);
    double sum_total = 0.0, sum_n1 = 0.0, sum_n2 = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < v; start += cfg.batch_size) {
      const std::size_t stop = std::min(v, start + cfg.batch_size);
      const Matrix xb = take_rows(
          x, std::span<const std::size_t>(order.data() + start, stop - start));
      const Matrix nb =
          take_rows(n, rng_neutral.sample_indices(n.rows(), per_step_neutral));

      LossParts parts = dsd_loss_grad(net, xb, nb, subspace.basis, cfg.lambda, cfg.gram_loss);
      auto restore = [&] {
        auto ps = net.params();
        for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->values = snapshot[i];
        if (!cfg.divergence_checkpoint_path.empty())
          save_dsd_checkpoint(net, nullptr, cfg, cfg.divergence_checkpoint_path);
      };
      if (!std::isfinite(parts.total)) {
        restore();
        std::ostringstream msg;
        msg << "train_dsd: non-finite loss at epoch " << epoch << " step " << steps
            << " (total=" << parts.total << ", norm1=" << parts.norm1
            << ", norm2=" << parts.norm2 << "); parameters restored to epoch start";
        fail_divergence(msg.str());
      }
      try {
        opt.step();
      } catch (const Error&) {
        restore();
        throw;
      }
      sum_total += parts.total;
      sum_n1 += parts.norm1;
      sum_n2 += parts.norm2;
      ++steps;
    }
    if (steps > 0) {
      man.epoch_total.push_back(sum_total / steps);
      man.epoch_norm1.push_back(sum_n1 / steps);
      man.epoch_norm2.push_back(sum_n2 / steps);
    }
  }

  // Final pass over the whole vocabulary, in chunks; each row's output is
  // independent of its chunk, so chunking cannot change the result.
  Matrix out(v, set.dim());
  const std::size_t chunk = 1024;
  for (std::size_t start = 0; start < v; start += chunk) {
    const std::size_t stop = std::min(v, start + chunk);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix part = net.forward(take_rows(x, idx));
    if (!all_finite(part)) fail_divergence("train_dsd: non-finite embeddings after training");
    for (std::size_t i = 0; i < part.rows(); ++i) {
      auto src = part.row(i);
      auto dst = out.row(start + i);
      for (std::size_t j = 0; j < set.dim(); ++j) dst[j] = src[j];
    }
  }

  SeededRng rng_heldout = root.derive("heldout");
  const Matrix sample = take_rows(x, rng_heldout.sample_indices(v, std::min<std::size_t>(v, 128)));
  man.gram_drift = gram_drift(net, sample);

  EmbeddingSet debiased(set.vocab(), normalize_rows(out), set.name());
  man.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(net), std::move(debiased), std::move(man)};
}

namespace {

template <typename T>
void write_pod(std::ostream& out, const T& x) {
  out.write(reinterpret_cast<const char*>(&x), sizeof x);
}

template <typename T>
void read_pod(std::istream& in, T& x) {
  in.read(reinterpret_cast<char*>(&x), sizeof x);
  if (!in) fail_data("checkpoint: truncated stream");
}

void write_matrix(std::ostream& out, const Matrix& m) {
  auto flat = m.flat();
  out.write(reinterpret_cast<const char*>(flat.data()), sizeof(double) * flat.size());
}

void read_matrix(std::istream& in, Matrix& m) {
  auto flat = m.flat();
  in.read(reinterpret_cast<char*>(flat.data()), sizeof(double) * flat.size());
  if (!in) fail_data("checkpoint: truncated parameters");
}

}  // namespace

void save_dsd_checkpoint(const DebiasNet& net, const Optimizer* opt, const TrainConfig& cfg,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot write checkpoint: " + path);
  const char magic[8] = {'D', 'S', 'D', 'N', 'E', 'T', '0', '1'};
  out.write(magic, sizeof magic);
  write_pod(out, static_cast<std::uint64_t>(net.dim()));
  write_pod(out, static_cast<std::uint32_t>(net.block_count()));
  for (const auto& blk : net.blocks()) {
    write_matrix(out, blk.w1.values);
    write_matrix(out, blk.b1.values);
    write_matrix(out, blk.w2.values);
    write_matrix(out, blk.b2.values);
  }
  // Config echo.
  write_pod(out, cfg.seed);
  write_pod(out, cfg.lambda);
  write_pod(out, cfg.lr);
  write_pod(out, static_cast<std::int32_t>(cfg.batch_size));
  write_pod(out, static_cast<std::int32_t>(cfg.epochs));
  write_pod(out, static_cast<std::int32_t>(cfg.neutral_sample));
  write_pod(out, static_cast<std::uint8_t>(cfg.optimizer == OptimizerKind::adam ? 1 : 0));
  write_pod(out, static_cast<std::uint8_t>(cfg.gram_loss));
  const std::uint8_t has_opt = opt != nullptr ? 1 : 0;
  write_pod(out, has_opt);
  if (opt) opt->save(out);
  if (!out) fail_data("write failed: " + path);
}

DsdCheckpoint load_dsd_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::string_view(magic, 8) != "DSDNET01") fail_data(path + ": bad magic");
  std::uint64_t dim;
  std::uint32_t blocks;
  read_pod(in, dim);
  read_pod(in, blocks);
  DsdCheckpoint ck{DebiasNet(dim, static_cast<int>(blocks)), TrainConfig{}};
  for (auto& blk : ck.net.blocks()) {
    read_matrix(in, blk.w1.values);
    read_matrix(in, blk.b1.values);
    read_matrix(in, blk.w2.values);
    read_matrix(in, blk.b2.values);
  }
  std::int32_t batch, epochs, neutral_sample;
  std::uint8_t adam, loss_mode;
  read_pod(in, ck.config.seed);
  read_pod(in, ck.config.lambda);
  read_pod(in, ck.config.lr);
  read_pod(in, batch);
  read_pod(in, epochs);
  read_pod(in, neutral_sample);
  read_pod(in, adam);
  read_pod(in, loss_mode);
  if (loss_mode > 2) fail_data(path + ": bad loss mode");
  ck.config.batch_size = batch;
  ck.config.epochs = epochs;
  ck.config.neutral_sample = neutral_sample;
  ck.config.optimizer = adam ? OptimizerKind::adam : OptimizerKind::sgd;
  ck.config.gram_loss = static_cast<GramLoss>(loss_mode);
  ck.config.blocks = static_cast<int>(blocks);
  return ck;
}

}  // namespace dsd
