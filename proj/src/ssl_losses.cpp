#include "sslbench/ssl_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sslbench/errors.hpp"
#include "sslbench/ops.hpp"
#include "sslbench/rng.hpp"

namespace sslbench {

namespace {

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

double norm2(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

// Unit rows of a [M, d] matrix.
std::vector<double> unit_rows(const Tensor& k) {
  const std::size_t m = sz(k.dim(0));
  const std::size_t d = sz(k.dim(1));
  std::vector<double> out(k.values().begin(), k.values().end());
  for (std::size_t r = 0; r < m; ++r) {
    const double n = norm2(out.data() + r * d, d);
    require(n > 0.0, "undefined cosine");
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= n;
  }
  return out;
}

// Loss and gradient of one InfoNCE term for query row q against unit keys.
double info_nce_row(const double* q, std::size_t d, const std::vector<double>& keys, std::size_t m, std::size_t pos,
                    double tau, double weight, double* grad) {
  const double qn = norm2(q, d);
  require(qn > 0.0, "undefined cosine");
  std::vector<double> s(m);
  for (std::size_t j = 0; j < m; ++j) {
    double dot = 0.0;
    for (std::size_t t = 0; t < d; ++t) dot += q[t] * keys[j * d + t];
    s[j] = dot / qn;
  }
  double mx = -1e300;
  for (double v : s) mx = std::max(mx, v / tau);
  double z = 0.0;
  for (double v : s) z += std::exp(v / tau - mx);
  const double lse = mx + std::log(z);
  const double loss = lse - s[pos] / tau;
  if (grad) {
    for (std::size_t j = 0; j < m; ++j) {
      const double p = std::exp(s[j] / tau - lse);
      const double ds = weight * (p - (j == pos ? 1.0 : 0.0)) / tau;
      if (ds == 0.0) continue;
      for (std::size_t t = 0; t < d; ++t) grad[t] += ds * (keys[j * d + t] - s[j] * q[t] / qn) / qn;
    }
  }
  return loss;
}

}  // namespace

void SSLConfig::validate(int n_patches) const {
  require(algorithm == "mocov3" || algorithm == "barlow" || algorithm == "mae" || algorithm == "supervised",
          "unknown ssl.algorithm '" + algorithm + "' (expected mocov3|barlow|mae)");
  require(tau > 0.0, "ssl.tau must be positive");
  require(lambda > 0.0, "ssl.lambda must be positive");
  require(momentum >= 0.0 && momentum <= 1.0, "ssl.momentum must lie in [0, 1]");
  require(workers >= 1, "ssl.workers must be at least 1");
  require(per_worker_batch >= 1, "ssl.per_worker_batch must be at least 1");
  if (algorithm == "barlow") require(per_worker_batch >= 2, "Barlow Twins needs ssl.per_worker_batch >= 2");
  if (algorithm == "mae") {
    require(gamma > 0.0 && gamma < 1.0, "ssl.gamma must lie in (0, 1) for MAE pretraining");
    if (n_patches > 0) masked_count(n_patches, gamma);
  }
}

double cosim(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "cosim: length mismatch");
  const double na = norm2(a.data(), a.size());
  const double nb = norm2(b.data(), b.size());
  if (na == 0.0 || nb == 0.0) throw ValidationError("undefined cosine");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double info_nce(std::span<const double> q, const std::vector<std::vector<double>>& keys, int positive, double tau) {
  require(!keys.empty(), "info_nce: no keys");
  require(positive >= 0 && positive < static_cast<int>(keys.size()), "info_nce: positive index out of range");
  require(tau > 0.0, "info_nce: temperature must be positive");
  std::vector<double> s;
  for (const auto& k : keys) s.push_back(cosim(q, k) / tau);
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - mx);
  return std::max(0.0, mx + std::log(z) - s[static_cast<std::size_t>(positive)]);
}

Tensor moco_worker_loss(const Tensor& q1, const Tensor& q2, const Tensor& k1_all, const Tensor& k2_all, int offset,
                        double tau) {
  require(q1.ndim() == 2 && q1.shape() == q2.shape(), "moco: query shards must be [N_b, d] and equal");
  require(k1_all.ndim() == 2 && k1_all.shape() == k2_all.shape() && k1_all.dim(1) == q1.dim(1),
          "moco: gathered keys must be [N_G * N_b, d] matching the queries");
  require(tau > 0.0, "moco: temperature must be positive");
  const std::size_t nb = sz(q1.dim(0));
  const std::size_t d = sz(q1.dim(1));
  const std::size_t m = sz(k1_all.dim(0));
  require(offset >= 0 && sz(offset) + nb <= m, "moco: shard offset outside the gathered keys");
  auto k1 = std::make_shared<std::vector<double>>(unit_rows(k1_all));
  auto k2 = std::make_shared<std::vector<double>>(unit_rows(k2_all));
  const double weight = 2.0 * tau / static_cast<double>(nb);
  double total = 0.0;
  for (std::size_t i = 0; i < nb; ++i) {
    total += info_nce_row(q1.data() + i * d, d, *k2, m, sz(offset) + i, tau, 0.0, nullptr);
    total += info_nce_row(q2.data() + i * d, d, *k1, m, sz(offset) + i, tau, 0.0, nullptr);
  }
  return make_result({}, {weight * total}, {q1, q2}, [=](const TensorImpl& o) {
    const double g = o.grad[0];
    if (double* g1 = grad_target(q1)) {
      std::vector<double> row(d);
      for (std::size_t i = 0; i < nb; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        info_nce_row(q1.data() + i * d, d, *k2, m, sz(offset) + i, tau, weight, row.data());
        for (std::size_t t = 0; t < d; ++t) g1[i * d + t] += g * row[t];
      }
    }
    if (double* g2 = grad_target(q2)) {
      std::vector<double> row(d);
      for (std::size_t i = 0; i < nb; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        info_nce_row(q2.data() + i * d, d, *k1, m, sz(offset) + i, tau, weight, row.data());
        for (std::size_t t = 0; t < d; ++t) g2[i * d + t] += g * row[t];
      }
    }
  });
}

std::vector<Tensor> moco_v3_loss(const std::vector<Tensor>& q1, const std::vector<Tensor>& q2,
                                 const std::vector<Tensor>& k1, const std::vector<Tensor>& k2, double tau) {
  const std::size_t workers = q1.size();
  require(workers >= 1 && q2.size() == workers && k1.size() == workers && k2.size() == workers,
          "moco: one query/key shard pair per worker is required");
  for (std::size_t w = 0; w < workers; ++w)
    require(q1[w].shape() == q1[0].shape() && q2[w].shape() == q1[0].shape() && k1[w].shape() == q1[0].shape() &&
                k2[w].shape() == q1[0].shape(),
            "mismatched shard sizes");
  // All-gather: keys carry no graph, concatenating detached copies is exact.
  std::vector<Tensor> d1, d2;
  for (std::size_t w = 0; w < workers; ++w) {
    d1.push_back(k1[w].detach());
    d2.push_back(k2[w].detach());
  }
  Tensor k1_all = ops::concat(d1, 0);
  Tensor k2_all = ops::concat(d2, 0);
  std::vector<Tensor> out;
  const int nb = q1[0].dim(0);
  for (std::size_t w = 0; w < workers; ++w)
    out.push_back(moco_worker_loss(q1[w], q2[w], k1_all, k2_all, static_cast<int>(w) * nb, tau));
  return out;
}

Tensor mean_of(const std::vector<Tensor>& scalars) {
  require(!scalars.empty(), "mean_of: no values");
  Tensor acc = scalars[0];
  for (std::size_t i = 1; i < scalars.size(); ++i) acc = ops::add(acc, scalars[i]);
  return ops::scale(acc, 1.0 / static_cast<double>(scalars.size()));
}

Tensor barlow_normalize(const Tensor& z, double eps) {
  require(z.ndim() == 2, "barlow_normalize expects [N_b, d]");
  require(z.dim(0) >= 2, "barlow_normalize needs at least two samples per worker");
  ops::BatchNormState state;
  state.running_mean = Tensor::zeros({z.dim(1)});
  state.running_var = Tensor::full({z.dim(1)}, 1.0);
  state.eps = eps;
  return ops::batch_norm(z, Tensor(), Tensor(), state, true);
}

Tensor cross_correlation(const Tensor& z1n, const Tensor& z2n) {
  require(z1n.ndim() == 2 && z1n.shape() == z2n.shape(), "cross_correlation: views must be [N_b, d] and equal");
  Tensor c = ops::matmul(ops::permute(z1n, {1, 0}), z2n);
  return ops::scale(c, 1.0 / static_cast<double>(z1n.dim(0)));
}

Tensor barlow_objective(const Tensor& c, double lambda) {
  require(c.ndim() == 2 && c.dim(0) == c.dim(1), "barlow_objective expects a square matrix");
  const int d = c.dim(0);
  std::vector<double> eye(sz(static_cast<std::int64_t>(d) * d), 0.0);
  std::vector<double> w(eye.size(), lambda);
  for (int k = 0; k < d; ++k) {
    eye[sz(static_cast<std::int64_t>(k) * d + k)] = 1.0;
    w[sz(static_cast<std::int64_t>(k) * d + k)] = 1.0;
  }
  Tensor diff = ops::sub(c, Tensor::from({d, d}, std::move(eye)));
  return ops::sum_all(ops::mul(ops::mul(diff, diff), Tensor::from({d, d}, std::move(w))));
}

Tensor barlow_loss(const std::vector<Tensor>& z1n, const std::vector<Tensor>& z2n, double lambda) {
  require(!z1n.empty() && z1n.size() == z2n.size(), "barlow_loss: one view pair per worker is required");
  std::vector<Tensor> cs;
  for (std::size_t w = 0; w < z1n.size(); ++w) {
    require(z1n[w].ndim() == 2 && z1n[w].dim(1) == z1n[0].dim(1), "barlow_loss: dimension mismatch across workers");
    cs.push_back(cross_correlation(z1n[w], z2n[w]));
  }
  return barlow_objective(mean_of(cs), lambda);
}

std::vector<int> MaskingPlan::ranks() const {
  std::vector<int> r(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) r[sz(sigma[i])] = static_cast<int>(i);
  return r;
}

int masked_count(int n_p, double gamma) {
  require(n_p >= 1, "masking needs at least one token");
  require(gamma >= 0.0 && gamma <= 1.0, "mask ratio must lie in [0, 1]");
  const double g = gamma * n_p;
  const double r = std::round(g);
  require(std::abs(g - r) <= 1e-9, "gamma * N_p must be integral (gamma=" + std::to_string(gamma) +
                                       ", N_p=" + std::to_string(n_p) + ")");
  return static_cast<int>(r);
}

MaskingPlan mae_mask_from_scores(const std::vector<double>& alpha, double gamma) {
  MaskingPlan p;
  p.n_p = static_cast<int>(alpha.size());
  p.gamma = gamma;
  p.n_keep = p.n_p - masked_count(p.n_p, gamma);
  p.sigma.resize(alpha.size());
  std::iota(p.sigma.begin(), p.sigma.end(), 0);
  std::stable_sort(p.sigma.begin(), p.sigma.end(), [&](int a, int b) { return alpha[sz(a)] > alpha[sz(b)]; });
  return p;
}

MaskingPlan mae_mask(int n_p, double gamma, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x3a5c));
  std::vector<double> alpha(sz(n_p));
  for (double& a : alpha) a = rng.uniform();
  return mae_mask_from_scores(alpha, gamma);
}

Tensor mae_reinsert(const Tensor& kept, const std::vector<MaskingPlan>& plans, const Tensor& mask_token) {
  require(kept.ndim() == 3, "mae_reinsert expects [B, K, D]");
  const int b = kept.dim(0);
  const int k = kept.dim(1);
  const int d = kept.dim(2);
  require(static_cast<int>(plans.size()) == b, "mae_reinsert: one plan per sample is required");
  require(mask_token.numel() == d, "mae_reinsert: mask token width mismatch");
  const int n = plans[0].n_p;
  std::vector<int> index;
  for (const auto& p : plans) {
    require(p.n_p == n && p.n_keep == k, "mae_reinsert: length mismatch between kept tokens and plan");
    // Rank r < K reads kept slot r; masked ranks read the mask block, which
    // sits right after the kept block so slot r works for them too.
    const auto r = p.ranks();
    index.insert(index.end(), r.begin(), r.end());
  }
  Tensor full = kept;
  if (n > k) full = ops::concat({kept, ops::add(Tensor::zeros({b, n - k, d}), ops::reshape(mask_token, {d}))}, 1);
  return ops::gather_tokens(full, index, n);
}

Tensor normalize_patches(const Tensor& raw, double eps) {
  require(raw.ndim() == 3, "patch targets must be [B, N, d_p]");
  const std::size_t dp = sz(raw.dim(2));
  require(dp >= 2, "per-patch normalization needs d_p >= 2");
  std::vector<double> out(raw.values().begin(), raw.values().end());
  for (std::size_t r = 0; r < out.size() / dp; ++r) {
    double* p = out.data() + r * dp;
    double mean = 0.0;
    for (std::size_t j = 0; j < dp; ++j) mean += p[j];
    mean /= static_cast<double>(dp);
    double var = 0.0;
    for (std::size_t j = 0; j < dp; ++j) var += (p[j] - mean) * (p[j] - mean);
    var /= static_cast<double>(dp);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < dp; ++j) p[j] = (p[j] - mean) * inv;
  }
  return Tensor::from(raw.shape(), std::move(out));
}

Tensor mae_loss(const Tensor& pred, const Tensor& target_raw, const std::vector<MaskingPlan>& plans, double eps) {
  require(pred.shape() == target_raw.shape(), "mae_loss: prediction and target shapes differ");
  require(pred.ndim() == 3, "mae_loss expects [B, N, d_p]");
  const int b = pred.dim(0);
  const int n = pred.dim(1);
  const std::size_t dp = sz(pred.dim(2));
  require(static_cast<int>(plans.size()) == b, "mae_loss: one plan per sample is required");
  const Tensor y = normalize_patches(target_raw, eps);
  auto masked = std::make_shared<std::vector<char>>(sz(static_cast<std::int64_t>(b) * n), 0);
  int n_masked = -1;
  for (int s = 0; s < b; ++s) {
    const auto& p = plans[sz(s)];
    require(p.n_p == n, "mae_loss: plan token count differs from the prediction");
    const int mcount = p.n_p - p.n_keep;
    require(mcount > 0, "loss undefined with no masked tokens");
    require(n_masked < 0 || n_masked == mcount, "mae_loss: masked count must be constant across the batch");
    n_masked = mcount;
    const auto r = p.ranks();
    for (int i = 0; i < n; ++i) (*masked)[sz(s * n + i)] = r[sz(i)] >= p.n_keep;
  }
  const double norm = 1.0 / (static_cast<double>(n_masked) * static_cast<double>(dp) * b);
  double total = 0.0;
  for (std::size_t t = 0; t < masked->size(); ++t) {
    if (!(*masked)[t]) continue;
    for (std::size_t j = 0; j < dp; ++j) {
      const double e = pred.data()[t * dp + j] - y.data()[t * dp + j];
      total += e * e;
    }
  }
  return make_result({}, {total * norm}, {pred}, [=](const TensorImpl& o) {
    if (double* g = grad_target(pred))
      for (std::size_t t = 0; t < masked->size(); ++t) {
        if (!(*masked)[t]) continue;
        for (std::size_t j = 0; j < dp; ++j)
          g[t * dp + j] += o.grad[0] * 2.0 * norm * (pred.data()[t * dp + j] - y.data()[t * dp + j]);
      }
  });
}

}  // namespace sslbench
