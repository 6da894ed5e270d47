#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sslbench/tensor.hpp"

namespace sslbench {

struct SSLConfig {
  std::string algorithm = "mocov3";  // mocov3 | barlow | mae
  double tau = 0.2;
  double lambda = 5e-3;
  double gamma = 0.75;
  double momentum = 0.99;
  int workers = 1;           // N_G
  int per_worker_batch = 6;  // N_b

  // `n_patches` is only checked for MAE (gamma * N_p must be integral).
  void validate(int n_patches = 0) const;
};

// ---- contrastive ---------------------------------------------------------

double cosim(std::span<const double> a, std::span<const double> b);
double info_nce(std::span<const double> q, const std::vector<std::vector<double>>& keys, int positive, double tau);

// One worker's symmetric loss: (2 tau / N_b) * sum_i [INCE(q1_i | k2_all) +
// INCE(q2_i | k1_all)], positive key at row offset + i of the gathered key
// matrices. Differentiable in q1/q2; keys are treated as constants.
Tensor moco_worker_loss(const Tensor& q1, const Tensor& q2, const Tensor& k1_all, const Tensor& k2_all, int offset,
                        double tau);
// Per-worker losses for shards given in ascending worker order. Keys are
// gathered (concatenated in worker order) before any loss is formed.
std::vector<Tensor> moco_v3_loss(const std::vector<Tensor>& q1, const std::vector<Tensor>& q2,
                                 const std::vector<Tensor>& k1, const std::vector<Tensor>& k2, double tau);

// Sum of scalars divided by their count, reduced in order.
Tensor mean_of(const std::vector<Tensor>& scalars);

// ---- redundancy reduction ------------------------------------------------

// Column-wise standardization with population statistics:
// (z - mean) / sqrt(var + eps).
Tensor barlow_normalize(const Tensor& z, double eps = 1e-5);
// (1 / N_b) * z1n^T z2n -> [d, d]
Tensor cross_correlation(const Tensor& z1n, const Tensor& z2n);
// sum_k (1 - c_kk)^2 + lambda * sum_{k != l} c_kl^2
Tensor barlow_objective(const Tensor& c, double lambda);
// Per-worker cross-correlations averaged elementwise, then the objective.
Tensor barlow_loss(const std::vector<Tensor>& z1n, const std::vector<Tensor>& z2n, double lambda);

// ---- masked image modelling ---------------------------------------------

struct MaskingPlan {
  std::vector<int> sigma;  // sigma[r] = token at rank r (0-based), scores descending
  int n_p = 0;
  int n_keep = 0;
  double gamma = 0.0;

  std::vector<int> kept() const { return {sigma.begin(), sigma.begin() + n_keep}; }
  // rank of each token: inverse permutation
  std::vector<int> ranks() const;
  bool masked(int token) const { return ranks()[static_cast<std::size_t>(token)] >= n_keep; }
};

int masked_count(int n_p, double gamma);
// Builds the plan from given scores (ties broken by lower index first).
MaskingPlan mae_mask_from_scores(const std::vector<double>& alpha, double gamma);
// Draws alpha_i ~ U(0, 1) under `seed`.
MaskingPlan mae_mask(int n_p, double gamma, std::uint64_t seed);

// [B, K, D] kept tokens (in plan order) -> [B, N_p, D] with the mask token
// at every masked position.
Tensor mae_reinsert(const Tensor& kept, const std::vector<MaskingPlan>& plans, const Tensor& mask_token);

// Per-patch standardization of raw targets [B, N, d_p] (no gradient).
Tensor normalize_patches(const Tensor& raw, double eps = 1e-6);
// Batch mean of (1 / (gamma N_p d_p)) * sum over masked positions of the
// squared error against per-patch normalized targets.
Tensor mae_loss(const Tensor& pred, const Tensor& target_raw, const std::vector<MaskingPlan>& plans,
                double eps = 1e-6);

}  // namespace sslbench
