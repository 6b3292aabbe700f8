#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "aimclr/random.hpp"
#include "aimclr/tensor.hpp"

namespace aimclr {

enum class NonUnitPolicy { Renormalize, Reject };

/// FIFO queue of unit-norm key embeddings, stored in a ring buffer.
/// Index 0 is always the oldest entry.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t dim, NonUnitPolicy policy = NonUnitPolicy::Renormalize);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  void enqueue(const std::vector<double>& z);
  // Appends each row of a [B, dim] tensor in row order.
  void enqueue(const Tensor& batch);
  // Fills the queue to capacity with unit vectors drawn uniformly on the sphere.
  void fill_random(Rng& rng);
  void clear();

  std::vector<double> entry(std::size_t i) const;
  // [size, dim] constant tensor, oldest first.
  Tensor matrix() const;
  // Flat oldest-first contents, for checkpoints.
  std::vector<double> contents() const;
  void restore(const std::vector<double>& flat);

 private:
  std::size_t capacity_;
  std::size_t dim_;
  NonUnitPolicy policy_;
  std::vector<double> ring_;
  std::size_t head_ = 0;  // slot of the oldest entry
  std::size_t size_ = 0;
};

// ---------------------------------------------------------------------------
// Single-query forms on plain vectors. Distributions have M+1 entries:
// entry 0 is the positive key z, entry i >= 1 is bank entry i-1.

std::vector<double> conditional_distribution(const std::vector<double>& q,
                                             const std::vector<double>& z,
                                             const MemoryBank& bank, double tau);

// -log p(z|q).
double info_nce(const std::vector<double>& q, const std::vector<double>& z,
                const MemoryBank& bank, double tau);

// -log of the probability mass on {z} together with the bank entries in
// `positives` (0-based bank indices). Equals info_nce for an empty set.
double nnm_loss(const std::vector<double>& q, const std::vector<double>& z,
                const MemoryBank& bank, double tau, const std::vector<std::size_t>& positives);

struct D3MTerms {
  double d1 = 0.0;
  double d2 = 0.0;
  double total = 0.0;  // (d1 + d2) / 2
};

// Cross-entropies from p_hat to p_tilde and to p_drop. Terms with
// p_hat[j] == 0 contribute nothing.
D3MTerms d3m_loss(const std::vector<double>& p_hat, const std::vector<double>& p_tilde,
                  const std::vector<double>& p_drop);

// Indices of the k most similar bank entries, most similar first; ties go to
// the lower index.
std::vector<std::size_t> mine_neighbors(const std::vector<double>& q, const MemoryBank& bank,
                                        std::size_t k);

// ---------------------------------------------------------------------------
// Batched, differentiable forms. Logits are [B, M+1] with column 0 = q.z/tau.

Tensor contrast_logits(const Tensor& q, const Tensor& z, const Tensor& bank, double tau);

// Mean over rows of -log( sum_{j in {0} + (1 + positives[b])} softmax(logits_b)_j ).
Tensor nnm_loss(const Tensor& logits, const std::vector<std::vector<std::size_t>>& positives);
Tensor info_nce(const Tensor& logits);

struct D3MTensors {
  Tensor d1;
  Tensor d2;
  Tensor total;
};

// softmax(logits_hat) is used as a constant target.
D3MTensors d3m_loss(const Tensor& logits_hat, const Tensor& logits_tilde, const Tensor& logits_drop);

// Per-row top-k over q [B, d] against bank [M, d].
std::vector<std::vector<std::size_t>> mine_neighbors(const Tensor& q, const Tensor& bank, std::size_t k);

// Sorted union of per-row index sets.
std::vector<std::vector<std::size_t>> union_rows(
    const std::vector<std::vector<std::vector<std::size_t>>>& sets);

}  // namespace aimclr
