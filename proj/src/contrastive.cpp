#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "aimclr/contrastive.hpp"

namespace aimclr {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
}

std::vector<std::size_t> top_k(const std::vector<double>& sims, std::size_t k) {
  std::vector<std::size_t> idx(sims.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t n = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return sims[a] > sims[b] || (sims[a] == sims[b] && a < b);
                    });
  idx.resize(n);
  return idx;
}

void check_distribution(const std::vector<double>& p, const char* name) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string("d3m_loss: ") + name + " has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument(std::string("d3m_loss: ") + name + " does not sum to 1");
  }
}

double cross_entropy(const std::vector<double>& target, const std::vector<double>& p) {
  double ce = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (target[j] != 0.0) ce -= target[j] * std::log(p[j]);
  }
  return ce;
}

}  // namespace

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim, NonUnitPolicy policy)
    : capacity_(capacity), dim_(dim), policy_(policy), ring_(capacity * dim, 0.0) {
  if (capacity == 0 || dim == 0) throw std::invalid_argument("MemoryBank: capacity and dim must be positive");
}

void MemoryBank::enqueue(const std::vector<double>& z) {
  if (z.size() != dim_) {
    throw std::invalid_argument("MemoryBank: embedding has dim " + std::to_string(z.size()) +
                                ", bank expects " + std::to_string(dim_));
  }
  const double norm = std::sqrt(dot(z.data(), z.data(), dim_));
  if (!std::isfinite(norm) || norm == 0.0) throw std::invalid_argument("MemoryBank: embedding has zero or non-finite norm");
  double scale = 1.0;
  if (std::abs(norm - 1.0) > 1e-5) {
    if (policy_ == NonUnitPolicy::Reject) throw std::invalid_argument("MemoryBank: embedding is not unit-norm");
    scale = 1.0 / norm;
  }
  std::size_t slot;
  if (size_ < capacity_) {
    slot = (head_ + size_) % capacity_;
    ++size_;
  } else {
    slot = head_;
    head_ = (head_ + 1) % capacity_;
  }
  for (std::size_t i = 0; i < dim_; ++i) ring_[slot * dim_ + i] = z[i] * scale;
}

void MemoryBank::enqueue(const Tensor& batch) {
  if (batch.rank() != 2 || batch.dim(1) != dim_) {
    throw ShapeError("MemoryBank: expected [B, " + std::to_string(dim_) + "], got " + shape_str(batch.shape()));
  }
  const auto d = batch.data();
  for (std::size_t b = 0; b < batch.dim(0); ++b) {
    enqueue(std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(b * dim_),
                                d.begin() + static_cast<std::ptrdiff_t>((b + 1) * dim_)));
  }
}

void MemoryBank::fill_random(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(dim_);
  while (size_ < capacity_) {
    for (double& v : z) v = normal(rng);
    enqueue(z);
  }
}

void MemoryBank::clear() {
  head_ = 0;
  size_ = 0;
}

std::vector<double> MemoryBank::entry(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("MemoryBank: index " + std::to_string(i) + " out of range");
  const std::size_t slot = (head_ + i) % capacity_;
  return std::vector<double>(ring_.begin() + static_cast<std::ptrdiff_t>(slot * dim_),
                             ring_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * dim_));
}

std::vector<double> MemoryBank::contents() const {
  std::vector<double> flat;
  flat.reserve(size_ * dim_);
  for (std::size_t i = 0; i < size_; ++i) {
    const std::size_t slot = (head_ + i) % capacity_;
    flat.insert(flat.end(), ring_.begin() + static_cast<std::ptrdiff_t>(slot * dim_),
                ring_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * dim_));
  }
  return flat;
}

Tensor MemoryBank::matrix() const { return Tensor::from({size_, dim_}, contents()); }

void MemoryBank::restore(const std::vector<double>& flat) {
  if (flat.size() % dim_ != 0 || flat.size() / dim_ > capacity_) {
    throw std::invalid_argument("MemoryBank: restored contents do not fit the bank");
  }
  clear();
  std::copy(flat.begin(), flat.end(), ring_.begin());
  size_ = flat.size() / dim_;
}

std::vector<double> conditional_distribution(const std::vector<double>& q, const std::vector<double>& z,
                                             const MemoryBank& bank, double tau) {
  check_tau(tau);
  if (bank.empty()) throw std::invalid_argument("conditional_distribution: memory bank is empty");
  if (q.size() != bank.dim() || z.size() != bank.dim()) {
    throw std::invalid_argument("conditional_distribution: vector dims differ from the bank");
  }
  std::vector<double> logits(bank.size() + 1);
  logits[0] = dot(q.data(), z.data(), q.size()) / tau;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    logits[i + 1] = dot(q.data(), bank.entry(i).data(), q.size()) / tau;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    total += l;
  }
  for (double& l : logits) l /= total;
  return logits;
}

double nnm_loss(const std::vector<double>& q, const std::vector<double>& z, const MemoryBank& bank,
                double tau, const std::vector<std::size_t>& positives) {
  const std::vector<double> p = conditional_distribution(q, z, bank, tau);
  std::vector<std::size_t> cols{0};
  for (std::size_t i : positives) {
    if (i >= bank.size()) {
      throw std::out_of_range("nnm_loss: neighbor index " + std::to_string(i) + " outside bank of size " +
                              std::to_string(bank.size()));
    }
    cols.push_back(i + 1);
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  double mass = 0.0;
  for (std::size_t c : cols) mass += p[c];
  return -std::log(mass);
}

double info_nce(const std::vector<double>& q, const std::vector<double>& z, const MemoryBank& bank,
                double tau) {
  return nnm_loss(q, z, bank, tau, {});
}

D3MTerms d3m_loss(const std::vector<double>& p_hat, const std::vector<double>& p_tilde,
                  const std::vector<double>& p_drop) {
  if (p_hat.size() != p_tilde.size() || p_hat.size() != p_drop.size()) {
    throw std::invalid_argument("d3m_loss: distributions have different support sizes");
  }
  check_distribution(p_hat, "p_hat");
  check_distribution(p_tilde, "p_tilde");
  check_distribution(p_drop, "p_drop");
  D3MTerms out;
  out.d1 = cross_entropy(p_hat, p_tilde);
  out.d2 = cross_entropy(p_hat, p_drop);
  out.total = 0.5 * (out.d1 + out.d2);
  return out;
}

std::vector<std::size_t> mine_neighbors(const std::vector<double>& q, const MemoryBank& bank,
                                        std::size_t k) {
  if (q.size() != bank.dim()) throw std::invalid_argument("mine_neighbors: query dim differs from the bank");
  std::vector<double> sims(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) sims[i] = dot(q.data(), bank.entry(i).data(), q.size());
  return top_k(sims, k);
}

Tensor contrast_logits(const Tensor& q, const Tensor& z, const Tensor& bank, double tau) {
  check_tau(tau);
  if (q.rank() != 2 || q.shape() != z.shape() || bank.rank() != 2 || bank.dim(1) != q.dim(1)) {
    throw ShapeError("contrast_logits: incompatible shapes " + shape_str(q.shape()) + ", " +
                     shape_str(z.shape()) + ", " + shape_str(bank.shape()));
  }
  if (bank.dim(0) == 0) throw std::invalid_argument("contrast_logits: memory bank is empty");
  const Tensor pos = sum(mul(q, z), 1, true);
  const Tensor neg = matmul(q, permute(bank, {1, 0}));
  return mul_scalar(concat({pos, neg}, 1), 1.0 / tau);
}

Tensor nnm_loss(const Tensor& logits, const std::vector<std::vector<std::size_t>>& positives) {
  const std::size_t B = logits.dim(0), W = logits.dim(1);
  if (!positives.empty() && positives.size() != B) {
    throw std::invalid_argument("nnm_loss: one positive set per row required");
  }
  std::vector<double> mask(B * W, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    mask[b * W] = 1.0;
    if (positives.empty()) continue;
    for (std::size_t i : positives[b]) {
      if (i + 1 >= W) {
        throw std::out_of_range("nnm_loss: neighbor index " + std::to_string(i) + " outside bank of size " +
                                std::to_string(W - 1));
      }
      mask[b * W + i + 1] = 1.0;
    }
  }
  const Tensor numerator = logsumexp(logits, 1, Tensor::from({B, W}, std::move(mask)));
  return mean(sub(logsumexp(logits, 1), numerator));
}

Tensor info_nce(const Tensor& logits) { return nnm_loss(logits, {}); }

D3MTensors d3m_loss(const Tensor& logits_hat, const Tensor& logits_tilde, const Tensor& logits_drop) {
  if (logits_hat.shape() != logits_tilde.shape() || logits_hat.shape() != logits_drop.shape()) {
    throw ShapeError("d3m_loss: logits have different shapes");
  }
  Tensor target;
  {
    NoGradGuard guard;
    target = softmax(logits_hat, 1).detach();
  }
  auto ce = [&](const Tensor& logits) { return neg(mean(sum(mul(target, log_softmax(logits, 1)), 1))); };
  D3MTensors out;
  out.d1 = ce(logits_tilde);
  out.d2 = ce(logits_drop);
  out.total = mul_scalar(add(out.d1, out.d2), 0.5);
  return out;
}

std::vector<std::vector<std::size_t>> mine_neighbors(const Tensor& q, const Tensor& bank, std::size_t k) {
  if (q.rank() != 2 || bank.rank() != 2 || q.dim(1) != bank.dim(1)) {
    throw ShapeError("mine_neighbors: incompatible shapes " + shape_str(q.shape()) + ", " + shape_str(bank.shape()));
  }
  const std::size_t B = q.dim(0), M = bank.dim(0), d = q.dim(1);
  const auto qd = q.data();
  const auto md = bank.data();
  std::vector<std::vector<std::size_t>> out(B);
  std::vector<double> sims(M);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < M; ++i) sims[i] = dot(qd.data() + b * d, md.data() + i * d, d);
    out[b] = top_k(sims, k);
  }
  return out;
}

std::vector<std::vector<std::size_t>> union_rows(
    const std::vector<std::vector<std::vector<std::size_t>>>& sets) {
  if (sets.empty()) return {};
  std::vector<std::vector<std::size_t>> out(sets.front().size());
  for (const auto& s : sets) {
    if (s.size() != out.size()) throw std::invalid_argument("union_rows: row counts differ");
    for (std::size_t b = 0; b < s.size(); ++b) out[b].insert(out[b].end(), s[b].begin(), s[b].end());
  }
  for (auto& row : out) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return out;
}

}  // namespace aimclr
