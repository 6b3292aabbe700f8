#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "aimclr/contrastive.hpp"
#include "aimclr/grad_check.hpp"

using namespace aimclr;

namespace {

std::vector<double> unit(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  double s = 0.0;
  for (double& x : v) {
    x = n(rng);
    s += x * x;
  }
  for (double& x : v) x /= std::sqrt(s);
  return v;
}

std::vector<double> basis(std::size_t dim, std::size_t i) {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return v;
}

std::vector<double> random_distribution(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  for (double& x : p) x = e(rng);
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= s;
  return p;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Closed form evaluated directly: -log((e^{qz/t} + sum_{N+} e^{qm/t}) / (e^{qz/t} + sum_all e^{qm/t})).
double brute_nnm(const std::vector<double>& q, const std::vector<double>& z, const MemoryBank& bank, double tau,
                 const std::vector<bool>& positive) {
  const double pos = std::exp(dot(q, z) / tau);
  double num = pos, den = pos;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double e = std::exp(dot(q, bank.entry(i)) / tau);
    den += e;
    if (positive[i]) num += e;
  }
  return -std::log(num / den);
}

Tensor rows(const std::vector<std::vector<double>>& r, bool requires_grad = false) {
  std::vector<double> flat;
  for (const auto& v : r) flat.insert(flat.end(), v.begin(), v.end());
  return Tensor::from({r.size(), r.front().size()}, std::move(flat), requires_grad);
}

}  // namespace

TEST(MemoryBank, FifoExamples) {
  MemoryBank bank(4, 2);
  std::vector<std::vector<double>> pushed;
  for (int i = 0; i < 5; ++i) {
    const double a = 0.3 * i;
    pushed.push_back({std::cos(a), std::sin(a)});
    bank.enqueue(pushed.back());
  }
  ASSERT_EQ(bank.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(bank.entry(i), pushed[i + 1]);

  Rng rng = make_rng(1);
  std::vector<std::vector<double>> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(unit(2, rng));
  bank.enqueue(rows(batch));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(bank.entry(i)[d], batch[i][d], 1e-15);
  }
}

TEST(MemoryBank, NonUnitPolicy) {
  MemoryBank bank(3, 2);
  bank.enqueue(std::vector<double>{3.0, 4.0});
  EXPECT_NEAR(bank.entry(0)[0], 0.6, 1e-15);
  EXPECT_NEAR(bank.entry(0)[1], 0.8, 1e-15);
  EXPECT_THROW(bank.enqueue(std::vector<double>{0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(bank.enqueue(std::vector<double>{1.0, 0.0, 0.0}), std::invalid_argument);

  MemoryBank strict(3, 2, NonUnitPolicy::Reject);
  EXPECT_THROW(strict.enqueue(std::vector<double>{3.0, 4.0}), std::invalid_argument);
  EXPECT_NO_THROW(strict.enqueue(std::vector<double>{0.6, 0.8}));
}

TEST(MemoryBank, RandomFillAndRestore) {
  MemoryBank bank(16, 5);
  Rng rng = make_rng(2);
  bank.fill_random(rng);
  ASSERT_EQ(bank.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto e = bank.entry(i);
    EXPECT_NEAR(std::sqrt(dot(e, e)), 1.0, 1e-5);
  }
  bank.enqueue(unit(5, rng));
  MemoryBank copy(16, 5);
  copy.restore(bank.contents());
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(copy.entry(i), bank.entry(i));
  const Tensor m = bank.matrix();
  EXPECT_EQ(m.shape(), (Shape{16, 5}));
  EXPECT_EQ(m.at(15 * 5 + 2), bank.entry(15)[2]);
}

TEST(MemoryBank, ModelCheckAgainstReferenceList) {
  const std::size_t M = 37, d = 4;
  MemoryBank bank(M, d);
  std::deque<std::vector<double>> model;
  Rng rng = make_rng(3);
  std::uniform_int_distribution<int> batch_size(1, 9);
  for (int op = 0; op < 10000; ++op) {
    const int b = batch_size(rng);
    std::vector<std::vector<double>> batch;
    for (int i = 0; i < b; ++i) batch.push_back(unit(d, rng));
    if (b == 1) {
      bank.enqueue(batch.front());
    } else {
      bank.enqueue(rows(batch));
    }
    for (auto& v : batch) {
      model.push_back(v);
      if (model.size() > M) model.pop_front();
    }
    ASSERT_EQ(bank.size(), model.size());
    for (std::size_t i = 0; i < model.size(); ++i) ASSERT_EQ(bank.entry(i), model[i]) << "op " << op;
  }
}

TEST(ConditionalDistribution, Examples) {
  MemoryBank bank(2, 3);
  bank.enqueue(basis(3, 1));
  bank.enqueue(basis(3, 2));
  const auto p = conditional_distribution(basis(3, 0), basis(3, 0), bank, 1.0);
  const double e = std::exp(1.0);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_NEAR(p[0], e / (e + 2.0), 1e-15);
  EXPECT_NEAR(p[0], 0.5761, 1e-4);
  EXPECT_NEAR(p[1], 1.0 / (e + 2.0), 1e-15);
  EXPECT_NEAR(p[2], 0.2119, 1e-4);

  const auto sharp = conditional_distribution(basis(3, 0), basis(3, 0), bank, 0.01);
  EXPECT_NEAR(sharp[0], 1.0, 1e-12);
}

TEST(ConditionalDistribution, Errors) {
  MemoryBank empty(2, 3);
  EXPECT_THROW(conditional_distribution(basis(3, 0), basis(3, 0), empty, 0.07), std::invalid_argument);
  MemoryBank bank(2, 3);
  bank.enqueue(basis(3, 1));
  EXPECT_THROW(conditional_distribution(basis(3, 0), basis(3, 0), bank, 0.0), std::invalid_argument);
  EXPECT_THROW(conditional_distribution(basis(3, 0), basis(3, 0), bank, -1.0), std::invalid_argument);
}

TEST(ConditionalDistribution, SumsToOne) {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    MemoryBank bank(50, 8);
    bank.fill_random(rng);
    const auto p = conditional_distribution(unit(8, rng), unit(8, rng), bank, 0.07);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
}

TEST(InfoNce, UniformSimilarityIsLogMPlusOne) {
  for (std::size_t M : {1u, 2u, 7u, 1023u}) {
    const std::size_t dim = M + 2;
    MemoryBank bank(M, dim);
    for (std::size_t i = 0; i < M; ++i) bank.enqueue(basis(dim, i + 2));
    const double loss = info_nce(basis(dim, 0), basis(dim, 1), bank, 0.07);
    EXPECT_NEAR(loss, std::log(static_cast<double>(M + 1)), 1e-9) << "M=" << M;
  }
  MemoryBank bank(2, 3);
  bank.enqueue(basis(3, 1));
  bank.enqueue(basis(3, 2));
  EXPECT_NEAR(info_nce(basis(3, 0), basis(3, 1), bank, 0.07), 1.0986, 1e-4);
}

TEST(InfoNce, DirectEvaluation) {
  MemoryBank bank(2, 3);
  bank.enqueue(basis(3, 1));
  bank.enqueue(basis(3, 2));
  const double loss = info_nce(basis(3, 0), basis(3, 0), bank, 1.0);
  EXPECT_NEAR(loss, std::log(1.0 + 2.0 * std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(loss, 0.55144, 1e-5);
}

TEST(InfoNce, EqualsNegativeLogOfDistributionEntryZero) {
  Rng rng = make_rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    MemoryBank bank(30, 6);
    bank.fill_random(rng);
    const auto q = unit(6, rng), z = unit(6, rng);
    EXPECT_EQ(info_nce(q, z, bank, 0.07), -std::log(conditional_distribution(q, z, bank, 0.07)[0]));
    EXPECT_EQ(nnm_loss(q, z, bank, 0.07, {}), info_nce(q, z, bank, 0.07));
  }
}

TEST(NnmLoss, FullPositiveSetIsZero) {
  Rng rng = make_rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    MemoryBank bank(20, 6);
    bank.fill_random(rng);
    std::vector<std::size_t> all(20);
    std::iota(all.begin(), all.end(), 0);
    EXPECT_NEAR(nnm_loss(unit(6, rng), unit(6, rng), bank, 0.07, all), 0.0, 1e-9);
  }
}

TEST(NnmLoss, MonotoneAndMatchesBruteForce) {
  Rng rng = make_rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    MemoryBank bank(25, 6);
    bank.fill_random(rng);
    const auto q = unit(6, rng), z = unit(6, rng);
    std::vector<std::size_t> order(25);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> set;
    std::vector<bool> member(25, false);
    double prev = nnm_loss(q, z, bank, 0.2, set);
    for (std::size_t idx : order) {
      set.push_back(idx);
      member[idx] = true;
      const double cur = nnm_loss(q, z, bank, 0.2, set);
      EXPECT_NEAR(cur, brute_nnm(q, z, bank, 0.2, member), 1e-10);
      EXPECT_LE(cur, prev + 1e-15);
      prev = cur;
    }
  }
}

TEST(NnmLoss, RejectsOutOfRangeIndex) {
  MemoryBank bank(3, 2);
  bank.enqueue(std::vector<double>{1.0, 0.0});
  EXPECT_THROW(nnm_loss(basis(2, 0), basis(2, 1), bank, 0.07, {1}), std::out_of_range);
}

TEST(D3M, Examples) {
  const std::vector<double> one_hot{1.0, 0.0, 0.0};
  EXPECT_EQ(d3m_loss(one_hot, one_hot, one_hot).total, 0.0);
  const std::vector<double> uni(3, 1.0 / 3.0);
  const D3MTerms t = d3m_loss(uni, uni, uni);
  EXPECT_NEAR(t.total, std::log(3.0), 1e-15);
  EXPECT_NEAR(t.d1, 1.0986, 1e-4);
  EXPECT_THROW(d3m_loss(uni, one_hot, std::vector<double>{0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(d3m_loss(uni, std::vector<double>{0.5, 0.6, 0.1}, uni), std::invalid_argument);
}

TEST(D3M, GibbsInequality) {
  Rng rng = make_rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 30);
    const auto p = random_distribution(n, rng), a = random_distribution(n, rng), b = random_distribution(n, rng);
    double h = 0.0;
    for (double v : p) h -= v * std::log(v);
    EXPECT_GE(d3m_loss(p, a, b).total, h - 1e-12);
    EXPECT_NEAR(d3m_loss(p, p, p).total, h, 1e-9);
  }
}

TEST(MineNeighbors, Examples) {
  MemoryBank bank(3, 2);
  bank.enqueue(std::vector<double>{0.9, std::sqrt(1 - 0.81)});
  bank.enqueue(std::vector<double>{0.1, std::sqrt(1 - 0.01)});
  const std::vector<double> q{1.0, 0.0};
  EXPECT_EQ(mine_neighbors(q, bank, 1), (std::vector<std::size_t>{0}));
  EXPECT_EQ(mine_neighbors(q, bank, 5).size(), 2u);

  MemoryBank ties(4, 2);
  for (int i = 0; i < 4; ++i) ties.enqueue(std::vector<double>{0.0, 1.0});
  EXPECT_EQ(mine_neighbors(q, ties, 2), (std::vector<std::size_t>{0, 1}));
}

TEST(MineNeighbors, NestedTopK) {
  Rng rng = make_rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    MemoryBank bank(40, 5);
    bank.fill_random(rng);
    const auto q = unit(5, rng);
    const auto k1 = mine_neighbors(q, bank, 1), k2 = mine_neighbors(q, bank, 2), k5 = mine_neighbors(q, bank, 5);
    EXPECT_EQ(k1[0], k2[0]);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(k2[i], k5[i]);
    for (std::size_t i = 0; i < 40; ++i) EXPECT_LE(dot(q, bank.entry(i)), dot(q, bank.entry(k1[0])));
  }
}

TEST(TensorForms, AgreeWithVectorForms) {
  Rng rng = make_rng(10);
  MemoryBank bank(30, 6);
  bank.fill_random(rng);
  std::vector<std::vector<double>> qs, zs;
  for (int i = 0; i < 4; ++i) {
    qs.push_back(unit(6, rng));
    zs.push_back(unit(6, rng));
  }
  const Tensor logits = contrast_logits(rows(qs), rows(zs), bank.matrix(), 0.07);
  ASSERT_EQ(logits.shape(), (Shape{4, 31}));
  double mean_info = 0.0, mean_nnm = 0.0;
  const auto mined = mine_neighbors(rows(qs), bank.matrix(), 3);
  for (std::size_t b = 0; b < 4; ++b) {
    mean_info += info_nce(qs[b], zs[b], bank, 0.07) / 4.0;
    mean_nnm += nnm_loss(qs[b], zs[b], bank, 0.07, mined[b]) / 4.0;
    EXPECT_EQ(mined[b], mine_neighbors(qs[b], bank, 3));
  }
  EXPECT_NEAR(info_nce(logits).item(), mean_info, 1e-12);
  EXPECT_NEAR(nnm_loss(logits, mined).item(), mean_nnm, 1e-12);
  EXPECT_EQ(nnm_loss(logits, std::vector<std::vector<std::size_t>>(4)).item(), info_nce(logits).item());

  const Tensor lt = contrast_logits(rows(zs), rows(qs), bank.matrix(), 0.07);
  const D3MTensors d = d3m_loss(logits, lt, logits);
  double d1 = 0.0, d2 = 0.0;
  for (std::size_t b = 0; b < 4; ++b) {
    const auto ph = conditional_distribution(qs[b], zs[b], bank, 0.07);
    const auto pt = conditional_distribution(zs[b], qs[b], bank, 0.07);
    const D3MTerms t = d3m_loss(ph, pt, ph);
    d1 += t.d1 / 4.0;
    d2 += t.d2 / 4.0;
  }
  EXPECT_NEAR(d.d1.item(), d1, 1e-9);
  EXPECT_NEAR(d.d2.item(), d2, 1e-9);
  EXPECT_NEAR(d.total.item(), 0.5 * (d1 + d2), 1e-9);
}

TEST(TensorForms, UnionRows) {
  const auto u = union_rows({{{3, 1}, {0}}, {{1, 2}, {0}}, {{5}, {}}});
  EXPECT_EQ(u[0], (std::vector<std::size_t>{1, 2, 3, 5}));
  EXPECT_EQ(u[1], (std::vector<std::size_t>{0}));
}

TEST(TensorForms, D3MTargetCarriesNoGradient) {
  Rng rng = make_rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(2 * 5), b(2 * 5);
  for (double& v : a) v = n(rng);
  for (double& v : b) v = n(rng);
  Tensor hat = Tensor::from({2, 5}, a, true), tilde = Tensor::from({2, 5}, b, true);
  Tape tape;
  tape.backward(d3m_loss(hat, tilde, tilde).total);
  EXPECT_TRUE(!hat.has_grad() || std::all_of(hat.grad().begin(), hat.grad().end(), [](double g) { return g == 0.0; }));
  EXPECT_TRUE(tilde.has_grad());
}

class LossGradCheck : public ::testing::TestWithParam<int> {};

TEST_P(LossGradCheck, InfoNceD3MAndNnm) {
  Rng rng = make_rng(static_cast<std::uint64_t>(GetParam()), {12});
  MemoryBank bank(12, 5);
  bank.fill_random(rng);
  std::normal_distribution<double> n(0.0, 1.0);
  auto raw = [&](std::size_t r) {
    std::vector<double> v(r * 5);
    for (double& x : v) x = n(rng);
    return Tensor::from({r, 5}, v, true);
  };
  const Tensor q = raw(3), qt = raw(3), qd = raw(3);
  std::vector<std::vector<double>> zs;
  for (int i = 0; i < 3; ++i) zs.push_back(unit(5, rng));
  const Tensor z = rows(zs), m = bank.matrix();
  const double tau = 0.2;
  auto logits = [&](const Tensor& x) { return contrast_logits(l2_normalize(x, 1), z, m, tau); };
  std::vector<std::vector<std::size_t>> pos{{0, 4}, {}, {11}};

  const auto info = grad_check([&] { return info_nce(logits(q)); }, {q}, 1e-5, 1e-4);
  EXPECT_TRUE(info.passed) << "info_nce " << info.max_rel_error;
  const auto nnm = grad_check([&] { return nnm_loss(logits(q), pos); }, {q}, 1e-5, 1e-4);
  EXPECT_TRUE(nnm.passed) << "nnm_loss " << nnm.max_rel_error;
  const Tensor hat_logits = logits(q).detach();
  const auto d3m = grad_check([&] { return d3m_loss(hat_logits, logits(qt), logits(qd)).total; }, {qt, qd}, 1e-5, 1e-4);
  EXPECT_TRUE(d3m.passed) << "d3m_loss " << d3m.max_rel_error;
}

INSTANTIATE_TEST_SUITE_P(Seeds, LossGradCheck, ::testing::Range(0, 20));
