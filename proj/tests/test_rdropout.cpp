#include <gtest/gtest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "ucf/rdropout.hpp"

using namespace ucf;

namespace {
double dot(const Tensor4& a, const Tensor4& b) {
  double s = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}
}  // namespace

TEST(MaskGen, BernoulliIsBinaryWithHonoredRate) {
  RngStream rng(3);
  MaskGenerator gen{MaskKind::bernoulli, 0.7, {}};
  MaskTensor m = gen.generate(Shape4{1, 4, 32, 32}, rng);
  EXPECT_TRUE(is_binary_mask(m));
  double mean = 0;
  for (std::int64_t i = 0; i < m.size(); ++i) mean += m.data()[i];
  mean /= double(m.size());
  const double sigma = std::sqrt(0.7 * 0.3 / double(m.size()));
  EXPECT_NEAR(mean, 0.7, 5 * sigma);
}

TEST(MaskGen, Uniform01StaysInUnitInterval) {
  RngStream rng(5);
  MaskGenerator gen{MaskKind::uniform01, 0.5, {}};
  MaskTensor m = gen.generate(Shape4{1, 1, 16, 16}, rng);
  EXPECT_FALSE(is_binary_mask(m));
  for (std::int64_t i = 0; i < m.size(); ++i) {
    EXPECT_GE(m.data()[i], 0.0);
    EXPECT_LT(m.data()[i], 1.0);
  }
}

TEST(MaskGen, CustomTableCyclesAndRejectsEmpty) {
  RngStream rng(7);
  MaskGenerator gen{MaskKind::custom, 0.5, {1.0, 0.0, 0.5}};
  MaskTensor m = gen.generate(Shape4{1, 1, 2, 4}, rng);
  const double want[8] = {1.0, 0.0, 0.5, 1.0, 0.0, 0.5, 1.0, 0.0};
  for (int i = 0; i < 8; ++i) EXPECT_EQ(m.data()[i], want[i]);
  MaskGenerator empty{MaskKind::custom, 0.5, {}};
  EXPECT_THROW(empty.generate(Shape4{1, 1, 1, 1}, rng), std::invalid_argument);
}

TEST(Commutation, HoldsForBinaryMasksAnyActivation) {
  RngStream rng(11);
  for (ActKind k : {ActKind::relu, ActKind::tanh, ActKind::lrelu}) {
    Activation g{k, 0.2};
    for (int trial = 0; trial < 30; ++trial) {
      Tensor4 f = Tensor4::uniform(Shape4{1, 2, 6, 6}, -3, 3, rng);
      MaskTensor m = Tensor4::bernoulli(f.shape(), 0.5, rng);
      EXPECT_TRUE(commutation_check(g, f, m));
    }
  }
}

TEST(Commutation, PlacementsAgreeInTrainForBinaryMasks) {
  RngStream rng(13);
  Activation g{ActKind::tanh};
  Tensor4 f = Tensor4::uniform(Shape4{2, 3, 8, 8}, -2, 2, rng);
  MaskTensor m = Tensor4::bernoulli(f.shape(), 0.4, rng);
  Tensor4 pre = rdropout_forward(f, m, g, DropoutPlacement::pre_activation,
                                 Mode::train, 0.4);
  Tensor4 post = rdropout_forward(f, m, g, DropoutPlacement::post_activation,
                                  Mode::train, 0.4);
  for (std::int64_t i = 0; i < pre.size(); ++i)
    EXPECT_EQ(pre.data()[i], post.data()[i]);
}

TEST(Commutation, BreaksForGeneralizedMasksWithSaturatingActivation) {
  RngStream rng(17);
  Activation g{ActKind::tanh};
  Tensor4 f = Tensor4::uniform(Shape4{1, 1, 8, 8}, 0.5, 3, rng);
  MaskGenerator gen{MaskKind::uniform01, 0.5, {}};
  MaskTensor m = gen.generate(f.shape(), rng);
  EXPECT_THROW(commutation_check(g, f, m), std::invalid_argument);
  Tensor4 pre = rdropout_forward(f, m, g, DropoutPlacement::pre_activation,
                                 Mode::train, 0.5);
  Tensor4 post = rdropout_forward(f, m, g, DropoutPlacement::post_activation,
                                  Mode::train, 0.5);
  double max_gap = 0;
  for (std::int64_t i = 0; i < pre.size(); ++i)
    max_gap = std::max(max_gap, std::fabs(pre.data()[i] - post.data()[i]));
  EXPECT_GT(max_gap, 1e-3);
}

TEST(Rdropout, EvalScalesCleanActivationByRate) {
  RngStream rng(19);
  Tensor4 f = Tensor4::uniform(Shape4{1, 2, 5, 5}, -2, 2, rng);
  Activation g{ActKind::relu};
  MaskTensor unused;
  Tensor4 y = rdropout_forward(f, unused, g, DropoutPlacement::pre_activation,
                               Mode::eval, 0.5);
  for (std::int64_t i = 0; i < f.size(); ++i)
    EXPECT_EQ(y.data()[i], 0.5 * std::max(0.0, f.data()[i]));
}

TEST(Rdropout, RejectsBadRateAndShapes) {
  Tensor4 f = Tensor4::zeros(Shape4{1, 1, 2, 2});
  MaskTensor m = Tensor4::zeros(Shape4{1, 1, 2, 3});
  Activation g{ActKind::relu};
  EXPECT_THROW(rdropout_forward(f, m, g, DropoutPlacement::pre_activation,
                                Mode::train, 1.5),
               std::invalid_argument);
  EXPECT_THROW(rdropout_forward(f, m, g, DropoutPlacement::pre_activation,
                                Mode::train, 0.5),
               std::invalid_argument);
}

namespace {

void run_rdropout_gradcheck(ActKind kind, DropoutPlacement placement,
                            Mode mode) {
  RngStream rng(23 + int(kind) * 7 + int(placement) * 3 + int(mode));
  Activation g{kind, 0.15};
  Tensor4 f = Tensor4::uniform(Shape4{1, 2, 4, 4}, -2, 2, rng);
  // keep pre-activations away from the relu kink so FD stays clean
  for (std::int64_t i = 0; i < f.size(); ++i)
    if (std::fabs(f.data()[i]) < 5e-2) f.data()[i] = 5e-2;
  MaskTensor m = Tensor4::bernoulli(f.shape(), 0.5, rng);
  Tensor4 probe = Tensor4::uniform(f.shape(), -1, 1, rng);
  Tensor4 grad = rdropout_backward(probe, f, m, g, placement, mode, 0.5);
  auto objective = [&]() {
    return dot(rdropout_forward(f, m, g, placement, mode, 0.5), probe);
  };
  auto r = gradcheck::check(f.storage(), objective, grad.storage());
  EXPECT_LT(r.max_rel_err, 1e-4)
      << "kind " << int(kind) << " placement " << int(placement);
}

}  // namespace

TEST(Rdropout, BackwardGradcheckTrainPre) {
  run_rdropout_gradcheck(ActKind::relu, DropoutPlacement::pre_activation,
                         Mode::train);
  run_rdropout_gradcheck(ActKind::tanh, DropoutPlacement::pre_activation,
                         Mode::train);
}

TEST(Rdropout, BackwardGradcheckTrainPost) {
  run_rdropout_gradcheck(ActKind::relu, DropoutPlacement::post_activation,
                         Mode::train);
  run_rdropout_gradcheck(ActKind::lrelu, DropoutPlacement::post_activation,
                         Mode::train);
}

TEST(Rdropout, BackwardGradcheckEval) {
  run_rdropout_gradcheck(ActKind::tanh, DropoutPlacement::pre_activation,
                         Mode::eval);
}

TEST(PooledLaw, ClosedFormMatchesEnumerationOnGrid) {
  for (std::int64_t n = 1; n <= 10; ++n) {
    for (double p : {0.1, 0.25, 0.5, 0.75, 0.9}) {
      auto closed = pooled_activation_distribution(n, p);
      auto brute = enumerate_pooled_distribution(n, p);
      ASSERT_EQ(closed.size(), brute.size());
      double sum = 0;
      for (std::size_t i = 0; i < closed.size(); ++i) {
        EXPECT_NEAR(closed[i], brute[i], 1e-12) << "n=" << n << " p=" << p;
        sum += closed[i];
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(PooledLaw, MassIncreasesWithRank) {
  auto probs = pooled_activation_distribution(6, 0.35);
  for (std::size_t i = 2; i < probs.size(); ++i)
    EXPECT_GT(probs[i], probs[i - 1]);
}

TEST(PooledLaw, DegenerateRates) {
  auto all = pooled_activation_distribution(5, 1.0);
  EXPECT_EQ(all[5], 1.0);
  EXPECT_EQ(all[0], 0.0);
  auto none = pooled_activation_distribution(5, 0.0);
  EXPECT_EQ(none[0], 1.0);
  EXPECT_EQ(none[5], 0.0);
}

TEST(PooledLaw, SortedOverloadValidates) {
  EXPECT_NO_THROW(pooled_activation_distribution({0.5, 0.5, 1.0}, 0.5));
  EXPECT_THROW(pooled_activation_distribution({1.0, 0.5}, 0.5),
               std::invalid_argument);
  EXPECT_THROW(pooled_activation_distribution({-1.0, 0.5}, 0.5),
               std::invalid_argument);
  EXPECT_THROW(pooled_activation_distribution(std::vector<double>{}, 0.5),
               std::invalid_argument);
  EXPECT_THROW(pooled_activation_distribution(4, 1.5), std::invalid_argument);
}

TEST(PooledLaw, ValueDistributionMergesTies) {
  auto dist = pooled_value_distribution({2.0, 2.0}, 0.5);
  ASSERT_EQ(dist.size(), 2u);
  EXPECT_EQ(dist[0].first, 0.0);
  EXPECT_NEAR(dist[0].second, 0.25, 1e-15);
  EXPECT_EQ(dist[1].first, 2.0);
  EXPECT_NEAR(dist[1].second, 0.75, 1e-15);

  auto mixed = pooled_value_distribution({1.0, 3.0, 1.0}, 0.5);
  ASSERT_EQ(mixed.size(), 3u);
  EXPECT_NEAR(mixed[0].second, 0.125, 1e-15);  // all dropped
  EXPECT_NEAR(mixed[1].second, 0.375, 1e-15);  // a 1 survives, the 3 doesn't
  EXPECT_NEAR(mixed[2].second, 0.5, 1e-15);    // the 3 survives
}

TEST(PooledLaw, SampleHonorsExtremes) {
  RngStream rng(29);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(sample_pooled_window({1, 2, 3, 4}, 1.0, rng), 4.0);
    EXPECT_EQ(sample_pooled_window({1, 2, 3, 4}, 0.0, rng), 0.0);
  }
  // fully retained window reproduces the plain max even when negative
  EXPECT_EQ(sample_pooled_window({-3, -1, -2}, 1.0, rng), -1.0);
}

TEST(PooledLaw, MonteCarloMatchesClosedForm) {
  const std::vector<double> window{1, 2, 3, 4};
  const double p = 0.5;
  auto law = pooled_activation_distribution(window, p);
  RngStream rng(31);
  const int draws = 20000;
  std::vector<int> hits(window.size() + 1, 0);
  for (int d = 0; d < draws; ++d) {
    const double v = sample_pooled_window(window, p, rng);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < window.size(); ++i)
      if (v == window[i]) idx = i + 1;
    hits[idx]++;
  }
  for (std::size_t i = 0; i < law.size(); ++i) {
    const double want = law[i];
    const double got = double(hits[i]) / draws;
    const double sigma = std::sqrt(want * (1 - want) / draws);
    EXPECT_NEAR(got, want, 4 * sigma) << "outcome " << i;
  }
}

TEST(RdropoutPool, EvalScalesPlainPooling) {
  RngStream rng(37);
  Tensor4 x = Tensor4::uniform(Shape4{1, 2, 8, 8}, 0, 4, rng);
  RngStream draw(1);
  auto r = rdropout_pool_forward(x, 2, 0.5, draw, Mode::eval);
  MaxPoolResult plain = maxpool_forward(x, 2);
  for (std::int64_t i = 0; i < r.output.size(); ++i)
    EXPECT_EQ(r.output.data()[i], 0.5 * plain.output.data()[i]);
  EXPECT_TRUE(r.mask.empty());
}

TEST(RdropoutPool, FullRetentionIsPlainPooling) {
  RngStream rng(41);
  Tensor4 x = Tensor4::uniform(Shape4{2, 3, 6, 6}, 0, 4, rng);
  RngStream draw(2);
  auto r = rdropout_pool_forward(x, 3, 1.0, draw, Mode::train);
  EXPECT_TRUE(r.output == maxpool_forward(x, 3).output);
  EXPECT_TRUE(is_binary_mask(r.mask));
}

TEST(RdropoutPool, TrainPoolsTheMaskedMap) {
  RngStream rng(43);
  Tensor4 x = Tensor4::uniform(Shape4{1, 1, 4, 4}, 1, 5, rng);
  RngStream draw(3);
  auto r = rdropout_pool_forward(x, 2, 0.5, draw, Mode::train);
  Tensor4 masked = mul(r.mask, x);
  EXPECT_TRUE(r.output == maxpool_forward(masked, 2).output);
}
