#include "ucf/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ucf/rng.hpp"
#include "ucf/softmax_loss.hpp"

using namespace ucf;

namespace {

NetworkConfig tiny_config(std::int64_t side = 16) {
  NetworkConfig c;
  c.input_side = side;
  c.input_channels = 3;
  c.encoder = {{1, 4, true}, {1, 8, true}};
  c.decoder = {{UpsampleMode::hybrid, 1, 4, true},
               {UpsampleMode::hybrid, 1, 4, true}};
  c.apply_flags();
  return c;
}

Tensor4 random_input(Shape4 shape, std::uint64_t seed) {
  RngStream rng(seed);
  return Tensor4::uniform(shape, -1.0, 1.0, rng);
}

}  // namespace

TEST(NetworkConfig, ToyShapeAlgebra) {
  NetworkConfig c = NetworkConfig::toy_default();
  c.validate();
  Network net = build_network(c, 1);
  const Tensor4 x = random_input({2, 3, 64, 64}, 3);
  ForwardCtx ctx{Mode::train, 99, 0};
  const Tensor4 y = net.forward(x, ctx);
  EXPECT_EQ(y.shape(), (Shape4{2, 2, 64, 64}));
}

TEST(NetworkConfig, InvariantsEnforced) {
  NetworkConfig c = tiny_config();
  c.decoder.pop_back();
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.input_side = 18;  // not divisible by 2^2
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.use_dropout = true;
  c.use_rdropout = true;
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.classifier_channels = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = tiny_config();
  c.encoder[0].channels = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(NetworkConfig, KvRoundTrip) {
  for (const char* name : {"ucf", "va", "vb", "vc", "vd", "ve"}) {
    const NetworkConfig c = variant_config(name);
    const KvMap kv = c.to_kv();
    const NetworkConfig back = NetworkConfig::from_kv(kv);
    EXPECT_EQ(back.to_kv(), kv) << name;
  }
  const NetworkConfig toy = NetworkConfig::toy_default();
  EXPECT_EQ(NetworkConfig::from_kv(toy.to_kv()).to_kv(), toy.to_kv());
}

TEST(NetworkConfig, VariantFlagMatrix) {
  const NetworkConfig ucf = variant_config("ucf");
  EXPECT_FALSE(ucf.use_dropout);
  EXPECT_TRUE(ucf.use_rdropout);
  EXPECT_TRUE(ucf.use_restricted_deconv);
  EXPECT_TRUE(ucf.use_interp);
  EXPECT_EQ(ucf.decoder[0].mode, UpsampleMode::hybrid);
  EXPECT_EQ(ucf.placement(), DropoutPlacement::pre_activation);

  const NetworkConfig va = variant_config("va");
  EXPECT_TRUE(va.use_dropout);
  EXPECT_FALSE(va.use_rdropout);
  EXPECT_TRUE(va.use_restricted_deconv);
  EXPECT_FALSE(va.use_interp);
  EXPECT_EQ(va.decoder[0].mode, UpsampleMode::deconv_restricted);
  EXPECT_EQ(va.placement(), DropoutPlacement::post_activation);

  const NetworkConfig vb = variant_config("vb");
  EXPECT_TRUE(vb.use_rdropout);
  EXPECT_TRUE(vb.use_restricted_deconv);
  EXPECT_FALSE(vb.use_interp);
  EXPECT_EQ(vb.decoder[0].mode, UpsampleMode::deconv_restricted);

  const NetworkConfig vc = variant_config("vc");
  EXPECT_TRUE(vc.use_rdropout);
  EXPECT_FALSE(vc.use_restricted_deconv);
  EXPECT_TRUE(vc.use_interp);
  EXPECT_EQ(vc.decoder[0].mode, UpsampleMode::interp_conv);

  const NetworkConfig vd = variant_config("vd");
  EXPECT_FALSE(vd.dropout_enabled());
  EXPECT_TRUE(vd.use_restricted_deconv);
  EXPECT_FALSE(vd.use_interp);
  EXPECT_EQ(vd.decoder[0].mode, UpsampleMode::deconv_restricted);
  EXPECT_FALSE(vd.encoder[0].rdropout);

  const NetworkConfig ve = variant_config("ve");
  EXPECT_FALSE(ve.dropout_enabled());
  EXPECT_FALSE(ve.use_restricted_deconv);
  EXPECT_TRUE(ve.use_interp);
  EXPECT_EQ(ve.decoder[0].mode, UpsampleMode::interp_conv);

  EXPECT_THROW(variant_config("vx"), std::invalid_argument);
}

TEST(Network, VariantLayerListsArePairwiseDistinct) {
  std::vector<std::string> descriptions;
  for (const char* name : {"ucf", "va", "vb", "vc", "vd", "ve"})
    descriptions.push_back(build_network(variant_config(name), 1).describe());
  for (std::size_t i = 0; i < descriptions.size(); ++i)
    for (std::size_t j = i + 1; j < descriptions.size(); ++j)
      EXPECT_NE(descriptions[i], descriptions[j]) << i << " vs " << j;
}

TEST(Network, MirrorPropertyOfSpatialSides) {
  NetworkConfig c = NetworkConfig::toy_default();
  Network net = build_network(c, 2);
  const Tensor4 x = random_input({1, 3, 64, 64}, 5);
  ForwardCtx ctx{Mode::eval, 0, 0};
  net.forward(x, ctx);
  std::vector<std::int64_t> pool_sides, up_sides;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const std::string d = net.layers[i]->describe();
    if (d.find("maxpool") != std::string::npos)
      pool_sides.push_back(net.last_trace[i].h);
    if (d.find("upsample") != std::string::npos)
      up_sides.push_back(net.last_trace[i].h);
  }
  ASSERT_EQ(pool_sides.size(), 3u);
  ASSERT_EQ(up_sides.size(), 3u);
  // Encoder stage inputs are 64,32,16; decoder upsample outputs reverse them.
  EXPECT_EQ(pool_sides, (std::vector<std::int64_t>{32, 16, 8}));
  EXPECT_EQ(up_sides, (std::vector<std::int64_t>{16, 32, 64}));
}

TEST(Network, ParamViewsAreWellFormed) {
  Network net = build_network(tiny_config(), 3);
  std::set<std::string> names;
  for (const ParamView& p : net.params()) {
    EXPECT_TRUE(names.insert(p.name).second) << "duplicate " << p.name;
    ASSERT_NE(p.value, nullptr);
    std::int64_t prod = 1;
    for (auto d : p.dims) prod *= d;
    EXPECT_EQ(prod, p.count) << p.name;
    if (p.trainable) EXPECT_NE(p.grad, nullptr) << p.name;
    else EXPECT_EQ(p.grad, nullptr) << p.name;
  }
  EXPECT_TRUE(names.count("enc0.conv0.weight"));
  EXPECT_TRUE(names.count("enc0.bn0.running_mean"));
  EXPECT_TRUE(names.count("dec0.up.deconv.weight"));
  EXPECT_TRUE(names.count("dec0.up.proj.weight"));
  EXPECT_TRUE(names.count("cls.bias"));
}

TEST(Saliency, LogitRuleMatchesHandValues) {
  Tensor4 logits = Tensor4::zeros({1, 2, 1, 3});
  // softmax pairs: (0.2,0.8) -> 0.6; (0.7,0.3) -> clipped 0; equal -> 0.
  logits.at(0, 0, 0, 0) = 0.0;
  logits.at(0, 1, 0, 0) = std::log(4.0);
  logits.at(0, 0, 0, 1) = std::log(7.0 / 3.0);
  logits.at(0, 1, 0, 1) = 0.0;
  logits.at(0, 0, 0, 2) = 1.7;
  logits.at(0, 1, 0, 2) = 1.7;
  const SaliencyMap map = saliency_from_logits(logits);
  EXPECT_NEAR(map.values[0], 0.6, 1e-12);
  EXPECT_NEAR(map.values[1], 0.0, 1e-12);
  EXPECT_NEAR(map.values[2], 0.0, 1e-12);
}

TEST(Saliency, MapInRangeAndProbabilitiesSumToOne) {
  Network net = build_network(tiny_config(), 7);
  const Tensor4 x = random_input({1, 3, 16, 16}, 11);
  ForwardCtx ctx{Mode::eval, 0, 0};
  const Tensor4 logits = net.forward(x, ctx);
  const Tensor4 probs = softmax_channels(logits);
  for (std::int64_t r = 0; r < 16; ++r)
    for (std::int64_t c = 0; c < 16; ++c)
      EXPECT_NEAR(probs.at(0, 0, r, c) + probs.at(0, 1, r, c), 1.0, 1e-12);
  const SaliencyMap map = infer_saliency(net, x);
  for (double v : map.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Saliency, IndivisibleSideRejected) {
  Network net = build_network(tiny_config(), 7);
  const Tensor4 x = random_input({1, 3, 18, 18}, 11);
  EXPECT_THROW(infer_saliency(net, x), std::invalid_argument);
}

TEST(Network, EvalForwardIsDeterministic) {
  Network net = build_network(tiny_config(), 13);
  const Tensor4 x = random_input({1, 3, 16, 16}, 17);
  ForwardCtx ctx{Mode::eval, 0, 0};
  const Tensor4 a = net.forward(x, ctx);
  const Tensor4 b = net.forward(x, ctx);
  EXPECT_TRUE(a == b);
}

TEST(Network, TrainForwardReplaysUnderFixedStream) {
  Network net = build_network(tiny_config(), 13);
  const Tensor4 x = random_input({2, 3, 16, 16}, 17);
  ForwardCtx ctx{Mode::train, 23, 4};
  const Tensor4 a = net.forward(x, ctx);
  const Tensor4 b = net.forward(x, ctx);
  EXPECT_TRUE(a == b);
  ForwardCtx other{Mode::train, 23, 5};
  const Tensor4 c = net.forward(x, other);
  EXPECT_FALSE(a == c);  // fresh masks per iteration
}

namespace {

void full_backward_check(const NetworkConfig& cfg, std::int64_t batch) {
  Network net = build_network(cfg, 29);

  Tensor4 x = random_input({batch, 2, 8, 8}, 31);
  RngStream lr(37);
  Tensor4 labels = Tensor4::zeros({batch, 1, 8, 8});
  for (std::int64_t i = 0; i < labels.size(); ++i)
    labels.data()[i] = lr.next_bernoulli(0.5) ? 1.0 : 0.0;

  const ForwardCtx ctx{Mode::train, 41, 2};
  auto objective = [&]() {
    const Tensor4 logits = net.forward(x, ctx);
    return softmax_cross_entropy(logits, labels).ce.sum;
  };

  net.zero_grad();
  const Tensor4 logits = net.forward(x, ctx);
  const SoftmaxLossResult loss = softmax_cross_entropy(logits, labels);
  const Tensor4 grad_x = net.backward(loss.ce.grad_logits);

  const double h = 1e-5;
  auto check_buffer = [&](const std::string& name, double* value,
                          const double* analytic, std::int64_t count) {
    for (std::int64_t i = 0; i < count; ++i) {
      const double keep = value[i];
      value[i] = keep + h;
      const double f1 = objective();
      value[i] = keep - h;
      const double f2 = objective();
      value[i] = keep;
      const double fd = (f1 - f2) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
      EXPECT_LT(std::abs(fd - analytic[i]) / denom, 1e-4)
          << name << "[" << i << "] fd=" << fd << " got=" << analytic[i];
    }
  };

  for (const ParamView& p : net.params())
    if (p.trainable) check_buffer(p.name, p.value, p.grad, p.count);
  check_buffer("input", x.data(), grad_x.data(), x.size());
}

}  // namespace

TEST(Network, FullBackwardMatchesFiniteDifferences) {
  NetworkConfig cfg;
  cfg.input_side = 8;
  cfg.input_channels = 2;
  cfg.encoder = {{1, 4, true}};
  cfg.decoder = {{UpsampleMode::hybrid, 1, 4, true}};
  cfg.apply_flags();
  full_backward_check(cfg, 2);
}

TEST(Network, FullBackwardNaiveDeconvVariant) {
  NetworkConfig cfg;
  cfg.input_side = 8;
  cfg.input_channels = 2;
  cfg.encoder = {{1, 4, true}};
  cfg.decoder = {{UpsampleMode::deconv_naive, 1, 4, true}};
  cfg.use_dropout = false;
  cfg.use_rdropout = false;
  cfg.use_restricted_deconv = false;
  cfg.use_interp = false;
  cfg.apply_flags();
  full_backward_check(cfg, 1);
}

TEST(Network, NaiveDeconvVariantStillDoublesSides) {
  NetworkConfig cfg = NetworkConfig::toy_default();
  cfg.use_dropout = false;
  cfg.use_rdropout = false;
  cfg.use_restricted_deconv = false;
  cfg.use_interp = false;
  cfg.apply_flags();
  EXPECT_EQ(cfg.flag_mode(), UpsampleMode::deconv_naive);
  Network net = build_network(cfg, 2);
  const Tensor4 x = random_input({1, 3, 64, 64}, 5);
  ForwardCtx ctx{Mode::eval, 0, 0};
  const Tensor4 y = net.forward(x, ctx);
  EXPECT_EQ(y.shape().h, 64);
  EXPECT_EQ(y.shape().w, 64);
  std::vector<std::int64_t> up_sides;
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (net.layers[i]->describe().find("upsample") != std::string::npos)
      up_sides.push_back(net.last_trace[i].h);
  EXPECT_EQ(up_sides, (std::vector<std::int64_t>{16, 32, 64}));
}

TEST(Multiscale, SingleScaleMatchesInferBitwise) {
  Network net = build_network(tiny_config(), 43);
  const Tensor4 x = random_input({1, 3, 16, 16}, 47);
  const SaliencyMap direct = infer_saliency(net, x);
  const SaliencyMap single = multiscale_ensemble(net, x, {1.0});
  ASSERT_EQ(single.values.size(), direct.values.size());
  for (std::size_t i = 0; i < direct.values.size(); ++i)
    EXPECT_EQ(single.values[i], direct.values[i]);
  const SaliencyMap twice = multiscale_ensemble(net, x, {1.0, 1.0});
  for (std::size_t i = 0; i < direct.values.size(); ++i)
    EXPECT_EQ(twice.values[i], direct.values[i]);
}

TEST(Multiscale, SnappingAndRangeAndEmptyList) {
  EXPECT_EQ(snapped_side(64, 0.8, 8), 48);
  EXPECT_EQ(snapped_side(64, 1.2, 8), 80);
  EXPECT_EQ(snapped_side(16, 0.1, 8), 8);  // clamped to the minimum multiple

  Network net = build_network(tiny_config(32), 53);
  const Tensor4 x = random_input({1, 3, 32, 32}, 59);
  EXPECT_THROW(multiscale_ensemble(net, x, {}), std::invalid_argument);
  const SaliencyMap m = multiscale_ensemble(net, x, {0.75, 1.0, 1.25});
  ASSERT_EQ(std::int64_t(m.values.size()), 32 * 32);
  for (double v : m.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
