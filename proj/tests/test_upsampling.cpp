#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "support/gradcheck.hpp"
#include "ucf/upsampling.hpp"

using namespace ucf;

namespace {
double dot(const Tensor4& a, const Tensor4& b) {
  double s = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}
}  // namespace

TEST(ArithReport, KnownCases) {
  DeconvArith a = arith_report(3, 3, 2, 1);
  EXPECT_EQ(a.stretched_side, 5);
  EXPECT_EQ(a.out_side, 5);
  EXPECT_TRUE(a.overlap);

  DeconvArith b = arith_report(4, 4, 2, 0);
  EXPECT_EQ(b.out_side, 10);
  EXPECT_FALSE(b.overlap);

  DeconvArith c = arith_report(6, 5, 1, 2);
  EXPECT_EQ(c.stretched_side, 6);
  EXPECT_EQ(c.out_side, 6 + 5 - 1 - 4);

  DeconvArith d = arith_report(3, 3, 2, 1, 1);
  EXPECT_EQ(d.out_side, 6);

  DeconvArith e = arith_report(5, 2, 2, 0);
  EXPECT_FALSE(e.overlap);
}

TEST(ArithReport, Rejections) {
  EXPECT_THROW(arith_report(1, 1, 1, 1), std::invalid_argument);  // o = 0
  EXPECT_THROW(arith_report(3, 3, 2, 1, 2), std::invalid_argument);
  EXPECT_THROW(arith_report(0, 3, 2, 1), std::invalid_argument);
  EXPECT_THROW(arith_report(3, 3, 2, -1), std::invalid_argument);
}

TEST(ArithReport, RoundTripsThroughConvFormula) {
  RngStream rng(67);
  for (int trial = 0; trial < 300; ++trial) {
    const std::int64_t k = 1 + std::int64_t(rng.next_index(6));
    const std::int64_t s = 1 + std::int64_t(rng.next_index(4));
    const std::int64_t pad = std::int64_t(rng.next_index(k));
    const std::int64_t n = 1 + std::int64_t(rng.next_index(10));
    DeconvArith a;
    try {
      a = arith_report(n, k, s, pad);
    } catch (const std::invalid_argument&) {
      continue;
    }
    EXPECT_EQ(conv_out_side(a.out_side, k, s, pad), n);
  }
}

TEST(UpsampleSpec, PadResolution) {
  UpsampleSpec s;
  s.in_channels = s.out_channels = 1;
  s.kernel = 4;
  s.stride = 2;
  EXPECT_EQ(s.resolved_pad(), 1);
  s.kernel = 2;
  EXPECT_EQ(s.resolved_pad(), 0);
  s.kernel = 3;
  s.mode = UpsampleMode::deconv_naive;
  EXPECT_EQ(s.resolved_pad(), 0);  // odd k-s difference falls back to 0
  s.pad = 2;
  EXPECT_EQ(s.resolved_pad(), 2);
}

TEST(UpsampleSpec, RestrictedFilterRule) {
  UpsampleSpec s;
  s.in_channels = s.out_channels = 1;
  s.kernel = 3;
  s.stride = 2;
  s.mode = UpsampleMode::deconv_restricted;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.mode = UpsampleMode::hybrid;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.mode = UpsampleMode::deconv_naive;
  EXPECT_NO_THROW(s.validate());
  s.mode = UpsampleMode::deconv_restricted;
  s.kernel = 6;
  EXPECT_NO_THROW(s.validate());
}

TEST(UpsampleSpec, OutSides) {
  UpsampleSpec s;
  s.in_channels = s.out_channels = 1;
  s.kernel = 4;
  s.stride = 2;
  s.mode = UpsampleMode::deconv_restricted;
  EXPECT_EQ(s.out_side(7), 14);  // the doubling convention
  s.mode = UpsampleMode::interp_conv;
  EXPECT_EQ(s.out_side(7), 14);
  s.mode = UpsampleMode::hybrid;
  EXPECT_EQ(s.out_side(7), 14);
}

TEST(Upsampler, RestrictedIsExactlyPlainDeconv) {
  RngStream rng(71);
  UpsampleSpec spec;
  spec.mode = UpsampleMode::deconv_restricted;
  spec.in_channels = 3;
  spec.out_channels = 2;
  spec.kernel = 4;
  spec.stride = 2;
  UpsamplerParams p = init_upsampler(spec, rng);
  Tensor4 x = Tensor4::uniform(Shape4{1, 3, 5, 5}, -1, 1, rng);
  Tensor4 a = upsampler_forward(x, spec, p);
  Tensor4 b = deconv2d_forward(x, p.deconv, spec.deconv_spec());
  EXPECT_TRUE(a == b);
}

TEST(Upsampler, HybridZeroInputZeroBiasIsZero) {
  RngStream rng(73);
  UpsampleSpec spec;
  spec.mode = UpsampleMode::hybrid;
  spec.in_channels = 2;
  spec.out_channels = 2;
  spec.kernel = 4;
  spec.stride = 2;
  UpsamplerParams p = init_upsampler(spec, rng);
  Tensor4 x = Tensor4::zeros(Shape4{1, 2, 4, 4});
  Tensor4 y = upsampler_forward(x, spec, p);
  for (std::int64_t i = 0; i < y.size(); ++i) EXPECT_EQ(y.data()[i], 0.0);
}

TEST(Upsampler, InterpConvIdentityPreservesConstants) {
  UpsampleSpec spec;
  spec.mode = UpsampleMode::interp_conv;
  spec.in_channels = 1;
  spec.out_channels = 1;
  spec.kernel = 4;
  spec.stride = 2;
  UpsamplerParams p;
  p.proj.weight = Tensor4::full(Shape4{1, 1, 1, 1}, 1.0);
  p.proj.bias = {0.0};
  Tensor4 x = Tensor4::full(Shape4{1, 1, 3, 3}, 2.75);
  Tensor4 y = upsampler_forward(x, spec, p);
  ASSERT_TRUE((y.shape() == Shape4{1, 1, 6, 6}));
  for (std::int64_t i = 0; i < y.size(); ++i)
    EXPECT_NEAR(y.data()[i], 2.75, 1e-12);
}

namespace {

void run_upsampler_gradcheck(UpsampleMode mode) {
  RngStream rng(79 + int(mode));
  UpsampleSpec spec;
  spec.mode = mode;
  spec.in_channels = 2;
  spec.out_channels = 2;
  spec.kernel = 4;
  spec.stride = 2;
  UpsamplerParams p = init_upsampler(spec, rng);
  for (double& b : p.deconv.bias) b = rng.next_uniform(-0.2, 0.2);
  for (double& b : p.proj.bias) b = rng.next_uniform(-0.2, 0.2);
  Tensor4 x = Tensor4::uniform(Shape4{1, 2, 3, 3}, -1, 1, rng);
  Tensor4 probe =
      Tensor4::uniform(Shape4{1, 2, spec.out_side(3), spec.out_side(3)}, -1, 1,
                       rng);
  auto objective = [&]() { return dot(upsampler_forward(x, spec, p), probe); };
  UpsamplerGrads g = upsampler_backward(x, spec, p, probe);

  auto rx = gradcheck::check(x.storage(), objective, g.grad_x.storage());
  EXPECT_LT(rx.max_rel_err, 1e-4) << "grad_x, mode " << int(mode);
  if (spec.has_deconv()) {
    auto rw =
        gradcheck::check(p.deconv.weight.storage(), objective,
                         g.deconv.grad_w.storage());
    EXPECT_LT(rw.max_rel_err, 1e-4) << "deconv w, mode " << int(mode);
    auto rb = gradcheck::check(p.deconv.bias, objective, g.deconv.grad_b);
    EXPECT_LT(rb.max_rel_err, 1e-4) << "deconv b, mode " << int(mode);
  }
  if (spec.has_interp()) {
    auto rw = gradcheck::check(p.proj.weight.storage(), objective,
                               g.proj.grad_w.storage());
    EXPECT_LT(rw.max_rel_err, 1e-4) << "proj w, mode " << int(mode);
    auto rb = gradcheck::check(p.proj.bias, objective, g.proj.grad_b);
    EXPECT_LT(rb.max_rel_err, 1e-4) << "proj b, mode " << int(mode);
  }
}

}  // namespace

TEST(Upsampler, GradcheckHybrid) {
  run_upsampler_gradcheck(UpsampleMode::hybrid);
}

TEST(Upsampler, GradcheckInterpConv) {
  run_upsampler_gradcheck(UpsampleMode::interp_conv);
}

TEST(Upsampler, GradcheckNaiveDeconv) {
  run_upsampler_gradcheck(UpsampleMode::deconv_naive);
}

TEST(CountMap, OverlappingKernelAlternates) {
  Tensor4 m = contribution_count_map(3, 2, 12);
  // 1D interior counts alternate 2,1 from position k-1 on
  for (std::int64_t pos = 2; pos < 12; ++pos) {
    const double want1d = (pos % 2 == 0) ? 2.0 : 1.0;
    EXPECT_EQ(m.at(0, 0, pos, 2), want1d * 2.0) << pos;  // row phase x col 2
  }
  EXPECT_EQ(m.at(0, 0, 2, 2), 4.0);
  EXPECT_EQ(m.at(0, 0, 2, 3), 2.0);
  EXPECT_EQ(m.at(0, 0, 3, 3), 1.0);
}

TEST(CountMap, RestrictedKernelIsUniform) {
  Tensor4 m = contribution_count_map(4, 2, 16);
  for (std::int64_t r = 3; r < 16; ++r)
    for (std::int64_t c = 3; c < 16; ++c) EXPECT_EQ(m.at(0, 0, r, c), 4.0);
}

TEST(CountMap, TileKernelCoversEverythingOnce) {
  Tensor4 m = contribution_count_map(3, 3, 9);
  for (std::int64_t i = 0; i < m.size(); ++i) EXPECT_EQ(m.data()[i], 1.0);
}

TEST(CountMap, UniformExactlyWhenStrideDividesKernel) {
  for (std::int64_t k = 1; k <= 8; ++k) {
    for (std::int64_t s = 1; s <= 4; ++s) {
      const std::int64_t side = 4 * k + 8;
      Tensor4 m = contribution_count_map(k, s, side);
      bool uniform = true;
      const double first = m.at(0, 0, k - 1, k - 1);
      for (std::int64_t r = k - 1; r < side && uniform; ++r)
        for (std::int64_t c = k - 1; c < side; ++c)
          if (m.at(0, 0, r, c) != first) {
            uniform = false;
            break;
          }
      EXPECT_EQ(uniform, k % s == 0) << "k=" << k << " s=" << s;
      if (k % s == 0)
        EXPECT_EQ(first, double((k / s) * (k / s))) << "k=" << k << " s=" << s;
    }
  }
}

TEST(Checkerboard, ConstantMapScoresZero) {
  Tensor4 y = Tensor4::full(Shape4{1, 1, 12, 12}, 3.0);
  EXPECT_EQ(checkerboard_score(y, 2, 2), 0.0);
}

TEST(Checkerboard, BilinearUpsampledConstantScoresZero) {
  Tensor4 x = Tensor4::full(Shape4{1, 1, 5, 5}, 1.25);
  Tensor4 y = interpolate(x, 10, 10, InterpMode::bilinear);
  EXPECT_NEAR(checkerboard_score(y, 2, 2), 0.0, 1e-18);
}

TEST(Checkerboard, NaiveDeconvOnConstantInputShowsArtifact) {
  UpsampleSpec spec;
  spec.mode = UpsampleMode::deconv_naive;
  spec.in_channels = 1;
  spec.out_channels = 1;
  spec.kernel = 3;
  spec.stride = 2;
  spec.pad = 0;
  UpsamplerParams p;
  p.deconv.weight = Tensor4::full(Shape4{1, 1, 3, 3}, 1.0);
  p.deconv.bias = {0.0};
  Tensor4 x = Tensor4::full(Shape4{1, 1, 10, 10}, 1.0);
  Tensor4 y = upsampler_forward(x, spec, p);
  EXPECT_GT(checkerboard_score(y, 2, 3), 0.1);
}

TEST(Checkerboard, RestrictedDeconvOnConstantInputIsClean) {
  UpsampleSpec spec;
  spec.mode = UpsampleMode::deconv_restricted;
  spec.in_channels = 1;
  spec.out_channels = 1;
  spec.kernel = 4;
  spec.stride = 2;
  UpsamplerParams p;
  p.deconv.weight = Tensor4::full(Shape4{1, 1, 4, 4}, 1.0);
  p.deconv.bias = {0.0};
  Tensor4 x = Tensor4::full(Shape4{1, 1, 10, 10}, 1.0);
  Tensor4 y = upsampler_forward(x, spec, p);
  EXPECT_NEAR(checkerboard_score(y, 2, 4), 0.0, 1e-15);
}

TEST(Checkerboard, ShiftAndPositiveScaleInvariant) {
  RngStream rng(83);
  Tensor4 y = Tensor4::uniform(Shape4{1, 1, 14, 14}, 0, 1, rng);
  const double base = checkerboard_score(y, 2, 3);
  Tensor4 shifted = y;
  for (std::int64_t i = 0; i < shifted.size(); ++i) shifted.data()[i] += 11.0;
  EXPECT_NEAR(checkerboard_score(shifted, 2, 3), base, 1e-6 * (base + 1));
  EXPECT_NEAR(checkerboard_score(scale(y, 7.0), 2, 3), base,
              1e-6 * (base + 1));
}

TEST(Checkerboard, RejectsTinyInterior) {
  Tensor4 y = Tensor4::zeros(Shape4{1, 1, 8, 8});
  EXPECT_THROW(checkerboard_score(y, 4, 3), std::invalid_argument);
  EXPECT_THROW(checkerboard_score(y, 2, -1), std::invalid_argument);
}

namespace {

UpsampleSpec sweep_spec(UpsampleMode mode, std::int64_t k, std::int64_t s) {
  UpsampleSpec spec;
  spec.mode = mode;
  spec.in_channels = 2;
  spec.out_channels = 1;
  spec.kernel = k;
  spec.stride = s;
  return spec;
}

}  // namespace

TEST(Sweep, DeterministicAcrossRuns) {
  auto specs = {sweep_spec(UpsampleMode::deconv_naive, 3, 2),
                sweep_spec(UpsampleMode::hybrid, 4, 2)};
  auto a = upsampler_sweep(specs, 10, 5, 99);
  auto b = upsampler_sweep(specs, 10, 5, 99);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].score, b[i].score);
    EXPECT_EQ(a[i].trial, b[i].trial);
  }
}

TEST(Sweep, DirectionalOrderings) {
  std::vector<UpsampleSpec> specs{
      sweep_spec(UpsampleMode::deconv_naive, 3, 2),
      sweep_spec(UpsampleMode::deconv_restricted, 4, 2),
      sweep_spec(UpsampleMode::hybrid, 4, 2),
      sweep_spec(UpsampleMode::interp_conv, 4, 2),
  };
  auto rows = upsampler_sweep(specs, 10, 100, 424242);
  const double naive = sweep_mean_score(rows, UpsampleMode::deconv_naive);
  const double restricted =
      sweep_mean_score(rows, UpsampleMode::deconv_restricted);
  const double hybrid = sweep_mean_score(rows, UpsampleMode::hybrid);
  const double interp = sweep_mean_score(rows, UpsampleMode::interp_conv);
  EXPECT_GT(naive, restricted);
  EXPECT_LE(hybrid, restricted);
  EXPECT_LT(interp, naive);
}

TEST(Sweep, WritesCsv) {
  auto rows = upsampler_sweep({sweep_spec(UpsampleMode::deconv_naive, 3, 2)},
                              10, 3, 7);
  const std::string path = std::filesystem::temp_directory_path() /
                           "ucf_sweep_test.csv";
  write_sweep_csv(path, rows);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "mode,k,s,trial,score");
  int n = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.rfind("deconv_naive,3,2,", 0), 0u);
    ++n;
  }
  EXPECT_EQ(n, 3);
  std::filesystem::remove(path);
}

TEST(Sweep, RejectsInvalidGeometry) {
  EXPECT_THROW(
      upsampler_sweep({sweep_spec(UpsampleMode::hybrid, 3, 2)}, 10, 2, 1),
      std::invalid_argument);
  EXPECT_THROW(
      upsampler_sweep({sweep_spec(UpsampleMode::deconv_naive, 8, 2)}, 2, 2, 1),
      std::invalid_argument);
}
