#include <gtest/gtest.h>

#include <cstdlib>
#include <numeric>
#include <vector>

#include "ucf/data.hpp"
#include "ucf/parallel.hpp"
#include "ucf/upsampling.hpp"

namespace {

struct ThreadsGuard {
  explicit ThreadsGuard(const char* v) {
    const char* old = std::getenv("UCF_THREADS");
    had_ = old != nullptr;
    if (had_) saved_ = old;
    if (v)
      setenv("UCF_THREADS", v, 1);
    else
      unsetenv("UCF_THREADS");
  }
  ~ThreadsGuard() {
    if (had_)
      setenv("UCF_THREADS", saved_.c_str(), 1);
    else
      unsetenv("UCF_THREADS");
  }
  bool had_ = false;
  std::string saved_;
};

TEST(Parallel, BudgetReadsEnv) {
  ThreadsGuard g("3");
  EXPECT_EQ(ucf::thread_budget(), 3);
}

TEST(Parallel, ZeroAndUnsetMeanAuto) {
  {
    ThreadsGuard g("0");
    EXPECT_GE(ucf::thread_budget(), 1);
  }
  {
    ThreadsGuard g(nullptr);
    EXPECT_GE(ucf::thread_budget(), 1);
  }
}

TEST(Parallel, InvalidBudgetRejected) {
  ThreadsGuard g("two");
  EXPECT_THROW(ucf::thread_budget(), std::runtime_error);
  ThreadsGuard g2("-1");
  EXPECT_THROW(ucf::thread_budget(), std::runtime_error);
}

TEST(Parallel, ForCoversEveryIndexOnce) {
  ThreadsGuard g("4");
  std::vector<int> hits(1000, 0);
  ucf::parallel_for(1000, [&](std::int64_t i) { hits[std::size_t(i)] += 1; });
  EXPECT_EQ(std::accumulate(hits.begin(), hits.end(), 0), 1000);
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Parallel, SynthIdenticalAcrossBudgets) {
  ucf::SynthSpec spec;
  spec.count = 12;
  spec.side = 24;
  spec.seed = 99;
  std::vector<ucf::SamplePair> serial, threaded;
  {
    ThreadsGuard g("1");
    serial = ucf::generate(spec);
  }
  {
    ThreadsGuard g("4");
    threaded = ucf::generate(spec);
  }
  ASSERT_EQ(serial.size(), threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_TRUE(serial[i].image == threaded[i].image);
    EXPECT_TRUE(serial[i].gt == threaded[i].gt);
  }
}

TEST(Parallel, SweepIdenticalAcrossBudgets) {
  std::vector<ucf::UpsampleSpec> specs;
  ucf::UpsampleSpec naive;
  naive.mode = ucf::UpsampleMode::deconv_naive;
  naive.kernel = 3;
  naive.stride = 2;
  naive.in_channels = 2;
  naive.out_channels = 2;
  specs.push_back(naive);
  std::vector<ucf::SweepRow> serial, threaded;
  {
    ThreadsGuard g("1");
    serial = ucf::upsampler_sweep(specs, 10, 6, 5);
  }
  {
    ThreadsGuard g("4");
    threaded = ucf::upsampler_sweep(specs, 10, 6, 5);
  }
  ASSERT_EQ(serial.size(), threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].trial, threaded[i].trial);
    EXPECT_EQ(serial[i].score, threaded[i].score);
  }
}

}  // namespace
