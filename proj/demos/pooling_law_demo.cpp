// Prints the pooled-activation law for a masked max-pooling window three
// ways: closed form, exhaustive enumeration, and a Monte Carlo estimate.
#include <cstdio>
#include <vector>

#include "ucf/rdropout.hpp"
#include "ucf/rng.hpp"

using namespace ucf;

int main() {
  const std::vector<double> window{1.0, 2.0, 3.0, 4.0};
  const double p = 0.5;
  const std::int64_t n = std::int64_t(window.size());
  const std::int64_t draws = 200000;

  const std::vector<double> law = pooled_activation_distribution(n, p);
  const std::vector<double> brute = enumerate_pooled_distribution(n, p);

  std::vector<double> mc(std::size_t(n) + 1, 0.0);
  RngStream rng(7);
  for (std::int64_t i = 0; i < draws; ++i) {
    const double v = sample_pooled_window(window, p, rng);
    // window holds 1..n, so the pooled value doubles as its own index
    mc[std::size_t(v)] += 1.0 / double(draws);
  }

  std::printf("masked max pooling over window {1,2,3,4}, keep rate %.2f\n", p);
  std::printf("%-10s %12s %12s %12s\n", "outcome", "closed form",
              "enumerated", "sampled");
  for (std::size_t i = 0; i < law.size(); ++i) {
    const double outcome = i == 0 ? 0.0 : window[i - 1];
    std::printf("%-10.1f %12.6f %12.6f %12.6f\n", outcome, law[i], brute[i],
                mc[i]);
  }
  return 0;
}
