#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "odgcnn/geometry.hpp"
#include "odgcnn/rng.hpp"
#include "odgcnn/tensor.hpp"

// Oracle suites: independent reference computations the implementation is
// checked against. Shared by the `verify` subcommand and the tests.
namespace odgcnn::verify {

struct GradCheck {
  double max_error = 0;   // max over entries of |analytic - numeric| / max(1, |analytic|, |numeric|)
  std::size_t entries = 0;
  std::size_t skipped = 0;  // entries straddling a kink (one-sided slopes disagree)
  std::string worst;        // "<input>[<flat index>]"
};

// Tape gradients of the scalar build() against central differences with step
// h. build() must read the current values of the inputs, which must require
// gradients. max_per_input = 0 checks every entry, otherwise a seeded sample.
GradCheck gradient_check(const std::function<Tensor()>& build, const std::vector<std::pair<std::string, Tensor>>& inputs,
                         double h = 1e-5, std::size_t max_per_input = 0, std::uint64_t seed = 0);

// Footprint IoU by uniform sampling over the joint bounding rectangle.
double monte_carlo_iou(const RotatedBoxBEV& a, const RotatedBoxBEV& b, std::size_t samples, Rng& rng);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

CheckResult check_hungarian(std::uint64_t seed, std::size_t trials_per_size = 500, std::size_t min_size = 2,
                            std::size_t max_size = 7);
// Primitive ops (tolerance 1e-6) and composed losses (tolerance 1e-4).
CheckResult check_gradients(std::uint64_t seed);
CheckResult check_loss_invariance(std::uint64_t seed, std::size_t trials = 200);
CheckResult check_iou(std::uint64_t seed, std::size_t pairs = 100, std::size_t samples = 1'000'000, double tolerance = 0.01);
CheckResult check_roundtrips(std::uint64_t seed, std::size_t instances = 50);

std::vector<CheckResult> run_all(std::uint64_t seed);

}  // namespace odgcnn::verify
