#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "wenet/tensor.hpp"

namespace wenet {

// Builds a scalar loss on the given tape from parameters already tracked on
// it, in the same order they were supplied to gradient_check.
using TapedFunction = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Coordinates checked per tensor; tensors at or below this size are
  // checked exhaustively, larger ones on a random sample.
  std::size_t coords_per_tensor = 50;
  std::uint64_t seed = 0x5eedc0de;
};

// Compares reverse-mode gradients of f against central finite differences
// and returns the maximum relative error
//   |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
// Throws ConsistencyError if two evaluations of f at the same point differ.
double gradient_check(const TapedFunction& f, const std::vector<Tensor>& params,
                      const GradCheckOptions& options = {});

}  // namespace wenet
