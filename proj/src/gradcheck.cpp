#include "wenet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "wenet/error.hpp"
#include "wenet/rng.hpp"

namespace wenet {

namespace {

double evaluate(const TapedFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Tensor> tracked;
  tracked.reserve(params.size());
  for (const Tensor& p : params) tracked.push_back(tape.track(p));
  const Tensor root = f(tape, tracked);
  return root.scalar();
}

}  // namespace

double gradient_check(const TapedFunction& f, const std::vector<Tensor>& params,
                      const GradCheckOptions& options) {
  if (options.eps <= 0.0) throw ArgumentError("gradient_check: eps must be positive");

  // Reverse-mode gradients at the base point.
  Tape tape;
  std::vector<Tensor> tracked;
  tracked.reserve(params.size());
  for (const Tensor& p : params) tracked.push_back(tape.track(p));
  const Tensor root = f(tape, tracked);
  if (root.numel() != 1) throw ArgumentError("gradient_check: f must produce a scalar");
  tape.backward(root);
  std::vector<Tensor> ad_grads;
  ad_grads.reserve(tracked.size());
  for (const Tensor& t : tracked) ad_grads.push_back(tape.grad(t));

  // Determinism gate: a second evaluation must reproduce the value bit-for-bit.
  const double base = root.values[0];
  const double replay = evaluate(f, params);
  if (std::memcmp(&base, &replay, sizeof(double)) != 0) {
    throw ConsistencyError("gradient_check: f is not deterministic (re-evaluation differs)");
  }

  Rng rng(options.seed);
  double max_rel = 0.0;
  std::vector<Tensor> work = params;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::size_t n = params[pi].numel();
    std::vector<std::size_t> coords;
    if (n <= options.coords_per_tensor) {
      coords.resize(n);
      std::iota(coords.begin(), coords.end(), 0);
    } else {
      // Sample without replacement.
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), 0);
      for (std::size_t i = 0; i < options.coords_per_tensor; ++i) {
        std::swap(all[i], all[i + rng.below(n - i)]);
      }
      coords.assign(all.begin(), all.begin() + options.coords_per_tensor);
    }

    for (std::size_t c : coords) {
      const double saved = work[pi].values[c];
      work[pi].values[c] = saved + options.eps;
      const double plus = evaluate(f, work);
      work[pi].values[c] = saved - options.eps;
      const double minus = evaluate(f, work);
      work[pi].values[c] = saved;
      const double fd = (plus - minus) / (2.0 * options.eps);
      const double ad = ad_grads[pi].values[c];
      const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace wenet
