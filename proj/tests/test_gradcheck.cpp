#include <doctest.h>

#include <vector>

#include "wenet/error.hpp"
#include "wenet/gradcheck.hpp"
#include "wenet/model.hpp"
#include "wenet/rng.hpp"
#include "wenet/tensor.hpp"

using namespace wenet;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -0.5, double hi = 0.5) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("linear function checks out near rounding error") {
  Rng rng(1);
  const Tensor w = random_tensor({4, 3}, rng);
  const Tensor x = random_tensor({3, 2}, rng);
  const double err = gradient_check(
      [&x](Tape& tape, const std::vector<Tensor>& params) { return tape.sum(tape.matmul(params[0], x)); },
      {w});
  CHECK(err <= 1e-7);
}

TEST_CASE("every elementwise primitive passes the finite-difference oracle") {
  Rng rng(2);
  const Tensor x = random_tensor({2, 3}, rng);
  const Tensor y = random_tensor({2, 3}, rng);

  auto check = [&](const TapedFunction& f, const std::vector<Tensor>& params) {
    CHECK(gradient_check(f, params) <= 1e-6);
  };
  check([](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.sigmoid(p[0])); }, {x});
  check([](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.tanh(p[0])); }, {x});
  check([](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.mul(p[0], p[1])); }, {x, y});
  check([](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.sub(p[0], p[1])); }, {x, y});
  check([](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.scale(p[0], -1.7)); }, {x});
  check([](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.sub_from(1.0, p[0])); }, {x});
  check([](Tape& t, const std::vector<Tensor>& p) {
    // Weighted sum; a bare sum of softmax outputs is constant.
    const Tensor w({6}, {0.3, -1.2, 0.8, 2.0, -0.4, 1.1});
    return t.sum(t.mul(t.softmax(t.reshape(p[0], {6})), w));
  }, {x});
  check([](Tape& t, const std::vector<Tensor>& p) {
    // Row-broadcast add.
    return t.sum(t.sigmoid(t.add(p[0], p[1])));
  }, {x, random_tensor({1, 3}, rng)});
}

TEST_CASE("cross entropy and lookup gradients pass the oracle") {
  Rng rng(3);
  const Tensor logits = random_tensor({3, 5}, rng, -1.0, 1.0);
  const std::vector<int> targets = {2, 0, 4};
  CHECK(gradient_check(
            [&targets](Tape& t, const std::vector<Tensor>& p) {
              return t.cross_entropy(p[0], targets, -1);
            },
            {logits}) <= 1e-6);

  const Tensor table = random_tensor({6, 4}, rng);
  const std::vector<int> ids = {1, 5, 1};
  CHECK(gradient_check(
            [&ids](Tape& t, const std::vector<Tensor>& p) {
              return t.sum(t.tanh(t.lookup(p[0], ids)));
            },
            {table}) <= 1e-6);
}

TEST_CASE("one GRU cell step passes at 1e-4") {
  Rng rng(4);
  GruParams cell;
  cell.w_update = random_tensor({3, 2}, rng);
  cell.u_update = random_tensor({2, 2}, rng);
  cell.b_update = random_tensor({1, 2}, rng);
  cell.w_reset = random_tensor({3, 2}, rng);
  cell.u_reset = random_tensor({2, 2}, rng);
  cell.b_reset = random_tensor({1, 2}, rng);
  cell.w_cand = random_tensor({3, 2}, rng);
  cell.u_cand = random_tensor({2, 2}, rng);
  cell.b_cand = random_tensor({1, 2}, rng);
  const Tensor x = random_tensor({1, 3}, rng);
  const Tensor h = random_tensor({1, 2}, rng);

  const double err = gradient_check(
      [&x, &h](Tape& tape, const std::vector<Tensor>& p) {
        GruParams cp;
        cp.w_update = p[0]; cp.u_update = p[1]; cp.b_update = p[2];
        cp.w_reset = p[3]; cp.u_reset = p[4]; cp.b_reset = p[5];
        cp.w_cand = p[6]; cp.u_cand = p[7]; cp.b_cand = p[8];
        return tape.sum(gru_cell_step(tape, x, h, cp));
      },
      {cell.w_update, cell.u_update, cell.b_update, cell.w_reset, cell.u_reset, cell.b_reset, cell.w_cand,
       cell.u_cand, cell.b_cand});
  CHECK(err <= 1e-4);
}

TEST_CASE("a non-deterministic function is rejected") {
  const Tensor x = zeros({2, 2});
  int calls = 0;
  CHECK_THROWS_AS(gradient_check(
                      [&calls](Tape& tape, const std::vector<Tensor>& p) {
                        Tensor noise = full({2, 2}, 0.001 * static_cast<double>(calls++));
                        return tape.sum(tape.add(p[0], noise));
                      },
                      {x}),
                  ConsistencyError);
}

TEST_CASE("sampling keeps large tensors affordable") {
  Rng rng(6);
  const Tensor big = random_tensor({30, 30}, rng);  // 900 coords, sampled at 50
  GradCheckOptions opts;
  opts.coords_per_tensor = 50;
  const double err = gradient_check(
      [](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.tanh(p[0])); }, {big}, opts);
  CHECK(err <= 1e-6);
}
