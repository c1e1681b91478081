/* Copyright 2026 The AVFG Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "avfg/rng.hpp"
#include "avfg/tensor.hpp"
#include "support/finite_diff.hpp"

using avfg::Rng;
using avfg::Shape;
using avfg::ShapeError;
using avfg::Tape;
using avfg::Tensor;
using avfg_test::fd_max_rel_err;
using avfg_test::kFdTol;
using avfg_test::random_tensor;

TEST_CASE("elementwise multiply matches the definition") {
  auto a = Tensor<double>::from({2}, {1, 2});
  auto b = Tensor<double>::from({2}, {3, 4});
  auto c = avfg::multiply(a, b, static_cast<Tape<double>*>(nullptr));
  CHECK(c[0] == 3.0);
  CHECK(c[1] == 8.0);
}

TEST_CASE("multiply by ones is identity") {
  Rng rng(7);
  auto m = random_tensor({3, 4}, rng);
  auto ones = Tensor<double>::full({3, 4}, 1.0);
  auto out = avfg::multiply(m, ones);
  for (std::size_t i = 0; i < m.numel(); ++i) CHECK(out[i] == m[i]);
}

TEST_CASE("elementwise shape mismatch names both shapes") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({3, 2});
  try {
    avfg::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(3,2)") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(a*b) w.r.t. a equals b") {
  Rng rng(11);
  auto a = random_tensor({2, 3}, rng);
  auto b = random_tensor({2, 3}, rng);
  a.set_requires_grad(true);
  Tape<double> tape;
  auto loss = avfg::reduce_sum(avfg::multiply(a, b, &tape), &tape);
  tape.backward(loss);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.grad()[i] == b[i]);

  // and the same by central finite differences
  auto a2 = random_tensor({2, 3}, rng);
  auto b2 = random_tensor({2, 3}, rng);
  a2.set_requires_grad(true);
  const double err = fd_max_rel_err({&a2}, [&](Tape<double>* t) {
    return avfg::reduce_sum(avfg::multiply(a2, b2, t), t);
  });
  CHECK(err < kFdTol);
}

TEST_CASE("all four elementwise ops pass finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto a = random_tensor({2, 3}, rng, 0.5, 2.0);  // keep divide well away from 0
    auto b = random_tensor({2, 3}, rng, 0.5, 2.0);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    for (auto kind : {avfg::EwOp::add, avfg::EwOp::subtract, avfg::EwOp::multiply,
                      avfg::EwOp::divide}) {
      const double err = fd_max_rel_err({&a, &b}, [&](Tape<double>* t) {
        return avfg::reduce_sum(avfg::elementwise(kind, a, b, t), t);
      });
      CHECK(err < kFdTol);
    }
  }
}

TEST_CASE("dot product basics") {
  auto e1 = Tensor<double>::from({3}, {1, 0, 0});
  auto v = Tensor<double>::from({3}, {5, 6, 7});
  CHECK(avfg::matvec_dot(e1, v).item() == 5.0);

  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    auto x = random_tensor({8}, rng);
    CHECK(avfg::matvec_dot(x, x).item() >= 0.0);
  }

  auto u = Tensor<double>::zeros({3});
  auto w = Tensor<double>::zeros({4});
  CHECK_THROWS_AS(avfg::matvec_dot(u, w), ShapeError);
}

TEST_CASE("dot gradient matches finite differences tightly") {
  Rng rng(17);
  auto u = random_tensor({6}, rng);
  auto v = random_tensor({6}, rng);
  u.set_requires_grad(true);
  v.set_requires_grad(true);
  Tape<double> tape;
  auto out = avfg::matvec_dot(u, v, &tape);
  tape.backward(out);
  // d(u.v)/du = v exactly; finite differences of a bilinear map are exact up
  // to roundoff, so demand 1e-6 here.
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(u.grad()[i] == v[i]);
    CHECK(v.grad()[i] == u[i]);
  }
  const double err = fd_max_rel_err({&u, &v}, [&](Tape<double>* t) {
    return avfg::matvec_dot(u, v, t);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("backward of sum gives ones; backward of sum of squares gives 2x") {
  auto x = Tensor<double>::from({3}, {1.5, -2.0, 0.25});
  x.set_requires_grad(true);
  {
    Tape<double> tape;
    auto loss = avfg::reduce_sum(x, &tape);
    tape.backward(loss);
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 1.0);
  }
  x.zero_grad();
  {
    Tape<double> tape;
    auto loss = avfg::reduce_sum(avfg::multiply(x, x, &tape), &tape);
    tape.backward(loss);
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0 * x[i]);
  }
}

TEST_CASE("backward rejects non-scalar and detached roots") {
  auto x = Tensor<double>::from({2}, {1, 2});
  x.set_requires_grad(true);
  Tape<double> tape;
  auto y = avfg::multiply(x, x, &tape);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);

  auto detached = Tensor<double>::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(detached), std::invalid_argument);

  // scalar produced without a tape is detached as well
  auto z = avfg::reduce_sum(x);
  CHECK_THROWS_AS(tape.backward(z), std::invalid_argument);
}

TEST_CASE("gradients accumulate across backward calls and reset on zero_grad") {
  auto x = Tensor<double>::from({2}, {3.0, -1.0});
  x.set_requires_grad(true);
  Tape<double> tape;
  auto loss = avfg::reduce_sum(avfg::multiply(x, x, &tape), &tape);
  tape.backward(loss);
  std::vector<double> first(x.grad(), x.grad() + 2);
  tape.backward(loss);
  for (std::size_t i = 0; i < 2; ++i) CHECK(x.grad()[i] == 2.0 * first[i]);
  x.zero_grad();
  tape.backward(loss);
  for (std::size_t i = 0; i < 2; ++i) CHECK(x.grad()[i] == first[i]);
}

TEST_CASE("backward is deterministic for identical tapes and seeds") {
  auto run = [] {
    Rng rng(99);
    auto a = random_tensor({4, 5}, rng);
    auto b = random_tensor({4, 5}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Tape<double> tape;
    auto prod = avfg::multiply(a, b, &tape);
    auto loss = avfg::reduce_mean(avfg::add(prod, a, &tape), &tape);
    tape.backward(loss);
    std::vector<double> out(a.grad(), a.grad() + a.numel());
    out.insert(out.end(), b.grad(), b.grad() + b.numel());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("flatten of (128,15) has length 1920") {
  auto f = Tensor<double>::zeros({128, 15});
  auto flat = avfg::flatten(f);
  REQUIRE(flat.rank() == 1);
  CHECK(flat.numel() == 1920);
}

TEST_CASE("reshape then inverse reshape is the identity") {
  Rng rng(5);
  auto a = random_tensor({3, 4, 2}, rng);
  auto b = avfg::reshape(a, {6, 4});
  auto c = avfg::reshape(b, {3, 4, 2});
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(c[i] == a[i]);
  CHECK_THROWS_AS(avfg::reshape(a, Shape{5, 5}), ShapeError);
}

TEST_CASE("mean-reduce gradient matches finite differences") {
  Rng rng(23);
  auto a = random_tensor({4, 3}, rng);
  a.set_requires_grad(true);
  const double err = fd_max_rel_err({&a}, [&](Tape<double>* t) {
    return avfg::reduce_mean(avfg::multiply(a, a, t), t);
  });
  CHECK(err < kFdTol);
}

TEST_CASE("slice bounds are validated and gradients land in the window") {
  Rng rng(31);
  auto a = random_tensor({4, 6}, rng);
  a.set_requires_grad(true);
  auto s = avfg::slice(a, {{1, 3}, {2, 5}});
  REQUIRE(s.shape() == Shape{2, 3});
  CHECK(s.at({0, 0}) == a.at({1, 2}));

  CHECK_THROWS_AS(avfg::slice(a, {{1, 3}, {2, 7}}), ShapeError);
  CHECK_THROWS_AS(avfg::slice(a, {{3, 3}, {0, 1}}), ShapeError);

  const double err = fd_max_rel_err({&a}, [&](Tape<double>* t) {
    auto cut = avfg::slice(a, {{1, 3}, {2, 5}}, t);
    return avfg::reduce_sum(avfg::multiply(cut, cut, t), t);
  });
  CHECK(err < kFdTol);
}

TEST_CASE("concat stitches along an axis and routes gradients") {
  Rng rng(37);
  auto a = random_tensor({2, 3}, rng);
  auto b = random_tensor({2, 3}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  auto cat = avfg::concat<double>({a, b}, 1);
  REQUIRE(cat.shape() == Shape{2, 6});
  CHECK(cat.at({1, 4}) == b.at({1, 1}));
  CHECK_THROWS_AS(avfg::concat<double>({a, random_tensor({3, 3}, rng)}, 1), ShapeError);

  const double err = fd_max_rel_err({&a, &b}, [&](Tape<double>* t) {
    auto cat2 = avfg::concat<double>({a, b}, 0, t);
    return avfg::reduce_mean(avfg::multiply(cat2, cat2, t), t);
  });
  CHECK(err < kFdTol);
}

TEST_CASE("permute transposes and backpropagates exactly") {
  Rng rng(41);
  auto a = random_tensor({2, 3, 4}, rng);
  a.set_requires_grad(true);
  auto p = avfg::permute(a, {2, 0, 1});
  REQUIRE(p.shape() == Shape{4, 2, 3});
  CHECK(p.at({3, 1, 2}) == a.at({1, 2, 3}));

  const double err = fd_max_rel_err({&a}, [&](Tape<double>* t) {
    auto q = avfg::permute(a, {2, 0, 1}, t);
    return avfg::reduce_sum(avfg::multiply(q, q, t), t);
  });
  CHECK(err < kFdTol);
}

TEST_CASE("broadcast_scalar expands a scalar with summed gradient") {
  auto s = Tensor<double>::scalar(2.5);
  s.set_requires_grad(true);
  auto b = avfg::broadcast_scalar(s, {3, 2});
  for (std::size_t i = 0; i < 6; ++i) CHECK(b[i] == 2.5);

  Tape<double> tape;
  auto loss = avfg::reduce_sum(avfg::broadcast_scalar(s, {3, 2}, &tape), &tape);
  tape.backward(loss);
  CHECK(s.grad()[0] == 6.0);
  CHECK_THROWS_AS(avfg::broadcast_scalar(b, Shape{2}), ShapeError);
}

TEST_CASE("finite values survive a forward/backward pass") {
  Rng rng(53);
  auto a = random_tensor({5, 5}, rng);
  a.set_requires_grad(true);
  Tape<double> tape;
  auto out = avfg::divide(avfg::multiply(a, a, &tape),
                          avfg::add_const(avfg::multiply(a, a, &tape), 1.0, &tape), &tape);
  auto loss = avfg::reduce_mean(out, &tape);
  tape.backward(loss);
  CHECK(out.all_finite());
  CHECK(loss.all_finite());
  bool grads_finite = true;
  for (std::size_t i = 0; i < a.numel(); ++i)
    grads_finite = grads_finite && std::isfinite(a.grad()[i]);
  CHECK(grads_finite);
}
