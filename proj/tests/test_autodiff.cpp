#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "graphsense/autodiff.hpp"
#include "graphsense/rng.hpp"
#include "graphsense/verify.hpp"

using namespace graphsense;

TEST_CASE("matmul computes the product and validates shapes") {
  Tape<double> tape;
  Tensor<double> eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  Tensor<double> x = Tensor<double>::from({2, 2}, {3, -1, 2, 5});
  Tensor<double> y = tape.matmul(eye, x);
  CHECK(std::vector<double>(y.value().begin(), y.value().end()) ==
        std::vector<double>{3, -1, 2, 5});

  Tensor<double> a = Tensor<double>::from({1, 2}, {1, 2});
  Tensor<double> b = Tensor<double>::from({2, 1}, {3, 4});
  CHECK(tape.matmul(a, b).item() == 11.0);

  Tensor<double> bad = Tensor<double>::from({5, 2}, std::vector<double>(10, 0.0));
  CHECK_THROWS_WITH(tape.matmul(a, bad),
                    Catch::Matchers::ContainsSubstring("[1 x 2]") &&
                        Catch::Matchers::ContainsSubstring("[5 x 2]"));
}

TEST_CASE("elementwise ops match their definitions") {
  Tape<double> tape;
  Tensor<double> x = Tensor<double>::from({3}, {-1, 0, 2}).reshape({1, 3});
  Tensor<double> r = tape.relu(x);
  CHECK(std::vector<double>(r.value().begin(), r.value().end()) == std::vector<double>{0, 0, 2});

  Tensor<double> m = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  Tensor<double> pooled = tape.mean_pool_rows(m);
  REQUIRE(pooled.shape() == Shape{2});
  CHECK(pooled.value()[0] == 2.0);
  CHECK(pooled.value()[1] == 3.0);
}

TEST_CASE("softmax rows are stable and sum to one") {
  Tape<double> tape;
  Tensor<double> x = Tensor<double>::from({3, 2}, {0, 0, 1000, 0, 1, 1});
  Tensor<double> y = tape.softmax_rows(x);
  CHECK(y.value()[0] == Catch::Approx(0.5));
  CHECK(y.value()[1] == Catch::Approx(0.5));
  CHECK(y.value()[2] == Catch::Approx(1.0));
  CHECK(y.value()[3] == Catch::Approx(0.0).margin(1e-300));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(y.value()[2 * i] + y.value()[2 * i + 1] == Catch::Approx(1.0).epsilon(1e-12));
  }

  Tensor<double> three = Tensor<double>::from({1, 3}, {1, 1, 1});
  Tensor<double> u = tape.softmax_rows(three);
  for (double v : u.value()) CHECK(v == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("softmax row sums within precision bounds on random input") {
  Rng rng(7);
  {
    Tape<float> tape;
    std::vector<float> vals(40);
    for (float& v : vals) v = static_cast<float>(rng.next_normal() * 3);
    Tensor<float> y = tape.softmax_rows(Tensor<float>::from({8, 5}, std::move(vals)));
    for (std::size_t i = 0; i < 8; ++i) {
      float sum = 0;
      for (std::size_t j = 0; j < 5; ++j) sum += y.value()[i * 5 + j];
      CHECK(std::abs(sum - 1.0f) <= 1e-6f);
    }
  }
  {
    Tape<double> tape;
    std::vector<double> vals(40);
    for (double& v : vals) v = rng.next_normal() * 3;
    Tensor<double> y = tape.softmax_rows(Tensor<double>::from({8, 5}, std::move(vals)));
    for (std::size_t i = 0; i < 8; ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < 5; ++j) sum += y.value()[i * 5 + j];
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("cross entropy matches closed forms") {
  Tape<double> tape;
  Tensor<double> uniform = Tensor<double>::from({1, 2}, {0, 0});
  CHECK(tape.cross_entropy_with_logits(uniform, {0}).item() ==
        Catch::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor<double> confident = Tensor<double>::from({1, 2}, {10, -10});
  // -log softmax = log(1 + e^-20) ~ 2.06e-9
  CHECK(tape.cross_entropy_with_logits(confident, {0}).item() ==
        Catch::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));

  CHECK_THROWS_WITH(tape.cross_entropy_with_logits(uniform, {2}),
                    Catch::Matchers::ContainsSubstring("index 0"));
}

TEST_CASE("grad_reverse is an exact identity forward") {
  Tape<float> tape;
  Tensor<float> x = Tensor<float>::from({1, 2}, {3.5f, -1.0f});
  Tensor<float> y = tape.grad_reverse(x, 1.0);
  CHECK(y.value()[0] == 3.5f);
  CHECK(y.value()[1] == -1.0f);
  CHECK_THROWS_AS(tape.grad_reverse(x, -0.5), AutodiffError);
}

TEST_CASE("grad_reverse backward is exactly -lambda times upstream") {
  for (double lambda : {1.0, 0.5}) {
    Tape<double> tape;
    Tensor<double> x = Tensor<double>::from({1, 2}, {0.3, 0.7});
    x.set_requires_grad(true);
    Tensor<double> y = tape.grad_reverse(x, lambda);
    // loss = 1*y0 - 2*y1, so the upstream gradient is [1, -2]
    Tensor<double> w = Tensor<double>::from({1, 2}, {1, -2});
    Tensor<double> loss = tape.sum_all(tape.mul(y, w));
    x.zero_grad();
    tape.backward(loss);
    CHECK(x.grad()[0] == -lambda * 1.0);
    CHECK(x.grad()[1] == -lambda * -2.0);
  }
}

TEST_CASE("backward on linear and quadratic cases") {
  {
    Tape<double> tape;
    Tensor<double> w = Tensor<double>::from({1, 3}, {5, -2, 0.5});
    w.set_requires_grad(true);
    Tensor<double> loss = tape.sum_all(w);
    tape.backward(loss);
    CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) ==
          std::vector<double>{1, 1, 1});
  }
  {
    Tape<double> tape;
    Tensor<double> w = Tensor<double>::from({1, 2}, {1, 2});
    w.set_requires_grad(true);
    Tensor<double> loss = tape.sum_all(tape.mul(w, w));
    tape.backward(loss);
    CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{2, 4});
  }
}

TEST_CASE("backward requires a scalar recorded on the tape") {
  Tape<double> tape;
  Tensor<double> w = Tensor<double>::from({1, 2}, {1, 2});
  w.set_requires_grad(true);
  Tensor<double> y = tape.mul(w, w);
  CHECK_THROWS_AS(tape.backward(y), AutodiffError);                          // not scalar
  CHECK_THROWS_AS(tape.backward(Tensor<double>::scalar(1)), AutodiffError);  // off tape
}

TEST_CASE("repeated backward accumulates additively into leaves") {
  Tape<double> tape;
  Tensor<double> w = Tensor<double>::from({1, 2}, {1, 2});
  w.set_requires_grad(true);
  Tensor<double> loss = tape.sum_all(tape.mul(w, w));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{4, 8});
}

TEST_CASE("backward twice with zeroed grads is deterministic") {
  Rng rng(5);
  std::vector<double> vals(12);
  for (double& v : vals) v = rng.next_normal();
  Tensor<double> w = Tensor<double>::from({3, 4}, vals);
  w.set_requires_grad(true);
  Tensor<double> b = Tensor<double>::from({4}, {0.1, -0.2, 0.3, 0.4});
  b.set_requires_grad(true);

  Tape<double> tape;
  Tensor<double> h = tape.softmax_rows(tape.add(tape.relu(w), b));
  Tensor<double> loss = tape.cross_entropy_with_logits(h, {0, 1, 3});

  tape.zero_grads();
  tape.backward(loss);
  std::vector<double> first(w.grad().begin(), w.grad().end());
  std::vector<double> first_b(b.grad().begin(), b.grad().end());

  tape.zero_grads();
  tape.backward(loss);
  CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == first);
  CHECK(std::vector<double>(b.grad().begin(), b.grad().end()) == first_b);
}

TEST_CASE("reshape shares storage and gradients flow through") {
  Tape<double> tape;
  Tensor<double> w = Tensor<double>::from({4}, {1, 2, 3, 4});
  w.set_requires_grad(true);
  Tensor<double> m = w.reshape({2, 2});
  Tensor<double> loss = tape.sum_all(tape.mul(m, m));
  tape.backward(loss);
  CHECK(w.grad()[2] == 6.0);
  CHECK_THROWS_AS(w.reshape({3, 2}), AutodiffError);
}

TEST_CASE("gradcheck: linear functions are exact to 1e-9") {
  std::vector<Tensor<double>> inputs = {Tensor<double>::from({2, 3}, {1, -2, 3, 0.5, 4, -1})};
  inputs[0].set_requires_grad(true);
  auto fn = [](Tape<double>& tape, const std::vector<Tensor<double>>& x) {
    return tape.sum_all(tape.scale(x[0], 3.0));
  };
  GradcheckResult r = gradcheck(fn, inputs, 1e-9);
  CHECK(r.passed);
  CHECK(r.max_rel_err < 1e-9);
}

TEST_CASE("gradcheck: relu away from the kink passes at 1e-6") {
  Rng rng(33);
  std::vector<double> vals(12);
  for (double& v : vals) {
    v = rng.next_normal();
    v += v >= 0 ? 1e-3 : -1e-3;
  }
  std::vector<Tensor<double>> inputs = {Tensor<double>::from({3, 4}, vals)};
  inputs[0].set_requires_grad(true);
  auto fn = [](Tape<double>& tape, const std::vector<Tensor<double>>& x) {
    return tape.sum_all(tape.relu(x[0]));
  };
  GradcheckResult r = gradcheck(fn, inputs, 1e-6);
  CHECK(r.passed);
}

TEST_CASE("gradcheck: a deliberately wrong backward rule fails") {
  std::vector<Tensor<double>> inputs = {Tensor<double>::from({1, 3}, {0.3, -0.4, 0.9})};
  inputs[0].set_requires_grad(true);
  // Forward computes 2x but the recorded rule claims d/dx = 3.
  auto fn = [](Tape<double>& tape, const std::vector<Tensor<double>>& x) {
    std::vector<double> doubled(x[0].value().begin(), x[0].value().end());
    for (double& v : doubled) v *= 2.0;
    Tensor<double> y = tape.make_output(x[0].shape(), std::move(doubled));
    tape.note_input(x[0]);
    Tensor<double> xin = x[0];
    Tensor<double> yout = y;
    tape.record([xin, yout]() mutable {
      auto g = yout.grad();
      auto gx = xin.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 3.0 * g[i];
    });
    return tape.sum_all(y);
  };
  GradcheckResult r = gradcheck(fn, inputs, 1e-4);
  CHECK_FALSE(r.passed);
  CHECK(r.max_rel_err > 0.1);
}

TEST_CASE("gradcheck rejects non-finite values") {
  std::vector<Tensor<double>> inputs = {Tensor<double>::from({1}, {1.0})};
  inputs[0].set_requires_grad(true);
  auto fn = [](Tape<double>& tape, const std::vector<Tensor<double>>& x) {
    return tape.scale(x[0], std::numeric_limits<double>::infinity());
  };
  CHECK_THROWS_AS(gradcheck(fn, inputs, 1e-4), AutodiffError);
}

TEST_CASE("full gradcheck suite passes at 1e-4 over 20 seeds") {
  std::vector<OpCheck> checks = run_gradcheck_suite(20, 1e-4);
  REQUIRE(!checks.empty());
  for (const OpCheck& c : checks) {
    INFO(c.name << " max rel err " << c.max_rel_err);
    CHECK(c.passed);
  }
}

TEST_CASE("layer norm handles all-zero rows") {
  Tape<double> tape;
  Tensor<double> x = Tensor<double>::zeros({2, 4});
  Tensor<double> g = Tensor<double>::from({4}, {1, 1, 1, 1});
  Tensor<double> b = Tensor<double>::zeros({4});
  Tensor<double> y = tape.layer_norm_rows(x, g, b);
  for (double v : y.value()) CHECK(v == 0.0);
}

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor<double>::from({2, 3}, {1, 2}), AutodiffError);
  CHECK_THROWS_AS(Tensor<double>::from({0}, {}), AutodiffError);
  Tensor<double> s = Tensor<double>::scalar(4.0);
  CHECK(s.item() == 4.0);
  CHECK_THROWS_AS(Tensor<double>::from({2}, {1, 2}).item(), AutodiffError);
}
