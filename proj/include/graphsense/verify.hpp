#pragma once

// Finite-difference verification suite covering every differentiable
// operation and the full fused forward pass at tiny dimensions. Runs in
// double precision; inputs are standard normal draws with a kink-avoidance
// margin where an operation is not differentiable.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "graphsense/autodiff.hpp"
#include "graphsense/corpus.hpp"
#include "graphsense/graph.hpp"
#include "graphsense/model.hpp"
#include "graphsense/rng.hpp"

namespace graphsense {

struct OpCheck {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 1e-4;
  bool passed = false;
};

namespace detail {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, bool requires_grad = true,
                                    double kink_margin = 0.0) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) {
    x = rng.next_normal();
    if (kink_margin > 0.0) x += x >= 0.0 ? kink_margin : -kink_margin;
  }
  Tensor<double> t = Tensor<double>::from(std::move(shape), std::move(v));
  t.set_requires_grad(requires_grad);
  return t;
}

// Reduces an op output to a scalar through a fixed random weight tensor, so
// every output coordinate participates in the check.
inline Tensor<double> weighted_sum(Tape<double>& tape, const Tensor<double>& y, Rng& rng) {
  std::vector<double> w(y.numel());
  for (double& x : w) x = rng.next_normal();
  return tape.sum_all(tape.mul(y, Tensor<double>::from(y.shape(), std::move(w))));
}

}  // namespace detail

// Gradient-reversal law check: analytic gradient through grad_reverse equals
// -lambda times the finite-difference gradient of the same composite.
inline OpCheck check_grad_reverse_law(std::uint64_t seed, double lambda, double tol) {
  OpCheck check{"grad_reverse(lambda=" + std::to_string(lambda) + ")", 0.0, tol, false};
  Rng rng = Rng(seed).substream("grl");
  Tensor<double> x = detail::random_tensor({3, 4}, rng);
  Rng wrng = rng.substream("w");
  std::vector<double> w(12);
  for (double& v : w) v = wrng.next_normal();
  Tensor<double> weights = Tensor<double>::from({3, 4}, w);

  // Analytic pass through the reversal.
  x.zero_grad();
  {
    Tape<double> tape;
    Tensor<double> y = tape.sum_all(tape.mul(tape.grad_reverse(x, lambda), weights));
    tape.backward(y);
  }
  std::vector<double> analytic(x.grad().begin(), x.grad().end());

  // Finite differences of the forward (identity) composite.
  auto eval = [&]() {
    Tape<double> tape;
    return tape.sum_all(tape.mul(tape.grad_reverse(x, lambda), weights)).item();
  };
  const double h = 1e-5;
  auto vals = x.value();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    double saved = vals[i];
    vals[i] = saved + h;
    double fp = eval();
    vals[i] = saved - h;
    double fm = eval();
    vals[i] = saved;
    double numeric = -lambda * (fp - fm) / (2.0 * h);
    double rel = std::abs(analytic[i] - numeric) /
                 std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    check.max_rel_err = std::max(check.max_rel_err, rel);
  }
  check.passed = check.max_rel_err <= check.tol;
  return check;
}

// Full fused forward at tiny dims: cross-entropy of forward_task against a
// fixed label, differentiated with respect to every parameter.
inline OpCheck check_full_model(std::uint64_t seed, double tol) {
  OpCheck check{"fused_forward", 0.0, tol, false};

  std::vector<Sample> corpus = {
      {"g1", "alpha beta gamma delta", 1, Dialect::msa, Source::synthetic, std::nullopt},
      {"g2", "beta epsilon zeta", 0, Dialect::msa, Source::synthetic, std::nullopt},
  };
  Vocabulary vocab = Vocabulary::build(corpus);
  ModelConfig cfg;
  cfg.text_mode = TextEncoderMode::toy_transformer;
  cfg.text_hidden = 4;
  cfg.text_blocks = 1;
  cfg.text_heads = 1;
  cfg.max_tokens = 8;
  cfg.graph_hidden = 4;
  cfg.gcn_layers = 2;
  cfg.fusion_dim = 4;
  cfg.fusion_heads = 1;
  cfg.classifier_hidden = 4;
  FusionModel<double> model(cfg, vocab, seed);

  const Sample& sample = corpus[0];
  WordGraph graph = build_cooccurrence_graph(tokenize(sample.text));

  std::vector<Tensor<double>> inputs;
  for (auto& [name, t] : model.params()) inputs.push_back(t);
  auto fn = [&](Tape<double>& tape, const std::vector<Tensor<double>>&) {
    Tensor<double> logits = model.forward_task(tape, sample, graph);
    return tape.cross_entropy_with_logits(logits, {sample.label});
  };
  GradcheckResult r = gradcheck(fn, inputs, tol);
  check.max_rel_err = r.max_rel_err;
  check.passed = r.passed;
  return check;
}

// One gradcheck per differentiable op, `seeds` random restarts each; reports
// the worst relative error seen per op.
inline std::vector<OpCheck> run_gradcheck_suite(std::uint64_t seeds = 20, double tol = 1e-4) {
  std::vector<OpCheck> checks;

  struct OpCase {
    std::string name;
    std::function<GradcheckResult(Rng&)> run;
  };

  auto weighted = [](Tape<double>& tape, const Tensor<double>& y, Rng& rng) {
    return detail::weighted_sum(tape, y, rng);
  };

  std::vector<OpCase> cases;
  cases.push_back({"matmul", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng),
                                      detail::random_tensor({4, 2}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.matmul(x[0], x[1]), w2);
    }, in, tol);
  }});
  cases.push_back({"add", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng),
                                      detail::random_tensor({3, 4}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.add(x[0], x[1]), w2);
    }, in, tol);
  }});
  cases.push_back({"add_bias_row", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng),
                                      detail::random_tensor({4}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.add(x[0], x[1]), w2);
    }, in, tol);
  }});
  cases.push_back({"mul", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng),
                                      detail::random_tensor({3, 4}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.mul(x[0], x[1]), w2);
    }, in, tol);
  }});
  cases.push_back({"scale", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.scale(x[0], 1.7), w2);
    }, in, tol);
  }});
  cases.push_back({"relu", [&](Rng& rng) {
    // inputs pushed away from the kink at zero by a 1e-3 margin
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng, true, 1e-3)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.relu(x[0]), w2);
    }, in, tol);
  }});
  cases.push_back({"mean_pool_rows", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({4, 3}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.mean_pool_rows(x[0]), w2);
    }, in, tol);
  }});
  cases.push_back({"softmax_rows", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 5}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.softmax_rows(x[0]), w2);
    }, in, tol);
  }});
  cases.push_back({"cross_entropy_with_logits", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({4, 2}, rng)};
    std::vector<int> labels = {static_cast<int>(rng.next_below(2)),
                               static_cast<int>(rng.next_below(2)),
                               static_cast<int>(rng.next_below(2)),
                               static_cast<int>(rng.next_below(2))};
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      return t.cross_entropy_with_logits(x[0], labels);
    }, in, tol);
  }});
  cases.push_back({"gather_rows", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({5, 3}, rng)};
    std::vector<std::size_t> ids = {0, 2, 2, 4, 1};  // repeats exercise scatter-add
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.gather_rows(x[0], ids), w2);
    }, in, tol);
  }});
  cases.push_back({"slice_cols", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 6}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.slice_cols(x[0], 1, 3), w2);
    }, in, tol);
  }});
  cases.push_back({"concat_cols", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 2}, rng),
                                      detail::random_tensor({3, 3}, rng),
                                      detail::random_tensor({3, 1}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.concat_cols({x[0], x[1], x[2]}), w2);
    }, in, tol);
  }});
  cases.push_back({"concat_rows", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({2, 4}, rng),
                                      detail::random_tensor({3, 4}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.concat_rows(x[0], x[1]), w2);
    }, in, tol);
  }});
  cases.push_back({"transpose", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.transpose(x[0]), w2);
    }, in, tol);
  }});
  cases.push_back({"layer_norm_rows", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng),
                                      detail::random_tensor({4}, rng),
                                      detail::random_tensor({4}, rng)};
    Rng wr = rng.substream("w");
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Rng w2 = wr;
      return weighted(t, t.layer_norm_rows(x[0], x[1], x[2]), w2);
    }, in, tol);
  }});
  cases.push_back({"sum_all", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng)};
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      return t.sum_all(x[0]);
    }, in, tol);
  }});
  cases.push_back({"composite_matmul_relu_pool_ce", [&](Rng& rng) {
    std::vector<Tensor<double>> in = {detail::random_tensor({3, 4}, rng, true, 1e-3),
                                      detail::random_tensor({4, 2}, rng)};
    return gradcheck([&](Tape<double>& t, const std::vector<Tensor<double>>& x) {
      Tensor<double> pooled = t.mean_pool_rows(t.relu(t.matmul(x[0], x[1])));
      return t.cross_entropy_with_logits(pooled.reshape({1, 2}), {0});
    }, in, tol);
  }});

  for (const OpCase& c : cases) {
    OpCheck check{c.name, 0.0, tol, false};
    for (std::uint64_t s = 0; s < seeds; ++s) {
      Rng rng = Rng(2026).substream(c.name).substream(s);
      GradcheckResult r = c.run(rng);
      check.max_rel_err = std::max(check.max_rel_err, r.max_rel_err);
    }
    check.passed = check.max_rel_err <= tol;
    checks.push_back(check);
  }

  for (double lambda : {0.0, 0.5, 1.0, 2.0}) {
    OpCheck worst{"", 0.0, tol, false};
    for (std::uint64_t s = 0; s < seeds; ++s) {
      OpCheck c = check_grad_reverse_law(s, lambda, tol);
      worst.name = c.name;
      worst.max_rel_err = std::max(worst.max_rel_err, c.max_rel_err);
    }
    worst.passed = worst.max_rel_err <= tol;
    checks.push_back(worst);
  }

  {
    OpCheck worst{"fused_forward", 0.0, tol, false};
    for (std::uint64_t s = 0; s < seeds; ++s) {
      OpCheck c = check_full_model(s + 1, tol);
      worst.max_rel_err = std::max(worst.max_rel_err, c.max_rel_err);
    }
    worst.passed = worst.max_rel_err <= tol;
    checks.push_back(worst);
  }

  return checks;
}

}  // namespace graphsense
