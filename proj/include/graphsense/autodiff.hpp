#pragma once

// Minimal reverse-mode automatic differentiation. Tensors are shaped value
// buffers with an attached gradient slot; a Tape records operations and plays
// their backward rules in reverse. Everything is templated on the scalar type:
// training runs in float, gradient verification in double.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphsense {

class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " x ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

enum class Precision { single_precision, double_precision };

template <typename S>
constexpr Precision precision_of() {
  return sizeof(S) == sizeof(double) ? Precision::double_precision : Precision::single_precision;
}

inline std::string_view precision_name(Precision p) {
  return p == Precision::double_precision ? "double" : "single";
}

namespace detail {

template <typename S>
struct TensorStorage {
  std::vector<S> value;
  std::vector<S> grad;  // empty until first needed
  bool requires_grad = false;
  bool on_tape = false;  // produced by a tape op; gradients flow through it
};

}  // namespace detail

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.st_ = std::make_shared<detail::TensorStorage<S>>();
    t.st_->value.assign(shape_numel(t.shape_), S(0));
    return t;
  }

  static Tensor from(Shape shape, std::vector<S> values) {
    std::size_t n = shape_numel(shape);
    if (values.size() != n) {
      throw AutodiffError("tensor values length " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.st_ = std::make_shared<detail::TensorStorage<S>>();
    t.st_->value = std::move(values);
    return t;
  }

  static Tensor scalar(S v) { return from({1}, {v}); }

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return st_ ? st_->value.size() : 0; }
  std::size_t rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : 0); }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  std::span<S> value() { return {st_->value.data(), st_->value.size()}; }
  std::span<const S> value() const { return {st_->value.data(), st_->value.size()}; }
  S item() const {
    if (numel() != 1) throw AutodiffError("item() on non-scalar tensor " + shape_str(shape_));
    return st_->value[0];
  }

  bool requires_grad() const { return st_ && st_->requires_grad; }
  void set_requires_grad(bool b) { st_->requires_grad = b; }
  bool on_tape() const { return st_ && st_->on_tape; }
  bool needs_grad_flow() const { return requires_grad() || on_tape(); }

  bool grad_allocated() const { return st_ && !st_->grad.empty(); }
  std::span<S> grad() {
    if (st_->grad.empty()) st_->grad.assign(st_->value.size(), S(0));
    return {st_->grad.data(), st_->grad.size()};
  }
  std::span<const S> grad() const { return {st_->grad.data(), st_->grad.size()}; }
  void zero_grad() { st_->grad.assign(st_->value.size(), S(0)); }

  // Same storage, new shape; gradients flow through for free.
  Tensor reshape(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw AutodiffError("reshape from " + shape_str(shape_) + " to " + shape_str(shape) +
                          " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.st_ = st_;
    return t;
  }

  std::shared_ptr<detail::TensorStorage<S>> storage() const { return st_; }

 private:
  static std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
      if (d == 0) throw AutodiffError("zero dimension in shape " + shape_str(s));
      n *= d;
    }
    return n;
  }

  Shape shape_;
  std::shared_ptr<detail::TensorStorage<S>> st_;
};

template <typename S>
class Tape {
 public:
  // -- recording primitives (also the extension point used in tests) --------

  Tensor<S> make_output(Shape shape, std::vector<S> values) {
    Tensor<S> t = Tensor<S>::from(std::move(shape), std::move(values));
    t.storage()->on_tape = true;
    touched_.push_back(t.storage());
    return t;
  }

  void record(std::function<void()> backward_step) { nodes_.push_back(std::move(backward_step)); }

  void note_input(const Tensor<S>& t) { touched_.push_back(t.storage()); }

  // -- operations ------------------------------------------------------------

  Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    if (a.shape()[1] != b.shape()[0]) {
      throw AutodiffError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    }
    std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<S> out(m * n, S(0));
    const S* av = a.value().data();
    const S* bv = b.value().data();
    for (std::size_t i = 0; i < m; ++i) {
      S* orow = out.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        S aik = av[i * k + p];
        if (aik == S(0)) continue;
        const S* brow = bv + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
    Tensor<S> y = make_output({m, n}, std::move(out));
    if (a.needs_grad_flow() || b.needs_grad_flow()) {
      note_input(a);
      note_input(b);
      Tensor<S> ac = a, bc = b, yc = y;
      record([ac, bc, yc, m, k, n]() mutable {
        auto g = yc.grad();
        if (ac.needs_grad_flow()) {
          auto ga = ac.grad();
          const S* bv2 = bc.value().data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              S gij = g[i * n + j];
              if (gij == S(0)) continue;
              for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv2[p * n + j];
            }
          }
        }
        if (bc.needs_grad_flow()) {
          auto gb = bc.grad();
          const S* av2 = ac.value().data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              S aip = av2[i * k + p];
              if (aip == S(0)) continue;
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
            }
          }
        }
      });
    }
    return y;
  }

  // Elementwise when shapes match; [n x d] + [d] broadcasts the bias row.
  Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    bool broadcast = a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0];
    if (!broadcast && a.shape() != b.shape()) {
      throw AutodiffError("add: incompatible shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
    }
    std::vector<S> out(a.value().begin(), a.value().end());
    if (broadcast) {
      std::size_t n = a.shape()[0], d = a.shape()[1];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] += b.value()[j];
      }
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    }
    Tensor<S> y = make_output(a.shape(), std::move(out));
    if (a.needs_grad_flow() || b.needs_grad_flow()) {
      note_input(a);
      note_input(b);
      Tensor<S> ac = a, bc = b, yc = y;
      record([ac, bc, yc, broadcast]() mutable {
        auto g = yc.grad();
        if (ac.needs_grad_flow()) {
          auto ga = ac.grad();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bc.needs_grad_flow()) {
          auto gb = bc.grad();
          if (broadcast) {
            std::size_t d = gb.size();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
          }
        }
      });
    }
    return y;
  }

  Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) {
      throw AutodiffError("mul: shapes differ: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    }
    std::vector<S> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    Tensor<S> y = make_output(a.shape(), std::move(out));
    if (a.needs_grad_flow() || b.needs_grad_flow()) {
      note_input(a);
      note_input(b);
      Tensor<S> ac = a, bc = b, yc = y;
      record([ac, bc, yc]() mutable {
        auto g = yc.grad();
        if (ac.needs_grad_flow()) {
          auto ga = ac.grad();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bc.value()[i];
        }
        if (bc.needs_grad_flow()) {
          auto gb = bc.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ac.value()[i];
        }
      });
    }
    return y;
  }

  Tensor<S> scale(const Tensor<S>& x, S c) {
    std::vector<S> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * c;
    Tensor<S> y = make_output(x.shape(), std::move(out));
    if (x.needs_grad_flow()) {
      note_input(x);
      Tensor<S> xc = x, yc = y;
      record([xc, yc, c]() mutable {
        auto g = yc.grad();
        auto gx = xc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
      });
    }
    return y;
  }

  Tensor<S> relu(const Tensor<S>& x) {
    std::vector<S> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > S(0) ? x.value()[i] : S(0);
    Tensor<S> y = make_output(x.shape(), std::move(out));
    if (x.needs_grad_flow()) {
      note_input(x);
      Tensor<S> xc = x, yc = y;
      record([xc, yc]() mutable {
        auto g = yc.grad();
        auto gx = xc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (xc.value()[i] > S(0)) gx[i] += g[i];
        }
      });
    }
    return y;
  }

  // [n x d] -> [d], column means; backward fans out 1/n.
  Tensor<S> mean_pool_rows(const Tensor<S>& x) {
    require_rank(x, 2, "mean_pool_rows");
    std::size_t n = x.shape()[0], d = x.shape()[1];
    std::vector<S> out(d, S(0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) out[j] += x.value()[i * d + j];
    }
    S inv = S(1) / static_cast<S>(n);
    for (std::size_t j = 0; j < d; ++j) out[j] *= inv;
    Tensor<S> y = make_output({d}, std::move(out));
    if (x.needs_grad_flow()) {
      note_input(x);
      Tensor<S> xc = x, yc = y;
      record([xc, yc, n, d, inv]() mutable {
        auto g = yc.grad();
        auto gx = xc.grad();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[j] * inv;
        }
      });
    }
    return y;
  }

  // Numerically stabilized row softmax (row-max subtraction).
  Tensor<S> softmax_rows(const Tensor<S>& x) {
    require_rank(x, 2, "softmax_rows");
    std::size_t n = x.shape()[0], d = x.shape()[1];
    std::vector<S> out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      const S* row = x.value().data() + i * d;
      S mx = row[0];
      for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
      S sum = S(0);
      for (std::size_t j = 0; j < d; ++j) {
        out[i * d + j] = std::exp(row[j] - mx);
        sum += out[i * d + j];
      }
      S inv = S(1) / sum;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= inv;
    }
    Tensor<S> y = make_output(x.shape(), std::move(out));
    if (x.needs_grad_flow()) {
      note_input(x);
      Tensor<S> xc = x, yc = y;
      record([xc, yc, n, d]() mutable {
        auto g = yc.grad();
        auto gx = xc.grad();
        for (std::size_t i = 0; i < n; ++i) {
          const S* yv = yc.value().data() + i * d;
          S dot = S(0);
          for (std::size_t j = 0; j < d; ++j) dot += g[i * d + j] * yv[j];
          for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += yv[j] * (g[i * d + j] - dot);
        }
      });
    }
    return y;
  }

  // Mean over the batch of -log softmax(logits)[label].
  Tensor<S> cross_entropy_with_logits(const Tensor<S>& logits, const std::vector<int>& labels) {
    require_rank(logits, 2, "cross_entropy_with_logits");
    std::size_t n = logits.shape()[0], c = logits.shape()[1];
    if (labels.size() != n) {
      throw AutodiffError("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                          " labels for " + std::to_string(n) + " rows");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
        throw AutodiffError("label out of range at index " + std::to_string(i) + ": " +
                            std::to_string(labels[i]));
      }
    }
    std::vector<S> probs(n * c);
    S loss = S(0);
    for (std::size_t i = 0; i < n; ++i) {
      const S* row = logits.value().data() + i * c;
      S mx = row[0];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      S sum = S(0);
      for (std::size_t j = 0; j < c; ++j) {
        probs[i * c + j] = std::exp(row[j] - mx);
        sum += probs[i * c + j];
      }
      S inv = S(1) / sum;
      for (std::size_t j = 0; j < c; ++j) probs[i * c + j] *= inv;
      loss -= (row[static_cast<std::size_t>(labels[i])] - mx - std::log(sum));
    }
    loss /= static_cast<S>(n);
    Tensor<S> y = make_output({1}, {loss});
    if (logits.needs_grad_flow()) {
      note_input(logits);
      Tensor<S> lc = logits, yc = y;
      record([lc, yc, probs = std::move(probs), labels, n, c]() mutable {
        S g = yc.grad()[0];
        auto gx = lc.grad();
        S inv_n = S(1) / static_cast<S>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            S onehot = static_cast<std::size_t>(labels[i]) == j ? S(1) : S(0);
            gx[i * c + j] += g * (probs[i * c + j] - onehot) * inv_n;
          }
        }
      });
    }
    return y;
  }

  // Identity forward; backward multiplies the upstream gradient by -lambda.
  Tensor<S> grad_reverse(const Tensor<S>& x, double lambda) {
    if (lambda < 0) {
      throw AutodiffError("grad_reverse: lambda must be >= 0, got " + std::to_string(lambda));
    }
    Tensor<S> y = make_output(x.shape(), std::vector<S>(x.value().begin(), x.value().end()));
    if (x.needs_grad_flow()) {
      note_input(x);
      Tensor<S> xc = x, yc = y;
      S neg = static_cast<S>(-lambda);
      record([xc, yc, neg]() mutable {
        auto g = yc.grad();
        auto gx = xc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += neg * g[i];
      });
    }
    return y;
  }

  // Row gather: out[r] = table[ids[r]]; backward scatter-adds.
  Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<std::size_t>& ids) {
    require_rank(table, 2, "gather_rows table");
    std::size_t v = table.shape()[0], d = table.shape()[1];
    for (std::size_t id : ids) {
      if (id >= v) {
        throw AutodiffError("gather_rows: row " + std::to_string(id) + " out of range [0, " +
                            std::to_string(v) + ")");
      }
    }
    if (ids.empty()) throw AutodiffError("gather_rows: empty id list");
    std::vector<S> out(ids.size() * d);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const S* src = table.value().data() + ids[r] * d;
      std::copy(src, src + d, out.data() + r * d);
    }
    Tensor<S> y = make_output({ids.size(), d}, std::move(out));
    if (table.needs_grad_flow()) {
      note_input(table);
      Tensor<S> tc = table, yc = y;
      record([tc, yc, ids, d]() mutable {
        auto g = yc.grad();
        auto gt = tc.grad();
        for (std::size_t r = 0; r < ids.size(); ++r) {
          for (std::size_t j = 0; j < d; ++j) gt[ids[r] * d + j] += g[r * d + j];
        }
      });
    }
    return y;
  }

  Tensor<S> slice_cols(const Tensor<S>& x, std::size_t start, std::size_t count) {
    require_rank(x, 2, "slice_cols");
    std::size_t n = x.shape()[0], d = x.shape()[1];
    if (start + count > d) {
      throw AutodiffError("slice_cols: [" + std::to_string(start) + ", " +
                          std::to_string(start + count) + ") exceeds " + std::to_string(d) +
                          " columns");
    }
    std::vector<S> out(n * count);
    for (std::size_t i = 0; i < n; ++i) {
      const S* src = x.value().data() + i * d + start;
      std::copy(src, src + count, out.data() + i * count);
    }
    Tensor<S> y = make_output({n, count}, std::move(out));
    if (x.needs_grad_flow()) {
      note_input(x);
      Tensor<S> xc = x, yc = y;
      record([xc, yc, n, d, start, count]() mutable {
        auto g = yc.grad();
        auto gx = xc.grad();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < count; ++j) gx[i * d + start + j] += g[i * count + j];
        }
      });
    }
    return y;
  }

  Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw AutodiffError("concat_cols: no inputs");
    std::size_t n = parts[0].shape().at(0), total = 0;
    for (const Tensor<S>& p : parts) {
      require_rank(p, 2, "concat_cols part");
      if (p.shape()[0] != n) {
        throw AutodiffError("concat_cols: row mismatch " + shape_str(p.shape()));
      }
      total += p.shape()[1];
    }
    std::vector<S> out(n * total);
    std::size_t off = 0;
    for (const Tensor<S>& p : parts) {
      std::size_t d = p.shape()[1];
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(p.value().data() + i * d, p.value().data() + (i + 1) * d,
                  out.data() + i * total + off);
      }
      off += d;
    }
    Tensor<S> y = make_output({n, total}, std::move(out));
    bool any = false;
    for (const Tensor<S>& p : parts) any = any || p.needs_grad_flow();
    if (any) {
      for (const Tensor<S>& p : parts) note_input(p);
      std::vector<Tensor<S>> pc = parts;
      Tensor<S> yc = y;
      record([pc, yc, n, total]() mutable {
        auto g = yc.grad();
        std::size_t off2 = 0;
        for (Tensor<S>& p : pc) {
          std::size_t d = p.shape()[1];
          if (p.needs_grad_flow()) {
            auto gp = p.grad();
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t j = 0; j < d; ++j) gp[i * d + j] += g[i * total + off2 + j];
            }
          }
          off2 += d;
        }
      });
    }
    return y;
  }

  Tensor<S> concat_rows(const Tensor<S>& a, const Tensor<S>& b) {
    require_rank(a, 2, "concat_rows lhs");
    require_rank(b, 2, "concat_rows rhs");
    if (a.shape()[1] != b.shape()[1]) {
      throw AutodiffError("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    }
    std::size_t d = a.shape()[1];
    std::vector<S> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.value().begin(), a.value().end());
    out.insert(out.end(), b.value().begin(), b.value().end());
    Tensor<S> y = make_output({a.shape()[0] + b.shape()[0], d}, std::move(out));
    if (a.needs_grad_flow() || b.needs_grad_flow()) {
      note_input(a);
      note_input(b);
      Tensor<S> ac = a, bc = b, yc = y;
      record([ac, bc, yc]() mutable {
        auto g = yc.grad();
        std::size_t na = ac.numel();
        if (ac.needs_grad_flow()) {
          auto ga = ac.grad();
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (bc.needs_grad_flow()) {
          auto gb = bc.grad();
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
        }
      });
    }
    return y;
  }

  Tensor<S> transpose(const Tensor<S>& x) {
    require_rank(x, 2, "transpose");
    std::size_t n = x.shape()[0], d = x.shape()[1];
    std::vector<S> out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) out[j * n + i] = x.value()[i * d + j];
    }
    Tensor<S> y = make_output({d, n}, std::move(out));
    if (x.needs_grad_flow()) {
      note_input(x);
      Tensor<S> xc = x, yc = y;
      record([xc, yc, n, d]() mutable {
        auto g = yc.grad();
        auto gx = xc.grad();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[j * n + i];
        }
      });
    }
    return y;
  }

  // Per-row layer normalization with learned gain and bias.
  Tensor<S> layer_norm_rows(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                            S eps = static_cast<S>(1e-5)) {
    require_rank(x, 2, "layer_norm_rows");
    std::size_t n = x.shape()[0], d = x.shape()[1];
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
      throw AutodiffError("layer_norm_rows: gain/bias must be [" + std::to_string(d) + "]");
    }
    std::vector<S> out(n * d), xhat(n * d), inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
      const S* row = x.value().data() + i * d;
      S mean = S(0);
      for (std::size_t j = 0; j < d; ++j) mean += row[j];
      mean /= static_cast<S>(d);
      S var = S(0);
      for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= static_cast<S>(d);
      inv_std[i] = S(1) / std::sqrt(var + eps);
      for (std::size_t j = 0; j < d; ++j) {
        xhat[i * d + j] = (row[j] - mean) * inv_std[i];
        out[i * d + j] = gain.value()[j] * xhat[i * d + j] + bias.value()[j];
      }
    }
    Tensor<S> y = make_output(x.shape(), std::move(out));
    if (x.needs_grad_flow() || gain.needs_grad_flow() || bias.needs_grad_flow()) {
      note_input(x);
      note_input(gain);
      note_input(bias);
      Tensor<S> xc = x, gc = gain, bc = bias, yc = y;
      record([xc, gc, bc, yc, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
              d]() mutable {
        auto g = yc.grad();
        if (gc.needs_grad_flow()) {
          auto gg = gc.grad();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
          }
        }
        if (bc.needs_grad_flow()) {
          auto gb = bc.grad();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
          }
        }
        if (xc.needs_grad_flow()) {
          auto gx = xc.grad();
          for (std::size_t i = 0; i < n; ++i) {
            S mean_gy = S(0), mean_gy_xhat = S(0);
            for (std::size_t j = 0; j < d; ++j) {
              S gy = g[i * d + j] * gc.value()[j];
              mean_gy += gy;
              mean_gy_xhat += gy * xhat[i * d + j];
            }
            mean_gy /= static_cast<S>(d);
            mean_gy_xhat /= static_cast<S>(d);
            for (std::size_t j = 0; j < d; ++j) {
              S gy = g[i * d + j] * gc.value()[j];
              gx[i * d + j] += (gy - mean_gy - xhat[i * d + j] * mean_gy_xhat) * inv_std[i];
            }
          }
        }
      });
    }
    return y;
  }

  Tensor<S> sum_all(const Tensor<S>& x) {
    S total = S(0);
    for (S v : x.value()) total += v;
    Tensor<S> y = make_output({1}, {total});
    if (x.needs_grad_flow()) {
      note_input(x);
      Tensor<S> xc = x, yc = y;
      record([xc, yc]() mutable {
        S g = yc.grad()[0];
        auto gx = xc.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
      });
    }
    return y;
  }

  // -- backward --------------------------------------------------------------

  // Accumulates d(loss)/d(t) into the grad of every requires_grad tensor
  // reachable from loss. Interior (tape-produced) gradients are transient per
  // call; leaf gradients accumulate additively until explicitly zeroed.
  void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1) {
      throw AutodiffError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    if (!loss.on_tape()) throw AutodiffError("backward: loss is not recorded on this tape");
    for (auto& st : touched_) {
      if (st->on_tape && !st->grad.empty()) st->grad.assign(st->grad.size(), S(0));
    }
    Tensor<S> l = loss;
    l.grad()[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  // Zeroes the gradient of every tensor this tape has touched, leaves included.
  void zero_grads() {
    for (auto& st : touched_) {
      if (!st->grad.empty()) st->grad.assign(st->grad.size(), S(0));
    }
  }

  void clear() {
    nodes_.clear();
    touched_.clear();
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  static void require_rank(const Tensor<S>& t, std::size_t rank, const char* what) {
    if (!t.defined()) throw AutodiffError(std::string(what) + ": undefined tensor");
    if (t.rank() != rank) {
      throw AutodiffError(std::string(what) + ": expected rank " + std::to_string(rank) +
                          ", got shape " + shape_str(t.shape()));
    }
  }

  std::vector<std::function<void()>> nodes_;
  std::vector<std::shared_ptr<detail::TensorStorage<S>>> touched_;
};

// ---------------------------------------------------------------------------
// Finite-difference verification.
// ---------------------------------------------------------------------------

struct GradcheckResult {
  double max_rel_err = 0.0;
  bool passed = true;
  std::string worst_coordinate;
};

// Central finite differences against the tape's analytic gradients. `fn` maps
// (tape, inputs) to a scalar tensor and must not mutate the inputs. Relative
// error per coordinate is |a - n| / max(1, |a|, |n|).
template <typename Fn>
GradcheckResult gradcheck(Fn&& fn, std::vector<Tensor<double>>& inputs, double tol,
                          double step = 1e-5) {
  auto eval = [&]() {
    Tape<double> tape;
    Tensor<double> y = fn(tape, inputs);
    if (y.numel() != 1) throw AutodiffError("gradcheck: function must return a scalar");
    double v = y.item();
    if (!std::isfinite(v)) throw AutodiffError("gradcheck: non-finite function value");
    return v;
  };

  // Analytic pass.
  std::vector<std::vector<double>> analytic(inputs.size());
  {
    Tape<double> tape;
    Tensor<double> y = fn(tape, inputs);
    if (y.numel() != 1) throw AutodiffError("gradcheck: function must return a scalar");
    if (!std::isfinite(y.item())) throw AutodiffError("gradcheck: non-finite function value");
    for (Tensor<double>& t : inputs) {
      if (t.requires_grad()) t.zero_grad();
    }
    tape.backward(y);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      auto g = inputs[i].grad();
      analytic[i].assign(g.begin(), g.end());
      for (double v : analytic[i]) {
        if (!std::isfinite(v)) throw AutodiffError("gradcheck: non-finite analytic gradient");
      }
    }
  }

  GradcheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    auto vals = inputs[i].value();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      double saved = vals[j];
      vals[j] = saved + step;
      double fp = eval();
      vals[j] = saved - step;
      double fm = eval();
      vals[j] = saved;
      double numeric = (fp - fm) / (2.0 * step);
      double a = analytic[i][j];
      double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_coordinate = "input" + std::to_string(i) + "[" + std::to_string(j) + "]";
      }
    }
  }
  result.passed = result.max_rel_err <= tol;
  return result;
}

}  // namespace graphsense
