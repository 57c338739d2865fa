#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hetsmcg/matrix.hpp"

namespace hetsmcg::numkit {

namespace detail {

struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
};

}  // namespace detail

/// Handle to a 2-D float64 value that can participate in a Tape.
/// Values are immutable after creation except through the optimizer;
/// grad buffers accumulate additively until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Matrix m, bool requires_grad = false)
      : node_(std::make_shared<detail::TensorNode>()) {
    node_->rows = m.rows();
    node_->cols = m.cols();
    node_->value = std::move(m.data());
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad.assign(node_->value.size(), 0.0);
  }

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
    return Tensor(Matrix(rows, cols), requires_grad);
  }

  static Tensor row(const std::vector<double>& v, bool requires_grad = false) {
    Matrix m(1, v.size());
    m.data() = v;
    return Tensor(std::move(m), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    Matrix m(1, 1);
    m.at(0, 0) = v;
    return Tensor(std::move(m), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  double value(std::size_t i, std::size_t j) const { return node_->value[i * node_->cols + j]; }
  const std::vector<double>& values() const { return node_->value; }

  /// Scalar convenience: value of a 1x1 tensor.
  double item() const {
    if (size() != 1) throw std::logic_error("Tensor::item: not a scalar");
    return node_->value[0];
  }

  double grad(std::size_t i, std::size_t j) const {
    if (!node_->requires_grad) throw std::logic_error("Tensor::grad: tensor has no grad");
    return node_->grad[i * node_->cols + j];
  }
  const std::vector<double>& grad_data() const {
    if (!node_->requires_grad) throw std::logic_error("Tensor::grad_data: tensor has no grad");
    return node_->grad;
  }

  void zero_grad() {
    if (node_ && node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
  }

  /// Raw write access to values; only the optimizer and loaders should use it.
  std::vector<double>& mutable_values() { return node_->value; }

  Matrix to_matrix() const {
    Matrix m(rows(), cols());
    m.data() = node_->value;
    return m;
  }

 private:
  std::shared_ptr<detail::TensorNode> node_;
  friend class Tape;
};

/// Records forward operations and replays their backward rules in reverse.
/// One tape per model instance; recording order is topological by construction.
class Tape {
 public:
  using NodePtr = std::shared_ptr<detail::TensorNode>;

  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and visits every recorded op once, newest first.
  void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
      throw std::logic_error("backward: loss must be a scalar tensor");
    if (!loss.node_->requires_grad)
      throw std::logic_error("backward: loss does not depend on any parameter");
    loss.node_->grad[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  // ---- ops ----

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    Tensor out = make_output(a.rows(), b.cols(), needs_grad(a, b));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const auto& av = a.node_->value;
    const auto& bv = b.node_->value;
    auto& cv = out.node_->value;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = bv.data() + p * n;
        double* crow = cv.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    if (out.requires_grad()) {
      record([an = a.node_, bn = b.node_, on = out.node_, m, k, n] {
        const auto& dc = on->grad;
        if (an->requires_grad) {
          auto& da = an->grad;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* dcrow = dc.data() + i * n;
              const double* brow = bn->value.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
              da[i * k + p] += acc;
            }
        }
        if (bn->requires_grad) {
          auto& db = bn->grad;
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
              const double aip = an->value[i * k + p];
              if (aip == 0.0) continue;
              const double* dcrow = dc.data() + i * n;
              double* dbrow = db.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * dcrow[j];
            }
        }
      });
    }
    return out;
  }

  Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = make_output(a.rows(), a.cols(), needs_grad(a, b));
    for (std::size_t i = 0; i < a.size(); ++i)
      out.node_->value[i] = a.node_->value[i] + b.node_->value[i];
    if (out.requires_grad()) {
      record([an = a.node_, bn = b.node_, on = out.node_] {
        if (an->requires_grad)
          for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        if (bn->requires_grad)
          for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
      });
    }
    return out;
  }

  /// x (n x c) + bias (1 x c), the only broadcast form supported.
  Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols())
      throw std::invalid_argument("add_row_broadcast: bias must be 1 x cols(x)");
    Tensor out = make_output(x.rows(), x.cols(), needs_grad(x, bias));
    const std::size_t n = x.rows(), c = x.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out.node_->value[i * c + j] = x.node_->value[i * c + j] + bias.node_->value[j];
    if (out.requires_grad()) {
      record([xn = x.node_, bn = bias.node_, on = out.node_, n, c] {
        if (xn->requires_grad)
          for (std::size_t i = 0; i < n * c; ++i) xn->grad[i] += on->grad[i];
        if (bn->requires_grad)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) bn->grad[j] += on->grad[i * c + j];
      });
    }
    return out;
  }

  Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_output(a.rows(), a.cols(), needs_grad(a, b));
    for (std::size_t i = 0; i < a.size(); ++i)
      out.node_->value[i] = a.node_->value[i] * b.node_->value[i];
    if (out.requires_grad()) {
      record([an = a.node_, bn = b.node_, on = out.node_] {
        if (an->requires_grad)
          for (std::size_t i = 0; i < on->grad.size(); ++i)
            an->grad[i] += on->grad[i] * bn->value[i];
        if (bn->requires_grad)
          for (std::size_t i = 0; i < on->grad.size(); ++i)
            bn->grad[i] += on->grad[i] * an->value[i];
      });
    }
    return out;
  }

  /// Row-wise scaling: x (n x c) scaled by s (n x 1).
  Tensor scale_rows(const Tensor& x, const Tensor& s) {
    if (s.rows() != x.rows() || s.cols() != 1)
      throw std::invalid_argument("scale_rows: scale must be rows(x) x 1");
    Tensor out = make_output(x.rows(), x.cols(), needs_grad(x, s));
    const std::size_t n = x.rows(), c = x.cols();
    for (std::size_t i = 0; i < n; ++i) {
      const double si = s.node_->value[i];
      for (std::size_t j = 0; j < c; ++j)
        out.node_->value[i * c + j] = x.node_->value[i * c + j] * si;
    }
    if (out.requires_grad()) {
      record([xn = x.node_, sn = s.node_, on = out.node_, n, c] {
        if (xn->requires_grad)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j)
              xn->grad[i * c + j] += on->grad[i * c + j] * sn->value[i];
        if (sn->requires_grad)
          for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j)
              acc += on->grad[i * c + j] * xn->value[i * c + j];
            sn->grad[i] += acc;
          }
      });
    }
    return out;
  }

  Tensor scale(const Tensor& x, double c) {
    return unary(x, [c](double v) { return c * v; },
                 [c](double, double) { return c; });
  }

  Tensor relu(const Tensor& x) {
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
  }

  Tensor elu(const Tensor& x, double alpha = 1.0) {
    return unary(x, [alpha](double v) { return v > 0.0 ? v : alpha * (std::exp(v) - 1.0); },
                 [alpha](double v, double y) { return v > 0.0 ? 1.0 : y + alpha; });
  }

  Tensor leaky_relu(const Tensor& x, double alpha) {
    return unary(x, [alpha](double v) { return v > 0.0 ? v : alpha * v; },
                 [alpha](double v, double) { return v > 0.0 ? 1.0 : alpha; });
  }

  Tensor exp(const Tensor& x) {
    return unary(x, [](double v) { return std::exp(v); },
                 [](double, double y) { return y; });
  }

  /// Numerically stabilized softmax over each row.
  Tensor row_softmax(const Tensor& x) {
    Tensor out = make_output(x.rows(), x.cols(), x.requires_grad());
    const std::size_t n = x.rows(), c = x.cols();
    if (c == 0) throw std::invalid_argument("row_softmax: empty rows");
    for (std::size_t i = 0; i < n; ++i) {
      const double* xr = x.node_->value.data() + i * c;
      double* yr = out.node_->value.data() + i * c;
      double mx = xr[0];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) sum += (yr[j] = std::exp(xr[j] - mx));
      for (std::size_t j = 0; j < c; ++j) yr[j] /= sum;
    }
    if (out.requires_grad()) {
      record([xn = x.node_, on = out.node_, n, c] {
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) {
          const double* y = on->value.data() + i * c;
          const double* dy = on->grad.data() + i * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
          double* dx = xn->grad.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
      });
    }
    return out;
  }

  Tensor transpose(const Tensor& x) {
    Tensor out = make_output(x.cols(), x.rows(), x.requires_grad());
    const std::size_t n = x.rows(), c = x.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out.node_->value[j * n + i] = x.node_->value[i * c + j];
    if (out.requires_grad()) {
      record([xn = x.node_, on = out.node_, n, c] {
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += on->grad[j * n + i];
      });
    }
    return out;
  }

  Tensor sum_all(const Tensor& x) {
    Tensor out = make_output(1, 1, x.requires_grad());
    double acc = 0.0;
    for (double v : x.node_->value) acc += v;
    out.node_->value[0] = acc;
    if (out.requires_grad()) {
      record([xn = x.node_, on = out.node_] {
        if (!xn->requires_grad) return;
        for (auto& g : xn->grad) g += on->grad[0];
      });
    }
    return out;
  }

  /// out row k = x row idx[k]; backward scatter-adds into gathered rows.
  Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
    for (int i : idx)
      if (i < 0 || static_cast<std::size_t>(i) >= x.rows())
        throw std::out_of_range("gather_rows: row index out of range");
    Tensor out = make_output(idx.size(), x.cols(), x.requires_grad());
    const std::size_t c = x.cols();
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < c; ++j)
        out.node_->value[k * c + j] = x.node_->value[idx[k] * c + j];
    if (out.requires_grad()) {
      record([xn = x.node_, on = out.node_, idx, c] {
        if (!xn->requires_grad) return;
        for (std::size_t k = 0; k < idx.size(); ++k)
          for (std::size_t j = 0; j < c; ++j)
            xn->grad[idx[k] * c + j] += on->grad[k * c + j];
      });
    }
    return out;
  }

  Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("concat_rows: column counts differ");
    Tensor out = make_output(a.rows() + b.rows(), a.cols(), needs_grad(a, b));
    auto& ov = out.node_->value;
    std::copy(a.node_->value.begin(), a.node_->value.end(), ov.begin());
    std::copy(b.node_->value.begin(), b.node_->value.end(), ov.begin() + a.size());
    if (out.requires_grad()) {
      record([an = a.node_, bn = b.node_, on = out.node_] {
        const std::size_t na = an->value.size();
        if (an->requires_grad)
          for (std::size_t i = 0; i < na; ++i) an->grad[i] += on->grad[i];
        if (bn->requires_grad)
          for (std::size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += on->grad[na + i];
      });
    }
    return out;
  }

  Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row counts differ");
    const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor out = make_output(n, ca + cb, needs_grad(a, b));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < ca; ++j)
        out.node_->value[i * (ca + cb) + j] = a.node_->value[i * ca + j];
      for (std::size_t j = 0; j < cb; ++j)
        out.node_->value[i * (ca + cb) + ca + j] = b.node_->value[i * cb + j];
    }
    if (out.requires_grad()) {
      record([an = a.node_, bn = b.node_, on = out.node_, n, ca, cb] {
        for (std::size_t i = 0; i < n; ++i) {
          if (an->requires_grad)
            for (std::size_t j = 0; j < ca; ++j)
              an->grad[i * ca + j] += on->grad[i * (ca + cb) + j];
          if (bn->requires_grad)
            for (std::size_t j = 0; j < cb; ++j)
              bn->grad[i * cb + j] += on->grad[i * (ca + cb) + ca + j];
        }
      });
    }
    return out;
  }

  /// Row s of the output is the mean of value rows with segment id s;
  /// empty segments produce zero rows.
  Tensor segment_mean(const Tensor& values, const std::vector<int>& segments,
                      std::size_t num_segments) {
    check_segments(values, segments, num_segments, "segment_mean");
    Tensor out = make_output(num_segments, values.cols(), values.requires_grad());
    const std::size_t c = values.cols();
    std::vector<double> count(num_segments, 0.0);
    for (std::size_t i = 0; i < segments.size(); ++i) {
      count[segments[i]] += 1.0;
      for (std::size_t j = 0; j < c; ++j)
        out.node_->value[segments[i] * c + j] += values.node_->value[i * c + j];
    }
    for (std::size_t s = 0; s < num_segments; ++s)
      if (count[s] > 0.0)
        for (std::size_t j = 0; j < c; ++j) out.node_->value[s * c + j] /= count[s];
    if (out.requires_grad()) {
      record([vn = values.node_, on = out.node_, segments, count, c] {
        if (!vn->requires_grad) return;
        for (std::size_t i = 0; i < segments.size(); ++i) {
          const double inv = 1.0 / count[segments[i]];
          for (std::size_t j = 0; j < c; ++j)
            vn->grad[i * c + j] += on->grad[segments[i] * c + j] * inv;
        }
      });
    }
    return out;
  }

  Tensor segment_sum(const Tensor& values, const std::vector<int>& segments,
                     std::size_t num_segments) {
    check_segments(values, segments, num_segments, "segment_sum");
    Tensor out = make_output(num_segments, values.cols(), values.requires_grad());
    const std::size_t c = values.cols();
    for (std::size_t i = 0; i < segments.size(); ++i)
      for (std::size_t j = 0; j < c; ++j)
        out.node_->value[segments[i] * c + j] += values.node_->value[i * c + j];
    if (out.requires_grad()) {
      record([vn = values.node_, on = out.node_, segments, c] {
        if (!vn->requires_grad) return;
        for (std::size_t i = 0; i < segments.size(); ++i)
          for (std::size_t j = 0; j < c; ++j)
            vn->grad[i * c + j] += on->grad[segments[i] * c + j];
      });
    }
    return out;
  }

  /// Softmax across the rows of each segment, independently per column;
  /// stabilized by per-segment max subtraction. Output has one row per input row.
  Tensor segment_softmax(const Tensor& values, const std::vector<int>& segments,
                         std::size_t num_segments) {
    check_segments(values, segments, num_segments, "segment_softmax");
    const std::size_t n = values.rows(), c = values.cols();
    Tensor out = make_output(n, c, values.requires_grad());
    std::vector<double> mx(num_segments * c, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j)
        mx[segments[i] * c + j] =
            std::max(mx[segments[i] * c + j], values.node_->value[i * c + j]);
    std::vector<double> denom(num_segments * c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double e = std::exp(values.node_->value[i * c + j] - mx[segments[i] * c + j]);
        out.node_->value[i * c + j] = e;
        denom[segments[i] * c + j] += e;
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out.node_->value[i * c + j] /= denom[segments[i] * c + j];
    if (out.requires_grad()) {
      record([vn = values.node_, on = out.node_, segments, num_segments, n, c] {
        if (!vn->requires_grad) return;
        std::vector<double> dot(num_segments * c, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j)
            dot[segments[i] * c + j] += on->grad[i * c + j] * on->value[i * c + j];
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j)
            vn->grad[i * c + j] += on->value[i * c + j] *
                                   (on->grad[i * c + j] - dot[segments[i] * c + j]);
      });
    }
    return out;
  }

  /// Mean over the batch of w[label_i] * (-log softmax(logits_i)[label_i]).
  Tensor weighted_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                const std::array<double, 2>& class_weights) {
    if (logits.cols() != 2) throw std::invalid_argument("weighted_cross_entropy: logits must be b x 2");
    if (labels.size() != logits.rows())
      throw std::invalid_argument("weighted_cross_entropy: label count != batch size");
    for (int l : labels)
      if (l != 0 && l != 1) throw std::out_of_range("weighted_cross_entropy: label out of range");
    if (class_weights[0] <= 0.0 || class_weights[1] <= 0.0)
      throw std::invalid_argument("weighted_cross_entropy: class weights must be positive");
    const std::size_t b = logits.rows();
    Tensor out = make_output(1, 1, logits.requires_grad());
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const double z0 = logits.node_->value[i * 2], z1 = logits.node_->value[i * 2 + 1];
      const double m = std::max(z0, z1);
      const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
      const double logp = logits.node_->value[i * 2 + labels[i]] - lse;
      loss += class_weights[labels[i]] * (-logp);
    }
    out.node_->value[0] = loss / static_cast<double>(b);
    if (out.requires_grad()) {
      record([ln = logits.node_, on = out.node_, labels, class_weights, b] {
        if (!ln->requires_grad) return;
        const double d = on->grad[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
          const double z0 = ln->value[i * 2], z1 = ln->value[i * 2 + 1];
          const double m = std::max(z0, z1);
          const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
          const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
          const double w = class_weights[labels[i]] * d;
          ln->grad[i * 2] += w * (p0 - (labels[i] == 0 ? 1.0 : 0.0));
          ln->grad[i * 2 + 1] += w * (p1 - (labels[i] == 1 ? 1.0 : 0.0));
        }
      });
    }
    return out;
  }

 private:
  static bool needs_grad(const Tensor& a, const Tensor& b) {
    return a.requires_grad() || b.requires_grad();
  }

  static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw std::invalid_argument(std::string(op) + ": shapes differ");
  }

  static void check_segments(const Tensor& values, const std::vector<int>& segments,
                             std::size_t num_segments, const char* op) {
    if (segments.size() != values.rows())
      throw std::invalid_argument(std::string(op) + ": one segment id per row required");
    for (int s : segments)
      if (s < 0 || static_cast<std::size_t>(s) >= num_segments)
        throw std::out_of_range(std::string(op) + ": segment id out of range");
  }

  Tensor make_output(std::size_t rows, std::size_t cols, bool requires_grad) {
    Tensor t(Matrix(rows, cols), requires_grad);
    return t;
  }

  template <typename F, typename DF>
  Tensor unary(const Tensor& x, F f, DF df) {
    Tensor out = make_output(x.rows(), x.cols(), x.requires_grad());
    for (std::size_t i = 0; i < x.size(); ++i) out.node_->value[i] = f(x.node_->value[i]);
    if (out.requires_grad()) {
      record([xn = x.node_, on = out.node_, df] {
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < xn->value.size(); ++i)
          xn->grad[i] += on->grad[i] * df(xn->value[i], on->value[i]);
      });
    }
    return out;
  }

  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  std::vector<std::function<void()>> ops_;
};

}  // namespace hetsmcg::numkit
