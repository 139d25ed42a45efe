#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gcsa/tensor.hpp"

namespace gcsa {

// Reverse-mode gradient tape over Tensor<T>. Each op records its output value
// and a backward closure; backward() replays the closures in reverse order of
// recording and accumulates gradients additively into every node that
// requires them. One tape per forward pass; tapes are independent and may run
// on separate threads.
template <typename T>
class Tape {
 public:
  struct Node {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  // Backward closures capture this; the tape must stay put.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  // Leaf without gradient (data, masks, labels).
  Node constant(Tensor<T> v) { return push(std::move(v), false); }

  // Leaf with gradient (parameters, probed inputs).
  Node leaf(Tensor<T> v) { return push(std::move(v), true); }

  const Tensor<T>& value(Node n) const { return vals_[n.id]; }
  const Tensor<T>& grad(Node n) const { return grads_[n.id]; }
  bool needs_grad(Node n) const { return needs_[n.id]; }

  // Seeds d(out)/d(out) = 1 for a 1x1 node and replays the tape backward.
  void backward(Node out) {
    if (vals_[out.id].rows != 1 || vals_[out.id].cols != 1)
      throw ShapeError("backward: output must be scalar, got " + vals_[out.id].shape_str());
    grads_[out.id].at(0, 0) = T(1);
    for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) (*it)();
  }

  // ---- primitive ops -------------------------------------------------------

  Node matmul(Node a, Node b) {
    const Tensor<T>&va = vals_[a.id], &vb = vals_[b.id];
    Node out = push(matmul_plain(va, vb), needs_[a.id] || needs_[b.id]);
    if (needs_[out.id]) {
      record([this, a, b, out] {
        const Tensor<T>& g = grads_[out.id];
        if (needs_[a.id]) accumulate(a, matmul_plain(g, transpose_plain(vals_[b.id])));
        if (needs_[b.id]) accumulate(b, matmul_plain(transpose_plain(vals_[a.id]), g));
      });
    }
    return out;
  }

  Node transpose(Node a) {
    Node out = push(transpose_plain(vals_[a.id]), needs_[a.id]);
    if (needs_[out.id]) {
      record([this, a, out] { accumulate(a, transpose_plain(grads_[out.id])); });
    }
    return out;
  }

  Node add(Node a, Node b) { return binary(a, b, "add",
      [](T x, T y) { return x + y; },
      [](T, T, T g) { return g; },
      [](T, T, T g) { return g; }); }

  Node sub(Node a, Node b) { return binary(a, b, "sub",
      [](T x, T y) { return x - y; },
      [](T, T, T g) { return g; },
      [](T, T, T g) { return -g; }); }

  Node mul(Node a, Node b) { return binary(a, b, "mul",
      [](T x, T y) { return x * y; },
      [](T, T y, T g) { return g * y; },
      [](T x, T, T g) { return g * x; }); }

  // a / (b + eps); eps keeps empty histogram bins harmless.
  Node div_eps(Node a, Node b, T eps) { return binary(a, b, "div_eps",
      [eps](T x, T y) { return x / (y + eps); },
      [eps](T, T y, T g) { return g / (y + eps); },
      [eps](T x, T y, T g) { T d = y + eps; return -g * x / (d * d); }); }

  // k * a + c elementwise.
  Node affine(Node a, T k, T c) {
    const Tensor<T>& va = vals_[a.id];
    Tensor<T> out(va.rows, va.cols);
    for (size_t i = 0; i < va.size(); ++i) out.data[i] = k * va.data[i] + c;
    Node o = push(std::move(out), needs_[a.id]);
    if (needs_[o.id]) {
      record([this, a, o, k] {
        const Tensor<T>& g = grads_[o.id];
        Tensor<T> da(g.rows, g.cols);
        for (size_t i = 0; i < g.size(); ++i) da.data[i] = k * g.data[i];
        accumulate(a, da);
      });
    }
    return o;
  }

  Node relu(Node a) {
    const Tensor<T>& va = vals_[a.id];
    Tensor<T> out(va.rows, va.cols);
    for (size_t i = 0; i < va.size(); ++i) out.data[i] = va.data[i] > T(0) ? va.data[i] : T(0);
    Node o = push(std::move(out), needs_[a.id]);
    if (needs_[o.id]) {
      record([this, a, o] {
        const Tensor<T>& g = grads_[o.id];
        const Tensor<T>& x = vals_[a.id];
        Tensor<T> da(g.rows, g.cols);
        for (size_t i = 0; i < g.size(); ++i) da.data[i] = x.data[i] > T(0) ? g.data[i] : T(0);
        accumulate(a, da);
      });
    }
    return o;
  }

  // Exact Gaussian-CDF GELU: x * Phi(x).
  Node gelu(Node a) {
    const Tensor<T>& va = vals_[a.id];
    Tensor<T> out(va.rows, va.cols);
    for (size_t i = 0; i < va.size(); ++i) {
      double x = static_cast<double>(va.data[i]);
      out.data[i] = static_cast<T>(x * gauss_cdf(x));
    }
    Node o = push(std::move(out), needs_[a.id]);
    if (needs_[o.id]) {
      record([this, a, o] {
        const Tensor<T>& g = grads_[o.id];
        const Tensor<T>& x = vals_[a.id];
        Tensor<T> da(g.rows, g.cols);
        for (size_t i = 0; i < g.size(); ++i) {
          double xi = static_cast<double>(x.data[i]);
          double d = gauss_cdf(xi) + xi * gauss_pdf(xi);
          da.data[i] = static_cast<T>(static_cast<double>(g.data[i]) * d);
        }
        accumulate(a, da);
      });
    }
    return o;
  }

  // Row-wise softmax with max subtraction.
  Node softmax_rows(Node a) {
    const Tensor<T>& va = vals_[a.id];
    Tensor<T> out(va.rows, va.cols);
    for (int r = 0; r < va.rows; ++r) {
      T mx = va.at(r, 0);
      for (int c = 1; c < va.cols; ++c) mx = std::max(mx, va.at(r, c));
      double sum = 0;
      for (int c = 0; c < va.cols; ++c) {
        double e = std::exp(static_cast<double>(va.at(r, c) - mx));
        out.at(r, c) = static_cast<T>(e);
        sum += e;
      }
      for (int c = 0; c < va.cols; ++c) out.at(r, c) = static_cast<T>(out.at(r, c) / sum);
    }
    Node o = push(std::move(out), needs_[a.id]);
    if (needs_[o.id]) {
      record([this, a, o] {
        const Tensor<T>& g = grads_[o.id];
        const Tensor<T>& y = vals_[o.id];
        Tensor<T> da(g.rows, g.cols);
        for (int r = 0; r < g.rows; ++r) {
          double dot = 0;
          for (int c = 0; c < g.cols; ++c)
            dot += static_cast<double>(g.at(r, c)) * static_cast<double>(y.at(r, c));
          for (int c = 0; c < g.cols; ++c)
            da.at(r, c) = static_cast<T>(static_cast<double>(y.at(r, c)) *
                                         (static_cast<double>(g.at(r, c)) - dot));
        }
        accumulate(a, da);
      });
    }
    return o;
  }

  // Per-row layer normalization with learned gain/bias (1xC each).
  Node layer_norm_rows(Node x, Node gain, Node bias) {
    const Tensor<T>& vx = vals_[x.id];
    const Tensor<T>& vg = vals_[gain.id];
    const Tensor<T>& vb = vals_[bias.id];
    if (vg.rows != 1 || vb.rows != 1 || vg.cols != vx.cols || vb.cols != vx.cols)
      throw ShapeError("layer_norm_rows: gain/bias must be 1x" + std::to_string(vx.cols) +
                       ", got " + vg.shape_str() + " and " + vb.shape_str());
    if (vx.cols < 2) throw ShapeError("layer_norm_rows: need at least 2 features");
    const T eps = static_cast<T>(kLayerNormEps);
    Tensor<T> out(vx.rows, vx.cols);
    for (int r = 0; r < vx.rows; ++r) {
      double mean = 0;
      for (int c = 0; c < vx.cols; ++c) mean += vx.at(r, c);
      mean /= vx.cols;
      double var = 0;
      for (int c = 0; c < vx.cols; ++c) {
        double d = vx.at(r, c) - mean;
        var += d * d;
      }
      var /= vx.cols;
      double inv = 1.0 / std::sqrt(var + eps);
      for (int c = 0; c < vx.cols; ++c)
        out.at(r, c) = static_cast<T>(vg.at(0, c) * ((vx.at(r, c) - mean) * inv) + vb.at(0, c));
    }
    Node o = push(std::move(out), needs_[x.id] || needs_[gain.id] || needs_[bias.id]);
    if (needs_[o.id]) {
      record([this, x, gain, bias, o, eps] {
        const Tensor<T>& g = grads_[o.id];
        const Tensor<T>& vx = vals_[x.id];
        const Tensor<T>& vg = vals_[gain.id];
        int n = vx.cols;
        Tensor<T> dx(vx.rows, n), dgain(1, n), dbias(1, n);
        for (int r = 0; r < vx.rows; ++r) {
          double mean = 0;
          for (int c = 0; c < n; ++c) mean += vx.at(r, c);
          mean /= n;
          double var = 0;
          for (int c = 0; c < n; ++c) {
            double d = vx.at(r, c) - mean;
            var += d * d;
          }
          var /= n;
          double inv = 1.0 / std::sqrt(var + eps);
          // xhat and the two row means the gradient needs.
          double m1 = 0, m2 = 0;
          std::vector<double> xhat(n), dxh(n);
          for (int c = 0; c < n; ++c) {
            xhat[c] = (vx.at(r, c) - mean) * inv;
            dxh[c] = static_cast<double>(g.at(r, c)) * static_cast<double>(vg.at(0, c));
            m1 += dxh[c];
            m2 += dxh[c] * xhat[c];
          }
          m1 /= n;
          m2 /= n;
          for (int c = 0; c < n; ++c) {
            dx.at(r, c) = static_cast<T>(inv * (dxh[c] - m1 - xhat[c] * m2));
            dgain.at(0, c) += static_cast<T>(static_cast<double>(g.at(r, c)) * xhat[c]);
            dbias.at(0, c) += g.at(r, c);
          }
        }
        if (needs_[x.id]) accumulate(x, dx);
        if (needs_[gain.id]) accumulate(gain, dgain);
        if (needs_[bias.id]) accumulate(bias, dbias);
      });
    }
    return o;
  }

  // Row-wise L2 normalization. Rows with norm <= kNormEps map to zero rows
  // with zero gradient.
  Node l2_normalize_rows(Node a) {
    const Tensor<T>& va = vals_[a.id];
    Tensor<T> out(va.rows, va.cols);
    for (int r = 0; r < va.rows; ++r) {
      double n = 0;
      for (int c = 0; c < va.cols; ++c) n += static_cast<double>(va.at(r, c)) * va.at(r, c);
      n = std::sqrt(n);
      if (n <= kNormEps) continue;
      for (int c = 0; c < va.cols; ++c) out.at(r, c) = static_cast<T>(va.at(r, c) / n);
    }
    Node o = push(std::move(out), needs_[a.id]);
    if (needs_[o.id]) {
      record([this, a, o] {
        const Tensor<T>& g = grads_[o.id];
        const Tensor<T>& x = vals_[a.id];
        const Tensor<T>& y = vals_[o.id];
        Tensor<T> da(x.rows, x.cols);
        for (int r = 0; r < x.rows; ++r) {
          double n = 0;
          for (int c = 0; c < x.cols; ++c) n += static_cast<double>(x.at(r, c)) * x.at(r, c);
          n = std::sqrt(n);
          if (n <= kNormEps) continue;
          double dot = 0;
          for (int c = 0; c < x.cols; ++c)
            dot += static_cast<double>(g.at(r, c)) * static_cast<double>(y.at(r, c));
          for (int c = 0; c < x.cols; ++c)
            da.at(r, c) = static_cast<T>((static_cast<double>(g.at(r, c)) -
                                          dot * static_cast<double>(y.at(r, c))) / n);
        }
        accumulate(a, da);
      });
    }
    return o;
  }

  Node concat_cols(const std::vector<Node>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty input");
    int rows = vals_[parts[0].id].rows;
    int cols = 0;
    bool ng = false;
    for (Node p : parts) {
      if (vals_[p.id].rows != rows)
        throw ShapeError("concat_cols: row mismatch " + vals_[parts[0].id].shape_str() +
                         " vs " + vals_[p.id].shape_str());
      cols += vals_[p.id].cols;
      ng = ng || needs_[p.id];
    }
    Tensor<T> out(rows, cols);
    int off = 0;
    for (Node p : parts) {
      const Tensor<T>& v = vals_[p.id];
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < v.cols; ++c) out.at(r, off + c) = v.at(r, c);
      off += v.cols;
    }
    Node o = push(std::move(out), ng);
    if (ng) {
      record([this, parts, o] {
        const Tensor<T>& g = grads_[o.id];
        int off = 0;
        for (Node p : parts) {
          const Tensor<T>& v = vals_[p.id];
          if (needs_[p.id]) {
            Tensor<T> dp(v.rows, v.cols);
            for (int r = 0; r < v.rows; ++r)
              for (int c = 0; c < v.cols; ++c) dp.at(r, c) = g.at(r, off + c);
            accumulate(p, dp);
          }
          off += v.cols;
        }
      });
    }
    return o;
  }

  Node slice_cols(Node a, int c0, int c1) {
    const Tensor<T>& va = vals_[a.id];
    if (c0 < 0 || c1 > va.cols || c0 >= c1)
      throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                       ") out of " + va.shape_str());
    Tensor<T> out(va.rows, c1 - c0);
    for (int r = 0; r < va.rows; ++r)
      for (int c = c0; c < c1; ++c) out.at(r, c - c0) = va.at(r, c);
    Node o = push(std::move(out), needs_[a.id]);
    if (needs_[o.id]) {
      record([this, a, o, c0] {
        const Tensor<T>& g = grads_[o.id];
        Tensor<T> da(vals_[a.id].rows, vals_[a.id].cols);
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) da.at(r, c0 + c) = g.at(r, c);
        accumulate(a, da);
      });
    }
    return o;
  }

  Node slice_rows(Node a, int r0, int r1) {
    const Tensor<T>& va = vals_[a.id];
    if (r0 < 0 || r1 > va.rows || r0 >= r1)
      throw ShapeError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                       ") out of " + va.shape_str());
    Tensor<T> out(r1 - r0, va.cols);
    for (int r = r0; r < r1; ++r)
      for (int c = 0; c < va.cols; ++c) out.at(r - r0, c) = va.at(r, c);
    Node o = push(std::move(out), needs_[a.id]);
    if (needs_[o.id]) {
      record([this, a, o, r0] {
        const Tensor<T>& g = grads_[o.id];
        Tensor<T> da(vals_[a.id].rows, vals_[a.id].cols);
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) da.at(r0 + r, c) = g.at(r, c);
        accumulate(a, da);
      });
    }
    return o;
  }

  // x + broadcast row bias b (1xC).
  Node add_row_bias(Node x, Node b) {
    const Tensor<T>& vx = vals_[x.id];
    const Tensor<T>& vb = vals_[b.id];
    if (vb.rows != 1 || vb.cols != vx.cols)
      throw ShapeError("add_row_bias: bias " + vb.shape_str() + " for " + vx.shape_str());
    Tensor<T> out = vx;
    for (int r = 0; r < vx.rows; ++r)
      for (int c = 0; c < vx.cols; ++c) out.at(r, c) += vb.at(0, c);
    Node o = push(std::move(out), needs_[x.id] || needs_[b.id]);
    if (needs_[o.id]) {
      record([this, x, b, o] {
        const Tensor<T>& g = grads_[o.id];
        if (needs_[x.id]) accumulate(x, g);
        if (needs_[b.id]) {
          Tensor<T> db(1, g.cols);
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) db.at(0, c) += g.at(r, c);
          accumulate(b, db);
        }
      });
    }
    return o;
  }

  Node sum_all(Node a) {
    const Tensor<T>& va = vals_[a.id];
    double s = 0;
    for (T x : va.data) s += x;
    Tensor<T> out(1, 1);
    out.at(0, 0) = static_cast<T>(s);
    Node o = push(std::move(out), needs_[a.id]);
    if (needs_[o.id]) {
      record([this, a, o] {
        T g = grads_[o.id].at(0, 0);
        accumulate(a, Tensor<T>::full(vals_[a.id].rows, vals_[a.id].cols, g));
      });
    }
    return o;
  }

  // Soft histogram assignment for the quantized AP loss. scores is Kx1 with
  // entries in [-1, 1]; output is MxK where row m holds the triangular-kernel
  // weight of each score for bin center c_m = 1 - 2m/(M-1) (descending),
  // kernel width 2*delta with delta = 2/(M-1).
  Node triangular_bins(Node scores, int bins) {
    const Tensor<T>& vs = vals_[scores.id];
    if (vs.cols != 1) throw ShapeError("triangular_bins: scores must be Kx1, got " + vs.shape_str());
    if (bins < 2) throw ConfigError("triangular_bins: need at least 2 bins");
    const double delta = 2.0 / (bins - 1);
    Tensor<T> out(bins, vs.rows);
    for (int m = 0; m < bins; ++m) {
      double center = 1.0 - delta * m;
      for (int k = 0; k < vs.rows; ++k) {
        double w = 1.0 - std::abs(static_cast<double>(vs.at(k, 0)) - center) / delta;
        out.at(m, k) = static_cast<T>(w > 0 ? w : 0);
      }
    }
    Node o = push(std::move(out), needs_[scores.id]);
    if (needs_[o.id]) {
      record([this, scores, o, bins, delta] {
        const Tensor<T>& g = grads_[o.id];
        const Tensor<T>& vs = vals_[scores.id];
        Tensor<T> ds(vs.rows, 1);
        for (int m = 0; m < bins; ++m) {
          double center = 1.0 - delta * m;
          for (int k = 0; k < vs.rows; ++k) {
            double d = static_cast<double>(vs.at(k, 0)) - center;
            if (std::abs(d) >= delta || d == 0) continue;
            double slope = (d > 0 ? -1.0 : 1.0) / delta;
            ds.at(k, 0) += static_cast<T>(static_cast<double>(g.at(m, k)) * slope);
          }
        }
        accumulate(scores, ds);
      });
    }
    return o;
  }

  size_t node_count() const { return vals_.size(); }

 private:
  static double gauss_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }
  static double gauss_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

  Node push(Tensor<T> v, bool needs_grad) {
    Node n{static_cast<int>(vals_.size())};
    grads_.emplace_back(v.rows, v.cols);
    vals_.push_back(std::move(v));
    needs_.push_back(needs_grad);
    return n;
  }

  void record(std::function<void()> back) { recs_.push_back(std::move(back)); }

  void accumulate(Node n, const Tensor<T>& g) {
    Tensor<T>& dst = grads_[n.id];
    check_same_shape(dst, g, "grad accumulate");
    for (size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
  }

  template <typename FwdFn, typename DaFn, typename DbFn>
  Node binary(Node a, Node b, const char* name, FwdFn fwd, DaFn dfa, DbFn dfb) {
    const Tensor<T>&va = vals_[a.id], &vb = vals_[b.id];
    if (!va.same_shape(vb))
      throw ShapeError(std::string(name) + ": shape mismatch " + va.shape_str() + " vs " +
                       vb.shape_str());
    Tensor<T> out(va.rows, va.cols);
    for (size_t i = 0; i < va.size(); ++i) out.data[i] = fwd(va.data[i], vb.data[i]);
    Node o = push(std::move(out), needs_[a.id] || needs_[b.id]);
    if (needs_[o.id]) {
      record([this, a, b, o, dfa, dfb] {
        const Tensor<T>& g = grads_[o.id];
        const Tensor<T>&va = vals_[a.id], &vb = vals_[b.id];
        if (needs_[a.id]) {
          Tensor<T> da(g.rows, g.cols);
          for (size_t i = 0; i < g.size(); ++i) da.data[i] = dfa(va.data[i], vb.data[i], g.data[i]);
          accumulate(a, da);
        }
        if (needs_[b.id]) {
          Tensor<T> db(g.rows, g.cols);
          for (size_t i = 0; i < g.size(); ++i) db.data[i] = dfb(va.data[i], vb.data[i], g.data[i]);
          accumulate(b, db);
        }
      });
    }
    return o;
  }

  std::vector<Tensor<T>> vals_;
  std::vector<Tensor<T>> grads_;
  std::vector<bool> needs_;
  std::vector<std::function<void()>> recs_;
};

}  // namespace gcsa
