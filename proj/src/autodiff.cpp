#include "qprune/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qprune/errors.hpp"

namespace qprune {

Var Graph::push(Tensor value, std::string name, bool requires_grad,
                std::function<void(Graph&, std::size_t)> backward) {
  backward_done_ = false;
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(name), requires_grad, std::move(backward)});
  return Var{nodes_.size() - 1};
}

Graph::Node& Graph::node(Var v) {
  if (v.id >= nodes_.size()) throw StateError("variable does not belong to this graph");
  return nodes_[v.id];
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw StateError("variable does not belong to this graph");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

const Tensor& Graph::grad(Var v) const {
  if (!backward_done_) throw StateError("gradients requested before backward pass");
  return node(v).grad;
}

const std::string& Graph::name(Var v) const { return node(v).name; }

Var Graph::parameter(Tensor value, std::string name) {
  return push(std::move(value), std::move(name), true, nullptr);
}

Var Graph::constant(Tensor value, std::string name) {
  return push(std::move(value), std::move(name), false, nullptr);
}

Var Graph::conv2d(Var x, Var weight, const Var* bias, std::size_t stride, std::size_t padding,
                  std::string name) {
  const Tensor& in = value(x);
  const Tensor& w = value(weight);
  if (in.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv2d expects rank-4 input and weight, got " + shape_to_string(in.shape()) + " and " +
                     shape_to_string(w.shape()));
  }
  if (stride == 0) throw ArgumentError("conv2d stride must be >= 1");
  const std::size_t n = in.dim(0), cin = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin || kh > h + 2 * padding || kw > wd + 2 * padding) {
    throw ShapeError("conv2d shape mismatch: input " + shape_to_string(in.shape()) + " vs weight " +
                     shape_to_string(w.shape()) + " (padding " + std::to_string(padding) + ")");
  }
  if (bias && (value(*bias).rank() != 1 || value(*bias).dim(0) != cout)) {
    throw ShapeError("conv2d bias " + shape_to_string(value(*bias).shape()) + " vs weight " +
                     shape_to_string(w.shape()));
  }
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (wd + 2 * padding - kw) / stride + 1;
  Tensor out(Shape{n, cout, oh, ow});

  // im2col: one [Cin*kh*kw, oh*ow] patch matrix per sample.
  const std::size_t patch = cin * kh * kw, pixels = oh * ow;
  auto im2col = [=](const double* src, std::vector<double>& col) {
    col.assign(patch * pixels, 0.0);
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          double* row = col.data() + ((ci * kh + ky) * kw + kx) * pixels;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::size_t iy = oy * stride + ky;
            if (iy < padding || iy >= h + padding) continue;
            const double* in_row = src + (ci * h + (iy - padding)) * wd;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::size_t ix = ox * stride + kx;
              if (ix >= padding && ix < wd + padding) row[oy * ow + ox] = in_row[ix - padding];
            }
          }
        }
  };
  auto col2im = [=](const std::vector<double>& col, double* dst) {
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double* row = col.data() + ((ci * kh + ky) * kw + kx) * pixels;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::size_t iy = oy * stride + ky;
            if (iy < padding || iy >= h + padding) continue;
            double* in_row = dst + (ci * h + (iy - padding)) * wd;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::size_t ix = ox * stride + kx;
              if (ix >= padding && ix < wd + padding) in_row[ix - padding] += row[oy * ow + ox];
            }
          }
        }
  };

  {
    std::vector<double> col;
    const double* wv = w.data().data();
    for (std::size_t b = 0; b < n; ++b) {
      im2col(in.data().data() + b * cin * h * wd, col);
      double* ob = out.data().data() + b * cout * pixels;
      for (std::size_t co = 0; co < cout; ++co) {
        double* orow = ob + co * pixels;
        if (bias) std::fill_n(orow, pixels, value(*bias)[co]);
        for (std::size_t k = 0; k < patch; ++k) {
          const double wk = wv[co * patch + k];
          const double* crow = col.data() + k * pixels;
          for (std::size_t p = 0; p < pixels; ++p) orow[p] += wk * crow[p];
        }
      }
    }
  }

  const std::size_t xi = x.id, wid = weight.id;
  const std::size_t bid = bias ? bias->id : std::numeric_limits<std::size_t>::max();
  return push(std::move(out), std::move(name), true, [=](Graph& g, std::size_t self) {
    const double* go = g.nodes_[self].grad.data().data();
    const double* ind = g.nodes_[xi].value.data().data();
    const double* wv = g.nodes_[wid].value.data().data();
    double* gx = g.grad_of(xi).data().data();
    double* gw = g.grad_of(wid).data().data();
    std::vector<double> col, dcol;
    for (std::size_t b = 0; b < n; ++b) {
      im2col(ind + b * cin * h * wd, col);
      dcol.assign(patch * pixels, 0.0);
      const double* gb = go + b * cout * pixels;
      for (std::size_t co = 0; co < cout; ++co) {
        const double* grow = gb + co * pixels;
        for (std::size_t k = 0; k < patch; ++k) {
          const double* crow = col.data() + k * pixels;
          double* drow = dcol.data() + k * pixels;
          const double wk = wv[co * patch + k];
          double acc = 0.0;
          for (std::size_t p = 0; p < pixels; ++p) {
            acc += grow[p] * crow[p];
            drow[p] += wk * grow[p];
          }
          gw[co * patch + k] += acc;
        }
      }
      col2im(dcol, gx + b * cin * h * wd);
    }
    if (bid != std::numeric_limits<std::size_t>::max()) {
      double* gbias = g.grad_of(bid).data().data();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t co = 0; co < cout; ++co) {
          const double* p = go + (b * cout + co) * pixels;
          double acc = 0.0;
          for (std::size_t j = 0; j < pixels; ++j) acc += p[j];
          gbias[co] += acc;
        }
    }
  });
}

Var Graph::dense(Var x, Var weight, const Var* bias, std::string name) {
  const Tensor& in = value(x);
  const Tensor& w = value(weight);
  if (in.rank() != 2 || w.rank() != 2 || in.dim(1) != w.dim(1)) {
    throw ShapeError("dense shape mismatch: input " + shape_to_string(in.shape()) + " vs weight " +
                     shape_to_string(w.shape()));
  }
  const std::size_t n = in.dim(0), d = in.dim(1), o = w.dim(0);
  if (bias && (value(*bias).rank() != 1 || value(*bias).dim(0) != o)) {
    throw ShapeError("dense bias " + shape_to_string(value(*bias).shape()) + " vs weight " +
                     shape_to_string(w.shape()));
  }
  Tensor out(Shape{n, o});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < o; ++j) {
      double acc = bias ? value(*bias)[j] : 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += in[b * d + k] * w[j * d + k];
      out[b * o + j] = acc;
    }
  const std::size_t xi = x.id, wid = weight.id;
  const std::size_t bid = bias ? bias->id : std::numeric_limits<std::size_t>::max();
  return push(std::move(out), std::move(name), true, [=](Graph& g, std::size_t self) {
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& inv = g.nodes_[xi].value;
    const Tensor& wv = g.nodes_[wid].value;
    Tensor& gx = g.grad_of(xi);
    Tensor& gw = g.grad_of(wid);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t j = 0; j < o; ++j) {
        const double gj = go[b * o + j];
        for (std::size_t k = 0; k < d; ++k) {
          gx[b * d + k] += gj * wv[j * d + k];
          gw[j * d + k] += gj * inv[b * d + k];
        }
      }
    if (bid != std::numeric_limits<std::size_t>::max()) {
      Tensor& gb = g.grad_of(bid);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t j = 0; j < o; ++j) gb[j] += go[b * o + j];
    }
  });
}

Var Graph::relu(Var x, std::string name) {
  Tensor out = value(x);
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t xi = x.id;
  return push(std::move(out), std::move(name), true, [=](Graph& g, std::size_t self) {
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& in = g.nodes_[xi].value;
    Tensor& gx = g.grad_of(xi);
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i] > 0.0) gx[i] += go[i];
  });
}

Var Graph::max_pool2d(Var x, std::size_t window, std::string name) {
  const Tensor& in = value(x);
  if (in.rank() != 4) throw ShapeError("max_pool2d expects rank-4 input, got " + shape_to_string(in.shape()));
  if (window == 0 || window > in.dim(2) || window > in.dim(3)) {
    throw ShapeError("max_pool2d window " + std::to_string(window) + " does not fit input " +
                     shape_to_string(in.shape()));
  }
  const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t oh = h / window, ow = w / window;
  Tensor out(Shape{n, c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (p * h + oy * window) * w + ox * window;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (p * h + oy * window + dy) * w + ox * window + dx;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = in[best];
        argmax[o] = best;
      }
  const std::size_t xi = x.id;
  return push(std::move(out), std::move(name), true,
              [xi, argmax = std::move(argmax)](Graph& g, std::size_t self) {
                const Tensor& go = g.nodes_[self].grad;
                Tensor& gx = g.grad_of(xi);
                for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += go[o];
              });
}

Var Graph::flatten(Var x, std::string name) {
  const Tensor& in = value(x);
  const std::size_t n = in.dim(0);
  Tensor out = in.reshaped(Shape{n, in.size() / n});
  const std::size_t xi = x.id;
  return push(std::move(out), std::move(name), true, [xi](Graph& g, std::size_t self) {
    const Tensor& go = g.nodes_[self].grad;
    Tensor& gx = g.grad_of(xi);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
  });
}

Var Graph::softmax_cross_entropy(Var logits, std::span<const int> labels, std::string name) {
  const Tensor& z = value(logits);
  if (z.rank() != 2) throw ShapeError("softmax_cross_entropy expects [N,K] logits, got " + shape_to_string(z.shape()));
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_to_string(z.shape()));
  }
  for (double v : z.values()) {
    if (!std::isfinite(v)) {
      const std::string& src = node(logits).name;
      throw NonFiniteError("non-finite logits produced by '" + src + "'", src);
    }
  }
  Tensor probs(Shape{n, k});
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= k) {
      throw ArgumentError("label " + std::to_string(labels[b]) + " out of range for " + std::to_string(k) +
                          " classes");
    }
    const double* row = z.data().data() + b * k;
    const std::size_t am = static_cast<std::size_t>(std::max_element(row, row + k) - row);
    const double mx = row[am];
    // log-sum-exp as mx + log1p(rest) keeps tiny losses representable.
    double rest = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (j != am) rest += std::exp(row[j] - mx);
    const double denom = 1.0 + rest;
    for (std::size_t j = 0; j < k; ++j) probs[b * k + j] = std::exp(row[j] - mx) / denom;
    total += (mx - row[static_cast<std::size_t>(labels[b])]) + std::log1p(rest);
  }
  const std::size_t zi = logits.id;
  std::vector<int> lab(labels.begin(), labels.end());
  return push(Tensor::scalar(total / static_cast<double>(n)), std::move(name), true,
              [zi, n, k, probs = std::move(probs), lab = std::move(lab)](Graph& g, std::size_t self) {
                const double scale = g.nodes_[self].grad[0] / static_cast<double>(n);
                Tensor& gz = g.grad_of(zi);
                for (std::size_t b = 0; b < n; ++b)
                  for (std::size_t j = 0; j < k; ++j) {
                    const double target = static_cast<std::size_t>(lab[b]) == j ? 1.0 : 0.0;
                    gz[b * k + j] += scale * (probs[b * k + j] - target);
                  }
              });
}

Var Graph::sum(Var x, std::string name) {
  double acc = 0.0;
  for (double v : value(x).values()) acc += v;
  const std::size_t xi = x.id;
  return push(Tensor::scalar(acc), std::move(name), true, [xi](Graph& g, std::size_t self) {
    const double s = g.nodes_[self].grad[0];
    for (auto& v : g.grad_of(xi).values()) v += s;
  });
}

Var Graph::half_squared_norm(Var x, std::string name) {
  double acc = 0.0;
  for (double v : value(x).values()) acc += v * v;
  const std::size_t xi = x.id;
  return push(Tensor::scalar(0.5 * acc), std::move(name), true, [xi](Graph& g, std::size_t self) {
    const double s = g.nodes_[self].grad[0];
    const Tensor& in = g.nodes_[xi].value;
    Tensor& gx = g.grad_of(xi);
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] += s * in[i];
  });
}

void Graph::backward(Var root, double seed) {
  if (nodes_.empty()) throw StateError("backward called before any forward computation");
  const Node& r = node(root);
  if (r.value.size() != 1) {
    throw StateError("backward root must be a scalar, got " + shape_to_string(r.value.shape()));
  }
  for (auto& nd : nodes_) nd.grad = Tensor(nd.value.shape(), 0.0);
  nodes_[root.id].grad[0] = seed;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
  backward_done_ = true;
}

}  // namespace qprune
