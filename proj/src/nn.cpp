#include "restorekit/nn.hpp"

#include <Eigen/Core>
#include <cmath>
#include <unordered_set>

#include "restorekit/error.hpp"
#include "restorekit/rng.hpp"

namespace restorekit::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

Var make_node(Tensor value, std::vector<Var> parents) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& p : parents) node->requires_grad = node->requires_grad || p->requires_grad;
  node->parents = std::move(parents);
  return node;
}

// Column matrix [Cin*k*k, H*W] for one sample, zero padding k/2.
void im2col(const double* x, int cin, int h, int w, int k, double* col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    const double* plane = x + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          double* dst = row + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill_n(dst, w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * w;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - pad;
            dst[xx] = (sx >= 0 && sx < w) ? src[sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int cin, int h, int w, int k, double* dx) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    double* plane = dx + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const double* src = row + static_cast<std::size_t>(y) * w;
          double* dst = plane + static_cast<std::size_t>(sy) * w;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - pad;
            if (sx >= 0 && sx < w) dst[sx] += src[xx];
          }
        }
      }
    }
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + "]";
}

Tensor stack_images(std::span<const Image* const> images) {
  require(!images.empty(), "stack_images: empty batch");
  const int h = images.front()->height();
  const int w = images.front()->width();
  Tensor t({static_cast<int>(images.size()), Image::kChannels, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i]->height() == h && images[i]->width() == w, "stack_images: ragged batch");
    std::copy(images[i]->values().begin(), images[i]->values().end(),
              t.sample(static_cast<int>(i)));
  }
  return t;
}

Tensor stack_images(std::span<const Image> images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const Image& im : images) ptrs.push_back(&im);
  return stack_images(std::span<const Image* const>(ptrs));
}

Image image_from_tensor(const Tensor& t, int n) {
  require(t.shape().c == Image::kChannels, "image_from_tensor: expected 3 channels");
  Image img(t.shape().h, t.shape().w);
  std::copy_n(t.sample(n), img.size(), img.values().begin());
  return img;
}

Tensor& Node::grad_buffer() {
  if (grad.numel() != value.numel()) grad = Tensor(value.shape());
  return grad;
}

Var constant(Tensor value) { return make_node(std::move(value), {}); }

Var parameter(Tensor value) {
  Var v = make_node(std::move(value), {});
  v->requires_grad = true;
  return v;
}

void backward(const Var& loss) {
  require(loss->value.numel() == 1, "backward: loss must be a scalar");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->grad_buffer().values()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.numel() == n->value.numel()) n->backward_fn(*n);
  }
}

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  require(ws.h == ws.w && ws.h % 2 == 1, "conv2d: kernel must be odd and square");
  require(ws.c == xs.c, "conv2d: input channels " + std::to_string(xs.c) + " vs weight " +
                            to_string(ws));
  require(bias->value.numel() == static_cast<std::size_t>(ws.n), "conv2d: bias size");
  const int k = ws.h;
  const int cout = ws.n;
  const int rows = xs.c * k * k;
  const int hw = xs.h * xs.w;

  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(xs.n) * rows * hw);
  Tensor out({xs.n, cout, xs.h, xs.w});
  ConstMatMap wm(weight->value.data(), cout, rows);
  Eigen::Map<const Eigen::VectorXd> bv(bias->value.data(), cout);
  for (int n = 0; n < xs.n; ++n) {
    double* col = cols->data() + static_cast<std::size_t>(n) * rows * hw;
    im2col(x->value.sample(n), xs.c, xs.h, xs.w, k, col);
    MatMap om(out.sample(n), cout, hw);
    om.noalias() = wm * ConstMatMap(col, rows, hw);
    om.colwise() += bv;
  }

  Var node = make_node(std::move(out), {x, weight, bias});
  node->backward_fn = [cols, xs, k, cout, rows, hw](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    ConstMatMap wm(wn.value.data(), cout, rows);
    RowMat dcol(rows, hw);
    for (int n = 0; n < xs.n; ++n) {
      ConstMatMap g(self.grad.sample(n), cout, hw);
      const double* col = cols->data() + static_cast<std::size_t>(n) * rows * hw;
      if (wn.requires_grad) {
        MatMap dw(wn.grad_buffer().data(), cout, rows);
        dw.noalias() += g * ConstMatMap(col, rows, hw).transpose();
      }
      if (bn.requires_grad) {
        Eigen::Map<Eigen::VectorXd> db(bn.grad_buffer().data(), cout);
        db += g.rowwise().sum();
      }
      if (xn.requires_grad) {
        dcol.noalias() = wm.transpose() * g;
        col2im_add(dcol.data(), xs.c, xs.h, xs.w, k, xn.grad_buffer().sample(n));
      }
    }
  };
  return node;
}

Var silu(const Var& x) {
  Tensor out(x->value.shape());
  auto in = x->value.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * sigmoid(in[i]);
  Var node = make_node(std::move(out), {x});
  node->backward_fn = [](Node& self) {
    Node& xn = *self.parents[0];
    auto in = xn.value.values();
    auto g = self.grad.values();
    auto dx = xn.grad_buffer().values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(in[i]);
      dx[i] += g[i] * s * (1.0 + in[i] * (1.0 - s));
    }
  };
  return node;
}

Var square(const Var& x) {
  Tensor out(x->value.shape());
  auto in = x->value.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * in[i];
  Var node = make_node(std::move(out), {x});
  node->backward_fn = [](Node& self) {
    Node& xn = *self.parents[0];
    auto in = xn.value.values();
    auto g = self.grad.values();
    auto dx = xn.grad_buffer().values();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += 2.0 * in[i] * g[i];
  };
  return node;
}

Var log1p(const Var& x) {
  Tensor out(x->value.shape());
  auto in = x->value.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    require(in[i] > -1.0, "log1p: argument must exceed -1");
    o[i] = std::log1p(in[i]);
  }
  Var node = make_node(std::move(out), {x});
  node->backward_fn = [](Node& self) {
    Node& xn = *self.parents[0];
    auto in = xn.value.values();
    auto g = self.grad.values();
    auto dx = xn.grad_buffer().values();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / (1.0 + in[i]);
  };
  return node;
}

Var avg_pool2(const Var& x) {
  const Shape s = x->value.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, "avg_pool2: odd spatial size " + to_string(s));
  Tensor out({s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h / 2; ++y)
        for (int xx = 0; xx < s.w / 2; ++xx)
          out.at(n, c, y, xx) = 0.25 * (x->value.at(n, c, 2 * y, 2 * xx) +
                                        x->value.at(n, c, 2 * y, 2 * xx + 1) +
                                        x->value.at(n, c, 2 * y + 1, 2 * xx) +
                                        x->value.at(n, c, 2 * y + 1, 2 * xx + 1));
  Var node = make_node(std::move(out), {x});
  node->backward_fn = [s](Node& self) {
    Tensor& dx = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
          for (int xx = 0; xx < s.w; ++xx)
            dx.at(n, c, y, xx) += 0.25 * self.grad.at(n, c, y / 2, xx / 2);
  };
  return node;
}

Var upsample2(const Var& x) {
  const Shape s = x->value.shape();
  Tensor out({s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < 2 * s.h; ++y)
        for (int xx = 0; xx < 2 * s.w; ++xx) out.at(n, c, y, xx) = x->value.at(n, c, y / 2, xx / 2);
  Var node = make_node(std::move(out), {x});
  node->backward_fn = [s](Node& self) {
    Tensor& dx = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < 2 * s.h; ++y)
          for (int xx = 0; xx < 2 * s.w; ++xx) dx.at(n, c, y / 2, xx / 2) += self.grad.at(n, c, y, xx);
  };
  return node;
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape as = a->value.shape();
  const Shape bs = b->value.shape();
  require(as.n == bs.n && as.h == bs.h && as.w == bs.w,
          "concat_channels: " + to_string(as) + " vs " + to_string(bs));
  Tensor out({as.n, as.c + bs.c, as.h, as.w});
  const std::size_t asz = static_cast<std::size_t>(as.c) * as.h * as.w;
  const std::size_t bsz = static_cast<std::size_t>(bs.c) * bs.h * bs.w;
  for (int n = 0; n < as.n; ++n) {
    std::copy_n(a->value.sample(n), asz, out.sample(n));
    std::copy_n(b->value.sample(n), bsz, out.sample(n) + asz);
  }
  Var node = make_node(std::move(out), {a, b});
  node->backward_fn = [asz, bsz, n_count = as.n](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    for (int n = 0; n < n_count; ++n) {
      const double* g = self.grad.sample(n);
      if (an.requires_grad) {
        double* d = an.grad_buffer().sample(n);
        for (std::size_t i = 0; i < asz; ++i) d[i] += g[i];
      }
      if (bn.requires_grad) {
        double* d = bn.grad_buffer().sample(n);
        for (std::size_t i = 0; i < bsz; ++i) d[i] += g[asz + i];
      }
    }
  };
  return node;
}

Var add(const Var& a, const Var& b) {
  require(a->value.shape() == b->value.shape(),
          "add: " + to_string(a->value.shape()) + " vs " + to_string(b->value.shape()));
  Tensor out(a->value.shape());
  auto av = a->value.values();
  auto bv = b->value.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  Var node = make_node(std::move(out), {a, b});
  node->backward_fn = [](Node& self) {
    for (int p = 0; p < 2; ++p) {
      Node& pn = *self.parents[p];
      if (!pn.requires_grad) continue;
      auto d = pn.grad_buffer().values();
      auto g = self.grad.values();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  };
  return node;
}

Var add_channel_bias(const Var& x, const Var& bias_nc) {
  const Shape s = x->value.shape();
  const Shape bs = bias_nc->value.shape();
  require(bs.n == s.n && bs.c == s.c && bs.h == 1 && bs.w == 1,
          "add_channel_bias: " + to_string(s) + " vs bias " + to_string(bs));
  Tensor out = x->value;
  const int hw = s.h * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double* p = out.sample(n) + static_cast<std::size_t>(c) * hw;
      const double b = bias_nc->value.at(n, c, 0, 0);
      for (int i = 0; i < hw; ++i) p[i] += b;
    }
  Var node = make_node(std::move(out), {x, bias_nc});
  node->backward_fn = [s, hw](Node& self) {
    Node& xn = *self.parents[0];
    Node& bn = *self.parents[1];
    if (xn.requires_grad) {
      auto d = xn.grad_buffer().values();
      auto g = self.grad.values();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (bn.requires_grad) {
      Tensor& db = bn.grad_buffer();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const double* g = self.grad.sample(n) + static_cast<std::size_t>(c) * hw;
          double acc = 0.0;
          for (int i = 0; i < hw; ++i) acc += g[i];
          db.at(n, c, 0, 0) += acc;
        }
    }
  };
  return node;
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  const int din = xs.c * xs.h * xs.w;
  require(ws.c == din && ws.h == 1 && ws.w == 1,
          "linear: input " + to_string(xs) + " vs weight " + to_string(ws));
  require(bias->value.numel() == static_cast<std::size_t>(ws.n), "linear: bias size");
  const int dout = ws.n;
  Tensor out({xs.n, dout, 1, 1});
  ConstMatMap wm(weight->value.data(), dout, din);
  ConstMatMap xm(x->value.data(), xs.n, din);
  MatMap om(out.data(), xs.n, dout);
  om.noalias() = xm * wm.transpose();
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->value.data(), dout);
  Var node = make_node(std::move(out), {x, weight, bias});
  node->backward_fn = [n = xs.n, din, dout](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    ConstMatMap g(self.grad.data(), n, dout);
    if (xn.requires_grad) {
      MatMap dx(xn.grad_buffer().data(), n, din);
      dx.noalias() += g * ConstMatMap(wn.value.data(), dout, din);
    }
    if (wn.requires_grad) {
      MatMap dw(wn.grad_buffer().data(), dout, din);
      dw.noalias() += g.transpose() * ConstMatMap(xn.value.data(), n, din);
    }
    if (bn.requires_grad) {
      Eigen::Map<Eigen::RowVectorXd> db(bn.grad_buffer().data(), dout);
      db += g.colwise().sum();
    }
  };
  return node;
}

Var global_avg_pool(const Var& x) {
  const Shape s = x->value.shape();
  const int hw = s.h * s.w;
  Tensor out({s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* p = x->value.sample(n) + static_cast<std::size_t>(c) * hw;
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += p[i];
      out.at(n, c, 0, 0) = acc / hw;
    }
  Var node = make_node(std::move(out), {x});
  node->backward_fn = [s, hw](Node& self) {
    Tensor& dx = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const double g = self.grad.at(n, c, 0, 0) / hw;
        double* d = dx.sample(n) + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) d[i] += g;
      }
  };
  return node;
}

Var l1_loss(const Var& pred, const Tensor& target, const std::vector<std::vector<int>>& groups) {
  require(pred->value.shape() == target.shape(),
          "l1_loss: " + to_string(pred->value.shape()) + " vs " + to_string(target.shape()));
  const Shape s = target.shape();
  std::vector<std::vector<int>> gs = groups;
  if (gs.empty()) {
    gs.emplace_back();
    for (int n = 0; n < s.n; ++n) gs.back().push_back(n);
  }
  const std::size_t per = static_cast<std::size_t>(s.c) * s.h * s.w;
  // Per-sample weight: 1 / (elements in the sample's group).
  std::vector<double> weight(s.n, 0.0);
  for (const auto& g : gs) {
    if (g.empty()) continue;
    for (int n : g) {
      require(n >= 0 && n < s.n, "l1_loss: group index out of range");
      weight[n] = 1.0 / (static_cast<double>(g.size()) * per);
    }
  }
  double loss = 0.0;
  for (int n = 0; n < s.n; ++n) {
    if (weight[n] == 0.0) continue;
    const double* p = pred->value.sample(n);
    const double* t = target.sample(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += std::abs(p[i] - t[i]);
    loss += acc * weight[n];
  }
  Tensor out({1, 1, 1, 1}, loss);
  Var node = make_node(std::move(out), {pred});
  auto tgt = std::make_shared<Tensor>(target);
  node->backward_fn = [tgt, weight, per](Node& self) {
    Node& pn = *self.parents[0];
    const double g = self.grad.values()[0];
    Tensor& dp = pn.grad_buffer();
    for (std::size_t n = 0; n < weight.size(); ++n) {
      if (weight[n] == 0.0) continue;
      const double* p = pn.value.sample(static_cast<int>(n));
      const double* t = tgt->sample(static_cast<int>(n));
      double* d = dp.sample(static_cast<int>(n));
      for (std::size_t i = 0; i < per; ++i) {
        const double diff = p[i] - t[i];
        d[i] += g * weight[n] * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0));
      }
    }
  };
  return node;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Shape s = logits->value.shape();
  require(s.h == 1 && s.w == 1 && static_cast<int>(labels.size()) == s.n,
          "softmax_cross_entropy: logits " + to_string(s));
  auto probs = std::make_shared<std::vector<double>>();
  probs->reserve(static_cast<std::size_t>(s.n) * s.c);
  double loss = 0.0;
  for (int n = 0; n < s.n; ++n) {
    require(labels[n] >= 0 && labels[n] < s.c, "softmax_cross_entropy: label out of range");
    auto p = softmax({logits->value.sample(n), static_cast<std::size_t>(s.c)});
    loss -= std::log(std::max(p[labels[n]], 1e-300));
    probs->insert(probs->end(), p.begin(), p.end());
  }
  Var node = make_node(Tensor({1, 1, 1, 1}, loss / s.n), {logits});
  std::vector<int> lab(labels.begin(), labels.end());
  node->backward_fn = [probs, lab, s](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    const double g = self.grad.values()[0] / s.n;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const double p = (*probs)[static_cast<std::size_t>(n) * s.c + c];
        d.at(n, c, 0, 0) += g * (p - (c == lab[n] ? 1.0 : 0.0));
      }
  };
  return node;
}

Var ParameterSet::add(std::string name, Tensor init) {
  if (find(name)) throw ConfigError("duplicate parameter name " + name);
  Var v = parameter(std::move(init));
  items_.push_back({std::move(name), v});
  return v;
}

const NamedParameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParameterSet::count() const {
  std::size_t total = 0;
  for (const auto& p : items_) total += p.var->value.numel();
  return total;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.var->grad = Tensor();
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (items_.size() != other.items_.size()) return false;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& a = items_[i];
    const auto& b = other.items_[i];
    if (a.name != b.name || !(a.var->value.shape() == b.var->value.shape())) return false;
    if (!std::equal(a.var->value.values().begin(), a.var->value.values().end(),
                    b.var->value.values().begin()))
      return false;
  }
  return true;
}

ParameterSet clone(const ParameterSet& params) {
  ParameterSet out;
  for (const auto& p : params.items()) out.add(p.name, p.var->value);
  return out;
}

Tensor init_uniform(Shape shape, double bound, std::uint64_t seed) {
  Tensor t(shape);
  Rng rng(seed);
  for (double& v : t.values()) v = to_f32(rng.uniform(-bound, bound));
  return t;
}

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  reset();
}

void Adam::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
  for (const auto& p : params_->items()) {
    m_.emplace_back(p.var->value.numel(), 0.0);
    v_.emplace_back(p.var->value.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  auto& items = params_->items();
  for (std::size_t k = 0; k < items.size(); ++k) {
    Node& node = *items[k].var;
    if (node.grad.numel() != node.value.numel()) continue;
    auto p = node.value.values();
    auto g = node.grad.values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] = to_f32(p[i] - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

}  // namespace restorekit::nn
