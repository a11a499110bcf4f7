#pragma once

// Minimal reverse-mode autograd over NCHW tensors: just enough to train the
// small convolutional networks used by the generalist, the specialists and
// the degradation classifier.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "restorekit/image.hpp"

namespace restorekit::nn {

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;
  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.numel(), fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }

  double& at(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  double at(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// Pointer to the start of sample n.
  double* sample(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.h * shape_.w; }
  const double* sample(int n) const {
    return data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.h * shape_.w;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Stack 3-channel images into an [N,3,H,W] tensor; all images must share a shape.
Tensor stack_images(std::span<const Image> images);
Tensor stack_images(std::span<const Image* const> images);
Image image_from_tensor(const Tensor& t, int n);

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var parameter(Tensor value);

/// Reverse pass from a scalar node; accumulates into every reachable grad.
void backward(const Var& loss);

// Operations. Shapes are checked and violations raise ShapeError.
Var conv2d(const Var& x, const Var& weight, const Var& bias);  // same padding, stride 1
Var silu(const Var& x);
Var square(const Var& x);
Var log1p(const Var& x);
Var avg_pool2(const Var& x);
Var upsample2(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var add_channel_bias(const Var& x, const Var& bias_nc);  // bias [N,C,1,1] broadcast over HxW
Var linear(const Var& x, const Var& weight, const Var& bias);  // x [N,Din,1,1], weight [Dout,Din,1,1]
Var global_avg_pool(const Var& x);

/// Sum over groups of the mean absolute error within each group's samples.
/// An empty group list means one group holding every sample.
Var l1_loss(const Var& pred, const Tensor& target,
            const std::vector<std::vector<int>>& groups = {});

/// Mean softmax cross-entropy over the batch; logits [N,K,1,1].
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

std::vector<double> softmax(std::span<const double> logits);

/// Round to the nearest float32 value; parameters are kept float32-representable
/// so checkpoints store them exactly.
inline double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct NamedParameter {
  std::string name;
  Var var;
};

/// Ordered, named parameter set.
class ParameterSet {
 public:
  Var add(std::string name, Tensor init);
  const std::vector<NamedParameter>& items() const { return items_; }
  std::vector<NamedParameter>& items() { return items_; }
  const NamedParameter* find(const std::string& name) const;
  std::size_t count() const;
  void zero_grad();
  bool operator==(const ParameterSet& other) const;  // names, shapes and values

 private:
  std::vector<NamedParameter> items_;
};

/// Deep copy of parameter values (no graph links).
ParameterSet clone(const ParameterSet& params);

/// He-style uniform initialization from a seeded stream, float32-rounded.
Tensor init_uniform(Shape shape, double bound, std::uint64_t seed);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);
  void step(double lr);
  void reset();

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace restorekit::nn
