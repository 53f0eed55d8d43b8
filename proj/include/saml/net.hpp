#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saml/grid.hpp"

namespace saml::net {

/// Planar float tensor, channel-major (c, h, w).
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, float fill = 0.f)
      : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, fill) {}

  size_t plane_size() const { return size_t(h) * w; }
  float* plane(int ch) { return v.data() + size_t(ch) * plane_size(); }
  const float* plane(int ch) const { return v.data() + size_t(ch) * plane_size(); }
  float& at(int ch, int r, int col) { return v[(size_t(ch) * h + r) * w + col]; }
  float at(int ch, int r, int col) const { return v[(size_t(ch) * h + r) * w + col]; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

/// 3x3 same-padding convolution parameters with gradient buffers.
struct Conv {
  int cin = 0, cout = 0, k = 3;
  std::vector<float> w, b;    // w: cout x cin x k x k
  std::vector<float> gw, gb;  // gradients, same layout

  void init(int cin_, int cout_, int k_, uint64_t seed);
  void zero_grad();
};

void conv_forward(const Conv& p, const Tensor& in, Tensor& out);
/// Accumulates parameter gradients into p.gw/p.gb and, when din != nullptr,
/// input gradients into *din (which must be zeroed by the caller).
void conv_backward(Conv& p, const Tensor& in, const Tensor& dout, Tensor* din);

void relu_forward(Tensor& t);
/// d := d * 1[act > 0], where act is the post-ReLU activation.
void relu_backward(const Tensor& act, Tensor& d);

void maxpool2_forward(const Tensor& in, Tensor& out, std::vector<int32_t>& argmax);
void maxpool2_backward(const std::vector<int32_t>& argmax, const Tensor& dout, Tensor& din);

void upsample2_forward(const Tensor& in, Tensor& out);
void upsample2_backward(const Tensor& dout, Tensor& din);

void concat_forward(const Tensor& a, const Tensor& b, Tensor& out);
void split_backward(const Tensor& dout, Tensor& da, Tensor& db);

/// Two-level encoder-decoder with skip connections; emits per-pixel class
/// logits plus an auxiliary embedding field from the penultimate decoder
/// features. Input spatial dimensions must be divisible by 4.
class UNet {
 public:
  UNet(int channels, int embed_dim, int n_classes, uint64_t seed);

  std::string arch() const;
  int channels() const { return channels_; }
  int embed_dim() const { return embed_dim_; }
  int n_classes() const { return n_classes_; }
  uint64_t seed() const { return seed_; }

  struct Activations {
    Tensor input;
    Tensor e0, p0, e1, p1, b;  // encoder path (post-ReLU) and pooled maps
    std::vector<int32_t> am0, am1;
    Tensor u1, cat1, d1, u0, cat0, d0;
    Tensor logits, embed;
  };

  /// Full forward pass; `acts` is reused across calls to avoid reallocation.
  void forward(const Tensor& input, Activations& acts) const;

  /// Backpropagate from dlogits (the embedding head receives no gradient:
  /// confidence weights are constants for gradient purposes).
  void backward(const Activations& acts, const Tensor& dlogits);

  void zero_grad();

  std::vector<Conv*> params();
  std::vector<const Conv*> params() const;

  std::vector<float> serialize_weights() const;
  void load_weights(const std::vector<float>& flat);

 private:
  int channels_, embed_dim_, n_classes_;
  uint64_t seed_;
  Conv enc0_, enc1_, bott_, dec1_, dec0_, head_logits_, head_embed_;
  mutable struct {
    Tensor dd0, dcat0, du0, dd1, dcat1, du1, db_, dp1, de1, dp0, de0;
  } scratch_;
};

/// Adam with fixed update order; fully deterministic for a fixed seed and
/// data order.
class Adam {
 public:
  Adam(std::vector<Conv*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();

 private:
  std::vector<Conv*> params_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<float>> mw_, vw_, mb_, vb_;
};

/// Convert an RGB patch to a 3xHxW float tensor in [0,1].
Tensor image_to_tensor(const RgbImage& img);

/// Reflect-pad an image so both dimensions are divisible by `multiple`.
RgbImage pad_reflect(const RgbImage& img, int multiple);

}  // namespace saml::net
