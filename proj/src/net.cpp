#include "saml/net.hpp"

#include <algorithm>
#include <cmath>

#include "saml/error.hpp"
#include "saml/rng.hpp"

namespace saml::net {

void Conv::init(int cin_, int cout_, int k_, uint64_t seed) {
  cin = cin_;
  cout = cout_;
  k = k_;
  const size_t n = size_t(cout) * cin * k * k;
  w.resize(n);
  b.assign(cout, 0.f);
  gw.assign(n, 0.f);
  gb.assign(cout, 0.f);
  // He-uniform over fan-in.
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / (double(cin) * k * k));
  for (auto& x : w) x = float(rng.uniform(-limit, limit));
}

void Conv::zero_grad() {
  std::fill(gw.begin(), gw.end(), 0.f);
  std::fill(gb.begin(), gb.end(), 0.f);
}

namespace {

void conv3x3_forward(const Conv& p, const Tensor& in, Tensor& out) {
  const int h = in.h, w_ = in.w;
  for (int co = 0; co < p.cout; ++co) {
    float* op = out.plane(co);
    std::fill(op, op + out.plane_size(), p.b[co]);
  }
  for (int co = 0; co < p.cout; ++co) {
    float* op = out.plane(co);
    for (int ci = 0; ci < p.cin; ++ci) {
      const float* ip = in.plane(ci);
      const float* wk = p.w.data() + (size_t(co) * p.cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = h - 1 - std::max(0, dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const float wv = wk[ky * 3 + kx];
          const int x0 = std::max(0, -dx), x1 = w_ - 1 - std::max(0, dx);
          for (int y = y0; y <= y1; ++y) {
            float* orow = op + size_t(y) * w_;
            const float* irow = ip + size_t(y + dy) * w_ + dx;
            for (int x = x0; x <= x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

void conv1x1_forward(const Conv& p, const Tensor& in, Tensor& out) {
  const size_t n = in.plane_size();
  for (int co = 0; co < p.cout; ++co) {
    float* op = out.plane(co);
    std::fill(op, op + n, p.b[co]);
    for (int ci = 0; ci < p.cin; ++ci) {
      const float wv = p.w[size_t(co) * p.cin + ci];
      const float* ip = in.plane(ci);
      for (size_t i = 0; i < n; ++i) op[i] += wv * ip[i];
    }
  }
}

void conv3x3_backward(Conv& p, const Tensor& in, const Tensor& dout, Tensor* din) {
  const int h = in.h, w_ = in.w;
  for (int co = 0; co < p.cout; ++co) {
    const float* dop = dout.plane(co);
    double s = 0;
    for (size_t i = 0; i < dout.plane_size(); ++i) s += dop[i];
    p.gb[co] += float(s);
  }
  for (int co = 0; co < p.cout; ++co) {
    const float* dop = dout.plane(co);
    for (int ci = 0; ci < p.cin; ++ci) {
      const float* ip = in.plane(ci);
      float* dwk = p.gw.data() + (size_t(co) * p.cin + ci) * 9;
      float* dip = din ? din->plane(ci) : nullptr;
      const float* wk = p.w.data() + (size_t(co) * p.cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = h - 1 - std::max(0, dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = w_ - 1 - std::max(0, dx);
          const float wv = wk[ky * 3 + kx];
          double acc = 0;
          for (int y = y0; y <= y1; ++y) {
            const float* drow = dop + size_t(y) * w_;
            const float* irow = ip + size_t(y + dy) * w_ + dx;
            float* dirow = dip ? dip + size_t(y + dy) * w_ + dx : nullptr;
            if (dirow) {
              for (int x = x0; x <= x1; ++x) {
                acc += double(drow[x]) * irow[x];
                dirow[x] += wv * drow[x];
              }
            } else {
              for (int x = x0; x <= x1; ++x) acc += double(drow[x]) * irow[x];
            }
          }
          dwk[ky * 3 + kx] += float(acc);
        }
      }
    }
  }
}

void conv1x1_backward(Conv& p, const Tensor& in, const Tensor& dout, Tensor* din) {
  const size_t n = in.plane_size();
  for (int co = 0; co < p.cout; ++co) {
    const float* dop = dout.plane(co);
    double s = 0;
    for (size_t i = 0; i < n; ++i) s += dop[i];
    p.gb[co] += float(s);
    for (int ci = 0; ci < p.cin; ++ci) {
      const float* ip = in.plane(ci);
      double acc = 0;
      for (size_t i = 0; i < n; ++i) acc += double(dop[i]) * ip[i];
      p.gw[size_t(co) * p.cin + ci] += float(acc);
      if (din) {
        const float wv = p.w[size_t(co) * p.cin + ci];
        float* dip = din->plane(ci);
        for (size_t i = 0; i < n; ++i) dip[i] += wv * dop[i];
      }
    }
  }
}

void ensure(Tensor& t, int c, int h, int w) {
  if (t.c != c || t.h != h || t.w != w) t = Tensor(c, h, w);
}

}  // namespace

void conv_forward(const Conv& p, const Tensor& in, Tensor& out) {
  if (in.c != p.cin) throw ContractViolationError("conv_forward: channel mismatch");
  ensure(out, p.cout, in.h, in.w);
  if (p.k == 1) {
    conv1x1_forward(p, in, out);
  } else {
    conv3x3_forward(p, in, out);
  }
}

void conv_backward(Conv& p, const Tensor& in, const Tensor& dout, Tensor* din) {
  if (p.k == 1) {
    conv1x1_backward(p, in, dout, din);
  } else {
    conv3x3_backward(p, in, dout, din);
  }
}

void relu_forward(Tensor& t) {
  for (auto& x : t.v) x = x > 0.f ? x : 0.f;
}

void relu_backward(const Tensor& act, Tensor& d) {
  for (size_t i = 0; i < d.v.size(); ++i) {
    if (act.v[i] <= 0.f) d.v[i] = 0.f;
  }
}

void maxpool2_forward(const Tensor& in, Tensor& out, std::vector<int32_t>& argmax) {
  const int oh = in.h / 2, ow = in.w / 2;
  ensure(out, in.c, oh, ow);
  argmax.assign(out.v.size(), 0);
  for (int c = 0; c < in.c; ++c) {
    const float* ip = in.plane(c);
    float* op = out.plane(c);
    int32_t* am = argmax.data() + size_t(c) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const int base = (2 * y) * in.w + 2 * x;
        int best = base;
        float bv = ip[base];
        const int cand[3] = {base + 1, base + in.w, base + in.w + 1};
        for (int k = 0; k < 3; ++k) {
          if (ip[cand[k]] > bv) {
            bv = ip[cand[k]];
            best = cand[k];
          }
        }
        op[y * ow + x] = bv;
        am[y * ow + x] = best;
      }
    }
  }
}

void maxpool2_backward(const std::vector<int32_t>& argmax, const Tensor& dout, Tensor& din) {
  const size_t n = dout.plane_size();
  for (int c = 0; c < dout.c; ++c) {
    const float* dop = dout.plane(c);
    const int32_t* am = argmax.data() + size_t(c) * n;
    float* dip = din.plane(c);
    for (size_t i = 0; i < n; ++i) dip[am[i]] += dop[i];
  }
}

void upsample2_forward(const Tensor& in, Tensor& out) {
  ensure(out, in.c, in.h * 2, in.w * 2);
  for (int c = 0; c < in.c; ++c) {
    const float* ip = in.plane(c);
    float* op = out.plane(c);
    for (int y = 0; y < out.h; ++y) {
      const float* irow = ip + size_t(y / 2) * in.w;
      float* orow = op + size_t(y) * out.w;
      for (int x = 0; x < out.w; ++x) orow[x] = irow[x / 2];
    }
  }
}

void upsample2_backward(const Tensor& dout, Tensor& din) {
  for (int c = 0; c < din.c; ++c) {
    const float* dop = dout.plane(c);
    float* dip = din.plane(c);
    for (int y = 0; y < dout.h; ++y) {
      float* drow = dip + size_t(y / 2) * din.w;
      const float* orow = dop + size_t(y) * dout.w;
      for (int x = 0; x < dout.w; ++x) drow[x / 2] += orow[x];
    }
  }
}

void concat_forward(const Tensor& a, const Tensor& b, Tensor& out) {
  ensure(out, a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
}

void split_backward(const Tensor& dout, Tensor& da, Tensor& db) {
  std::copy(dout.v.begin(), dout.v.begin() + da.v.size(), da.v.begin());
  std::copy(dout.v.begin() + da.v.size(), dout.v.end(), db.v.begin());
}

// --- UNet ---------------------------------------------------------------

UNet::UNet(int channels, int embed_dim, int n_classes, uint64_t seed)
    : channels_(channels), embed_dim_(embed_dim), n_classes_(n_classes), seed_(seed) {
  if (channels < 1 || embed_dim < 1 || n_classes < 2) {
    throw InputError("UNet: invalid architecture parameters");
  }
  const int C = channels;
  enc0_.init(3, C, 3, mix_seed({seed, 1}));
  enc1_.init(C, 2 * C, 3, mix_seed({seed, 2}));
  bott_.init(2 * C, 4 * C, 3, mix_seed({seed, 3}));
  dec1_.init(4 * C + 2 * C, 2 * C, 3, mix_seed({seed, 4}));
  dec0_.init(2 * C + C, C, 3, mix_seed({seed, 5}));
  head_logits_.init(C, n_classes, 1, mix_seed({seed, 6}));
  head_embed_.init(C, embed_dim, 1, mix_seed({seed, 7}));
}

std::string UNet::arch() const {
  return "unet2-c" + std::to_string(channels_) + "-d" + std::to_string(embed_dim_) + "-k" +
         std::to_string(n_classes_);
}

void UNet::forward(const Tensor& input, Activations& acts) const {
  if (input.c != 3) throw InputError("UNet::forward expects a 3-channel input");
  if (input.h % 4 != 0 || input.w % 4 != 0) {
    throw InputError("UNet::forward: input dimensions must be divisible by 4; pad first");
  }
  acts.input = input;

  conv_forward(enc0_, acts.input, acts.e0);
  relu_forward(acts.e0);
  maxpool2_forward(acts.e0, acts.p0, acts.am0);

  conv_forward(enc1_, acts.p0, acts.e1);
  relu_forward(acts.e1);
  maxpool2_forward(acts.e1, acts.p1, acts.am1);

  conv_forward(bott_, acts.p1, acts.b);
  relu_forward(acts.b);

  upsample2_forward(acts.b, acts.u1);
  concat_forward(acts.u1, acts.e1, acts.cat1);
  conv_forward(dec1_, acts.cat1, acts.d1);
  relu_forward(acts.d1);

  upsample2_forward(acts.d1, acts.u0);
  concat_forward(acts.u0, acts.e0, acts.cat0);
  conv_forward(dec0_, acts.cat0, acts.d0);
  relu_forward(acts.d0);

  conv_forward(head_logits_, acts.d0, acts.logits);
  conv_forward(head_embed_, acts.d0, acts.embed);
}

void UNet::backward(const Activations& acts, const Tensor& dlogits) {
  auto& s = scratch_;
  auto zero = [](Tensor& t, const Tensor& like) {
    if (!t.same_shape(like)) t = Tensor(like.c, like.h, like.w);
    std::fill(t.v.begin(), t.v.end(), 0.f);
  };

  // Logits head only; the embedding head is outside the gradient path.
  zero(s.dd0, acts.d0);
  conv_backward(head_logits_, acts.d0, dlogits, &s.dd0);

  relu_backward(acts.d0, s.dd0);
  zero(s.dcat0, acts.cat0);
  conv_backward(dec0_, acts.cat0, s.dd0, &s.dcat0);

  zero(s.du0, acts.u0);
  zero(s.de0, acts.e0);
  split_backward(s.dcat0, s.du0, s.de0);

  zero(s.dd1, acts.d1);
  upsample2_backward(s.du0, s.dd1);
  relu_backward(acts.d1, s.dd1);

  zero(s.dcat1, acts.cat1);
  conv_backward(dec1_, acts.cat1, s.dd1, &s.dcat1);

  zero(s.du1, acts.u1);
  zero(s.de1, acts.e1);
  split_backward(s.dcat1, s.du1, s.de1);

  zero(s.db_, acts.b);
  upsample2_backward(s.du1, s.db_);
  relu_backward(acts.b, s.db_);

  zero(s.dp1, acts.p1);
  conv_backward(bott_, acts.p1, s.db_, &s.dp1);

  maxpool2_backward(acts.am1, s.dp1, s.de1);
  relu_backward(acts.e1, s.de1);

  zero(s.dp0, acts.p0);
  conv_backward(enc1_, acts.p0, s.de1, &s.dp0);

  maxpool2_backward(acts.am0, s.dp0, s.de0);
  relu_backward(acts.e0, s.de0);
  conv_backward(enc0_, acts.input, s.de0, nullptr);
}

void UNet::zero_grad() {
  for (Conv* p : params()) p->zero_grad();
}

std::vector<Conv*> UNet::params() {
  return {&enc0_, &enc1_, &bott_, &dec1_, &dec0_, &head_logits_, &head_embed_};
}

std::vector<const Conv*> UNet::params() const {
  return {&enc0_, &enc1_, &bott_, &dec1_, &dec0_, &head_logits_, &head_embed_};
}

std::vector<float> UNet::serialize_weights() const {
  std::vector<float> flat;
  for (const Conv* p : params()) {
    flat.insert(flat.end(), p->w.begin(), p->w.end());
    flat.insert(flat.end(), p->b.begin(), p->b.end());
  }
  return flat;
}

void UNet::load_weights(const std::vector<float>& flat) {
  size_t off = 0;
  for (Conv* p : params()) {
    if (off + p->w.size() + p->b.size() > flat.size()) {
      throw ContractViolationError("checkpoint weight blob too small for " + arch());
    }
    std::copy(flat.begin() + off, flat.begin() + off + p->w.size(), p->w.begin());
    off += p->w.size();
    std::copy(flat.begin() + off, flat.begin() + off + p->b.size(), p->b.begin());
    off += p->b.size();
  }
  if (off != flat.size()) {
    throw ContractViolationError("checkpoint weight blob size mismatch for " + arch());
  }
}

// --- Adam ---------------------------------------------------------------

Adam::Adam(std::vector<Conv*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Conv* p : params_) {
    mw_.emplace_back(p->w.size(), 0.f);
    vw_.emplace_back(p->w.size(), 0.f);
    mb_.emplace_back(p->b.size(), 0.f);
    vb_.emplace_back(p->b.size(), 0.f);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Conv* p = params_[i];
    auto update = [&](std::vector<float>& x, const std::vector<float>& g, std::vector<float>& m,
                      std::vector<float>& v) {
      for (size_t j = 0; j < x.size(); ++j) {
        const double gj = g[j];
        const double mj = beta1_ * m[j] + (1 - beta1_) * gj;
        const double vj = beta2_ * v[j] + (1 - beta2_) * gj * gj;
        m[j] = float(mj);
        v[j] = float(vj);
        x[j] -= float(lr_ * (mj / bc1) / (std::sqrt(vj / bc2) + eps_));
      }
    };
    update(p->w, p->gw, mw_[i], vw_[i]);
    update(p->b, p->gb, mb_[i], vb_[i]);
  }
}

// --- helpers --------------------------------------------------------------

Tensor image_to_tensor(const RgbImage& img) {
  Tensor t(3, img.height(), img.width());
  const size_t n = t.plane_size();
  float* r = t.plane(0);
  float* g = t.plane(1);
  float* b = t.plane(2);
  const Rgb* px = img.data().data();
  for (size_t i = 0; i < n; ++i) {
    r[i] = px[i].r / 255.f;
    g[i] = px[i].g / 255.f;
    b[i] = px[i].b / 255.f;
  }
  return t;
}

RgbImage pad_reflect(const RgbImage& img, int multiple) {
  const int h = img.height(), w = img.width();
  const int ph = (multiple - h % multiple) % multiple;
  const int pw = (multiple - w % multiple) % multiple;
  if (ph == 0 && pw == 0) return img;

  const int nh = h + ph, nw = w + pw;
  RgbImage out(nh, nw);
  auto reflect = [](int i, int n) {
    if (i < n) return i;
    const int over = i - (n - 1);
    return std::max(0, n - 1 - over);
  };
  for (int r = 0; r < nh; ++r) {
    for (int c = 0; c < nw; ++c) {
      out.at(r, c) = img.at(reflect(r, h), reflect(c, w));
    }
  }
  return out;
}

}  // namespace saml::net
