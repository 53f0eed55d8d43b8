#include "saml/morph.hpp"

#include <algorithm>

#include "saml/error.hpp"

namespace saml::morph {

namespace {

// Separable min/max filter: rows then columns, window [-radius, +radius].
template <bool TakeMax>
Mask filter(const Mask& m, int radius) {
  const int h = m.height(), w = m.width();
  Mask tmp(h, w), out(h, w);

  for (int r = 0; r < h; ++r) {
    const uint8_t* src = m.row(r);
    uint8_t* dst = tmp.row(r);
    for (int c = 0; c < w; ++c) {
      uint8_t v = TakeMax ? 0 : 1;
      const int lo = std::max(0, c - radius), hi = std::min(w - 1, c + radius);
      for (int k = lo; k <= hi; ++k) {
        v = TakeMax ? std::max(v, src[k]) : std::min(v, src[k]);
      }
      dst[c] = v;
    }
  }
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) {
      uint8_t v = TakeMax ? 0 : 1;
      const int lo = std::max(0, r - radius), hi = std::min(h - 1, r + radius);
      for (int k = lo; k <= hi; ++k) {
        v = TakeMax ? std::max(v, tmp.at(k, c)) : std::min(v, tmp.at(k, c));
      }
      out.at(r, c) = v;
    }
  }
  return out;
}

}  // namespace

Mask dilate(const Mask& m, int radius) {
  if (radius < 0) throw InputError("dilate: negative radius");
  if (radius == 0) return m;
  return filter<true>(m, radius);
}

Mask erode(const Mask& m, int radius) {
  if (radius < 0) throw InputError("erode: negative radius");
  if (radius == 0) return m;
  return filter<false>(m, radius);
}

}  // namespace saml::morph
