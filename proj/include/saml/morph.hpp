#pragma once

#include "saml/grid.hpp"

namespace saml::morph {

/// Dilate by a square structuring element of the given radius
/// (Chebyshev ball; radius 0 is the identity).
Mask dilate(const Mask& m, int radius);

/// Erode by a square structuring element of the given radius.
Mask erode(const Mask& m, int radius);

}  // namespace saml::morph
