#pragma once

#include <string>

#include "patchlens/patching.hpp"

namespace patchlens {

struct Rgb {
  int r = 0, g = 0, b = 0;
  std::string hex() const;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kNegativeEnd{33, 102, 172};
inline constexpr Rgb kCenter{255, 255, 255};
inline constexpr Rgb kPositiveEnd{178, 24, 43};

/// Diverging blue-white-red map; `limit` maps to the red end, `-limit` to
/// the blue end, 0 to white. Values beyond the limit clamp.
Rgb diverging_color(double value, double limit);

/// SVG 1.1 heatmap with one `<rect class="cell">` per matrix cell. The
/// colour scale is symmetric around 0 at the largest absolute value.
std::string render_heatmap_svg(const EffectMatrix& m, const std::string& title = "");

}  // namespace patchlens
