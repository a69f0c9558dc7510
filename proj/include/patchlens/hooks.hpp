#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchlens/tensor.hpp"

namespace patchlens {

struct ModelConfig;

/// Hook sites in forward-pass order. `embed_out` is the only site outside
/// the blocks.
enum class Site {
  embed_out,
  resid_pre,
  attn_q,
  attn_k,
  attn_v,
  attn_pattern,
  attn_z,
  attn_out,
  resid_mid,
  mlp_out,
  resid_post,
};

inline constexpr std::size_t kBlockSiteCount = 10;

/// A named point in the forward pass, e.g. `blocks.1.attn.hook_z`.
struct HookName {
  Site site = Site::embed_out;
  std::size_t layer = 0;  // ignored for embed_out

  static HookName embed() { return {Site::embed_out, 0}; }
  static HookName block(std::size_t layer, Site site) { return {site, layer}; }

  std::string str() const;
  /// Throws std::invalid_argument on anything outside the naming scheme.
  static HookName parse(std::string_view name);

  /// [seq, n_heads, d_head] for q/k/v/z, [n_heads, seq, seq] for the
  /// pattern, [seq, d_model] elsewhere.
  Shape expected_shape(const ModelConfig& config, std::size_t seq) const;

  /// Orders by (layer, site) with the embedding hook first.
  friend std::strong_ordering operator<=>(const HookName& a, const HookName& b) {
    const bool ea = a.site == Site::embed_out, eb = b.site == Site::embed_out;
    if (ea != eb) return ea ? std::strong_ordering::less : std::strong_ordering::greater;
    if (ea) return std::strong_ordering::equal;
    if (auto c = a.layer <=> b.layer; c != 0) return c;
    return static_cast<int>(a.site) <=> static_cast<int>(b.site);
  }
  friend bool operator==(const HookName& a, const HookName& b) { return (a <=> b) == 0; }
};

/// Block-site names without the `blocks.{l}.` prefix, e.g. "attn.hook_z".
std::string_view site_suffix(Site site);
/// Parses the short site names used in configs: resid_pre, attn_out, ...
std::optional<Site> parse_site(std::string_view name);
std::string_view site_short_name(Site site);

/// Every hook for a model, sorted by (layer, site).
std::vector<HookName> list_hooks(const ModelConfig& config);

}  // namespace patchlens
