#include "patchlens/hooks.hpp"

#include <charconv>
#include <stdexcept>

#include "patchlens/encoder.hpp"

namespace patchlens {
namespace {

constexpr Site kBlockSites[] = {
    Site::resid_pre, Site::attn_q,    Site::attn_k,  Site::attn_v,     Site::attn_pattern,
    Site::attn_z,    Site::attn_out,  Site::resid_mid, Site::mlp_out, Site::resid_post,
};

constexpr std::string_view kEmbedName = "embed.hook_out";
constexpr std::string_view kBlockPrefix = "blocks.";

}  // namespace

std::string_view site_suffix(Site site) {
  switch (site) {
    case Site::embed_out: return "hook_out";
    case Site::resid_pre: return "hook_resid_pre";
    case Site::attn_q: return "attn.hook_q";
    case Site::attn_k: return "attn.hook_k";
    case Site::attn_v: return "attn.hook_v";
    case Site::attn_pattern: return "attn.hook_pattern";
    case Site::attn_z: return "attn.hook_z";
    case Site::attn_out: return "hook_attn_out";
    case Site::resid_mid: return "hook_resid_mid";
    case Site::mlp_out: return "hook_mlp_out";
    case Site::resid_post: return "hook_resid_post";
  }
  return "";
}

std::string_view site_short_name(Site site) {
  switch (site) {
    case Site::embed_out: return "embed_out";
    case Site::resid_pre: return "resid_pre";
    case Site::attn_q: return "q";
    case Site::attn_k: return "k";
    case Site::attn_v: return "v";
    case Site::attn_pattern: return "pattern";
    case Site::attn_z: return "z";
    case Site::attn_out: return "attn_out";
    case Site::resid_mid: return "resid_mid";
    case Site::mlp_out: return "mlp_out";
    case Site::resid_post: return "resid_post";
  }
  return "";
}

std::optional<Site> parse_site(std::string_view name) {
  for (Site s : kBlockSites) {
    if (site_short_name(s) == name) return s;
  }
  if (name == "embed_out") return Site::embed_out;
  return std::nullopt;
}

std::string HookName::str() const {
  if (site == Site::embed_out) return std::string(kEmbedName);
  return std::string(kBlockPrefix) + std::to_string(layer) + "." + std::string(site_suffix(site));
}

HookName HookName::parse(std::string_view name) {
  if (name == kEmbedName) return embed();
  auto fail = [&]() -> HookName { throw std::invalid_argument("unknown hook name '" + std::string(name) + "'"); };
  if (!name.starts_with(kBlockPrefix)) return fail();
  std::string_view rest = name.substr(kBlockPrefix.size());
  const auto dot = rest.find('.');
  if (dot == std::string_view::npos || dot == 0) return fail();
  std::size_t layer = 0;
  const auto digits = rest.substr(0, dot);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), layer);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return fail();
  if (digits.size() > 1 && digits.front() == '0') return fail();
  const auto suffix = rest.substr(dot + 1);
  for (Site s : kBlockSites) {
    if (site_suffix(s) == suffix) return block(layer, s);
  }
  return fail();
}

Shape HookName::expected_shape(const ModelConfig& config, std::size_t seq) const {
  switch (site) {
    case Site::attn_q:
    case Site::attn_k:
    case Site::attn_v:
    case Site::attn_z: return {seq, config.n_heads, config.d_head};
    case Site::attn_pattern: return {config.n_heads, seq, seq};
    default: return {seq, config.d_model};
  }
}

std::vector<HookName> list_hooks(const ModelConfig& config) {
  std::vector<HookName> hooks;
  hooks.reserve(1 + config.n_layers * std::size(kBlockSites));
  hooks.push_back(HookName::embed());
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    for (Site s : kBlockSites) hooks.push_back(HookName::block(l, s));
  }
  return hooks;
}

}  // namespace patchlens
