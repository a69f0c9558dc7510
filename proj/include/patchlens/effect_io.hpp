#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "patchlens/patching.hpp"

namespace patchlens {

/// Header row `<row_axis>,<col labels...>`, then one row per layer.
/// Numbers use %.9g so identical inputs give identical bytes.
std::string effect_matrix_csv(const EffectMatrix& m);

/// {"axes": {"rows": {"name", "labels"}, "cols": {...}}, "values": [[...]],
///  "patched_scores": [[...]], "counts": [[...]], "degenerate_count": n}
nlohmann::json effect_matrix_json(const EffectMatrix& m);
EffectMatrix effect_matrix_from_json(const nlohmann::json& j);
EffectMatrix read_effect_matrix(const std::filesystem::path& path);

/// Per-pair record: ids, the two scores, re-run side, and the matrix.
nlohmann::json pair_result_json(const PairPatchResult& r);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace patchlens
