#include "patchlens/effect_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "patchlens/safetensors.hpp"

namespace patchlens {
namespace {

using nlohmann::json;

std::string fmt_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

template <typename T>
json grid(const std::vector<T>& flat, std::size_t rows, std::size_t cols) {
  json out = json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < cols; ++c) row.push_back(flat[r * cols + c]);
    out.push_back(std::move(row));
  }
  return out;
}

template <typename T>
std::vector<T> flatten(const json& g, std::size_t rows, std::size_t cols, const char* what) {
  if (!g.is_array() || g.size() != rows) throw FormatError(std::string("effect matrix: '") + what + "' has wrong row count");
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& row : g) {
    if (!row.is_array() || row.size() != cols) {
      throw FormatError(std::string("effect matrix: '") + what + "' has wrong column count");
    }
    for (const auto& v : row) {
      if (!v.is_number()) throw FormatError(std::string("effect matrix: non-numeric entry in '") + what + "'");
      out.push_back(v.get<T>());
    }
  }
  return out;
}

}  // namespace

std::string effect_matrix_csv(const EffectMatrix& m) {
  std::ostringstream os;
  os << m.row_axis;
  for (const auto& label : m.col_labels) os << ',' << m.col_axis << label;
  os << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    os << m.row_labels[r];
    for (std::size_t c = 0; c < m.cols(); ++c) os << ',' << fmt_number(m.value(r, c));
    os << '\n';
  }
  return os.str();
}

json effect_matrix_json(const EffectMatrix& m) {
  return json{
      {"axes",
       {{"rows", {{"name", m.row_axis}, {"labels", m.row_labels}}},
        {"cols", {{"name", m.col_axis}, {"labels", m.col_labels}}}}},
      {"values", grid(m.values, m.rows(), m.cols())},
      {"patched_scores", grid(m.patched_scores, m.rows(), m.cols())},
      {"counts", grid(m.counts, m.rows(), m.cols())},
      {"degenerate_count", m.degenerate_count},
  };
}

EffectMatrix effect_matrix_from_json(const json& j) {
  try {
    EffectMatrix m;
    const auto& axes = j.at("axes");
    m.row_axis = axes.at("rows").at("name").get<std::string>();
    m.row_labels = axes.at("rows").at("labels").get<std::vector<std::string>>();
    m.col_axis = axes.at("cols").at("name").get<std::string>();
    m.col_labels = axes.at("cols").at("labels").get<std::vector<std::string>>();
    m.values = flatten<double>(j.at("values"), m.rows(), m.cols(), "values");
    m.patched_scores = j.contains("patched_scores")
                           ? flatten<double>(j.at("patched_scores"), m.rows(), m.cols(), "patched_scores")
                           : std::vector<double>(m.values.size(), 0.0);
    m.counts = j.contains("counts") ? flatten<std::size_t>(j.at("counts"), m.rows(), m.cols(), "counts")
                                    : std::vector<std::size_t>(m.values.size(), 1);
    m.degenerate_count = j.value("degenerate_count", std::size_t{0});
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed effect matrix: ") + e.what());
  }
}

EffectMatrix read_effect_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open matrix file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": malformed matrix JSON: " + e.what());
  }
  return effect_matrix_from_json(j);
}

json pair_result_json(const PairPatchResult& r) {
  json j{
      {"qid", r.qid},
      {"docid", r.docid},
      {"baseline_score", r.baseline_score},
      {"perturbed_score", r.perturbed_score},
      {"rerun", std::string(side_name(r.rerun))},
      {"degenerate", r.degenerate},
      {"patched_runs", r.patched_runs},
  };
  if (!r.degenerate) j["matrix"] = effect_matrix_json(r.matrix);
  return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace patchlens
