#include "patchlens/patching.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace patchlens {
namespace {

void check_positions(const std::vector<std::size_t>& positions, std::size_t seq) {
  for (std::size_t p : positions) {
    if (p >= seq) {
      throw std::out_of_range("patch position " + std::to_string(p) + " outside sequence of length " +
                              std::to_string(seq));
    }
  }
}

void check_layer_head(std::size_t layer, std::optional<std::size_t> head, const ModelConfig& c) {
  if (layer >= c.n_layers) {
    throw std::out_of_range("patch layer " + std::to_string(layer) + " >= n_layers " + std::to_string(c.n_layers));
  }
  if (head && *head >= c.n_heads) {
    throw std::out_of_range("patch head " + std::to_string(*head) + " >= n_heads " + std::to_string(c.n_heads));
  }
}

bool is_head_site(Site s) { return s == Site::attn_q || s == Site::attn_k || s == Site::attn_v || s == Site::attn_z; }

bool is_block_site(Site s) {
  return s == Site::resid_pre || s == Site::attn_out || s == Site::mlp_out || s == Site::resid_post;
}

Intervention copy_rows(HookName hook, const Tensor& donor, std::vector<std::size_t> positions) {
  return Intervention::edit(hook, [&donor, positions = std::move(positions)](Tensor& value) {
    for (std::size_t p : positions) {
      auto src = donor.row(p);
      std::copy(src.begin(), src.end(), value.row(p).begin());
    }
  });
}

Intervention copy_head(HookName hook, const Tensor& donor, std::size_t head, std::vector<std::size_t> positions) {
  return Intervention::edit(hook, [&donor, head, positions = std::move(positions)](Tensor& value) {
    const std::size_t d_head = value.dim(2);
    for (std::size_t p : positions) {
      const float* src = donor.ptr(p, head, 0);
      std::copy(src, src + d_head, &value.at(p, head, 0));
    }
  });
}

template <typename Fn>
void parallel_cells(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::string> index_labels(std::size_t n, const std::string& prefix = "") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

PairPatchResult sweep(const RankingModel& model, const PairedInput& pair, std::size_t rows, std::size_t cols,
                      std::string col_axis, std::vector<std::string> col_labels, std::size_t workers,
                      const std::function<PatchSpec(std::size_t, std::size_t)>& spec_for) {
  const PairRun runs = run_pair(model, pair);
  PairPatchResult out;
  out.qid = pair.qid;
  out.docid = pair.docid;
  out.baseline_score = runs.baseline_score;
  out.perturbed_score = runs.perturbed_score;
  out.rerun = runs.rerun();
  out.degenerate = runs.degenerate();
  if (out.degenerate) return out;

  EffectMatrix& m = out.matrix;
  m.col_axis = std::move(col_axis);
  m.row_labels = index_labels(rows);
  m.col_labels = std::move(col_labels);
  m.values.assign(rows * cols, 0.0);
  m.patched_scores.assign(rows * cols, 0.0);
  m.counts.assign(rows * cols, 1);

  const ActivationCache& donor = runs.cache(runs.donor());
  const Tensor* query_rep = runs.query_rep ? &*runs.query_rep : nullptr;
  parallel_cells(rows * cols, workers, [&](std::size_t cell) {
    const float patched = run_patched(model, pair, spec_for(cell / cols, cell % cols), donor, runs.rerun(), query_rep);
    m.patched_scores[cell] = patched;
    m.values[cell] = *runs.normalized(patched);
  });
  out.patched_runs = rows * cols;
  return out;
}

}  // namespace

std::string_view side_name(Side side) { return side == Side::baseline ? "baseline" : "perturbed"; }

std::vector<std::size_t> all_positions(std::size_t seq) {
  std::vector<std::size_t> out(seq);
  for (std::size_t i = 0; i < seq; ++i) out[i] = i;
  return out;
}

std::optional<double> effect(double baseline_score, double perturbed_score, double patched_score) {
  const double gap = perturbed_score - baseline_score;
  if (std::fabs(gap) <= kDegenerateTolerance) return std::nullopt;
  return (patched_score - baseline_score) / gap;
}

bool PairRun::degenerate() const {
  return std::fabs(static_cast<double>(perturbed_score) - static_cast<double>(baseline_score)) <= kDegenerateTolerance;
}

std::optional<double> PairRun::normalized(double patched_score) const {
  return effect(score(rerun()), score(donor()), patched_score);
}

const TokenSeq& side_tokens(const PairedInput& pair, Side side) {
  return side == Side::baseline ? pair.baseline : pair.perturbed;
}

PairRun run_pair(const RankingModel& model, const PairedInput& pair) {
  if (pair.baseline.size() != pair.perturbed.size()) {
    throw std::invalid_argument("paired inputs differ in length (" + std::to_string(pair.baseline.size()) + " vs " +
                                std::to_string(pair.perturbed.size()) + ")");
  }
  PairRun out;
  const Tensor* q = nullptr;
  if (const auto* dot = std::get_if<DotModel>(&model)) {
    if (!pair.query) throw std::invalid_argument("bi-encoder pair has no query sequence");
    out.query_rep = encode_query(*dot, *pair.query);
    q = &*out.query_rep;
  }
  SideScore b = score_side_with_cache(model, q, pair.baseline);
  SideScore p = score_side_with_cache(model, q, pair.perturbed);
  out.baseline_score = b.score;
  out.perturbed_score = p.score;
  out.baseline_cache = std::move(b.cache);
  out.perturbed_cache = std::move(p.cache);
  return out;
}

std::vector<Intervention> patch_interventions(const PatchSpec& spec, const ActivationCache& donor,
                                              const ModelConfig& config, std::size_t seq) {
  if (donor.tokens.size() != seq) {
    throw std::invalid_argument("donor cache was recorded on " + std::to_string(donor.tokens.size()) +
                                " tokens, patched run has " + std::to_string(seq));
  }
  std::vector<Intervention> out;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BlockByPos>) {
          if (!is_block_site(s.site)) {
            throw std::invalid_argument("block patching supports resid_pre, attn_out, mlp_out and resid_post");
          }
          check_layer_head(s.layer, std::nullopt, config);
          check_positions(s.positions, seq);
          const HookName hook = HookName::block(s.layer, s.site);
          out.push_back(copy_rows(hook, donor.at(hook), s.positions));
        } else {
          if (!is_head_site(s.site)) throw std::invalid_argument("head patching supports q, k, v and z");
          check_layer_head(s.layer, s.head, config);
          std::vector<std::size_t> positions;
          if constexpr (std::is_same_v<T, HeadByPos>) {
            check_positions(s.positions, seq);
            positions = s.positions;
          } else {
            positions = all_positions(seq);
          }
          const HookName hook = HookName::block(s.layer, s.site);
          out.push_back(copy_head(hook, donor.at(hook), s.head, std::move(positions)));
        }
      },
      spec);
  return out;
}

float run_patched(const RankingModel& model, const PairedInput& pair, const PatchSpec& spec,
                  const ActivationCache& donor, Side rerun, const Tensor* query_rep) {
  const TokenSeq& tokens = side_tokens(pair, rerun);
  const auto interventions = patch_interventions(spec, donor, config_of(model), tokens.size());
  std::optional<Tensor> own_query;
  if (const auto* dot = std::get_if<DotModel>(&model); dot && !query_rep) {
    if (!pair.query) throw std::invalid_argument("bi-encoder pair has no query sequence");
    own_query = encode_query(*dot, *pair.query);
    query_rep = &*own_query;
  }
  return score_side(model, query_rep, tokens, interventions);
}

RunTriple run_three(const RankingModel& model, const PairedInput& pair, const PatchSpec& spec) {
  const PairRun runs = run_pair(model, pair);
  RunTriple t;
  t.baseline_score = runs.baseline_score;
  t.perturbed_score = runs.perturbed_score;
  t.rerun = runs.rerun();
  t.patched_score = run_patched(model, pair, spec, runs.cache(runs.donor()), t.rerun,
                                runs.query_rep ? &*runs.query_rep : nullptr);
  return t;
}

PairPatchResult patch_heads(const RankingModel& model, const PairedInput& pair, std::size_t workers, Site head_site) {
  if (!is_head_site(head_site)) throw std::invalid_argument("head patching supports q, k, v and z");
  const ModelConfig& c = config_of(model);
  return sweep(model, pair, c.n_layers, c.n_heads, "head", index_labels(c.n_heads), workers,
               [head_site](std::size_t layer, std::size_t head) -> PatchSpec {
                 return HeadAllPos{layer, head, head_site};
               });
}

PairPatchResult patch_blocks(const RankingModel& model, const PairedInput& pair, Site site, std::size_t workers) {
  if (!is_block_site(site)) {
    throw std::invalid_argument("block patching supports resid_pre, attn_out, mlp_out and resid_post");
  }
  const ModelConfig& c = config_of(model);
  const std::size_t seq = pair.perturbed.size();
  return sweep(model, pair, c.n_layers, seq, "position", index_labels(seq), workers,
               [site](std::size_t layer, std::size_t pos) -> PatchSpec { return BlockByPos{site, layer, {pos}}; });
}

EffectMatrix aggregate(std::span<const EffectMatrix> matrices) {
  if (matrices.empty()) throw std::invalid_argument("aggregate: no effect matrices (all pairs degenerate or failed)");
  const EffectMatrix& first = matrices.front();
  const bool positional = first.col_axis == "position";
  std::size_t cols = first.cols();
  for (const auto& m : matrices) {
    if (m.row_axis != first.row_axis || m.col_axis != first.col_axis || m.rows() != first.rows()) {
      throw std::invalid_argument("aggregate: matrices have different axes");
    }
    if (positional) {
      cols = std::min(cols, m.cols());
    } else if (m.cols() != cols) {
      throw std::invalid_argument("aggregate: matrices have different column counts");
    }
  }
  EffectMatrix out;
  out.row_axis = first.row_axis;
  out.col_axis = first.col_axis;
  out.row_labels = first.row_labels;
  out.col_labels.assign(first.col_labels.begin(), first.col_labels.begin() + static_cast<std::ptrdiff_t>(cols));
  const std::size_t rows = first.rows();
  out.values.assign(rows * cols, 0.0);
  out.patched_scores.assign(rows * cols, 0.0);
  out.counts.assign(rows * cols, 0);
  for (const auto& m : matrices) {
    out.degenerate_count += m.degenerate_count;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t src = r * m.cols() + c;
        const std::size_t dst = r * cols + c;
        const std::size_t n = m.counts.empty() ? 1 : m.counts[src];
        out.values[dst] += m.values[src] * static_cast<double>(n);
        out.patched_scores[dst] += m.patched_scores[src] * static_cast<double>(n);
        out.counts[dst] += n;
      }
    }
  }
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (out.counts[i] == 0) continue;
    out.values[i] /= static_cast<double>(out.counts[i]);
    out.patched_scores[i] /= static_cast<double>(out.counts[i]);
  }
  return out;
}

}  // namespace patchlens
