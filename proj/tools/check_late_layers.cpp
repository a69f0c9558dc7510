// Optional check for real cross-encoder checkpoints: reads an aggregate
// head-patching matrix and reports whether the layer with the largest mean
// |effect| lies in the final third of the network. Not run in CI.

#include <cstdio>
#include <iostream>

#include "patchlens/effect_io.hpp"
#include "patchlens/experiment.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: check_late_layers <aggregate.json>\n";
    return 1;
  }
  try {
    const auto m = patchlens::read_effect_matrix(argv[1]);
    const auto d = patchlens::late_layer_dominance(m);
    for (std::size_t l = 0; l < d.layer_means.size(); ++l) {
      std::printf("layer %zu  mean|effect| %.6f\n", l, d.layer_means[l]);
    }
    std::printf("%s strongest layer %zu, final third starts at layer %zu\n", d.in_final_third ? "PASS" : "FAIL",
                d.strongest_layer, d.final_third_start);
    return d.in_final_third ? 0 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
