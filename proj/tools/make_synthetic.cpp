// Writes a synthetic Cora-ML-shaped dataset directory (features.bin, edges.tsv, labels.tsv).
//
//   make_synthetic --out data/synthetic [--seed n]

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "geometer/error.hpp"
#include "geometer/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic citation-graph generator"};
  std::string out;
  std::uint64_t seed = 0;
  app.add_option("--out", out, "dataset directory")->required();
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto g = geometer::make_synthetic_graph(geometer::cora_ml_like(seed));
    geometer::save_graph(g, out);
    std::cout << g.node_count() << " nodes, " << g.edge_count() << " edges written to " << out << "\n";
  } catch (const geometer::Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(geometer::error_code_name(e.code())).c_str(), e.what());
    return 1;
  }
  return 0;
}
