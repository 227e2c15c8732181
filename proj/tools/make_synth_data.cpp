// Generates the bundled synthetic datasets (schema.json + <table>.csv).
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "reltab/synthetic.hpp"

using namespace reltab;

int main(int argc, char** argv) {
  CLI::App app{"reltab-synth: write a synthetic benchmark dataset"};
  std::string dataset = "mini-imdb";
  std::string out = "data/mini_imdb";
  uint64_t seed = 7;
  app.add_option("--dataset", dataset, "mini-imdb, fd or join-toy")
      ->check(CLI::IsMember({"mini-imdb", "fd", "join-toy"}));
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    if (dataset == "mini-imdb") {
      synth::MiniImdbSpec spec;
      spec.seed = seed;
      synth::write_dataset(synth::mini_imdb_schema(), synth::mini_imdb_rows(spec),
                           out);
    } else if (dataset == "fd") {
      synth::FdSpec spec;
      spec.seed = seed;
      synth::write_dataset(synth::fd_schema(), synth::fd_rows(spec), out);
    } else {
      synth::JoinToySpec spec;
      spec.seed = seed;
      synth::write_dataset(synth::join_toy_schema(), synth::join_toy_rows(spec),
                           out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << "wrote " << dataset << " to " << out << "\n";
  return 0;
}
