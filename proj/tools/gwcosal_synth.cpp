#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gwcosal/synthdata.hpp"

// Generates a synthetic co-saliency corpus (common shape per group plus
// per-image distractors) for exercising the group/train/infer/eval pipeline
// without external datasets.
int main(int argc, char** argv) {
    CLI::App app{"synthetic co-saliency corpus generator"};
    std::string out_dir;
    int groups = 8;
    int k = 5;
    long height = 64;
    long width = 128;
    std::uint64_t seed = 1;
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--groups", groups, "number of groups")->default_val(8);
    app.add_option("--k", k, "images per group")->default_val(5);
    app.add_option("--height", height, "image height")->default_val(64);
    app.add_option("--width", width, "image width")->default_val(128);
    app.add_option("--seed", seed, "generator seed")->default_val(1);
    CLI11_PARSE(app, argc, argv);

    try {
        const auto data = gwcosal::synth::make_groups(groups, k, height, width, seed);
        gwcosal::synth::write_corpus(data, out_dir);
        std::cout << "wrote " << groups << " groups (" << groups * k << " images) to " << out_dir
                  << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
