#ifndef GWCOSAL_SYNTHDATA_HPP
#define GWCOSAL_SYNTHDATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "gwcosal/tensor.hpp"

namespace gwcosal::synth {

// One generated co-saliency group: every image carries the group's common
// shape (same kind, colour, and position group-wide) plus per-image
// distractor shapes of other kinds at random non-overlapping positions.
// Ground truth marks the common shape only.
struct SynthGroup {
    std::vector<Tensor<float>> images;           // K x (1, 3, h, w), values in [0,1]
    std::vector<Tensor<float>> gt;               // K x (1, 1, h, w), values in {0,1}
    std::vector<Tensor<float>> distractor_mask;  // K x (1, 1, h, w), values in {0,1}
};

// Deterministic for fixed arguments. Shape kinds cycle per group (rectangle,
// disc, triangle, ring), so a kind that is common in one group appears as a
// distractor in others and commonality is only decidable from the group.
std::vector<SynthGroup> make_groups(int n_groups, int k, long h, long w, std::uint64_t seed);

// Writes the corpus as PNG files plus a manifest with declared groups:
// <dir>/images/g<g>_i<k>.png, <dir>/masks/g<g>_i<k>.png, <dir>/manifest.json.
void write_corpus(const std::vector<SynthGroup>& groups, const std::string& dir);

} // namespace gwcosal::synth

#endif
