#ifndef GWCOSAL_GROUPING_HPP
#define GWCOSAL_GROUPING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "gwcosal/tensor.hpp"

namespace gwcosal::grouping {

// Gist block: 3 wavelengths (4, 8, 16 px) x 4 orientations (0, 45, 90, 135
// degrees) of Gabor energy, mean-pooled on a 4x4 grid -> 192 values, then
// L2-normalized (all-zero for images without oriented energy).
// Lab block: 16-bin marginal histograms of L in [0,100] and a, b in
// [-110,110], each L1-normalized, concatenated and L2-normalized -> 48.
struct ImageDescriptor {
    std::vector<double> gist;     // 192
    std::vector<double> lab_hist; // 48

    std::vector<double> concatenated() const;
};

inline constexpr int kGistScales = 3;
inline constexpr int kGistOrientations = 4;
inline constexpr int kGistGrid = 4;
inline constexpr int kGistSize = kGistScales * kGistOrientations * kGistGrid * kGistGrid;
inline constexpr int kLabBins = 16;
inline constexpr int kLabHistSize = 3 * kLabBins;

// Gist index layout: ((scale * 4 + orientation) * 16 + cell_y * 4 + cell_x).
std::vector<double> gist_descriptor(const Tensor<float>& image);

std::vector<double> lab_histogram(const Tensor<float>& image);

ImageDescriptor compute_descriptor(const Tensor<float>& image);

// Euclidean distance on the concatenated 240-d descriptors.
double descriptor_distance(const ImageDescriptor& a, const ImageDescriptor& b);

struct GroupSpec {
    std::string anchor;               // empty for sampled evaluation groups
    std::vector<std::string> members; // length k, anchor first for training groups
};

// One group per anchor image: the anchor plus its k-1 nearest neighbours by
// descriptor distance (ties broken toward the lower index). Overlapping
// groups are kept; rejects corpora smaller than k.
std::vector<GroupSpec> build_training_groups(const std::vector<ImageDescriptor>& descriptors,
                                             const std::vector<std::string>& ids, int k);

// Seeded draws of k members without replacement, repeated until every member
// is covered; a final short draw is topped up from already-covered members.
// Corpora smaller than k produce one group padded by seeded re-draws.
std::vector<GroupSpec> sample_eval_groups(const std::vector<std::string>& members, int k,
                                          std::uint64_t seed);

// {"k":5, "groups":[{"anchor":"id", "members":["id",...]}]}; sampled groups
// carry no anchor field.
std::string groups_to_json(int k, const std::vector<GroupSpec>& groups);
std::pair<int, std::vector<GroupSpec>> groups_from_json(const std::string& text);

} // namespace gwcosal::grouping

#endif
