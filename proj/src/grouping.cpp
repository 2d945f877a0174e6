#include "gwcosal/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "gwcosal/color.hpp"
#include "gwcosal/rng.hpp"

namespace gwcosal::grouping {

namespace {

constexpr double kWavelengths[kGistScales] = {4.0, 8.0, 16.0};
constexpr double kSigmaPerWavelength = 0.56;
constexpr double kPi = 3.14159265358979323846;
// Pre-normalization norms below this are treated as "no oriented energy".
constexpr double kDegenerateNorm = 1e-9;

struct GaborKernel {
    long radius = 0;
    std::vector<double> even;
    std::vector<double> odd;
};

GaborKernel make_gabor(double wavelength, double theta) {
    const double sigma = kSigmaPerWavelength * wavelength;
    const long r = static_cast<long>(std::ceil(3.0 * sigma));
    const long side = 2 * r + 1;
    GaborKernel k;
    k.radius = r;
    k.even.resize(static_cast<std::size_t>(side * side));
    k.odd.resize(static_cast<std::size_t>(side * side));
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    std::size_t idx = 0;
    for (long y = -r; y <= r; ++y) {
        for (long x = -r; x <= r; ++x, ++idx) {
            const double xp = x * ct + y * st;
            const double env = std::exp(-(static_cast<double>(x * x + y * y)) /
                                        (2.0 * sigma * sigma));
            const double phase = 2.0 * kPi * xp / wavelength;
            k.even[idx] = std::cos(phase) * env;
            k.odd[idx] = std::sin(phase) * env;
        }
    }
    // Remove the DC response of the even component so constant images give
    // zero energy; the odd component is antisymmetric already.
    const double mean = std::accumulate(k.even.begin(), k.even.end(), 0.0) /
                        static_cast<double>(k.even.size());
    for (double& v : k.even) v -= mean;

    auto l2_normalize = [](std::vector<double>& v) {
        double ss = 0.0;
        for (double x : v) ss += x * x;
        const double norm = std::sqrt(ss);
        if (norm > 0.0) {
            for (double& x : v) x /= norm;
        }
    };
    l2_normalize(k.even);
    l2_normalize(k.odd);
    return k;
}

// Correlation with replicated borders, same output size. Edge replication
// keeps the zero-DC kernels silent on constant images, which zero padding
// would not (truncated windows reintroduce a DC response).
std::vector<double> correlate_same(const std::vector<double>& img, long h, long w,
                                   const std::vector<double>& kernel, long radius) {
    std::vector<double> out(static_cast<std::size_t>(h * w), 0.0);
    const long side = 2 * radius + 1;
    for (long i = 0; i < h; ++i) {
        for (long j = 0; j < w; ++j) {
            double acc = 0.0;
            for (long dy = -radius; dy <= radius; ++dy) {
                const long y = std::clamp(i + dy, 0L, h - 1);
                const double* krow =
                    kernel.data() + static_cast<std::size_t>((dy + radius) * side + radius);
                const double* irow = img.data() + static_cast<std::size_t>(y * w);
                for (long dx = -radius; dx <= radius; ++dx) {
                    acc += irow[std::clamp(j + dx, 0L, w - 1)] * krow[dx];
                }
            }
            out[static_cast<std::size_t>(i * w + j)] = acc;
        }
    }
    return out;
}

void check_rgb_image(const Tensor<float>& image, const char* who) {
    if (image.shape.n != 1 || image.shape.c != 3 || image.shape.h < 1 || image.shape.w < 1) {
        throw ShapeError(std::string(who) + ": expected a (1, 3, h, w) image, got " +
                         image.shape.str());
    }
}

} // namespace

std::vector<double> ImageDescriptor::concatenated() const {
    std::vector<double> out;
    out.reserve(gist.size() + lab_hist.size());
    out.insert(out.end(), gist.begin(), gist.end());
    out.insert(out.end(), lab_hist.begin(), lab_hist.end());
    return out;
}

std::vector<double> gist_descriptor(const Tensor<float>& image) {
    check_rgb_image(image, "gist_descriptor");
    const long h = image.shape.h;
    const long w = image.shape.w;
    std::vector<double> lum(static_cast<std::size_t>(h * w));
    for (long i = 0; i < h; ++i) {
        for (long j = 0; j < w; ++j) {
            lum[static_cast<std::size_t>(i * w + j)] =
                pipeline::luminance(image.at(0, 0, i, j), image.at(0, 1, i, j),
                                    image.at(0, 2, i, j));
        }
    }

    std::vector<double> desc(kGistSize, 0.0);
    for (int s = 0; s < kGistScales; ++s) {
        for (int o = 0; o < kGistOrientations; ++o) {
            const double theta = kPi * o / kGistOrientations;
            const GaborKernel kernel = make_gabor(kWavelengths[s], theta);
            const std::vector<double> re = correlate_same(lum, h, w, kernel.even, kernel.radius);
            const std::vector<double> im = correlate_same(lum, h, w, kernel.odd, kernel.radius);

            for (int gy = 0; gy < kGistGrid; ++gy) {
                for (int gx = 0; gx < kGistGrid; ++gx) {
                    const long r0 = h * gy / kGistGrid;
                    const long r1 = h * (gy + 1) / kGistGrid;
                    const long c0 = w * gx / kGistGrid;
                    const long c1 = w * (gx + 1) / kGistGrid;
                    double sum = 0.0;
                    for (long i = r0; i < r1; ++i) {
                        for (long j = c0; j < c1; ++j) {
                            const std::size_t p = static_cast<std::size_t>(i * w + j);
                            sum += std::sqrt(re[p] * re[p] + im[p] * im[p]);
                        }
                    }
                    const long count = (r1 - r0) * (c1 - c0);
                    desc[static_cast<std::size_t>(((s * kGistOrientations + o) * kGistGrid + gy) *
                                                  kGistGrid + gx)] =
                        count > 0 ? sum / static_cast<double>(count) : 0.0;
                }
            }
        }
    }

    double ss = 0.0;
    for (double v : desc) ss += v * v;
    const double norm = std::sqrt(ss);
    if (norm <= kDegenerateNorm) {
        std::fill(desc.begin(), desc.end(), 0.0);
        return desc;
    }
    for (double& v : desc) v /= norm;
    return desc;
}

std::vector<double> lab_histogram(const Tensor<float>& image) {
    check_rgb_image(image, "lab_histogram");
    const long h = image.shape.h;
    const long w = image.shape.w;
    std::vector<double> hist(kLabHistSize, 0.0);
    auto bin_of = [](double v, double lo, double hi) {
        const long b = static_cast<long>(std::floor((v - lo) / (hi - lo) * kLabBins));
        return std::clamp(b, 0L, static_cast<long>(kLabBins - 1));
    };
    for (long i = 0; i < h; ++i) {
        for (long j = 0; j < w; ++j) {
            const auto lab = pipeline::rgb_to_lab(image.at(0, 0, i, j), image.at(0, 1, i, j),
                                                  image.at(0, 2, i, j));
            hist[static_cast<std::size_t>(bin_of(lab[0], 0.0, 100.0))] += 1.0;
            hist[static_cast<std::size_t>(kLabBins + bin_of(lab[1], -110.0, 110.0))] += 1.0;
            hist[static_cast<std::size_t>(2 * kLabBins + bin_of(lab[2], -110.0, 110.0))] += 1.0;
        }
    }
    const double count = static_cast<double>(h * w);
    for (double& v : hist) v /= count; // L1 per marginal: each sums to 1

    double ss = 0.0;
    for (double v : hist) ss += v * v;
    const double norm = std::sqrt(ss);
    for (double& v : hist) v /= norm;
    return hist;
}

ImageDescriptor compute_descriptor(const Tensor<float>& image) {
    ImageDescriptor d;
    d.gist = gist_descriptor(image);
    d.lab_hist = lab_histogram(image);
    return d;
}

double descriptor_distance(const ImageDescriptor& a, const ImageDescriptor& b) {
    if (a.gist.size() != b.gist.size() || a.lab_hist.size() != b.lab_hist.size()) {
        throw ShapeError("descriptor_distance: descriptor sizes differ");
    }
    double ss = 0.0;
    for (std::size_t i = 0; i < a.gist.size(); ++i) {
        const double d = a.gist[i] - b.gist[i];
        ss += d * d;
    }
    for (std::size_t i = 0; i < a.lab_hist.size(); ++i) {
        const double d = a.lab_hist[i] - b.lab_hist[i];
        ss += d * d;
    }
    return std::sqrt(ss);
}

std::vector<GroupSpec> build_training_groups(const std::vector<ImageDescriptor>& descriptors,
                                             const std::vector<std::string>& ids, int k) {
    if (k < 1) throw ConfigError("build_training_groups: k must be >= 1");
    if (descriptors.size() != ids.size()) {
        throw ConfigError("build_training_groups: descriptor/id counts differ");
    }
    if (descriptors.size() < static_cast<std::size_t>(k)) {
        throw ConfigError("build_training_groups: need at least " + std::to_string(k) +
                          " images, got " + std::to_string(descriptors.size()));
    }
    const std::size_t n = descriptors.size();
    std::vector<GroupSpec> groups;
    groups.reserve(n);
    for (std::size_t a = 0; a < n; ++a) {
        std::vector<std::pair<double, std::size_t>> others;
        others.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == a) continue;
            others.emplace_back(descriptor_distance(descriptors[a], descriptors[j]), j);
        }
        std::sort(others.begin(), others.end());
        GroupSpec g;
        g.anchor = ids[a];
        g.members.push_back(ids[a]);
        for (int m = 0; m < k - 1; ++m) {
            g.members.push_back(ids[others[static_cast<std::size_t>(m)].second]);
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

std::vector<GroupSpec> sample_eval_groups(const std::vector<std::string>& members, int k,
                                          std::uint64_t seed) {
    if (k < 1) throw ConfigError("sample_eval_groups: k must be >= 1");
    if (members.empty()) throw ConfigError("sample_eval_groups: empty member list");

    Rng rng(seed);
    const std::size_t n = members.size();
    std::vector<GroupSpec> groups;

    if (n < static_cast<std::size_t>(k)) {
        // Too few members for a draw without replacement: one padded group.
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng.shuffle(idx);
        GroupSpec g;
        for (std::size_t i : idx) g.members.push_back(members[i]);
        while (g.members.size() < static_cast<std::size_t>(k)) {
            g.members.push_back(members[rng.below(n)]);
        }
        groups.push_back(std::move(g));
        return groups;
    }

    std::vector<bool> covered(n, false);
    std::vector<std::size_t> uncovered(n);
    std::iota(uncovered.begin(), uncovered.end(), std::size_t{0});

    auto draw_from = [&rng](std::vector<std::size_t> pool, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
        }
        pool.resize(count);
        return pool;
    };

    while (!uncovered.empty()) {
        GroupSpec g;
        if (uncovered.size() >= static_cast<std::size_t>(k)) {
            for (std::size_t i : draw_from(uncovered, static_cast<std::size_t>(k))) {
                g.members.push_back(members[i]);
                covered[i] = true;
            }
        } else {
            std::vector<std::size_t> covered_pool;
            for (std::size_t i = 0; i < n; ++i) {
                if (covered[i]) covered_pool.push_back(i);
            }
            for (std::size_t i : uncovered) {
                g.members.push_back(members[i]);
                covered[i] = true;
            }
            const std::size_t fill = static_cast<std::size_t>(k) - g.members.size();
            for (std::size_t i : draw_from(std::move(covered_pool), fill)) {
                g.members.push_back(members[i]);
            }
        }
        uncovered.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (!covered[i]) uncovered.push_back(i);
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

std::string groups_to_json(int k, const std::vector<GroupSpec>& groups) {
    nlohmann::json root;
    root["k"] = k;
    nlohmann::json list = nlohmann::json::array();
    for (const GroupSpec& g : groups) {
        nlohmann::json jg;
        if (!g.anchor.empty()) jg["anchor"] = g.anchor;
        jg["members"] = g.members;
        list.push_back(std::move(jg));
    }
    root["groups"] = std::move(list);
    return root.dump(2) + "\n";
}

std::pair<int, std::vector<GroupSpec>> groups_from_json(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("groups file: invalid JSON: ") + e.what());
    }
    if (!root.is_object() || !root.contains("k") || !root.contains("groups") ||
        !root["k"].is_number_integer() || !root["groups"].is_array()) {
        throw ConfigError("groups file: expected {\"k\": int, \"groups\": [...]}");
    }
    const int k = root["k"].get<int>();
    if (k < 1) throw ConfigError("groups file: k must be >= 1");
    std::vector<GroupSpec> groups;
    for (const auto& jg : root["groups"]) {
        if (!jg.is_object() || !jg.contains("members") || !jg["members"].is_array()) {
            throw ConfigError("groups file: each group needs a members array");
        }
        GroupSpec g;
        if (jg.contains("anchor")) {
            if (!jg["anchor"].is_string()) throw ConfigError("groups file: anchor must be a string");
            g.anchor = jg["anchor"].get<std::string>();
        }
        for (const auto& m : jg["members"]) {
            if (!m.is_string()) throw ConfigError("groups file: members must be strings");
            g.members.push_back(m.get<std::string>());
        }
        if (g.members.size() != static_cast<std::size_t>(k)) {
            throw ConfigError("groups file: group has " + std::to_string(g.members.size()) +
                              " members, expected " + std::to_string(k));
        }
        groups.push_back(std::move(g));
    }
    return {k, groups};
}

} // namespace gwcosal::grouping
