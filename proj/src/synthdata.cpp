#include "gwcosal/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "gwcosal/image_io.hpp"
#include "gwcosal/rng.hpp"
#include "gwcosal/runconfig.hpp"

namespace gwcosal::synth {

namespace {

constexpr int kShapeKinds = 4;
constexpr float kBackground = 0.1f;
constexpr float kNoise = 0.03f;

// One colour per kind; commonality must be read from the group, not the kind.
constexpr float kColors[kShapeKinds][3] = {
    {0.85f, 0.25f, 0.25f}, // rectangle
    {0.25f, 0.80f, 0.30f}, // disc
    {0.25f, 0.35f, 0.90f}, // triangle
    {0.90f, 0.80f, 0.20f}, // ring
};

struct Placement {
    int kind = 0;
    long cy = 0;
    long cx = 0;
    long r = 0;
};

bool inside_shape(const Placement& p, long y, long x) {
    const long dy = y - p.cy;
    const long dx = x - p.cx;
    switch (p.kind) {
        case 0: // rectangle
            return std::abs(dy) <= p.r * 3 / 4 && std::abs(dx) <= p.r;
        case 1: // disc
            return dy * dy + dx * dx <= p.r * p.r;
        case 2: { // upward triangle
            if (dy < -p.r || dy > p.r) return false;
            const long half = (dy + p.r) * p.r / (2 * p.r);
            return std::abs(dx) <= half;
        }
        default: { // ring
            const long d2 = dy * dy + dx * dx;
            const long inner = p.r * 11 / 20;
            return d2 <= p.r * p.r && d2 >= inner * inner;
        }
    }
}

bool bboxes_overlap(const Placement& a, const Placement& b, long margin) {
    return std::abs(a.cy - b.cy) <= a.r + b.r + margin &&
           std::abs(a.cx - b.cx) <= a.r + b.r + margin;
}

Placement random_placement(Rng& rng, int kind, long h, long w, long r_min, long r_max) {
    Placement p;
    p.kind = kind;
    p.r = r_min + static_cast<long>(rng.below(static_cast<std::uint64_t>(r_max - r_min + 1)));
    p.cy = p.r + 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(h - 2 * p.r - 1)));
    p.cx = p.r + 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(w - 2 * p.r - 1)));
    return p;
}

// The common object is kept larger than the distractors: the upsampling head
// blurs boundaries over roughly upsample_factor pixels, so targets much
// smaller than that are mostly boundary.
void size_range(long h, bool common, long& r_min, long& r_max) {
    if (common) {
        r_min = std::max(6L, h / 4);
        r_max = std::max(r_min + 1, h / 3);
    } else {
        r_min = std::max(4L, h / 10);
        r_max = std::max(r_min + 1, h / 7);
    }
}

// 3x3 binomial blur with replicated borders.
Tensor<float> blur3(const Tensor<float>& in) {
    static const float w[3] = {0.25f, 0.5f, 0.25f};
    const long h = in.shape.h;
    const long ww = in.shape.w;
    Tensor<float> out(in.shape);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < ww; ++x) {
            float acc = 0.0f;
            for (int dy = -1; dy <= 1; ++dy) {
                const long yy = std::clamp(y + dy, 0L, h - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const long xx = std::clamp(x + dx, 0L, ww - 1);
                    acc += w[dy + 1] * w[dx + 1] * in.at(0, 0, yy, xx);
                }
            }
            out.at(0, 0, y, x) = acc;
        }
    }
    return out;
}

void paint(Tensor<float>& image, Tensor<float>& mask, const Placement& p) {
    const long h = image.shape.h;
    const long w = image.shape.w;
    const long y0 = std::max(0L, p.cy - p.r);
    const long y1 = std::min(h - 1, p.cy + p.r);
    const long x0 = std::max(0L, p.cx - p.r);
    const long x1 = std::min(w - 1, p.cx + p.r);
    for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
            if (!inside_shape(p, y, x)) continue;
            for (long c = 0; c < 3; ++c) {
                image.at(0, c, y, x) = kColors[p.kind][c];
            }
            mask.at(0, 0, y, x) = 1.0f;
        }
    }
}

} // namespace

std::vector<SynthGroup> make_groups(int n_groups, int k, long h, long w, std::uint64_t seed) {
    if (n_groups < 1 || k < 1) throw ConfigError("make_groups: counts must be positive");
    if (h < 32 || w < 32) throw ConfigError("make_groups: canvas must be at least 32x32");
    Rng rng(seed);
    std::vector<SynthGroup> groups;
    groups.reserve(static_cast<std::size_t>(n_groups));

    long common_rmin = 0, common_rmax = 0, distr_rmin = 0, distr_rmax = 0;
    size_range(h, true, common_rmin, common_rmax);
    size_range(h, false, distr_rmin, distr_rmax);

    for (int g = 0; g < n_groups; ++g) {
        SynthGroup group;
        const int common_kind = g % kShapeKinds;
        const Placement common =
            random_placement(rng, common_kind, h, w, common_rmin, common_rmax);

        for (int i = 0; i < k; ++i) {
            Tensor<float> image(Shape4{1, 3, h, w}, kBackground);
            Tensor<float> gt(Shape4{1, 1, h, w});
            Tensor<float> distractors(Shape4{1, 1, h, w});

            std::vector<Placement> placed{common};
            for (int d = 0; d < 2; ++d) {
                const int kind =
                    (common_kind + 1 + static_cast<int>(rng.below(kShapeKinds - 1))) %
                    kShapeKinds;
                for (int attempt = 0; attempt < 100; ++attempt) {
                    const Placement p =
                        random_placement(rng, kind, h, w, distr_rmin, distr_rmax);
                    bool clear = true;
                    for (const Placement& q : placed) {
                        if (bboxes_overlap(p, q, 2)) {
                            clear = false;
                            break;
                        }
                    }
                    if (clear) {
                        paint(image, distractors, p);
                        placed.push_back(p);
                        break;
                    }
                }
            }
            paint(image, gt, common);

            for (float& v : image.data) {
                v = std::clamp(v + kNoise * (2.0f * static_cast<float>(rng.uniform()) - 1.0f),
                               0.0f, 1.0f);
            }
            group.images.push_back(std::move(image));
            // soft edges, as resizing full-resolution binary masks would give;
            // binarizing at 0.5 recovers the drawn shape
            group.gt.push_back(blur3(blur3(gt)));
            group.distractor_mask.push_back(std::move(distractors));
        }
        groups.push_back(std::move(group));
    }
    return groups;
}

void write_corpus(const std::vector<SynthGroup>& groups, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");

    nlohmann::json manifest;
    manifest["root"] = ".";
    nlohmann::json entries = nlohmann::json::array();
    nlohmann::json jgroups = nlohmann::json::array();

    for (std::size_t g = 0; g < groups.size(); ++g) {
        nlohmann::json member_ids = nlohmann::json::array();
        for (std::size_t i = 0; i < groups[g].images.size(); ++i) {
            std::ostringstream id_os;
            id_os << "g" << g << "_i" << i;
            const std::string id = id_os.str();

            const Tensor<float>& img = groups[g].images[i];
            const long h = img.shape.h;
            const long w = img.shape.w;
            std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h * w * 3));
            for (long y = 0; y < h; ++y) {
                for (long x = 0; x < w; ++x) {
                    for (long c = 0; c < 3; ++c) {
                        rgb[static_cast<std::size_t>((y * w + x) * 3 + c)] =
                            static_cast<std::uint8_t>(
                                std::lround(std::clamp(img.at(0, c, y, x), 0.0f, 1.0f) * 255.0f));
                    }
                }
            }
            const std::string image_rel = "images/" + id + ".png";
            pipeline::write_rgb_png((fs::path(dir) / image_rel).string(), h, w, rgb);
            pipeline::save_saliency_png((fs::path(dir) / "masks" / (id + ".png")).string(),
                                        groups[g].gt[i]);

            nlohmann::json je;
            je["id"] = id;
            je["image"] = image_rel;
            je["mask"] = "masks/" + id + ".png";
            entries.push_back(std::move(je));
            member_ids.push_back(id);
        }
        jgroups.push_back(std::move(member_ids));
    }
    manifest["entries"] = std::move(entries);
    manifest["groups"] = std::move(jgroups);
    pipeline::write_text_file((fs::path(dir) / "manifest.json").string(),
                              manifest.dump(2) + "\n");
}

} // namespace gwcosal::synth
