#include "gwcosal/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "gwcosal/runconfig.hpp"

namespace gwcosal::pipeline {

namespace fs = std::filesystem;

namespace {

bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::string find_mask_for(const std::string& id, const fs::path& masks_dir) {
    for (const char* ext : {".png", ".jpg", ".jpeg"}) {
        const fs::path candidate = masks_dir / (id + ext);
        if (fs::exists(candidate)) return candidate.string();
    }
    return "";
}

} // namespace

DatasetManifest DatasetManifest::from_directory(const std::string& images_dir,
                                                const std::string& masks_dir) {
    if (!fs::is_directory(images_dir)) {
        throw ConfigError("image directory does not exist: " + images_dir);
    }
    if (!masks_dir.empty() && !fs::is_directory(masks_dir)) {
        throw ConfigError("mask directory does not exist: " + masks_dir);
    }
    DatasetManifest m;
    m.root = images_dir;
    for (const fs::directory_entry& e : fs::directory_iterator(images_dir)) {
        if (!e.is_regular_file() || !has_image_extension(e.path())) continue;
        ManifestEntry entry;
        entry.id = e.path().stem().string();
        entry.image_path = e.path().string();
        if (!masks_dir.empty()) {
            entry.mask_path = find_mask_for(entry.id, masks_dir);
            if (entry.mask_path.empty()) {
                throw ConfigError("no mask found for image id \"" + entry.id + "\" in " +
                                  masks_dir);
            }
        }
        m.entries.push_back(std::move(entry));
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
    m.validate();
    return m;
}

DatasetManifest DatasetManifest::from_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest " + path + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array()) {
        throw ConfigError("manifest " + path + ": expected an object with an entries array");
    }
    DatasetManifest m;
    const fs::path base = fs::path(path).parent_path();
    const std::string root_field =
        j.contains("root") && j["root"].is_string() ? j["root"].get<std::string>() : ".";
    const fs::path root = fs::path(root_field).is_absolute() ? fs::path(root_field)
                                                             : base / root_field;
    m.root = root.lexically_normal().string();

    for (const auto& je : j["entries"]) {
        if (!je.is_object() || !je.contains("id") || !je.contains("image") ||
            !je["id"].is_string() || !je["image"].is_string()) {
            throw ConfigError("manifest " + path + ": entries need string id and image fields");
        }
        ManifestEntry entry;
        entry.id = je["id"].get<std::string>();
        entry.image_path = (root / je["image"].get<std::string>()).lexically_normal().string();
        if (je.contains("mask")) {
            if (!je["mask"].is_string()) {
                throw ConfigError("manifest " + path + ": mask must be a string");
            }
            entry.mask_path = (root / je["mask"].get<std::string>()).lexically_normal().string();
        }
        m.entries.push_back(std::move(entry));
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });

    if (j.contains("groups")) {
        if (!j["groups"].is_array()) {
            throw ConfigError("manifest " + path + ": groups must be an array of id arrays");
        }
        for (const auto& jg : j["groups"]) {
            if (!jg.is_array() || jg.empty()) {
                throw ConfigError("manifest " + path + ": each group must be a non-empty array");
            }
            std::vector<std::string> g;
            for (const auto& id : jg) {
                if (!id.is_string()) {
                    throw ConfigError("manifest " + path + ": group members must be id strings");
                }
                g.push_back(id.get<std::string>());
            }
            m.groups.push_back(std::move(g));
        }
    }
    m.validate();
    return m;
}

const ManifestEntry& DatasetManifest::by_id(const std::string& id) const {
    const auto it = std::lower_bound(
        entries.begin(), entries.end(), id,
        [](const ManifestEntry& e, const std::string& key) { return e.id < key; });
    if (it == entries.end() || it->id != id) {
        throw ConfigError("unknown image id: " + id);
    }
    return *it;
}

std::vector<std::string> DatasetManifest::ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const ManifestEntry& e : entries) out.push_back(e.id);
    return out;
}

void DatasetManifest::validate() const {
    std::set<std::string> seen;
    for (const ManifestEntry& e : entries) {
        if (e.id.empty()) throw ConfigError("manifest: empty image id");
        if (!seen.insert(e.id).second) {
            throw ConfigError("manifest: duplicate image id \"" + e.id + "\"");
        }
        if (!fs::exists(e.image_path)) {
            throw ConfigError("manifest: missing image file " + e.image_path);
        }
        if (!e.mask_path.empty() && !fs::exists(e.mask_path)) {
            throw ConfigError("manifest: missing mask file " + e.mask_path);
        }
    }
    for (const auto& g : groups) {
        for (const std::string& id : g) {
            if (seen.count(id) == 0) {
                throw ConfigError("manifest: group references unknown id \"" + id + "\"");
            }
        }
    }
}

} // namespace gwcosal::pipeline
