#ifndef GWCOSAL_MANIFEST_HPP
#define GWCOSAL_MANIFEST_HPP

#include <string>
#include <vector>

#include "gwcosal/error.hpp"

namespace gwcosal::pipeline {

struct ManifestEntry {
    std::string id;
    std::string image_path; // resolved, absolute or cwd-relative
    std::string mask_path;  // empty when the corpus has no mask for this id
};

// Image ids mapped to files, plus optional declared group structure for
// curated datasets. Entries are sorted by id; ids are unique; referenced
// files are checked for existence at load time.
struct DatasetManifest {
    std::string root;
    std::vector<ManifestEntry> entries;
    std::vector<std::vector<std::string>> groups;

    // Scans dir for *.png / *.jpg / *.jpeg; id = filename stem. When
    // masks_dir is non-empty every id must resolve to a mask there.
    static DatasetManifest from_directory(const std::string& images_dir,
                                          const std::string& masks_dir = "");

    // JSON document {"root": ".", "entries": [{"id", "image", "mask"?}],
    // "groups"?: [["id", ...], ...]}; paths resolve against root, root
    // against the manifest's own directory.
    static DatasetManifest from_file(const std::string& path);

    const ManifestEntry& by_id(const std::string& id) const;
    std::vector<std::string> ids() const;
    void validate() const;
};

} // namespace gwcosal::pipeline

#endif
