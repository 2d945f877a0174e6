#ifndef GWCOSAL_RUNCONFIG_HPP
#define GWCOSAL_RUNCONFIG_HPP

#include <array>
#include <string>

#include "gwcosal/net.hpp"
#include "gwcosal/trainer.hpp"

namespace gwcosal::pipeline {

// Everything one run needs, parsed from a single JSON document and
// schema-checked before any work starts. Unknown keys are rejected.
struct RunConfig {
    net::NetConfig net;
    train::TrainConfig train;
    std::array<float, 3> mean{0.485f, 0.456f, 0.406f};

    std::string images_dir;
    std::string masks_dir;
    std::string groups_file;
    std::string out_file;
    std::string log_file;

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
    std::string to_json_text() const;
};

// Canonical JSON echo of a NetConfig; embedded in weights files so loading
// can reject a config mismatch.
std::string net_config_to_json(const net::NetConfig& cfg);
net::NetConfig net_config_from_json(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace gwcosal::pipeline

#endif
