#include "gwcosal/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gwcosal::pipeline {

namespace {

using nlohmann::json;

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
    }
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (known.count(it.key()) == 0) {
            throw ConfigError(std::string(where) + ": unknown key \"" + it.key() + "\"");
        }
    }
}

template <typename T>
T get_number(const json& obj, const char* key, T fallback, const char* where) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) {
        throw ConfigError(std::string(where) + ": \"" + key + "\" must be a number");
    }
    return v.get<T>();
}

std::string get_string(const json& obj, const char* key, const std::string& fallback,
                       const char* where) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) {
        throw ConfigError(std::string(where) + ": \"" + key + "\" must be a string");
    }
    return v.get<std::string>();
}

} // namespace

std::string net_config_to_json(const net::NetConfig& cfg) {
    json j;
    j["k"] = cfg.k;
    j["profile"] = cfg.profile;
    j["input_size"] = {cfg.input_h, cfg.input_w};
    j["semantic_widths"] = cfg.semantic_widths;
    j["pool_positions"] = cfg.pool_positions;
    j["group_branch_width"] = cfg.group_branch_width;
    j["single_branch_width"] = cfg.single_branch_width;
    j["upsample_factor"] = cfg.upsample_factor;
    return j.dump();
}

net::NetConfig net_config_from_json(const std::string& text) {
    const json j = parse_json(text, "net config");
    if (!j.is_object()) throw ConfigError("net config: expected a JSON object");
    reject_unknown_keys(j,
                        {"k", "profile", "input_size", "semantic_widths", "pool_positions",
                         "group_branch_width", "single_branch_width", "upsample_factor"},
                        "net config");
    net::NetConfig cfg;
    try {
        cfg.k = j.at("k").get<int>();
        cfg.profile = j.at("profile").get<std::string>();
        cfg.input_h = j.at("input_size").at(0).get<long>();
        cfg.input_w = j.at("input_size").at(1).get<long>();
        cfg.semantic_widths = j.at("semantic_widths").get<std::vector<long>>();
        cfg.pool_positions = j.at("pool_positions").get<std::vector<int>>();
        cfg.group_branch_width = j.at("group_branch_width").get<long>();
        cfg.single_branch_width = j.at("single_branch_width").get<long>();
        cfg.upsample_factor = j.at("upsample_factor").get<long>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("net config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    const json j = parse_json(text, "run config");
    if (!j.is_object()) throw ConfigError("run config: expected a JSON object");
    reject_unknown_keys(j, {"profile", "k", "input_size", "mean", "train", "paths"},
                        "run config");

    RunConfig cfg;
    const std::string profile = get_string(j, "profile", "desk", "run config");
    const int k = get_number<int>(j, "k", 5, "run config");
    long input_h = 128;
    long input_w = 256;
    if (j.contains("input_size")) {
        const json& s = j.at("input_size");
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() ||
            !s[1].is_number_integer()) {
            throw ConfigError("run config: \"input_size\" must be [height, width]");
        }
        input_h = s[0].get<long>();
        input_w = s[1].get<long>();
    }
    if (profile == "desk") {
        cfg.net = net::NetConfig::desk(k, input_h, input_w);
    } else if (profile == "paper") {
        cfg.net = net::NetConfig::paper(k, input_h, input_w);
    } else {
        throw ConfigError("run config: profile must be \"desk\" or \"paper\", got \"" +
                          profile + "\"");
    }

    if (j.contains("mean")) {
        const json& m = j.at("mean");
        if (!m.is_array() || m.size() != 3 || !m[0].is_number() || !m[1].is_number() ||
            !m[2].is_number()) {
            throw ConfigError("run config: \"mean\" must be [r, g, b]");
        }
        for (std::size_t i = 0; i < 3; ++i) cfg.mean[i] = m[i].get<float>();
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        if (!t.is_object()) throw ConfigError("run config: \"train\" must be an object");
        reject_unknown_keys(t,
                            {"lr", "momentum", "weight_decay", "max_iters", "seed",
                             "loss_reduction", "snapshot_every"},
                            "run config train");
        cfg.train.lr = get_number<double>(t, "lr", cfg.train.lr, "run config train");
        cfg.train.momentum =
            get_number<double>(t, "momentum", cfg.train.momentum, "run config train");
        cfg.train.weight_decay =
            get_number<double>(t, "weight_decay", cfg.train.weight_decay, "run config train");
        cfg.train.max_iters =
            get_number<long>(t, "max_iters", cfg.train.max_iters, "run config train");
        cfg.train.seed =
            get_number<std::uint64_t>(t, "seed", cfg.train.seed, "run config train");
        cfg.train.snapshot_every =
            get_number<long>(t, "snapshot_every", cfg.train.snapshot_every, "run config train");
        const std::string reduction =
            get_string(t, "loss_reduction", "mean", "run config train");
        if (reduction == "mean") {
            cfg.train.reduction = train::Reduction::mean;
        } else if (reduction == "sum") {
            cfg.train.reduction = train::Reduction::sum;
        } else {
            throw ConfigError("run config: loss_reduction must be \"sum\" or \"mean\"");
        }
    }
    cfg.train.validate();

    if (j.contains("paths")) {
        const json& p = j.at("paths");
        if (!p.is_object()) throw ConfigError("run config: \"paths\" must be an object");
        reject_unknown_keys(p, {"images", "masks", "groups", "out", "log"}, "run config paths");
        cfg.images_dir = get_string(p, "images", "", "run config paths");
        cfg.masks_dir = get_string(p, "masks", "", "run config paths");
        cfg.groups_file = get_string(p, "groups", "", "run config paths");
        cfg.out_file = get_string(p, "out", "", "run config paths");
        cfg.log_file = get_string(p, "log", "", "run config paths");
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_json_text(read_text_file(path));
}

std::string RunConfig::to_json_text() const {
    json j;
    j["profile"] = net.profile;
    j["k"] = net.k;
    j["input_size"] = {net.input_h, net.input_w};
    j["mean"] = {mean[0], mean[1], mean[2]};
    json t;
    t["lr"] = train.lr;
    t["momentum"] = train.momentum;
    t["weight_decay"] = train.weight_decay;
    t["max_iters"] = train.max_iters;
    t["seed"] = train.seed;
    t["loss_reduction"] = train.reduction == train::Reduction::mean ? "mean" : "sum";
    t["snapshot_every"] = train.snapshot_every;
    j["train"] = std::move(t);
    json p;
    if (!images_dir.empty()) p["images"] = images_dir;
    if (!masks_dir.empty()) p["masks"] = masks_dir;
    if (!groups_file.empty()) p["groups"] = groups_file;
    if (!out_file.empty()) p["out"] = out_file;
    if (!log_file.empty()) p["log"] = log_file;
    if (!p.empty()) j["paths"] = std::move(p);
    return j.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out << text;
    if (!out) throw IoError("cannot write file: " + path);
}

} // namespace gwcosal::pipeline
