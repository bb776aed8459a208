#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sparsecnn/augment.hpp"
#include "sparsecnn/encode.hpp"
#include "sparsecnn/network.hpp"
#include "sparsecnn/train.hpp"

namespace sparsecnn {

enum class DataFormat : std::uint8_t { strokes, idx, cifar };

/// Everything a run needs, parsed from a flat "key = value" config file with
/// [network] / [data] / [augment] / [train] / [output] sections.
struct RunConfig {
    // [network]
    Family family = Family::deepcnet;
    int levels = 0;
    int k = 0;
    int features = 1;
    int classes = 0;
    std::vector<float> dropout;
    int char_scale = 0; // drawing box, 0 = default 2^levels

    // [data]
    DataFormat format = DataFormat::strokes;
    std::string train_path, train_labels;
    std::string test_path, test_labels;
    std::size_t limit_train = 0; // 0 = all
    std::size_t limit_test = 0;

    // [augment]
    AugmentConfig augment;

    // [train]
    TrainConfig train;

    // [output]
    std::string checkpoint_dir;
    std::string metrics_path;
};

namespace detail {

struct ConfigEntry {
    std::string value;
    int line = 0;
};

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

class ConfigReader {
public:
    explicit ConfigReader(std::istream& in) {
        std::string line, section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']') throw ParseError("unterminated section header", line_no);
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
            const std::string key = section + "." + trim(t.substr(0, eq));
            entries_[key] = {trim(t.substr(eq + 1)), line_no};
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback = "") {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.line = -1; // consumed
        return it->second.value;
    }

    template <typename T>
    T get_number(const std::string& key, T fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.line = -1;
        std::istringstream ss(it->second.value);
        T v{};
        ss >> v;
        if (ss.fail() || !ss.eof())
            throw ConfigError(key + ": cannot parse '" + it->second.value + "'");
        return v;
    }

    std::vector<float> get_float_list(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return {};
        it->second.line = -1;
        std::vector<float> out;
        std::string item;
        std::istringstream ss(it->second.value);
        while (std::getline(ss, item, ',')) {
            std::istringstream vs(trim(item));
            float v;
            vs >> v;
            if (vs.fail() || !vs.eof()) throw ConfigError(key + ": cannot parse '" + item + "'");
            out.push_back(v);
        }
        return out;
    }

    void reject_unknown() const {
        for (const auto& [key, entry] : entries_)
            if (entry.line >= 0)
                throw ConfigError(key + ": unknown key (line " + std::to_string(entry.line) + ")");
    }

private:
    std::map<std::string, ConfigEntry> entries_;
};

} // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
    detail::ConfigReader reader(in);
    RunConfig cfg;

    const std::string family = reader.get_string("network.family", "deepcnet");
    if (family == "deepcnet")
        cfg.family = Family::deepcnet;
    else if (family == "deepcnin")
        cfg.family = Family::deepcnin;
    else
        throw ConfigError("network.family: expected deepcnet or deepcnin, got '" + family + "'");
    cfg.levels = reader.get_number<int>("network.levels", 0);
    cfg.k = reader.get_number<int>("network.k", 0);
    cfg.features = reader.get_number<int>("network.features", 1);
    cfg.classes = reader.get_number<int>("network.classes", 0);
    cfg.dropout = reader.get_float_list("network.dropout");
    cfg.char_scale = reader.get_number<int>("network.char_scale", 0);

    const std::string format = reader.get_string("data.format", "strokes");
    if (format == "strokes")
        cfg.format = DataFormat::strokes;
    else if (format == "idx")
        cfg.format = DataFormat::idx;
    else if (format == "cifar")
        cfg.format = DataFormat::cifar;
    else
        throw ConfigError("data.format: expected strokes, idx or cifar, got '" + format + "'");
    cfg.train_path = reader.get_string("data.train");
    cfg.train_labels = reader.get_string("data.train_labels");
    cfg.test_path = reader.get_string("data.test");
    cfg.test_labels = reader.get_string("data.test_labels");
    cfg.limit_train = reader.get_number<std::size_t>("data.limit_train", 0);
    cfg.limit_test = reader.get_number<std::size_t>("data.limit_test", 0);

    const std::string mode = reader.get_string("augment.mode", "none");
    if (mode == "none")
        cfg.augment.mode = AugmentMode::none;
    else if (mode == "translate")
        cfg.augment.mode = AugmentMode::translate;
    else if (mode == "affine")
        cfg.augment.mode = AugmentMode::affine;
    else
        throw ConfigError("augment.mode: expected none, translate or affine, got '" + mode + "'");
    cfg.augment.max_shift = reader.get_number<int>("augment.max_shift", -1);
    cfg.augment.rotation_range = reader.get_number<double>("augment.rotation", 0.2);
    cfg.augment.scale_min = reader.get_number<double>("augment.scale_min", 0.8);
    cfg.augment.scale_max = reader.get_number<double>("augment.scale_max", 1.2);
    cfg.augment.shear_range = reader.get_number<double>("augment.shear", 0.2);

    cfg.train.epochs = reader.get_number<int>("train.epochs", 20);
    cfg.train.batch_size = reader.get_number<int>("train.batch_size", 16);
    cfg.train.learning_rate = reader.get_number<float>("train.learning_rate", 0.01f);
    cfg.train.lr_decay = reader.get_number<float>("train.lr_decay", 0.98f);
    cfg.train.momentum = reader.get_number<float>("train.momentum", 0.9f);
    cfg.train.seed = reader.get_number<std::uint64_t>("train.seed", 1);
    cfg.train.checkpoint_interval = reader.get_number<int>("train.checkpoint_interval", 0);
    cfg.train.threads = reader.get_number<int>("train.threads", 1);

    cfg.checkpoint_dir = reader.get_string("output.checkpoint_dir", ".");
    cfg.metrics_path = reader.get_string("output.metrics");

    reader.reject_unknown();

    // defaults that depend on other fields
    if (cfg.augment.max_shift < 0)
        cfg.augment.max_shift = cfg.levels >= 2 ? (1 << (cfg.levels - 2)) : 1;
    if (cfg.char_scale == 0 && cfg.levels >= 1) cfg.char_scale = 1 << cfg.levels;
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_run_config(in);
}

/// Cross-field validation; throws ConfigError naming the offending field.
inline void validate_run_config(const RunConfig& cfg) {
    if (cfg.levels < 1) throw ConfigError("network.levels: must be >= 1");
    if (cfg.k < 1) throw ConfigError("network.k: must be >= 1");
    if (cfg.classes < 2) throw ConfigError("network.classes: must be >= 2");
    if (!cfg.dropout.empty() && static_cast<int>(cfg.dropout.size()) != cfg.levels + 2)
        throw ConfigError("network.dropout: expected " + std::to_string(cfg.levels + 2) +
                          " entries (levels+2), got " + std::to_string(cfg.dropout.size()));
    for (float p : cfg.dropout)
        if (p < 0.f || p >= 1.f) throw ConfigError("network.dropout: entries must be in [0, 1)");
    switch (cfg.format) {
        case DataFormat::strokes:
            if (cfg.features != 1 && cfg.features != 9)
                throw ConfigError("network.features: stroke data needs 1 or 9, got " +
                                  std::to_string(cfg.features));
            break;
        case DataFormat::idx:
            if (cfg.features != 1)
                throw ConfigError("network.features: idx images need 1, got " +
                                  std::to_string(cfg.features));
            if (cfg.train_labels.empty() || cfg.test_labels.empty())
                throw ConfigError("data.train_labels/test_labels: required for idx format");
            break;
        case DataFormat::cifar:
            if (cfg.features != 3)
                throw ConfigError("network.features: cifar images need 3, got " +
                                  std::to_string(cfg.features));
            break;
    }
    if (cfg.char_scale < 1 || cfg.char_scale > 3 * (1 << cfg.levels))
        throw ConfigError("network.char_scale: must be in [1, input size]");
    if (cfg.augment.max_shift < 0) throw ConfigError("augment.max_shift: must be >= 0");
    if (cfg.augment.scale_min <= 0 || cfg.augment.scale_max < cfg.augment.scale_min)
        throw ConfigError("augment.scale_min/scale_max: need 0 < min <= max");
    cfg.train.validate();
}

inline NetworkSpec build_network(const RunConfig& cfg) {
    return cfg.family == Family::deepcnet
               ? build_deepcnet(cfg.levels, cfg.k, cfg.features, cfg.classes, cfg.dropout)
               : build_deepcnin(cfg.levels, cfg.k, cfg.features, cfg.classes, cfg.dropout);
}

inline EncodingConfig encoding_config(const RunConfig& cfg) {
    EncodingConfig enc = EncodingConfig::from_levels(cfg.levels, cfg.features == 9);
    enc.character_scale = cfg.char_scale;
    return enc;
}

} // namespace sparsecnn
