#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugmm/errors.hpp"
#include "ugmm/network.hpp"
#include "ugmm/train.hpp"

namespace ugmm {

struct DatasetConfig {
    std::string name;  // "iris" or "mnist"
    std::string csv;   // iris
    std::string train_images, train_labels, test_images, test_labels;  // mnist
    double test_fraction = 0.2;        // iris split
    std::size_t max_train_samples = 0; // 0 = all; desk-scale runs cap this
};

/// One experiment, one JSON document. Field names are the schema; unknown
/// keys anywhere are rejected.
struct RunConfig {
    ModelKind kind = ModelKind::ugmm;
    TrainMode mode = TrainMode::discriminative;
    std::vector<std::size_t> layer_widths;
    std::vector<DropoutPlacement> dropout;
    OptimConfig optimizer;
    ScheduleConfig schedule;
    std::size_t epochs = 0;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    std::string output_dir;

    NetworkSpec network_spec() const {
        NetworkSpec spec;
        spec.kind = kind;
        spec.mode = mode;
        spec.layer_widths = layer_widths;
        spec.dropout = dropout;
        spec.seed = seed;
        return spec;
    }
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) {
            throw ConfigError(where + ": unknown key \"" + item.key() + "\"");
        }
    }
}

template <typename T>
T get_field(const json& obj, const std::string& where, const std::string& key) {
    if (!obj.contains(key)) throw ConfigError(where + "." + key + ": missing required field");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

template <typename T>
T get_field_or(const json& obj, const std::string& where, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& doc) {
    using detail::get_field;
    using detail::get_field_or;
    using nlohmann::json;
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    detail::reject_unknown_keys(doc,
                                {"kind", "mode", "layer_widths", "dropout", "optimizer",
                                 "schedule", "epochs", "batch_size", "seed", "dataset",
                                 "output_dir"},
                                "config");
    RunConfig cfg;

    const auto kind = get_field<std::string>(doc, "config", "kind");
    if (kind == "ugmm") cfg.kind = ModelKind::ugmm;
    else if (kind == "ffnn") cfg.kind = ModelKind::ffnn;
    else throw ConfigError("config.kind: must be \"ugmm\" or \"ffnn\"");

    const auto mode = get_field<std::string>(doc, "config", "mode");
    if (mode == "discriminative") cfg.mode = TrainMode::discriminative;
    else if (mode == "generative") cfg.mode = TrainMode::generative;
    else throw ConfigError("config.mode: must be \"discriminative\" or \"generative\"");

    cfg.layer_widths = get_field<std::vector<std::size_t>>(doc, "config", "layer_widths");

    if (doc.contains("dropout")) {
        if (!doc.at("dropout").is_array()) throw ConfigError("config.dropout: must be an array");
        for (const auto& entry : doc.at("dropout")) {
            if (!entry.is_object()) {
                throw ConfigError("config.dropout: entries must be {\"layer\": i, \"p\": x}");
            }
            detail::reject_unknown_keys(entry, {"layer", "p"}, "config.dropout");
            DropoutPlacement d;
            d.layer = get_field<std::size_t>(entry, "config.dropout", "layer");
            d.p = get_field<double>(entry, "config.dropout", "p");
            cfg.dropout.push_back(d);
        }
    }

    const json opt = get_field<json>(doc, "config", "optimizer");
    detail::reject_unknown_keys(opt, {"lr0", "beta1", "beta2", "eps", "grad_clip"},
                                "config.optimizer");
    cfg.optimizer.lr0 = get_field<double>(opt, "config.optimizer", "lr0");
    cfg.optimizer.beta1 = get_field_or<double>(opt, "config.optimizer", "beta1", 0.9);
    cfg.optimizer.beta2 = get_field_or<double>(opt, "config.optimizer", "beta2", 0.999);
    cfg.optimizer.eps = get_field_or<double>(opt, "config.optimizer", "eps", 1e-8);
    // Global-norm clipping defaults on for uGMM training (the 1/sigma^2
    // terms can spike early); off for the dense baseline.
    cfg.optimizer.grad_clip = get_field_or<double>(opt, "config.optimizer", "grad_clip",
                                                   cfg.kind == ModelKind::ugmm ? 10.0 : 0.0);
    if (!(cfg.optimizer.lr0 > 0.0)) throw ConfigError("config.optimizer.lr0: must be positive");
    if (!(cfg.optimizer.beta1 >= 0.0 && cfg.optimizer.beta1 < 1.0)) {
        throw ConfigError("config.optimizer.beta1: must be in [0,1)");
    }
    if (!(cfg.optimizer.beta2 >= 0.0 && cfg.optimizer.beta2 < 1.0)) {
        throw ConfigError("config.optimizer.beta2: must be in [0,1)");
    }
    if (!(cfg.optimizer.eps > 0.0)) throw ConfigError("config.optimizer.eps: must be positive");
    if (!(cfg.optimizer.grad_clip >= 0.0)) {
        throw ConfigError("config.optimizer.grad_clip: must be >= 0");
    }

    const json sched = get_field<json>(doc, "config", "schedule");
    detail::reject_unknown_keys(sched, {"milestones", "gamma"}, "config.schedule");
    cfg.schedule.milestones =
        get_field_or<std::vector<std::size_t>>(sched, "config.schedule", "milestones", {});
    cfg.schedule.gamma = get_field_or<double>(sched, "config.schedule", "gamma", 0.1);
    for (std::size_t i = 1; i < cfg.schedule.milestones.size(); ++i) {
        if (cfg.schedule.milestones[i] <= cfg.schedule.milestones[i - 1]) {
            throw ConfigError("config.schedule.milestones: must be strictly increasing");
        }
    }
    if (!(cfg.schedule.gamma > 0.0 && cfg.schedule.gamma < 1.0)) {
        throw ConfigError("config.schedule.gamma: must be in (0,1)");
    }

    cfg.epochs = get_field<std::size_t>(doc, "config", "epochs");
    cfg.batch_size = get_field<std::size_t>(doc, "config", "batch_size");
    if (cfg.batch_size == 0) throw ConfigError("config.batch_size: must be >= 1");
    cfg.seed = get_field<std::uint64_t>(doc, "config", "seed");

    const json ds = get_field<json>(doc, "config", "dataset");
    detail::reject_unknown_keys(ds,
                                {"name", "csv", "train_images", "train_labels", "test_images",
                                 "test_labels", "test_fraction", "max_train_samples"},
                                "config.dataset");
    cfg.dataset.name = get_field<std::string>(ds, "config.dataset", "name");
    if (cfg.dataset.name == "iris") {
        cfg.dataset.csv = get_field<std::string>(ds, "config.dataset", "csv");
        cfg.dataset.test_fraction =
            get_field_or<double>(ds, "config.dataset", "test_fraction", 0.2);
        if (!(cfg.dataset.test_fraction > 0.0 && cfg.dataset.test_fraction < 1.0)) {
            throw ConfigError("config.dataset.test_fraction: must be in (0,1)");
        }
    } else if (cfg.dataset.name == "mnist") {
        cfg.dataset.train_images = get_field<std::string>(ds, "config.dataset", "train_images");
        cfg.dataset.train_labels = get_field<std::string>(ds, "config.dataset", "train_labels");
        cfg.dataset.test_images = get_field<std::string>(ds, "config.dataset", "test_images");
        cfg.dataset.test_labels = get_field<std::string>(ds, "config.dataset", "test_labels");
    } else {
        throw ConfigError("config.dataset.name: must be \"iris\" or \"mnist\"");
    }
    cfg.dataset.max_train_samples =
        get_field_or<std::size_t>(ds, "config.dataset", "max_train_samples", 0);

    cfg.output_dir = get_field<std::string>(doc, "config", "output_dir");

    cfg.network_spec().validate();  // widths and dropout placements
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": invalid JSON (" + e.what() + ")");
    }
    return parse_run_config(doc);
}

/// Load the dataset a config names and produce (train, test) splits ready
/// for training: iris is stratified 80/20 by the run seed and z-scored with
/// train-split statistics; MNIST uses the official file split scaled to
/// [0,1], optionally capped to the first max_train_samples samples.
inline std::pair<Dataset, Dataset> load_config_datasets(const RunConfig& cfg) {
    if (cfg.dataset.name == "iris") {
        const Dataset full = load_iris(cfg.dataset.csv);
        auto split = stratified_split(full, cfg.dataset.test_fraction, cfg.seed);
        if (cfg.dataset.max_train_samples > 0) {
            split.first = head(split.first, cfg.dataset.max_train_samples);
        }
        return split;
    }
    Dataset train = load_mnist(cfg.dataset.train_images, cfg.dataset.train_labels);
    Dataset test = load_mnist(cfg.dataset.test_images, cfg.dataset.test_labels);
    if (cfg.dataset.max_train_samples > 0) train = head(train, cfg.dataset.max_train_samples);
    return {std::move(train), std::move(test)};
}

}  // namespace ugmm
