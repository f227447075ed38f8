#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "network.hpp"
#include "projection.hpp"
#include "rng.hpp"
#include "version.hpp"

namespace dipnet {

namespace detail {

inline std::vector<double> tensor_to_vec(const Tensor& t)
{
    return std::vector<double>(t.data(), t.data() + t.size());
}

} // namespace detail

/// Serialize a model (weights, activations, projection state, provenance) as
/// JSON. Doubles round-trip exactly, so save/load/save is byte-stable.
inline nlohmann::ordered_json checkpoint_to_json(const DipNet& model,
                                                 const std::string& config_hash)
{
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["version"] = kVersion;
    j["config_hash"] = config_hash;
    j["task"] = to_string(model.task());
    j["dims"] = model.dims();

    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const auto& layer : model.layers()) {
        nlohmann::ordered_json l;
        l["activation"] = to_string(layer.act);
        l["w"] = detail::tensor_to_vec(layer.w->data);
        l["b"] = detail::tensor_to_vec(layer.b->data);
        layers.push_back(l);
    }
    j["layers"] = layers;

    nlohmann::ordered_json projections = nlohmann::ordered_json::array();
    for (const auto& p : model.projections()) {
        nlohmann::ordered_json pj;
        pj["mode"] = to_string(p.mode());
        if (p.mode() == ProjectionMode::Learnable) {
            pj["tied"] = p.tied();
            pj["log_lambda"] = detail::tensor_to_vec(p.log_lambda()->data);
        } else if (p.mode() == ProjectionMode::Fixed) {
            pj["lambda"] = p.fixed_lambda();
        }
        projections.push_back(pj);
    }
    j["projections"] = projections;
    return j;
}

inline void save_checkpoint(const std::string& path, const DipNet& model,
                            const std::string& config_hash)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out << checkpoint_to_json(model, config_hash).dump(2) << "\n";
}

struct LoadedCheckpoint {
    DipNet model;
    std::string config_hash;
};

inline LoadedCheckpoint checkpoint_from_json(const nlohmann::ordered_json& j)
{
    if (j.value("schema_version", -1) != kSchemaVersion)
        throw std::runtime_error("checkpoint: unsupported schema_version");
    const std::string task_s = j.at("task").get<std::string>();
    const Task task = task_s == "regression" ? Task::Regression : Task::Classification;
    const std::vector<std::size_t> dims = j.at("dims").get<std::vector<std::size_t>>();

    RngStream dummy(0); // weights are overwritten below
    DipNet model(dims, Activation::Relu, task, dummy);

    const auto& layers = j.at("layers");
    if (layers.size() != model.depth()) throw std::runtime_error("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < model.depth(); ++l) {
        const auto& lj = layers[l];
        const std::string act = lj.at("activation").get<std::string>();
        model.layers()[l].act = act == "relu"       ? Activation::Relu
                                : act == "tanh"     ? Activation::Tanh
                                                    : Activation::Identity;
        const std::vector<double> w = lj.at("w").get<std::vector<double>>();
        const std::vector<double> b = lj.at("b").get<std::vector<double>>();
        Tensor& wt = model.layers()[l].w->data;
        Tensor& bt = model.layers()[l].b->data;
        if (w.size() != wt.size() || b.size() != bt.size())
            throw std::runtime_error("checkpoint: weight shape mismatch at layer " +
                                     std::to_string(l));
        std::copy(w.begin(), w.end(), wt.data());
        std::copy(b.begin(), b.end(), bt.data());
    }

    const auto& projections = j.at("projections");
    if (projections.size() != model.depth())
        throw std::runtime_error("checkpoint: projection count mismatch");
    for (std::size_t l = 0; l < model.depth(); ++l) {
        const auto& pj = projections[l];
        const std::string mode = pj.at("mode").get<std::string>();
        if (mode == "disabled") continue;
        if (mode == "fixed") {
            model.set_projection(l, ProjectionParams::fixed(dims[l], pj.at("lambda").get<double>()));
        } else if (mode == "learnable") {
            const bool tied = pj.value("tied", false);
            ProjectionParams p = ProjectionParams::learnable(dims[l], 0.0, tied);
            const std::vector<double> s = pj.at("log_lambda").get<std::vector<double>>();
            if (s.size() != p.log_lambda()->data.size())
                throw std::runtime_error("checkpoint: log_lambda length mismatch at layer " +
                                         std::to_string(l));
            std::copy(s.begin(), s.end(), p.log_lambda()->data.data());
            model.set_projection(l, std::move(p));
        } else {
            throw std::runtime_error("checkpoint: unknown projection mode '" + mode + "'");
        }
    }

    return {std::move(model), j.value("config_hash", std::string{})};
}

inline LoadedCheckpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error("checkpoint '" + path + "': " + e.what());
    }
    return checkpoint_from_json(j);
}

} // namespace dipnet
