#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "data_io.hpp"
#include "network.hpp"
#include "objective.hpp"
#include "projection.hpp"
#include "robustness.hpp"
#include "rng.hpp"

namespace dipnet {

using json = nlohmann::ordered_json;

struct DataConfig {
    std::string path;       // CSV source; empty means synthesize
    bool use_synth = true;
    SynthSpec synth;
    Schema schema;
    SplitSpec split;
};

struct ProjectionConfig {
    std::string mask = "none"; // none | first | all | explicit "0,1,1"
    ProjectionMode mode = ProjectionMode::Learnable;
    double fixed_lambda = 0.25;
    double init_log_lambda = ProjectionParams::kDefaultInit;
    bool tied = false;

    /// Expand the mask string for a net of `depth` layers.
    std::vector<bool> mask_for_depth(std::size_t depth) const
    {
        std::vector<bool> m(depth, false);
        if (mask == "none") return m;
        if (mask == "all") {
            m.assign(depth, true);
            return m;
        }
        if (mask == "first") {
            m[0] = true;
            return m;
        }
        std::stringstream ss(mask);
        std::string cell;
        std::vector<bool> listed;
        while (std::getline(ss, cell, ','))
            listed.push_back(cell == "1" || cell == "true");
        if (listed.size() != depth)
            throw std::invalid_argument("projection mask '" + mask + "' has " +
                                        std::to_string(listed.size()) + " entries for " +
                                        std::to_string(depth) + " layers");
        return listed;
    }
};

struct ModelConfig {
    std::vector<std::size_t> widths = {100, 100}; // hidden layer widths
    Activation activation = Activation::Relu;
    Task task = Task::Regression;
    std::size_t num_classes = 2;
    ProjectionConfig projection;
};

namespace detail {

inline Activation parse_activation(const std::string& s)
{
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

inline ProjectionMode parse_projection_mode(const std::string& s)
{
    if (s == "disabled") return ProjectionMode::Disabled;
    if (s == "learnable") return ProjectionMode::Learnable;
    if (s == "fixed") return ProjectionMode::Fixed;
    throw std::invalid_argument("unknown projection mode '" + s + "'");
}

inline AttackKind parse_attack_kind(const std::string& s)
{
    if (s == "none") return AttackKind::None;
    if (s == "gaussian") return AttackKind::Gaussian;
    if (s == "fgsm") return AttackKind::Fgsm;
    throw std::invalid_argument("unknown attack kind '" + s + "'");
}

inline AttackPhase parse_attack_phase(const std::string& s)
{
    if (s == "train") return AttackPhase::TrainInputs;
    if (s == "eval") return AttackPhase::EvalInputs;
    throw std::invalid_argument("unknown attack phase '" + s + "'");
}

inline void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                                const std::string& where, std::vector<std::string>& errors)
{
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const std::string& k : known) ok = ok || item.key() == k;
        if (!ok) errors.push_back("unknown key '" + item.key() + "' in " + where);
    }
}

} // namespace detail

/// One declarative run description: data source, model, hyperparameters,
/// attack, and a method tag that the projection layout must agree with.
struct RunConfig {
    DataConfig data;
    ModelConfig model;
    Hyperparams hp;
    AttackSpec attack;
    std::string method = "standard"; // standard | dipnet | rs | fixed
    std::uint64_t seed = 42;
    std::string out_dir = ".";

    /// Parse errors are accumulated here (unknown keys, bad enum values);
    /// validate() folds them into its report.
    std::vector<std::string> parse_errors;

    static RunConfig from_json(const json& j);
    static RunConfig from_file(const std::string& path);

    json to_json() const;
    std::vector<std::string> validate() const;
    std::uint64_t hash() const;
    std::string hash_hex() const;
};

/// Method-aware defaults: fields the file leaves out get the method's
/// conventional value, so a config can be as short as {"method": "dipnet"}.
inline void apply_method_defaults(RunConfig& cfg, const json& hp_block, const json& proj_block)
{
    auto hp_missing = [&](const char* k) { return !hp_block.contains(k); };
    auto proj_missing = [&](const char* k) { return !proj_block.contains(k); };

    if (cfg.method == "standard") {
        if (proj_missing("mask")) cfg.model.projection.mask = "none";
        // Hyperparams defaults already are alpha=beta=lambda_stab=0, m=k=1
    } else if (cfg.method == "dipnet") {
        if (proj_missing("mask")) cfg.model.projection.mask = "all";
        if (proj_missing("mode")) cfg.model.projection.mode = ProjectionMode::Learnable;
        if (hp_missing("alpha")) cfg.hp.alpha = 1e-3;
        if (hp_missing("beta")) cfg.hp.beta = 1e-4;
        if (hp_missing("lambda_stab")) cfg.hp.lambda_stab = 0.1;
        if (hp_missing("m")) cfg.hp.m = 2;
        if (hp_missing("k")) cfg.hp.k = 16;
    } else if (cfg.method == "rs") {
        if (proj_missing("mask")) cfg.model.projection.mask = "first";
        if (proj_missing("mode")) cfg.model.projection.mode = ProjectionMode::Fixed;
        if (hp_missing("k")) cfg.hp.k = 1;
    } else if (cfg.method == "fixed") {
        if (proj_missing("mask")) cfg.model.projection.mask = "all";
        if (proj_missing("mode")) cfg.model.projection.mode = ProjectionMode::Fixed;
        if (hp_missing("m")) cfg.hp.m = 2;
        if (hp_missing("k")) cfg.hp.k = 16;
    }
}

inline RunConfig RunConfig::from_json(const json& j)
{
    RunConfig cfg;
    auto& errors = cfg.parse_errors;
    detail::reject_unknown_keys(
        j, {"data", "model", "hp", "attack", "method", "seed", "out_dir"}, "config root", errors);

    if (j.contains("method")) cfg.method = j["method"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();

    const json data = j.value("data", json::object());
    detail::reject_unknown_keys(data,
                                {"path", "synth", "target", "ood_column", "ood_threshold",
                                 "test_fraction", "train_fraction", "val_fraction", "seed"},
                                "data block", errors);
    if (data.contains("path")) {
        cfg.data.path = data["path"].get<std::string>();
        cfg.data.use_synth = false;
    }
    if (data.contains("synth")) {
        const json s = data["synth"];
        detail::reject_unknown_keys(
            s, {"n", "d", "noise_sigma", "seed", "ood_fraction", "ood_shift"}, "synth block",
            errors);
        cfg.data.use_synth = true;
        cfg.data.synth.n = s.value("n", cfg.data.synth.n);
        cfg.data.synth.d = s.value("d", cfg.data.synth.d);
        cfg.data.synth.noise_sigma = s.value("noise_sigma", cfg.data.synth.noise_sigma);
        cfg.data.synth.seed = s.value("seed", cfg.data.synth.seed);
        cfg.data.synth.ood_fraction = s.value("ood_fraction", cfg.data.synth.ood_fraction);
        cfg.data.synth.ood_shift = s.value("ood_shift", cfg.data.synth.ood_shift);
    }
    cfg.data.schema.target = data.value("target", cfg.data.schema.target);
    cfg.data.schema.ood_column = data.value("ood_column", cfg.data.schema.ood_column);
    cfg.data.schema.ood_threshold = data.value("ood_threshold", cfg.data.schema.ood_threshold);
    cfg.data.split.test_fraction = data.value("test_fraction", cfg.data.split.test_fraction);
    cfg.data.split.train_fraction = data.value("train_fraction", cfg.data.split.train_fraction);
    cfg.data.split.val_fraction = data.value("val_fraction", cfg.data.split.val_fraction);
    cfg.data.split.seed = data.value("seed", cfg.data.split.seed);
    // synthetic OOD blocks announce themselves in an is_ood column
    if (cfg.data.use_synth && cfg.data.synth.ood_fraction > 0.0 &&
        cfg.data.schema.ood_column.empty())
        cfg.data.schema.ood_column = "is_ood";

    const json model = j.value("model", json::object());
    detail::reject_unknown_keys(
        model, {"widths", "activation", "task", "num_classes", "projection"}, "model block",
        errors);
    if (model.contains("widths")) cfg.model.widths = model["widths"].get<std::vector<std::size_t>>();
    try {
        if (model.contains("activation"))
            cfg.model.activation = detail::parse_activation(model["activation"]);
        if (model.contains("task")) {
            const std::string t = model["task"].get<std::string>();
            if (t == "regression") cfg.model.task = Task::Regression;
            else if (t == "classification") cfg.model.task = Task::Classification;
            else errors.push_back("unknown task '" + t + "'");
        }
    } catch (const std::exception& e) {
        errors.push_back(e.what());
    }
    cfg.model.num_classes = model.value("num_classes", cfg.model.num_classes);
    cfg.data.schema.regression = cfg.model.task == Task::Regression;

    const json proj = model.value("projection", json::object());
    detail::reject_unknown_keys(
        proj, {"mask", "mode", "fixed_lambda", "init_log_lambda", "tied"}, "projection block",
        errors);
    cfg.model.projection.mask = proj.value("mask", cfg.model.projection.mask);
    try {
        if (proj.contains("mode"))
            cfg.model.projection.mode = detail::parse_projection_mode(proj["mode"]);
    } catch (const std::exception& e) {
        errors.push_back(e.what());
    }
    cfg.model.projection.fixed_lambda = proj.value("fixed_lambda", cfg.model.projection.fixed_lambda);
    cfg.model.projection.init_log_lambda =
        proj.value("init_log_lambda", cfg.model.projection.init_log_lambda);
    cfg.model.projection.tied = proj.value("tied", cfg.model.projection.tied);

    const json hp = j.value("hp", json::object());
    detail::reject_unknown_keys(hp,
                                {"alpha", "beta", "lambda_stab", "m", "k", "sigma_obs", "lr",
                                 "epochs", "batch_size", "momentum", "mean_reduction"},
                                "hp block", errors);
    cfg.hp.alpha = hp.value("alpha", cfg.hp.alpha);
    cfg.hp.beta = hp.value("beta", cfg.hp.beta);
    cfg.hp.lambda_stab = hp.value("lambda_stab", cfg.hp.lambda_stab);
    cfg.hp.m = hp.value("m", cfg.hp.m);
    cfg.hp.k = hp.value("k", cfg.hp.k);
    cfg.hp.sigma_obs = hp.value("sigma_obs", cfg.hp.sigma_obs);
    cfg.hp.lr = hp.value("lr", cfg.hp.lr);
    cfg.hp.epochs = hp.value("epochs", cfg.hp.epochs);
    cfg.hp.batch_size = hp.value("batch_size", cfg.hp.batch_size);
    cfg.hp.momentum = hp.value("momentum", cfg.hp.momentum);
    cfg.hp.mean_reduction = hp.value("mean_reduction", cfg.hp.mean_reduction);

    const json att = j.value("attack", json::object());
    detail::reject_unknown_keys(att, {"kind", "sigma", "eps", "phase"}, "attack block", errors);
    try {
        if (att.contains("kind")) cfg.attack.kind = detail::parse_attack_kind(att["kind"]);
        if (att.contains("phase")) cfg.attack.phase = detail::parse_attack_phase(att["phase"]);
    } catch (const std::exception& e) {
        errors.push_back(e.what());
    }
    cfg.attack.sigma = att.value("sigma", cfg.attack.sigma);
    cfg.attack.epsilon = att.value("eps", cfg.attack.epsilon);

    apply_method_defaults(cfg, hp, proj);
    return cfg;
}

inline RunConfig RunConfig::from_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw std::runtime_error("config '" + path + "': " + e.what());
    }
    return from_json(j);
}

inline json RunConfig::to_json() const
{
    json j;
    json data;
    if (!this->data.path.empty()) data["path"] = this->data.path;
    if (this->data.use_synth)
        data["synth"] = {{"n", this->data.synth.n},
                         {"d", this->data.synth.d},
                         {"noise_sigma", this->data.synth.noise_sigma},
                         {"seed", this->data.synth.seed},
                         {"ood_fraction", this->data.synth.ood_fraction},
                         {"ood_shift", this->data.synth.ood_shift}};
    data["target"] = this->data.schema.target;
    if (!this->data.schema.ood_column.empty()) {
        data["ood_column"] = this->data.schema.ood_column;
        data["ood_threshold"] = this->data.schema.ood_threshold;
    }
    data["test_fraction"] = this->data.split.test_fraction;
    data["train_fraction"] = this->data.split.train_fraction;
    data["val_fraction"] = this->data.split.val_fraction;
    data["seed"] = this->data.split.seed;
    j["data"] = data;

    j["model"] = {{"widths", model.widths},
                  {"activation", to_string(model.activation)},
                  {"task", to_string(model.task)},
                  {"num_classes", model.num_classes},
                  {"projection",
                   {{"mask", model.projection.mask},
                    {"mode", to_string(model.projection.mode)},
                    {"fixed_lambda", model.projection.fixed_lambda},
                    {"init_log_lambda", model.projection.init_log_lambda},
                    {"tied", model.projection.tied}}}};
    j["hp"] = {{"alpha", hp.alpha},
               {"beta", hp.beta},
               {"lambda_stab", hp.lambda_stab},
               {"m", hp.m},
               {"k", hp.k},
               {"sigma_obs", hp.sigma_obs},
               {"lr", hp.lr},
               {"epochs", hp.epochs},
               {"batch_size", hp.batch_size},
               {"momentum", hp.momentum},
               {"mean_reduction", hp.mean_reduction}};
    j["attack"] = {{"kind", to_string(attack.kind)},
                   {"sigma", attack.sigma},
                   {"eps", attack.epsilon},
                   {"phase", to_string(attack.phase)}};
    j["method"] = method;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    return j;
}

inline std::vector<std::string> RunConfig::validate() const
{
    std::vector<std::string> errors = parse_errors;
    for (const std::string& e : hp.validate()) errors.push_back("hp: " + e);
    for (const std::string& e : attack.validate()) errors.push_back("attack: " + e);

    if (!data.use_synth && data.path.empty())
        errors.push_back("data: neither a csv path nor a synth block given");
    if (data.split.test_fraction <= 0.0 || data.split.test_fraction >= 1.0)
        errors.push_back("data: test_fraction must be in (0, 1)");
    if (data.split.train_fraction <= 0.0 || data.split.train_fraction > 1.0)
        errors.push_back("data: train_fraction must be in (0, 1]");
    if (model.task == Task::Classification && model.num_classes < 2)
        errors.push_back("model: classification needs num_classes >= 2");

    const std::size_t depth = model.widths.size() + 1;
    std::vector<bool> mask;
    try {
        mask = model.projection.mask_for_depth(depth);
    } catch (const std::exception& e) {
        errors.push_back(std::string("model: ") + e.what());
        return errors;
    }
    std::size_t enabled = 0;
    for (bool b : mask) enabled += b ? 1 : 0;

    const ProjectionMode pmode = model.projection.mode;
    if (method == "standard") {
        if (enabled != 0) errors.push_back("method standard: projection mask must be 'none'");
        if (hp.alpha != 0.0 || hp.beta != 0.0 || hp.lambda_stab != 0.0)
            errors.push_back("method standard: alpha, beta, lambda_stab must be 0");
        if (hp.m != 1 || hp.k != 1) errors.push_back("method standard: m and k must be 1");
    } else if (method == "dipnet") {
        if (enabled == 0) errors.push_back("method dipnet: at least one projection required");
        if (pmode != ProjectionMode::Learnable)
            errors.push_back("method dipnet: projection mode must be 'learnable'");
    } else if (method == "rs") {
        if (!(enabled == 1 && !mask.empty() && mask[0]))
            errors.push_back("method rs: projection mask must be 'first' (input layer only)");
        if (pmode != ProjectionMode::Fixed)
            errors.push_back("method rs: projection mode must be 'fixed'");
        if (hp.alpha != 0.0 || hp.beta != 0.0 || hp.lambda_stab != 0.0)
            errors.push_back("method rs: alpha, beta, lambda_stab must be 0");
        if (hp.k != 1) errors.push_back("method rs: k must be 1 (sample once at evaluation)");
        if (model.projection.fixed_lambda <= 0.0)
            errors.push_back("method rs: fixed_lambda (noise variance) must be positive");
    } else if (method == "fixed") {
        if (enabled == 0) errors.push_back("method fixed: at least one projection required");
        if (pmode != ProjectionMode::Fixed)
            errors.push_back("method fixed: projection mode must be 'fixed'");
        if (model.projection.fixed_lambda < 0.0)
            errors.push_back("method fixed: fixed_lambda must be nonnegative");
    } else {
        errors.push_back("unknown method '" + method + "'");
    }
    return errors;
}

inline std::uint64_t RunConfig::hash() const
{
    // out_dir says where artifacts land, not what the experiment is; keeping
    // it out of the hash lets reruns into fresh directories stay comparable
    json j = to_json();
    j.erase("out_dir");
    const std::string dump = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string RunConfig::hash_hex() const
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

/// Instantiate the configured model for a given input width.
inline DipNet build_model(const RunConfig& cfg, std::size_t input_dim, RngStream& rng)
{
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (std::size_t w : cfg.model.widths) dims.push_back(w);
    dims.push_back(cfg.model.task == Task::Regression ? 1 : cfg.model.num_classes);
    DipNet net(dims, cfg.model.activation, cfg.model.task, rng);

    const std::vector<bool> mask = cfg.model.projection.mask_for_depth(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) {
        if (!mask[l]) continue;
        if (cfg.model.projection.mode == ProjectionMode::Learnable)
            net.set_projection(l, ProjectionParams::learnable(dims[l],
                                                              cfg.model.projection.init_log_lambda,
                                                              cfg.model.projection.tied));
        else if (cfg.model.projection.mode == ProjectionMode::Fixed)
            net.set_projection(l, ProjectionParams::fixed(dims[l], cfg.model.projection.fixed_lambda));
    }
    return net;
}

/// Load (or synthesize) and split the configured dataset.
inline DatasetSplit load_dataset(const RunConfig& cfg)
{
    RawTable table =
        cfg.data.use_synth ? synth_regression(cfg.data.synth) : load_csv(cfg.data.path, cfg.data.schema);
    return split(table, cfg.data.schema, cfg.data.split);
}

/// Turn any config into its Randomized-Smoothing counterpart: fixed input
/// noise of variance sigma_sq at the first layer only, no penalties, one
/// sample at evaluation.
inline RunConfig randomized_smoothing_mode(RunConfig cfg, double sigma_sq)
{
    cfg.method = "rs";
    cfg.model.projection.mask = "first";
    cfg.model.projection.mode = ProjectionMode::Fixed;
    cfg.model.projection.fixed_lambda = sigma_sq;
    cfg.hp.alpha = cfg.hp.beta = cfg.hp.lambda_stab = 0.0;
    cfg.hp.m = 1;
    cfg.hp.k = 1;
    return cfg;
}

} // namespace dipnet
