#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "training.hpp"
#include "version.hpp"

namespace dipnet {

/// Line-delimited JSON metric stream. Every record carries the schema
/// version, library version, config hash, and seed, so any output file is
/// self-describing. Wall-clock times deliberately stay out of these files:
/// records must be byte-identical across reruns of the same config.
class MetricsWriter {
public:
    MetricsWriter(const std::string& path, const std::string& config_hash, std::uint64_t seed)
        : out_(path), config_hash_(config_hash), seed_(seed)
    {
        if (!out_) throw std::runtime_error("cannot write metrics file '" + path + "'");
    }

    void write(const std::string& kind, nlohmann::ordered_json payload)
    {
        nlohmann::ordered_json rec;
        rec["schema_version"] = kSchemaVersion;
        rec["version"] = kVersion;
        rec["config_hash"] = config_hash_;
        rec["seed"] = seed_;
        rec["kind"] = kind;
        for (auto& item : payload.items()) rec[item.key()] = item.value();
        out_ << rec.dump() << "\n";
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
    std::string config_hash_;
    std::uint64_t seed_;
};

inline nlohmann::ordered_json to_json(const LossBreakdown& l)
{
    return {{"nll", l.nll},
            {"trace_penalty", l.trace_penalty},
            {"logdet_penalty", l.logdet_penalty},
            {"stability", l.stability},
            {"total", l.total}};
}

inline nlohmann::ordered_json to_json(const EvalMetrics& m, Task task)
{
    nlohmann::ordered_json j;
    j["count"] = m.count;
    if (task == Task::Regression) {
        j["mse"] = m.mse;
        j["mse_original"] = m.mse_original;
    } else {
        j["accuracy"] = m.accuracy;
        j["mean_nll"] = m.mean_nll;
    }
    return j;
}

inline nlohmann::ordered_json to_json(const EpochRecord& r, Task task)
{
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = to_json(r.train_loss);
    if (r.has_val) j["val"] = to_json(r.val, task);
    return j;
}

} // namespace dipnet
