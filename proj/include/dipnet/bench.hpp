#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "robustness.hpp"
#include "training.hpp"

namespace dipnet {

struct BenchOptions {
    std::vector<std::string> methods = {"standard", "dipnet"};
    std::vector<std::vector<std::size_t>> archs = {{100, 100},
                                                   {100, 100, 100, 100},
                                                   {400, 400, 400, 400}};
    std::vector<double> test_fractions = {0.3, 0.5};
    std::vector<double> train_fractions = {1.0};
    std::size_t seeds = 5;
    std::uint64_t seed_base = 1;
    AttackSpec eval_attack{AttackKind::Fgsm, 0.0, 0.1, AttackPhase::EvalInputs};
    std::size_t jobs = 1;
};

struct BenchRow {
    std::string method;
    std::string arch;
    std::vector<std::size_t> widths;
    double test_fraction = 0.0;
    double train_fraction = 1.0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double clean_mse = std::numeric_limits<double>::quiet_NaN();
    double adv_mse = std::numeric_limits<double>::quiet_NaN();
    double ood_mse = std::numeric_limits<double>::quiet_NaN();
};

/// Challenger-vs-baseline tallies over grid cells where both runs succeeded.
struct BenchSummary {
    std::string baseline, challenger;
    std::size_t pairs = 0;
    std::size_t adv_wins = 0;      // challenger adversarial MSE strictly lower
    std::size_t clean_within = 0;  // challenger clean MSE <= 1.05 * baseline
    std::size_t ood_pairs = 0;
    std::size_t ood_wins = 0; // challenger OOD MSE <= baseline
};

struct BenchResult {
    std::vector<BenchRow> rows;
    BenchSummary summary;
};

inline std::string arch_label(const std::vector<std::size_t>& widths)
{
    if (widths.empty()) return "linear";
    bool uniform = true;
    for (std::size_t w : widths) uniform = uniform && w == widths.front();
    if (uniform) return std::to_string(widths.size()) + "x" + std::to_string(widths.front());
    std::string s;
    for (std::size_t i = 0; i < widths.size(); ++i)
        s += (i ? "-" : "") + std::to_string(widths[i]);
    return s;
}

namespace detail {

/// Evaluation streams are derived from the cell seed, separate from the
/// training tags used inside train().
inline void run_bench_cell(const json& base, BenchRow& row, const AttackSpec& eval_attack)
{
    try {
        json j = base;
        j["method"] = row.method;
        j["model"]["widths"] = row.widths;
        j["data"]["test_fraction"] = row.test_fraction;
        j["data"]["train_fraction"] = row.train_fraction;
        j["data"]["seed"] = row.seed; // split seed
        j["seed"] = row.seed;         // init + training seed
        RunConfig cfg = RunConfig::from_json(j);
        std::vector<std::string> errors = cfg.validate();
        if (!errors.empty()) {
            std::string msg;
            for (const std::string& e : errors) msg += (msg.empty() ? "" : "; ") + e;
            row.error = msg;
            return;
        }

        DatasetSplit data = load_dataset(cfg);
        RngStream init_rng = model_init_stream(cfg.seed);
        DipNet model = build_model(cfg, data.feature_dim(), init_rng);
        const AttackSpec train_attack =
            cfg.attack.phase == AttackPhase::TrainInputs ? cfg.attack : AttackSpec{};
        train(model, data, cfg.hp, cfg.seed, train_attack);

        RngStream clean_rng = RngStream(cfg.seed).derive(0xec, 0);
        row.clean_mse = evaluate(model, data.x_test_id, data.y_test_id, cfg.hp.k, clean_rng,
                                 data.stats.target_std)
                            .mse_original;
        if (eval_attack.active()) {
            RngStream adv_rng = RngStream(cfg.seed).derive(0xea, 0);
            Tensor x_adv =
                apply_attack(model, data.x_test_id, data.y_test_id, eval_attack, adv_rng);
            RngStream adv_eval_rng = RngStream(cfg.seed).derive(0xeb, 0);
            row.adv_mse = evaluate(model, x_adv, data.y_test_id, cfg.hp.k, adv_eval_rng,
                                   data.stats.target_std)
                              .mse_original;
        }
        if (data.has_ood()) {
            RngStream ood_rng = RngStream(cfg.seed).derive(0xed, 0);
            row.ood_mse = evaluate(model, data.x_test_ood, data.y_test_ood, cfg.hp.k, ood_rng,
                                   data.stats.target_std)
                              .mse_original;
        }
        row.ok = true;
    } catch (const std::exception& e) {
        row.error = e.what();
    }
}

} // namespace detail

/// Run the full (method x arch x fraction x seed) grid. Cells are
/// independent; failures are recorded per cell and the grid continues. With
/// jobs > 1 cells run on a small thread pool; outputs are identical to the
/// serial run because every cell derives its own rng streams.
inline BenchResult run_bench(const json& base_config, const BenchOptions& opt)
{
    BenchResult result;
    for (const std::string& method : opt.methods)
        for (const auto& widths : opt.archs)
            for (double tf : opt.test_fractions)
                for (double trf : opt.train_fractions)
                    for (std::size_t s = 0; s < opt.seeds; ++s) {
                        BenchRow row;
                        row.method = method;
                        row.widths = widths;
                        row.arch = arch_label(widths);
                        row.test_fraction = tf;
                        row.train_fraction = trf;
                        row.seed = opt.seed_base + s;
                        result.rows.push_back(std::move(row));
                    }

    const std::size_t jobs = std::max<std::size_t>(1, opt.jobs);
    if (jobs == 1) {
        for (BenchRow& row : result.rows) detail::run_bench_cell(base_config, row, opt.eval_attack);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < result.rows.size();
                     i = next.fetch_add(1))
                    detail::run_bench_cell(base_config, result.rows[i], opt.eval_attack);
            });
        for (std::thread& t : pool) t.join();
    }

    // challenger-vs-baseline summary over matched cells
    BenchSummary& sum = result.summary;
    if (opt.methods.size() >= 2) {
        sum.baseline = opt.methods[0];
        sum.challenger = opt.methods[1];
        for (const BenchRow& base_row : result.rows) {
            if (base_row.method != sum.baseline || !base_row.ok) continue;
            for (const BenchRow& chal : result.rows) {
                if (chal.method != sum.challenger || !chal.ok) continue;
                if (chal.arch != base_row.arch || chal.test_fraction != base_row.test_fraction ||
                    chal.train_fraction != base_row.train_fraction || chal.seed != base_row.seed)
                    continue;
                ++sum.pairs;
                if (!std::isnan(chal.adv_mse) && chal.adv_mse < base_row.adv_mse) ++sum.adv_wins;
                if (chal.clean_mse <= 1.05 * base_row.clean_mse) ++sum.clean_within;
                if (!std::isnan(chal.ood_mse) && !std::isnan(base_row.ood_mse)) {
                    ++sum.ood_pairs;
                    if (chal.ood_mse <= base_row.ood_mse) ++sum.ood_wins;
                }
            }
        }
    }
    return result;
}

inline void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "method,arch,test_fraction,train_fraction,seed,ok,clean_mse,adv_mse,ood_mse,error\n";
    char buf[40];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const BenchRow& r : rows) {
        std::string err = r.error;
        for (char& ch : err)
            if (ch == ',' || ch == '\n') ch = ';';
        out << r.method << ',' << r.arch << ',' << fmt(r.test_fraction) << ','
            << fmt(r.train_fraction) << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ','
            << fmt(r.clean_mse) << ',' << fmt(r.adv_mse) << ',' << fmt(r.ood_mse) << ',' << err
            << "\n";
    }
}

/// Per (method, arch, fractions) aggregates over seeds.
inline void write_bench_summary_csv(const std::string& path, const std::vector<BenchRow>& rows)
{
    struct Key {
        std::string method, arch;
        double tf, trf;
        bool operator==(const Key& o) const
        {
            return method == o.method && arch == o.arch && tf == o.tf && trf == o.trf;
        }
    };
    std::vector<Key> keys;
    std::vector<std::vector<const BenchRow*>> groups;
    for (const BenchRow& r : rows) {
        if (!r.ok) continue;
        Key k{r.method, r.arch, r.test_fraction, r.train_fraction};
        std::size_t gi = groups.size();
        for (std::size_t i = 0; i < keys.size(); ++i)
            if (keys[i] == k) gi = i;
        if (gi == groups.size()) {
            keys.push_back(k);
            groups.emplace_back();
        }
        groups[gi].push_back(&r);
    }

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "method,arch,test_fraction,train_fraction,n,clean_mean,clean_std,adv_mean,adv_std,"
           "ood_mean,ood_std\n";
    char buf[40];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto stats = [](const std::vector<const BenchRow*>& g, double BenchRow::*field) {
        double mean = 0.0;
        std::size_t n = 0;
        for (const BenchRow* r : g)
            if (!std::isnan(r->*field)) {
                mean += r->*field;
                ++n;
            }
        if (n == 0) return std::pair<double, double>{std::nan(""), std::nan("")};
        mean /= double(n);
        double ss = 0.0;
        for (const BenchRow* r : g)
            if (!std::isnan(r->*field)) ss += (r->*field - mean) * (r->*field - mean);
        return std::pair<double, double>{mean, n > 1 ? std::sqrt(ss / double(n - 1)) : 0.0};
    };
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto [cm, cs] = stats(groups[i], &BenchRow::clean_mse);
        auto [am, as] = stats(groups[i], &BenchRow::adv_mse);
        auto [om, os] = stats(groups[i], &BenchRow::ood_mse);
        out << keys[i].method << ',' << keys[i].arch << ',' << fmt(keys[i].tf) << ','
            << fmt(keys[i].trf) << ',' << groups[i].size() << ',' << fmt(cm) << ',' << fmt(cs)
            << ',' << fmt(am) << ',' << fmt(as) << ',' << fmt(om) << ',' << fmt(os) << "\n";
    }
}

inline json to_json(const BenchSummary& s)
{
    return {{"baseline", s.baseline},   {"challenger", s.challenger},
            {"pairs", s.pairs},         {"adv_wins", s.adv_wins},
            {"clean_within", s.clean_within}, {"ood_pairs", s.ood_pairs},
            {"ood_wins", s.ood_wins}};
}

} // namespace dipnet
