// Command-line front end: train / eval / attack / probe / verify-theorems /
// bench / synth, driven by a JSON run config with flag overrides. Exit codes:
// 0 success, 2 config error, 3 numeric divergence, 4 failed smoothing-bound
// verification.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dipnet/bench.hpp"
#include "dipnet/checkpoint.hpp"
#include "dipnet/config.hpp"
#include "dipnet/data_io.hpp"
#include "dipnet/metrics.hpp"
#include "dipnet/network.hpp"
#include "dipnet/robustness.hpp"
#include "dipnet/smoothness.hpp"
#include "dipnet/training.hpp"
#include "dipnet/version.hpp"

namespace fs = std::filesystem;
using dipnet::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitTheorem = 4;

std::string default_out_dir()
{
    const char* env = std::getenv("DIPNET_OUT_DIR");
    return env && *env ? env : ".";
}

json load_config_json(const std::string& path)
{
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    return json::parse(in);
}

int report_config_errors(const std::vector<std::string>& errors)
{
    for (const std::string& e : errors) std::cerr << "config error: " << e << "\n";
    return kExitConfig;
}

/// Flag overrides shared by subcommands that take a full run config. Values
/// are injected into the JSON before parsing so method-aware defaults see
/// them exactly as if they had been written in the file.
struct ConfigFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> m, k;
    std::optional<double> alpha, beta, lambda_stab;
    std::optional<std::string> method;
    std::optional<std::string> out_dir;
    std::optional<double> test_fraction, train_fraction;
    std::optional<std::string> attack_kind;
    std::optional<double> attack_sigma, attack_eps;
    std::optional<std::string> attack_phase;
    bool print_effective = false;

    void add_to(CLI::App& cmd, bool with_training_knobs = true)
    {
        cmd.add_option("--config", config_path, "JSON run config");
        cmd.add_option("--seed", seed, "run seed (init, batching, noise)");
        cmd.add_option("--method", method, "standard | dipnet | rs | fixed");
        cmd.add_option("--out-dir", out_dir, "output directory (env DIPNET_OUT_DIR)");
        cmd.add_option("--test-fraction", test_fraction, "held-out test fraction");
        cmd.add_option("--train-fraction", train_fraction, "training-pool subsample");
        if (with_training_knobs) {
            cmd.add_option("--epochs", epochs, "training epochs");
            cmd.add_option("--lr", lr, "step size");
            cmd.add_option("--batch-size", batch_size, "mini-batch size");
            cmd.add_option("--m", m, "stochastic forwards per example (training)");
            cmd.add_option("--k", k, "averaged forwards (prediction)");
            cmd.add_option("--alpha", alpha, "trace-penalty weight");
            cmd.add_option("--beta", beta, "log-det penalty weight");
            cmd.add_option("--lambda-stab", lambda_stab, "stability-penalty weight");
        }
        cmd.add_option("--attack", attack_kind, "none | gaussian | fgsm")
            ->check(CLI::IsMember({"none", "gaussian", "fgsm"}));
        cmd.add_option("--attack-sigma", attack_sigma, "gaussian attack scale");
        cmd.add_option("--attack-eps", attack_eps, "fgsm step size");
        cmd.add_option("--attack-phase", attack_phase, "train | eval")
            ->check(CLI::IsMember({"train", "eval"}));
        cmd.add_flag("--print-effective-config", print_effective,
                     "dump the merged config to stdout");
    }

    json merged() const
    {
        json j = load_config_json(config_path);
        if (seed) j["seed"] = *seed;
        if (method) j["method"] = *method;
        if (out_dir) j["out_dir"] = *out_dir;
        if (!j.contains("out_dir")) j["out_dir"] = default_out_dir();
        if (test_fraction) j["data"]["test_fraction"] = *test_fraction;
        if (train_fraction) j["data"]["train_fraction"] = *train_fraction;
        if (epochs) j["hp"]["epochs"] = *epochs;
        if (lr) j["hp"]["lr"] = *lr;
        if (batch_size) j["hp"]["batch_size"] = *batch_size;
        if (m) j["hp"]["m"] = *m;
        if (k) j["hp"]["k"] = *k;
        if (alpha) j["hp"]["alpha"] = *alpha;
        if (beta) j["hp"]["beta"] = *beta;
        if (lambda_stab) j["hp"]["lambda_stab"] = *lambda_stab;
        if (attack_kind) j["attack"]["kind"] = *attack_kind;
        if (attack_sigma) j["attack"]["sigma"] = *attack_sigma;
        if (attack_eps) j["attack"]["eps"] = *attack_eps;
        if (attack_phase) j["attack"]["phase"] = *attack_phase;
        return j;
    }
};

struct SplitSelection {
    const dipnet::Tensor* x = nullptr;
    const dipnet::Tensor* y = nullptr;
};

SplitSelection select_split(const dipnet::DatasetSplit& data, const std::string& name)
{
    if (name == "train") return {&data.x_train, &data.y_train};
    if (name == "val") {
        if (!data.has_val()) throw std::runtime_error("no validation split configured");
        return {&data.x_val, &data.y_val};
    }
    if (name == "ood") {
        if (!data.has_ood()) throw std::runtime_error("no OOD split in this dataset");
        return {&data.x_test_ood, &data.y_test_ood};
    }
    return {&data.x_test_id, &data.y_test_id};
}

int cmd_train(const ConfigFlags& flags)
{
    dipnet::RunConfig cfg = dipnet::RunConfig::from_json(flags.merged());
    std::vector<std::string> errors = cfg.validate();
    if (!errors.empty()) return report_config_errors(errors);
    if (flags.print_effective) {
        std::cout << cfg.to_json().dump(2) << "\n";
        return kExitOk; // inspection only, skip the run
    }

    fs::create_directories(cfg.out_dir);
    dipnet::DatasetSplit data = dipnet::load_dataset(cfg);
    dipnet::RngStream init_rng = dipnet::model_init_stream(cfg.seed);
    dipnet::DipNet model = dipnet::build_model(cfg, data.feature_dim(), init_rng);
    std::cerr << "train: " << data.x_train.rows() << " rows, " << data.feature_dim()
              << " features, " << model.parameter_count() << " parameters\n";

    dipnet::MetricsWriter metrics(cfg.out_dir + "/metrics.jsonl", cfg.hash_hex(), cfg.seed);
    dipnet::TrainCallbacks cb;
    cb.on_epoch = [&](const dipnet::EpochRecord& rec) {
        metrics.write("epoch", dipnet::to_json(rec, cfg.model.task));
        std::cerr << "epoch " << rec.epoch << ": total " << rec.train_loss.total;
        if (rec.has_val) std::cerr << ", val mse " << rec.val.mse_original;
        std::cerr << " (" << rec.wall_seconds << "s)\n";
    };
    const dipnet::AttackSpec train_attack =
        cfg.attack.phase == dipnet::AttackPhase::TrainInputs ? cfg.attack : dipnet::AttackSpec{};

    try {
        dipnet::train(model, data, cfg.hp, cfg.seed, train_attack, cb);
    } catch (const dipnet::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    }

    // final evaluation block: clean test, optional eval-phase attack, OOD
    json final_eval;
    dipnet::RngStream clean_rng = dipnet::RngStream(cfg.seed).derive(0xec, 0);
    final_eval["test"] = dipnet::to_json(
        dipnet::evaluate(model, data.x_test_id, data.y_test_id, cfg.hp.k, clean_rng,
                         data.stats.target_std),
        cfg.model.task);
    if (cfg.attack.active() && cfg.attack.phase == dipnet::AttackPhase::EvalInputs) {
        dipnet::RngStream adv_rng = dipnet::RngStream(cfg.seed).derive(0xea, 0);
        dipnet::Tensor x_adv =
            dipnet::apply_attack(model, data.x_test_id, data.y_test_id, cfg.attack, adv_rng);
        dipnet::RngStream adv_eval = dipnet::RngStream(cfg.seed).derive(0xeb, 0);
        final_eval["test_attacked"] = dipnet::to_json(
            dipnet::evaluate(model, x_adv, data.y_test_id, cfg.hp.k, adv_eval,
                             data.stats.target_std),
            cfg.model.task);
    }
    if (data.has_ood()) {
        dipnet::RngStream ood_rng = dipnet::RngStream(cfg.seed).derive(0xed, 0);
        final_eval["test_ood"] = dipnet::to_json(
            dipnet::evaluate(model, data.x_test_ood, data.y_test_ood, cfg.hp.k, ood_rng,
                             data.stats.target_std),
            cfg.model.task);
    }
    metrics.write("final_eval", final_eval);
    dipnet::save_checkpoint(cfg.out_dir + "/checkpoint.json", model, cfg.hash_hex());
    std::cerr << "wrote " << cfg.out_dir << "/checkpoint.json and metrics.jsonl\n";
    return kExitOk;
}

int cmd_eval(const ConfigFlags& flags, const std::string& checkpoint_path,
             const std::string& split_name, const std::string& dump_predictions)
{
    dipnet::RunConfig cfg = dipnet::RunConfig::from_json(flags.merged());
    std::vector<std::string> errors = cfg.validate();
    if (!errors.empty()) return report_config_errors(errors);
    if (flags.print_effective) {
        std::cout << cfg.to_json().dump(2) << "\n";
        return kExitOk;
    }

    fs::create_directories(cfg.out_dir);
    dipnet::LoadedCheckpoint loaded = dipnet::load_checkpoint(checkpoint_path);
    dipnet::DatasetSplit data = dipnet::load_dataset(cfg);
    if (loaded.model.input_dim() != data.feature_dim())
        throw std::runtime_error("checkpoint expects " + std::to_string(loaded.model.input_dim()) +
                                 " features, dataset has " + std::to_string(data.feature_dim()));
    SplitSelection sel = select_split(data, split_name);

    dipnet::AttackSpec attack = cfg.attack;
    attack.phase = dipnet::AttackPhase::EvalInputs;
    dipnet::Tensor x = *sel.x;
    if (attack.active()) {
        dipnet::RngStream attack_rng = dipnet::RngStream(cfg.seed).derive(0xea, 0);
        x = dipnet::apply_attack(loaded.model, x, *sel.y, attack, attack_rng);
    }
    dipnet::RngStream eval_rng = dipnet::RngStream(cfg.seed).derive(0xec, 0);
    dipnet::EvalMetrics m =
        dipnet::evaluate(loaded.model, x, *sel.y, cfg.hp.k, eval_rng, data.stats.target_std);

    dipnet::MetricsWriter metrics(cfg.out_dir + "/eval_metrics.jsonl", cfg.hash_hex(), cfg.seed);
    json rec;
    rec["split"] = split_name;
    rec["k"] = cfg.hp.k;
    rec["attack"] = dipnet::to_string(attack.kind);
    rec["metrics"] = dipnet::to_json(m, loaded.model.task());
    metrics.write("eval", rec);
    std::cout << rec["metrics"].dump() << "\n";

    if (!dump_predictions.empty()) {
        dipnet::RngStream pred_rng = dipnet::RngStream(cfg.seed).derive(0xec, 0);
        dipnet::Tensor pred = loaded.model.predict_averaged(x, cfg.hp.k, pred_rng);
        std::ofstream out(dump_predictions);
        if (!out) throw std::runtime_error("cannot write '" + dump_predictions + "'");
        out << "row,target,prediction\n";
        char buf[40];
        for (std::size_t i = 0; i < pred.rows(); ++i) {
            const double t = data.stats.target_mean + (*sel.y)[i] * data.stats.target_std;
            const double p = data.stats.target_mean + pred[i] * data.stats.target_std;
            out << i;
            std::snprintf(buf, sizeof buf, ",%.17g", t);
            out << buf;
            std::snprintf(buf, sizeof buf, ",%.17g", p);
            out << buf << "\n";
        }
    }
    return kExitOk;
}

int cmd_attack(const ConfigFlags& flags, const std::string& checkpoint_path,
               const std::string& split_name, const std::string& dump_path)
{
    dipnet::RunConfig cfg = dipnet::RunConfig::from_json(flags.merged());
    std::vector<std::string> errors = cfg.validate();
    if (!errors.empty()) return report_config_errors(errors);
    if (!cfg.attack.active()) return report_config_errors({"attack subcommand needs --attack"});

    fs::create_directories(cfg.out_dir);
    dipnet::LoadedCheckpoint loaded = dipnet::load_checkpoint(checkpoint_path);
    dipnet::DatasetSplit data = dipnet::load_dataset(cfg);
    SplitSelection sel = select_split(data, split_name);

    dipnet::Tensor x_adv;
    double max_abs_delta = 0.0;
    if (cfg.attack.kind == dipnet::AttackKind::Fgsm) {
        dipnet::FgsmResult res =
            dipnet::fgsm_attack(loaded.model, *sel.x, *sel.y, cfg.attack.epsilon);
        x_adv = std::move(res.x_prime);
        for (std::size_t i = 0; i < res.delta.size(); ++i)
            max_abs_delta = std::max(max_abs_delta, std::fabs(res.delta[i]));
    } else {
        dipnet::RngStream rng = dipnet::RngStream(cfg.seed).derive(0xea, 0);
        x_adv = dipnet::gaussian_attack(*sel.x, cfg.attack.sigma, rng);
        for (std::size_t i = 0; i < x_adv.size(); ++i)
            max_abs_delta = std::max(max_abs_delta, std::fabs(x_adv[i] - (*sel.x)[i]));
    }

    dipnet::RngStream clean_rng = dipnet::RngStream(cfg.seed).derive(0xec, 0);
    dipnet::EvalMetrics clean = dipnet::evaluate(loaded.model, *sel.x, *sel.y, cfg.hp.k,
                                                 clean_rng, data.stats.target_std);
    dipnet::RngStream adv_rng = dipnet::RngStream(cfg.seed).derive(0xeb, 0);
    dipnet::EvalMetrics adv =
        dipnet::evaluate(loaded.model, x_adv, *sel.y, cfg.hp.k, adv_rng, data.stats.target_std);

    dipnet::MetricsWriter metrics(cfg.out_dir + "/attack_metrics.jsonl", cfg.hash_hex(), cfg.seed);
    json rec;
    rec["split"] = split_name;
    rec["attack"] = {{"kind", dipnet::to_string(cfg.attack.kind)},
                     {"sigma", cfg.attack.sigma},
                     {"eps", cfg.attack.epsilon}};
    rec["max_abs_delta"] = max_abs_delta;
    rec["clean"] = dipnet::to_json(clean, loaded.model.task());
    rec["attacked"] = dipnet::to_json(adv, loaded.model.task());
    metrics.write("attack_eval", rec);
    std::cout << rec.dump() << "\n";

    if (!dump_path.empty()) {
        dipnet::RawTable out;
        for (const std::string& name : data.feature_names) out.columns.push_back(name);
        out.columns.push_back(cfg.data.schema.target);
        out.values = dipnet::Tensor({x_adv.rows(), x_adv.cols() + 1});
        for (std::size_t i = 0; i < x_adv.rows(); ++i) {
            for (std::size_t j = 0; j < x_adv.cols(); ++j) out.values.at(i, j) = x_adv.at(i, j);
            out.values.at(i, x_adv.cols()) = (*sel.y)[i];
        }
        dipnet::write_csv(dump_path, out);
    }
    return kExitOk;
}

int cmd_probe(const ConfigFlags& flags, const std::string& checkpoint_path, std::size_t n_probes,
              double eta_sigma, std::size_t n_mc, std::size_t hessian_iters)
{
    dipnet::RunConfig cfg = dipnet::RunConfig::from_json(flags.merged());
    std::vector<std::string> errors = cfg.validate();
    if (!errors.empty()) return report_config_errors(errors);

    fs::create_directories(cfg.out_dir);
    dipnet::LoadedCheckpoint loaded = dipnet::load_checkpoint(checkpoint_path);
    dipnet::DatasetSplit data = dipnet::load_dataset(cfg);
    const std::size_t n = std::min(n_probes, data.x_test_id.rows());
    if (n == 0) throw std::runtime_error("probe: no test rows available as probe points");
    dipnet::Tensor probes({n, data.feature_dim()});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < data.feature_dim(); ++j)
            probes.at(i, j) = data.x_test_id.at(i, j);

    dipnet::RngStream rng = dipnet::RngStream(cfg.seed).derive(0x58, 0);
    dipnet::SmoothnessReport rep =
        dipnet::build_smoothness_report(loaded.model, probes, eta_sigma, n_mc, hessian_iters, rng);

    dipnet::MetricsWriter metrics(cfg.out_dir + "/probe_report.jsonl", cfg.hash_hex(), cfg.seed);
    json rec;
    rec["b_hat"] = rep.b_hat;
    rec["smoothed_b_hat"] = rep.smoothed_b_hat;
    rec["smoothed_se"] = rep.smoothed_se;
    if (rep.s_hat_valid) {
        rec["s_hat"] = rep.s_hat;
        rec["s_hat_converged"] = rep.s_hat_converged;
    } else {
        rec["s_hat"] = nullptr; // not twice differentiable (ReLU)
    }
    rec["probe_count"] = rep.probe_count;
    rec["eta_distribution"] = rep.eta_distribution;
    metrics.write("smoothness", rec);
    std::cout << rec.dump() << "\n";
    return kExitOk;
}

int cmd_verify(const ConfigFlags& flags, double c, double epsilon, double C, double b, double s,
               double zeta)
{
    dipnet::RunConfig cfg = dipnet::RunConfig::from_json(flags.merged());
    fs::create_directories(cfg.out_dir);
    dipnet::MetricsWriter metrics(cfg.out_dir + "/theorem_checks.jsonl", cfg.hash_hex(), cfg.seed);

    bool all_pass = true;
    auto emit = [&](const char* order, const dipnet::TheoremCheck& chk) {
        json rec;
        rec["order"] = order;
        rec["c"] = chk.c;
        rec["epsilon"] = chk.epsilon;
        rec["C"] = chk.C;
        rec["zeta"] = chk.zeta;
        rec["base_norm"] = chk.base;
        rec["bound"] = chk.bound;
        rec["proof_bound"] = chk.proof_bound;
        rec["measured"] = chk.measured;
        rec["spike_measure"] = chk.spike_measure;
        rec["quadrature_converged"] = chk.quadrature_converged;
        rec["pass"] = chk.pass;
        metrics.write("theorem_check", rec);
        std::cout << order << ": measured " << chk.measured << " vs bound " << chk.bound << " -> "
                  << (chk.pass ? "pass" : "FAIL") << "\n";
        all_pass = all_pass && chk.pass;
    };
    emit("gradient", dipnet::verify_gradient_smoothing_bound(c, epsilon, C, b, zeta));
    emit("hessian", dipnet::verify_hessian_smoothing_bound(c, epsilon, C, s, zeta));
    return all_pass ? kExitOk : kExitTheorem;
}

std::vector<std::size_t> parse_arch(const std::string& token)
{
    std::vector<std::size_t> widths;
    const std::size_t x = token.find('x');
    if (x != std::string::npos) {
        const std::size_t layers = std::stoul(token.substr(0, x));
        const std::size_t width = std::stoul(token.substr(x + 1));
        widths.assign(layers, width);
        return widths;
    }
    std::stringstream ss(token);
    std::string cell;
    while (std::getline(ss, cell, '-')) widths.push_back(std::stoul(cell));
    return widths;
}

template <typename T, typename Fn>
std::vector<T> parse_csv_list(const std::string& s, Fn&& convert)
{
    std::vector<T> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(convert(cell));
    return out;
}

int cmd_bench(const ConfigFlags& flags, const std::string& methods, const std::string& archs,
              const std::string& test_fractions, const std::string& train_fractions,
              std::size_t seeds, std::uint64_t seed_base, std::size_t jobs, double attack_eps)
{
    json base = flags.merged();
    dipnet::RunConfig probe_cfg = dipnet::RunConfig::from_json(base); // for out_dir/hash only
    fs::create_directories(probe_cfg.out_dir);

    dipnet::BenchOptions opt;
    opt.methods = parse_csv_list<std::string>(methods, [](const std::string& v) { return v; });
    opt.archs.clear();
    for (const std::string& a :
         parse_csv_list<std::string>(archs, [](const std::string& v) { return v; }))
        opt.archs.push_back(parse_arch(a));
    opt.test_fractions =
        parse_csv_list<double>(test_fractions, [](const std::string& v) { return std::stod(v); });
    opt.train_fractions =
        parse_csv_list<double>(train_fractions, [](const std::string& v) { return std::stod(v); });
    opt.seeds = seeds;
    opt.seed_base = seed_base;
    opt.jobs = jobs;
    opt.eval_attack =
        attack_eps > 0.0
            ? dipnet::AttackSpec{dipnet::AttackKind::Fgsm, 0.0, attack_eps,
                                 dipnet::AttackPhase::EvalInputs}
            : dipnet::AttackSpec{};

    dipnet::BenchResult res = dipnet::run_bench(base, opt);
    dipnet::write_bench_csv(probe_cfg.out_dir + "/bench_results.csv", res.rows);
    dipnet::write_bench_summary_csv(probe_cfg.out_dir + "/bench_summary.csv", res.rows);
    dipnet::MetricsWriter metrics(probe_cfg.out_dir + "/bench_summary.jsonl",
                                  probe_cfg.hash_hex(), probe_cfg.seed);
    metrics.write("bench_summary", dipnet::to_json(res.summary));

    std::size_t failed = 0;
    for (const auto& r : res.rows) failed += r.ok ? 0 : 1;
    std::cout << "cells: " << res.rows.size() << " (" << failed << " failed)\n";
    if (res.summary.pairs > 0) {
        std::cout << res.summary.challenger << " vs " << res.summary.baseline << ": adv wins "
                  << res.summary.adv_wins << "/" << res.summary.pairs << ", clean within 5% "
                  << res.summary.clean_within << "/" << res.summary.pairs;
        if (res.summary.ood_pairs > 0)
            std::cout << ", ood wins " << res.summary.ood_wins << "/" << res.summary.ood_pairs;
        std::cout << "\n";
    }
    for (const auto& r : res.rows)
        if (!r.ok)
            std::cerr << "cell failed (" << r.method << " " << r.arch << " tf " << r.test_fraction
                      << " seed " << r.seed << "): " << r.error << "\n";
    return kExitOk;
}

int cmd_synth(std::size_t n, std::size_t d, double noise_sigma, std::uint64_t seed,
              double ood_fraction, double ood_shift, const std::string& out_path)
{
    dipnet::SynthSpec spec;
    spec.n = n;
    spec.d = d;
    spec.noise_sigma = noise_sigma;
    spec.seed = seed;
    spec.ood_fraction = ood_fraction;
    spec.ood_shift = ood_shift;
    dipnet::RawTable table = dipnet::synth_regression(spec);
    dipnet::write_csv(out_path, table);
    std::cerr << "wrote " << table.rows() << " rows x " << table.columns.size() << " cols to "
              << out_path << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"distributional input projection networks (training, attacks, smoothness probes)"};
    app.set_version_flag("--version", dipnet::kVersion);
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model per the run config");
    ConfigFlags train_flags;
    train_flags.add_to(*train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    ConfigFlags eval_flags;
    eval_flags.add_to(*eval_cmd);
    std::string eval_checkpoint, eval_split = "test", eval_dump;
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--split", eval_split, "train | val | test | ood")
        ->check(CLI::IsMember({"train", "val", "test", "ood"}));
    eval_cmd->add_option("--dump-predictions", eval_dump, "write per-example predictions CSV");

    // attack
    auto* attack_cmd = app.add_subcommand("attack", "attack a split and report both metrics");
    ConfigFlags attack_flags;
    attack_flags.add_to(*attack_cmd);
    std::string attack_checkpoint, attack_split = "test", attack_dump;
    attack_cmd->add_option("--checkpoint", attack_checkpoint, "model checkpoint")->required();
    attack_cmd->add_option("--split", attack_split, "train | val | test | ood")
        ->check(CLI::IsMember({"train", "val", "test", "ood"}));
    attack_cmd->add_option("--dump", attack_dump, "write adversarial examples CSV");

    // probe
    auto* probe_cmd = app.add_subcommand("probe", "smoothness probes on a checkpoint");
    ConfigFlags probe_flags;
    probe_flags.add_to(*probe_cmd);
    std::string probe_checkpoint;
    std::size_t probe_count = 32, probe_mc = 200, probe_hessian_iters = 50;
    double probe_eta_sigma = 0.1;
    probe_cmd->add_option("--checkpoint", probe_checkpoint, "model checkpoint")->required();
    probe_cmd->add_option("--probes", probe_count, "number of probe points (test rows)");
    probe_cmd->add_option("--eta-sigma", probe_eta_sigma, "smoothing noise scale");
    probe_cmd->add_option("--n-mc", probe_mc, "Monte-Carlo draws per probe");
    probe_cmd->add_option("--hessian-iters", probe_hessian_iters, "power-iteration steps");

    // verify-theorems
    auto* verify_cmd =
        app.add_subcommand("verify-theorems", "numeric smoothing-bound verification");
    ConfigFlags verify_flags;
    verify_flags.add_to(*verify_cmd, false);
    double v_c = 0.5, v_eps = 0.2, v_C = 0.1, v_b = 1.0, v_s = 1.0, v_zeta = 0.0;
    verify_cmd->add_option("--c", v_c, "spike-set gradient fraction, in (0, 1)");
    verify_cmd->add_option("--epsilon", v_eps, "bound slack");
    verify_cmd->add_option("--measure", v_C, "spike-set measure C");
    verify_cmd->add_option("--b", v_b, "max gradient norm");
    verify_cmd->add_option("--s", v_s, "max Hessian norm");
    verify_cmd->add_option("--zeta", v_zeta, "noise support multiple (0: ceil(1/eps)+1)");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "method x arch x fraction x seed grid");
    ConfigFlags bench_flags;
    bench_flags.add_to(*bench_cmd);
    std::string bench_methods = "standard,dipnet";
    std::string bench_archs = "2x100,4x100,4x400";
    std::string bench_tf = "0.3,0.5", bench_trf = "1.0";
    std::size_t bench_seeds = 5, bench_jobs = 1;
    std::uint64_t bench_seed_base = 1;
    double bench_eps = 0.1;
    bench_cmd->add_option("--methods", bench_methods, "comma list of method tags");
    bench_cmd->add_option("--archs", bench_archs, "comma list like 2x100 or 100-50");
    bench_cmd->add_option("--test-fractions", bench_tf, "comma list");
    bench_cmd->add_option("--train-fractions", bench_trf, "comma list");
    bench_cmd->add_option("--seeds", bench_seeds, "seeds per cell");
    bench_cmd->add_option("--seed-base", bench_seed_base, "first seed value");
    bench_cmd->add_option("--jobs", bench_jobs, "parallel cells");
    bench_cmd->add_option("--eval-attack-eps", bench_eps, "FGSM eval epsilon (0: no attack)");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic regression CSV");
    std::size_t synth_n = 8000, synth_d = 8;
    double synth_noise = 0.1, synth_ood_fraction = 0.0, synth_ood_shift = 0.0;
    std::uint64_t synth_seed = 1;
    std::string synth_out;
    synth_cmd->add_option("--n", synth_n, "rows");
    synth_cmd->add_option("--d", synth_d, "features");
    synth_cmd->add_option("--noise-sigma", synth_noise, "target noise scale");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--ood-fraction", synth_ood_fraction, "trailing OOD block fraction");
    synth_cmd->add_option("--ood-shift", synth_ood_shift, "coordinate shift for OOD rows");
    synth_cmd->add_option("--out", synth_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(train_flags);
        if (eval_cmd->parsed()) return cmd_eval(eval_flags, eval_checkpoint, eval_split, eval_dump);
        if (attack_cmd->parsed())
            return cmd_attack(attack_flags, attack_checkpoint, attack_split, attack_dump);
        if (probe_cmd->parsed())
            return cmd_probe(probe_flags, probe_checkpoint, probe_count, probe_eta_sigma,
                             probe_mc, probe_hessian_iters);
        if (verify_cmd->parsed())
            return cmd_verify(verify_flags, v_c, v_eps, v_C, v_b, v_s, v_zeta);
        if (bench_cmd->parsed())
            return cmd_bench(bench_flags, bench_methods, bench_archs, bench_tf, bench_trf,
                             bench_seeds, bench_seed_base, bench_jobs, bench_eps);
        if (synth_cmd->parsed())
            return cmd_synth(synth_n, synth_d, synth_noise, synth_seed, synth_ood_fraction,
                             synth_ood_shift, synth_out);
    } catch (const dipnet::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
