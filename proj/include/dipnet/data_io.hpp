#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace dipnet {

struct Schema {
    std::string target = "y";
    std::string ood_column;      // empty: no OOD holdout
    double ood_threshold = 0.5;  // rows with ood_column > threshold are held out
    bool regression = true;
};

struct RawTable {
    std::vector<std::string> columns;
    Tensor values; // (rows, columns)
    std::size_t dropped_rows = 0;

    std::size_t rows() const { return values.rows(); }
    std::size_t find_column(const std::string& name) const
    {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw std::invalid_argument("column '" + name + "' not found in table header");
    }
};

namespace detail {

inline bool parse_double(const std::string& s, double& out)
{
    if (s.empty()) return false;
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    while (end && *end == ' ') ++end;
    return end == begin + s.size() && std::isfinite(out);
}

inline std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding spaces and a trailing CR from DOS line endings
        std::size_t b = cell.find_first_not_of(" \t\r");
        std::size_t e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

} // namespace detail

/// Read a header-first CSV of numerics. Rows with any unparsable cell or a
/// missing target are dropped and counted; an empty result is an error.
inline RawTable load_csv(const std::string& path, const Schema& schema)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw std::runtime_error("'" + path + "' is empty or has no header row");
    RawTable table;
    table.columns = detail::split_line(line);
    const std::size_t width = table.columns.size();
    table.find_column(schema.target); // throws if the header lacks the target

    std::vector<double> data;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = detail::split_line(line);
        if (cells.size() != width) {
            ++table.dropped_rows;
            continue;
        }
        std::vector<double> row(width);
        bool ok = true;
        for (std::size_t i = 0; i < width && ok; ++i) ok = detail::parse_double(cells[i], row[i]);
        if (!ok) {
            ++table.dropped_rows;
            continue;
        }
        data.insert(data.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) throw std::runtime_error("'" + path + "': no usable data rows");
    table.values = Tensor({rows, width});
    std::copy(data.begin(), data.end(), table.values.data());
    return table;
}

/// Write with round-trip-exact doubles (%.17g).
inline void write_csv(const std::string& path, const RawTable& table)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        out << (i ? "," : "") << table.columns[i];
    out << "\n";
    char buf[40];
    const std::size_t w = table.columns.size();
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", table.values.at(r, c));
            out << (c ? "," : "") << buf;
        }
        out << "\n";
    }
}

struct NormStats {
    std::vector<double> mean, stddev; // per kept feature
    double target_mean = 0.0;
    double target_std = 1.0;
};

struct SplitSpec {
    double test_fraction = 0.3;
    double train_fraction = 1.0; // subsample of the post-split training pool
    double val_fraction = 0.0;   // carved from the training pool
    std::uint64_t seed = 1;
};

/// Materialized dataset: z-scored features (train statistics only), constant
/// columns removed, regression targets z-scored with stats kept for
/// reporting in original units.
struct DatasetSplit {
    Tensor x_train, y_train;
    Tensor x_val, y_val;
    Tensor x_test_id, y_test_id;
    Tensor x_test_ood, y_test_ood;
    NormStats stats;
    Schema schema;
    std::vector<std::string> feature_names;
    std::vector<std::string> dropped_constant_columns;

    bool has_val() const { return x_val.rows() > 0 && x_val.rank() == 2; }
    bool has_ood() const { return x_test_ood.rows() > 0 && x_test_ood.rank() == 2; }
    std::size_t feature_dim() const { return feature_names.size(); }

    /// Convert an MSE computed on normalized targets back to original units.
    double mse_to_original_units(double normalized_mse) const
    {
        return normalized_mse * stats.target_std * stats.target_std;
    }
};

namespace detail {

inline Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& rows,
                          const std::vector<std::size_t>& cols)
{
    Tensor out({rows.size(), cols.size()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out.at(i, j) = src.at(rows[i], cols[j]);
    return out;
}

inline Tensor gather_target(const Tensor& src, const std::vector<std::size_t>& rows,
                            std::size_t col)
{
    Tensor out({rows.size(), 1});
    for (std::size_t i = 0; i < rows.size(); ++i) out.at(i, 0) = src.at(rows[i], col);
    return out;
}

} // namespace detail

/// Seeded shuffle-and-partition. OOD rows (schema.ood_column > threshold) are
/// held out before the shuffle; the rest is split into test_id and a training
/// pool, optionally subsampled by train_fraction and with a validation carve.
inline DatasetSplit split(const RawTable& table, const Schema& schema, const SplitSpec& spec)
{
    if (spec.test_fraction <= 0.0 || spec.test_fraction >= 1.0)
        throw std::invalid_argument("test_fraction must be in (0, 1), got " +
                                    std::to_string(spec.test_fraction));
    if (spec.train_fraction <= 0.0 || spec.train_fraction > 1.0)
        throw std::invalid_argument("train_fraction must be in (0, 1], got " +
                                    std::to_string(spec.train_fraction));
    if (spec.val_fraction < 0.0 || spec.val_fraction >= 1.0)
        throw std::invalid_argument("val_fraction must be in [0, 1)");

    const std::size_t target_col = table.find_column(schema.target);
    const bool use_ood = !schema.ood_column.empty();
    const std::size_t ood_col = use_ood ? table.find_column(schema.ood_column) : 0;

    std::vector<std::size_t> ood_rows, id_rows;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        if (use_ood && table.values.at(r, ood_col) > schema.ood_threshold)
            ood_rows.push_back(r);
        else
            id_rows.push_back(r);
    }
    if (id_rows.empty()) throw std::runtime_error("split: no in-distribution rows remain");

    RngStream shuffle_rng(derive_seed(spec.seed, {0x5f117, 0}));
    std::vector<std::size_t> perm = shuffle_rng.permutation(id_rows.size());

    const std::size_t n_test =
        static_cast<std::size_t>(std::llround(spec.test_fraction * double(id_rows.size())));
    if (n_test == 0 || n_test >= id_rows.size())
        throw std::runtime_error("split: test fraction leaves an empty train or test set");

    std::vector<std::size_t> test_rows, pool_rows;
    for (std::size_t i = 0; i < perm.size(); ++i)
        (i < n_test ? test_rows : pool_rows).push_back(id_rows[perm[i]]);

    const std::size_t n_keep =
        static_cast<std::size_t>(std::llround(spec.train_fraction * double(pool_rows.size())));
    if (n_keep == 0) throw std::runtime_error("split: train_fraction leaves no training rows");
    pool_rows.resize(n_keep);

    const std::size_t n_val =
        static_cast<std::size_t>(std::llround(spec.val_fraction * double(pool_rows.size())));
    std::vector<std::size_t> val_rows(pool_rows.end() - n_val, pool_rows.end());
    std::vector<std::size_t> train_rows(pool_rows.begin(), pool_rows.end() - n_val);
    if (train_rows.empty()) throw std::runtime_error("split: no training rows after val carve");

    // candidate features: everything but the target
    std::vector<std::size_t> candidates;
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        if (c != target_col) candidates.push_back(c);

    // train-only statistics; constant columns dropped
    DatasetSplit ds;
    ds.schema = schema;
    std::vector<std::size_t> kept;
    for (std::size_t c : candidates) {
        double mean = 0.0;
        for (std::size_t r : train_rows) mean += table.values.at(r, c);
        mean /= double(train_rows.size());
        double ss = 0.0;
        for (std::size_t r : train_rows) {
            const double d = table.values.at(r, c) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / double(train_rows.size()));
        if (sd < 1e-12) {
            ds.dropped_constant_columns.push_back(table.columns[c]);
            continue;
        }
        kept.push_back(c);
        ds.feature_names.push_back(table.columns[c]);
        ds.stats.mean.push_back(mean);
        ds.stats.stddev.push_back(sd);
    }
    if (kept.empty()) throw std::runtime_error("split: every feature column is constant");

    double ty_mean = 0.0;
    for (std::size_t r : train_rows) ty_mean += table.values.at(r, target_col);
    ty_mean /= double(train_rows.size());
    double ty_ss = 0.0;
    for (std::size_t r : train_rows) {
        const double d = table.values.at(r, target_col) - ty_mean;
        ty_ss += d * d;
    }
    double ty_std = std::sqrt(ty_ss / double(train_rows.size()));
    if (!schema.regression || ty_std < 1e-12) {
        ty_mean = 0.0;
        ty_std = 1.0;
    }
    ds.stats.target_mean = ty_mean;
    ds.stats.target_std = ty_std;

    auto materialize = [&](const std::vector<std::size_t>& rows, Tensor& x, Tensor& y) {
        x = detail::gather_rows(table.values, rows, kept);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < kept.size(); ++j)
                x.at(i, j) = (x.at(i, j) - ds.stats.mean[j]) / ds.stats.stddev[j];
        y = detail::gather_target(table.values, rows, target_col);
        for (std::size_t i = 0; i < rows.size(); ++i)
            y.at(i, 0) = (y.at(i, 0) - ty_mean) / ty_std;
    };
    materialize(train_rows, ds.x_train, ds.y_train);
    materialize(test_rows, ds.x_test_id, ds.y_test_id);
    if (!val_rows.empty()) materialize(val_rows, ds.x_val, ds.y_val);
    if (!ood_rows.empty()) materialize(ood_rows, ds.x_test_ood, ds.y_test_ood);
    return ds;
}

struct SynthSpec {
    std::size_t n = 1000;
    std::size_t d = 8;
    double noise_sigma = 0.1;
    std::uint64_t seed = 1;
    double ood_fraction = 0.0; // trailing block of rows becomes shifted OOD
    double ood_shift = 0.0;    // added to every coordinate of OOD rows
};

/// Synthetic regression table: x ~ N(0, I), y = sin(w1.x) + 0.5 (w2.x)^2 / d
/// + noise, with unit-norm direction vectors fixed by the seed. When
/// ood_fraction > 0 a trailing block is coordinate-shifted (covariate shift;
/// the x -> y rule is unchanged) and flagged in an extra is_ood column.
inline RawTable synth_regression(const SynthSpec& spec)
{
    if (spec.n < 10) throw std::invalid_argument("synth: need n >= 10");
    if (spec.d < 1) throw std::invalid_argument("synth: need d >= 1");
    RngStream root(spec.seed);

    auto unit_direction = [&](std::uint64_t tag) {
        RngStream r = root.derive(0xd1, tag);
        Tensor w({spec.d});
        double norm = 0.0;
        for (std::size_t i = 0; i < spec.d; ++i) {
            w[i] = r.normal();
            norm += w[i] * w[i];
        }
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < spec.d; ++i) w[i] /= norm;
        return w;
    };
    const Tensor w1 = unit_direction(1);
    const Tensor w2 = unit_direction(2);

    const bool with_ood = spec.ood_fraction > 0.0;
    const std::size_t n_ood =
        with_ood ? static_cast<std::size_t>(std::llround(spec.ood_fraction * double(spec.n))) : 0;
    const std::size_t width = spec.d + (with_ood ? 2 : 1);

    RawTable table;
    for (std::size_t i = 0; i < spec.d; ++i) table.columns.push_back("x" + std::to_string(i));
    if (with_ood) table.columns.push_back("is_ood");
    table.columns.push_back("y");
    table.values = Tensor({spec.n, width});

    RngStream xs = root.derive(0xd2, 0);
    RngStream noise = root.derive(0xd3, 0);
    for (std::size_t r = 0; r < spec.n; ++r) {
        const bool ood = r >= spec.n - n_ood;
        double a1 = 0.0, a2 = 0.0;
        for (std::size_t i = 0; i < spec.d; ++i) {
            double x = xs.normal() + (ood ? spec.ood_shift : 0.0);
            table.values.at(r, i) = x;
            a1 += w1[i] * x;
            a2 += w2[i] * x;
        }
        const double y =
            std::sin(a1) + 0.5 * a2 * a2 / double(spec.d) + spec.noise_sigma * noise.normal();
        if (with_ood) table.values.at(r, spec.d) = ood ? 1.0 : 0.0;
        table.values.at(r, width - 1) = y;
    }
    return table;
}

} // namespace dipnet
