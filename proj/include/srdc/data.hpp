#pragma once

// Datasets and synthetic domain pairs. The generators produce a labeled
// source domain and a transformed target domain whose class clusters stay
// geometrically close to their source counterparts, which is exactly the
// structure the training algorithm assumes. Target labels are kept in a
// separate evaluation-only channel so the training path cannot read them.
//
// CSV schema: header f0,...,f{D-1}[,label], UTF-8, '.' decimal floats,
// label -1 meaning unlabeled. save_csv and load_csv are exact inverses.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "srdc/errors.hpp"
#include "srdc/rng.hpp"
#include "srdc/tensor.hpp"

namespace srdc {

enum class Domain { source, target };

struct Dataset {
    Tensor X;                  // n x D
    std::vector<int> y;        // visible labels (1..K), empty when unlabeled
    std::vector<int> eval_y;   // evaluation-only labels; off-limits to training
    Domain domain = Domain::source;
    std::string name;

    std::size_t size() const { return X.rows(); }
    std::size_t dim() const { return X.cols(); }
    bool labeled() const { return !y.empty(); }

    // Labels usable for metrics: visible ones if present, else the
    // evaluation channel.
    const std::vector<int>& metric_labels() const {
        return y.empty() ? eval_y : y;
    }
};

// Hides the visible labels in the evaluation channel; the result is what
// the trainer is allowed to see of a target domain.
inline Dataset as_unlabeled_target(Dataset ds) {
    if (!ds.y.empty()) ds.eval_y = std::move(ds.y);
    ds.y.clear();
    ds.domain = Domain::target;
    return ds;
}

struct ShiftSpec {
    enum class Generator { blobs, moons };
    Generator generator = Generator::blobs;
    std::size_t classes = 3;
    std::size_t samples_per_class = 200;
    double separation = 4.0;                  // distance between adjacent class centers
    double noise_std = 0.5;
    double rotation_deg = 30.0;               // applied to the target domain
    std::vector<double> translation = {1.0, 0.0};
    std::vector<double> target_imbalance;     // per-class multipliers, default 1
    std::uint64_t seed = 0;

    void validate() const {
        if (classes < 2) throw ConfigError("shift spec: need at least 2 classes");
        if (samples_per_class < 1)
            throw ConfigError("shift spec: samples_per_class must be >= 1");
        if (rotation_deg < 0.0 || rotation_deg >= 360.0)
            throw ConfigError("shift spec: rotation must lie in [0,360)");
        if (noise_std < 0.0) throw ConfigError("shift spec: negative noise");
        if (separation <= 0.0) throw ConfigError("shift spec: separation must be > 0");
        if (translation.size() != 2)
            throw ConfigError("shift spec: translation must have 2 components");
        if (!target_imbalance.empty() && target_imbalance.size() != classes)
            throw ConfigError("shift spec: imbalance size must equal classes");
        for (double r : target_imbalance)
            if (r <= 0.0) throw ConfigError("shift spec: imbalance ratios must be > 0");
    }

    std::size_t target_count(std::size_t k) const {
        double ratio = target_imbalance.empty() ? 1.0 : target_imbalance[k];
        auto n = static_cast<std::size_t>(
            std::llround(ratio * static_cast<double>(samples_per_class)));
        return n < 1 ? 1 : n;
    }
};

namespace detail {

inline void rotate_translate(Tensor& X, double deg, const std::vector<double>& t,
                             double cx = 0.0, double cy = 0.0) {
    const double rad = deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const double x = X.at(i, 0) - cx, y = X.at(i, 1) - cy;
        X.at(i, 0) = cx + c * x - s * y + t[0];
        X.at(i, 1) = cy + s * x + c * y + t[1];
    }
}

}  // namespace detail

// K isotropic Gaussian clusters on a circle sized so adjacent centers are
// `separation` apart; the target domain draws from the same per-class
// distributions and is then rotated about the origin and translated, class
// correspondence preserved.
inline std::pair<Dataset, Dataset> gen_blobs(const ShiftSpec& spec) {
    spec.validate();
    Rng rng(mix_seed(spec.seed, 0xb10b5));
    const std::size_t K = spec.classes;
    const double radius =
        spec.separation / (2.0 * std::sin(3.14159265358979323846 / static_cast<double>(K)));

    auto sample_domain = [&](bool target) {
        Dataset ds;
        std::size_t total = 0;
        for (std::size_t k = 0; k < K; ++k)
            total += target ? spec.target_count(k) : spec.samples_per_class;
        ds.X = Tensor({total, 2});
        ds.y.reserve(total);
        std::size_t row = 0;
        for (std::size_t k = 0; k < K; ++k) {
            const double angle =
                2.0 * 3.14159265358979323846 * static_cast<double>(k) / static_cast<double>(K);
            const double cx = radius * std::cos(angle);
            const double cy = radius * std::sin(angle);
            const std::size_t n = target ? spec.target_count(k) : spec.samples_per_class;
            for (std::size_t i = 0; i < n; ++i, ++row) {
                ds.X.at(row, 0) = cx + spec.noise_std * rng.normal();
                ds.X.at(row, 1) = cy + spec.noise_std * rng.normal();
                ds.y.push_back(static_cast<int>(k + 1));
            }
        }
        return ds;
    };

    Dataset source = sample_domain(false);
    source.domain = Domain::source;
    source.name = "blobs-source";
    source.eval_y = source.y;

    Dataset target = sample_domain(true);
    detail::rotate_translate(target.X, spec.rotation_deg, spec.translation);
    target = as_unlabeled_target(std::move(target));
    target.name = "blobs-target";
    return {std::move(source), std::move(target)};
}

// Two interleaved half-circle classes; the target copy is rotated about the
// midpoint of the figure, (0.5, 0.25), then translated.
inline std::pair<Dataset, Dataset> gen_moons(const ShiftSpec& spec) {
    spec.validate();
    if (spec.classes != 2)
        throw ConfigError("gen_moons: exactly 2 classes required");
    Rng rng(mix_seed(spec.seed, 0x300e5));

    auto sample_domain = [&](bool target) {
        Dataset ds;
        const std::size_t n0 = target ? spec.target_count(0) : spec.samples_per_class;
        const std::size_t n1 = target ? spec.target_count(1) : spec.samples_per_class;
        ds.X = Tensor({n0 + n1, 2});
        ds.y.reserve(n0 + n1);
        std::size_t row = 0;
        for (std::size_t i = 0; i < n0; ++i, ++row) {
            const double t = rng.uniform(0.0, 3.14159265358979323846);
            ds.X.at(row, 0) = std::cos(t) + spec.noise_std * rng.normal();
            ds.X.at(row, 1) = std::sin(t) + spec.noise_std * rng.normal();
            ds.y.push_back(1);
        }
        for (std::size_t i = 0; i < n1; ++i, ++row) {
            const double t = rng.uniform(0.0, 3.14159265358979323846);
            ds.X.at(row, 0) = 1.0 - std::cos(t) + spec.noise_std * rng.normal();
            ds.X.at(row, 1) = 0.5 - std::sin(t) + spec.noise_std * rng.normal();
            ds.y.push_back(2);
        }
        return ds;
    };

    Dataset source = sample_domain(false);
    source.domain = Domain::source;
    source.name = "moons-source";
    source.eval_y = source.y;

    Dataset target = sample_domain(true);
    detail::rotate_translate(target.X, spec.rotation_deg, spec.translation, 0.5, 0.25);
    target = as_unlabeled_target(std::move(target));
    target.name = "moons-target";
    return {std::move(source), std::move(target)};
}

// ---- CSV ------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& cell, std::size_t line) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw IoError("csv: non-numeric cell '" + cell + "' on line " +
                      std::to_string(line));
    return v;
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace detail

inline void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("csv: cannot open '" + path + "' for writing");
    const std::vector<int>& labels = ds.metric_labels();
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        if (j) out << ',';
        out << 'f' << j;
    }
    if (!labels.empty()) out << ",label";
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            if (j) out << ',';
            out << detail::format_double(ds.X.at(i, j));
        }
        if (!labels.empty()) out << ',' << labels[i];
        out << '\n';
    }
    if (!out) throw IoError("csv: write failed for '" + path + "'");
}

// Reads the schema written by save_csv. Labels land in the visible channel;
// use as_unlabeled_target() to demote them for a target domain. Label -1
// marks an unlabeled row; files mixing -1 with real labels keep the real
// ones and store the vector in eval-visible form only if every row is
// labeled.
inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("csv: empty file '" + path + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = detail::split_line(line);
    bool has_label = !header.empty() && header.back() == "label";
    const std::size_t dim = header.size() - (has_label ? 1 : 0);
    if (dim == 0) throw IoError("csv: no feature columns in '" + path + "'");

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t rows = 0, line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells = detail::split_line(line);
        if (cells.size() != header.size())
            throw IoError("csv: ragged row on line " + std::to_string(line_no) +
                          " (" + std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(header.size()) + ")");
        for (std::size_t j = 0; j < dim; ++j)
            values.push_back(detail::parse_double(cells[j], line_no));
        if (has_label) {
            const double raw = detail::parse_double(cells[dim], line_no);
            const int label = static_cast<int>(raw);
            if (static_cast<double>(label) != raw || (label != -1 && label < 1))
                throw IoError("csv: label '" + cells[dim] + "' on line " +
                              std::to_string(line_no) + " must be -1 or >= 1");
            labels.push_back(label);
        }
        ++rows;
    }
    if (rows == 0) throw IoError("csv: no data rows in '" + path + "'");

    Dataset ds;
    ds.X = Tensor({rows, dim}, std::move(values));
    ds.name = path;
    if (has_label) {
        bool any_unlabeled = false;
        for (int label : labels) any_unlabeled = any_unlabeled || label == -1;
        ds.y = std::move(labels);
        if (!any_unlabeled) ds.eval_y = ds.y;
    }
    return ds;
}

// ---- split ------------------------------------------------------------------

// Disjoint, exhaustive split; stratified per label when labels exist, with
// unlabeled (-1) rows forming a stratum of their own. Row order within each
// side follows the original dataset, so the result is independent of
// shuffle internals beyond membership.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio,
                                         std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ConfigError("split: ratio must lie in (0,1)");
    Rng rng(mix_seed(seed, 0x5971));

    const std::vector<int>& labels = ds.metric_labels();
    std::map<int, std::vector<std::size_t>> groups;  // -1 rows form a group of their own
    if (labels.empty()) {
        for (std::size_t i = 0; i < ds.size(); ++i) groups[0].push_back(i);
    } else {
        for (std::size_t i = 0; i < labels.size(); ++i)
            groups[labels[i]].push_back(i);
    }

    std::vector<bool> in_train(ds.size(), false);
    for (auto& [label, group] : groups) {
        if (group.size() < 2)
            throw ConfigError("split: a stratum has fewer than 2 samples");
        rng.shuffle(group);
        auto take = static_cast<std::size_t>(
            std::llround(ratio * static_cast<double>(group.size())));
        if (take < 1) take = 1;
        if (take > group.size() - 1) take = group.size() - 1;
        for (std::size_t i = 0; i < take; ++i) in_train[group[i]] = true;
    }

    auto gather = [&](bool train) {
        Dataset out;
        out.domain = ds.domain;
        out.name = ds.name + (train ? "-train" : "-test");
        std::size_t n = 0;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (in_train[i] == train) ++n;
        out.X = Tensor({n, ds.dim()});
        std::size_t row = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (in_train[i] != train) continue;
            for (std::size_t j = 0; j < ds.dim(); ++j)
                out.X.at(row, j) = ds.X.at(i, j);
            if (!ds.y.empty()) out.y.push_back(ds.y[i]);
            if (!ds.eval_y.empty()) out.eval_y.push_back(ds.eval_y[i]);
            ++row;
        }
        return out;
    };
    return {gather(true), gather(false)};
}

}  // namespace srdc
