#pragma once

// Parameter checkpoints: a JSON record of the model spec plus every weight
// array. nlohmann::json serializes doubles with shortest round-trip
// formatting, so save/load is lossless.

#include <fstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "srdc/errors.hpp"
#include "srdc/model.hpp"

namespace srdc {

namespace detail {

inline nlohmann::json tensor_to_json(const Tensor& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < t.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Tensor tensor_from_json(const nlohmann::json& rows) {
    if (!rows.is_array() || rows.empty() || !rows[0].is_array())
        throw IoError("checkpoint: expected a 2-d array");
    const std::size_t r = rows.size(), c = rows[0].size();
    Tensor t({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        if (rows[i].size() != c) throw IoError("checkpoint: ragged array");
        for (std::size_t j = 0; j < c; ++j) t.at(i, j) = rows[i][j].get<double>();
    }
    return t;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelSpec& spec,
                            const ModelParams& params) {
    nlohmann::json doc;
    doc["schema_version"] = 1;
    doc["model"] = {{"input_dim", spec.input_dim},
                    {"hidden", spec.hidden},
                    {"feature_dim", spec.feature_dim},
                    {"classes", spec.classes}};
    nlohmann::json arrays;
    params.for_each([&arrays](const std::string& name, const Tensor& t) {
        arrays[name] = detail::tensor_to_json(t);
    });
    doc["params"] = std::move(arrays);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    out << doc.dump(1) << '\n';
    if (!out) throw IoError("checkpoint: write failed for '" + path + "'");
}

inline std::pair<ModelSpec, ModelParams> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint: parse error in '" + path + "': " + e.what());
    }
    if (doc.value("schema_version", 0) != 1)
        throw IoError("checkpoint: unsupported schema_version in '" + path + "'");

    ModelSpec spec;
    const auto& m = doc.at("model");
    spec.input_dim = m.at("input_dim").get<std::size_t>();
    spec.hidden = m.at("hidden").get<std::vector<std::size_t>>();
    spec.feature_dim = m.at("feature_dim").get<std::size_t>();
    spec.classes = m.at("classes").get<std::size_t>();
    spec.validate();

    ModelParams params = init_params(spec, 0);
    const auto& arrays = doc.at("params");
    params.for_each([&arrays](const std::string& name, Tensor& t) {
        if (!arrays.contains(name))
            throw IoError("checkpoint: missing array '" + name + "'");
        Tensor loaded = detail::tensor_from_json(arrays.at(name));
        if (!loaded.same_shape(t))
            throw IoError("checkpoint: array '" + name + "' has shape " +
                          loaded.shape_str() + ", expected " + t.shape_str());
        t = std::move(loaded);
    });
    if (!params.all_finite())
        throw IoError("checkpoint: non-finite parameters in '" + path + "'");
    return {spec, params};
}

}  // namespace srdc
