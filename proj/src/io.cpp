// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include "ckpd/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "ckpd/errors.hpp"

namespace fs = std::filesystem;

namespace ckpd {

namespace {

using json = nlohmann::ordered_json;

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("{}: {}", path, e.what()));
    }
}

Matrix samples_to_matrix(const std::vector<Sample>& samples, std::size_t dim) {
    Matrix m(samples.size(), dim);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].x.size() != dim) throw ShapeError("save_task: ragged sample dimensions");
        std::copy(samples[i].x.begin(), samples[i].x.end(), m.row(i).begin());
    }
    return m;
}

std::string labels_csv(const std::vector<Sample>& samples) {
    std::ostringstream os;
    os << "label\n";
    for (const auto& s : samples) os << s.y << '\n';
    return os.str();
}

std::vector<Sample> read_split(const std::string& dir, const std::string& stem) {
    const Matrix m = load_matrix(join(dir, stem + ".mat"));
    std::istringstream in(read_text_file(join(dir, stem + "_labels.csv")));
    std::string line;
    if (!std::getline(in, line) || line != "label") throw FormatError(stem + "_labels.csv: missing header");
    std::vector<Sample> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (out.size() == m.rows()) throw FormatError(stem + ": more labels than rows");
        Sample s;
        try {
            s.y = std::stoi(line);
        } catch (const std::exception&) {
            throw FormatError(stem + "_labels.csv: bad label '" + line + "'");
        }
        const auto r = m.row(out.size());
        s.x.assign(r.begin(), r.end());
        out.push_back(std::move(s));
    }
    if (out.size() != m.rows()) throw FormatError(stem + ": label count does not match rows");
    return out;
}

}  // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << text;
    if (!out) throw FormatError("write failed: " + path);
}

void save_decomposed(const std::string& dir, const std::string& stem, const DecomposedLayer& layer) {
    fs::create_directories(dir);
    save_matrix(join(dir, stem + "_w_frozen.mat"), layer.w_frozen);
    save_matrix(join(dir, stem + "_b.mat"), layer.b);
    save_matrix(join(dir, stem + "_a.mat"), layer.a);
    json j;
    j["layer_id"] = layer.layer_id;
    j["rank_r"] = layer.rank_r;
    j["singular_values"] = layer.singular_values;
    j["lambda_final"] = layer.lambda_final;
    write_text_file(join(dir, stem + ".json"), j.dump(2) + "\n");
}

DecomposedLayer load_decomposed(const std::string& dir, const std::string& stem) {
    DecomposedLayer d;
    d.w_frozen = load_matrix(join(dir, stem + "_w_frozen.mat"));
    d.b = load_matrix(join(dir, stem + "_b.mat"));
    d.a = load_matrix(join(dir, stem + "_a.mat"));
    const json j = parse_json_file(join(dir, stem + ".json"));
    try {
        d.layer_id = j.at("layer_id").get<std::size_t>();
        d.rank_r = j.at("rank_r").get<std::size_t>();
        d.singular_values = j.at("singular_values").get<Vector>();
        d.lambda_final = j.value("lambda_final", 0.0);
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("{}.json: {}", stem, e.what()));
    }
    if (d.b.rows() != d.w_frozen.rows() || d.a.cols() != d.w_frozen.cols() || d.b.cols() != d.a.rows() ||
        d.b.cols() != d.rank_r) {
        throw ShapeError(fmt::format("{}: inconsistent adapter shapes", stem));
    }
    return d;
}

void save_checkpoint(const std::string& dir, const Backbone& model, const PrototypeClassifier& clf) {
    fs::create_directories(dir);
    json manifest;
    manifest["widths"] = model.widths();
    manifest["activation"] = to_string(model.activation());
    manifest["pre_norm"] = model.pre_norm();
    auto& layers = manifest["layers"] = json::array();
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        const std::string stem = fmt::format("layer_{}", l);
        if (const auto* p = std::get_if<PlainLinear>(&model.layer(l))) {
            save_matrix(join(dir, stem + ".mat"), p->w);
            layers.push_back({{"variant", "plain"}, {"stem", stem}});
        } else {
            save_decomposed(dir, stem, std::get<DecomposedLayer>(model.layer(l)));
            layers.push_back({{"variant", "decomposed"}, {"stem", stem}});
        }
    }
    manifest["temperature"] = clf.temperature();
    std::vector<ClassId> ids;
    std::vector<Vector> rows;
    for (const auto& [id, p] : clf.prototypes()) {
        ids.push_back(id);
        rows.push_back(p);
    }
    manifest["prototype_class_ids"] = ids;
    manifest["trainable_class_ids"] = std::vector<ClassId>(clf.trainable().begin(), clf.trainable().end());
    save_matrix(join(dir, "prototypes.mat"), rows.empty() ? Matrix() : Matrix::from_rows(rows));
    write_text_file(join(dir, "manifest.json"), manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir) {
    const json manifest = parse_json_file(join(dir, "manifest.json"));
    try {
        std::vector<LayerSlot> slots;
        for (const auto& entry : manifest.at("layers")) {
            const std::string variant = entry.at("variant").get<std::string>();
            const std::string stem = entry.at("stem").get<std::string>();
            if (variant == "plain") {
                slots.emplace_back(PlainLinear{load_matrix(join(dir, stem + ".mat"))});
            } else if (variant == "decomposed") {
                slots.emplace_back(load_decomposed(dir, stem));
            } else {
                throw FormatError("manifest: unknown layer variant '" + variant + "'");
            }
        }
        Backbone model(std::move(slots), activation_from_string(manifest.at("activation").get<std::string>()),
                       manifest.value("pre_norm", true));
        if (model.widths() != manifest.at("widths").get<std::vector<std::size_t>>()) {
            throw ShapeError("checkpoint: layer files disagree with manifest widths");
        }
        PrototypeClassifier clf(manifest.at("temperature").get<double>());
        const auto ids = manifest.at("prototype_class_ids").get<std::vector<ClassId>>();
        const std::set<ClassId> trainable = [&] {
            const auto t = manifest.value("trainable_class_ids", std::vector<ClassId>{});
            return std::set<ClassId>(t.begin(), t.end());
        }();
        const Matrix protos = load_matrix(join(dir, "prototypes.mat"));
        if (protos.rows() != ids.size()) throw ShapeError("checkpoint: prototype count mismatch");
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (protos.cols() != model.output_dim()) throw ShapeError("checkpoint: prototype dimension mismatch");
            clf.add_prototype(ids[i], protos.row(i), trainable.count(ids[i]) != 0);
        }
        return {std::move(model), std::move(clf)};
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("{}/manifest.json: {}", dir, e.what()));
    }
}

void save_task(const std::string& dir, const SyntheticTask& task) {
    fs::create_directories(dir);
    const std::size_t dim = task.class_means.empty() ? 0 : task.class_means.front().size();
    for (const auto& s : task.sessions) {
        const std::string train = fmt::format("session_{}_train", s.session_id);
        const std::string test = fmt::format("session_{}_test", s.session_id);
        save_matrix(join(dir, train + ".mat"), samples_to_matrix(s.train, dim));
        write_text_file(join(dir, train + "_labels.csv"), labels_csv(s.train));
        save_matrix(join(dir, test + ".mat"), samples_to_matrix(s.test, dim));
        write_text_file(join(dir, test + "_labels.csv"), labels_csv(s.test));
    }
    save_matrix(join(dir, "class_means.mat"), task.class_means.empty() ? Matrix() : Matrix::from_rows(task.class_means));
}

SyntheticTask load_task(const std::string& dir) {
    SyntheticTask task;
    const Matrix means = load_matrix(join(dir, "class_means.mat"));
    for (std::size_t i = 0; i < means.rows(); ++i) task.class_means.emplace_back(means.row(i).begin(), means.row(i).end());
    for (std::size_t t = 0; fs::exists(join(dir, fmt::format("session_{}_train.mat", t))); ++t) {
        SessionData s;
        s.session_id = t;
        s.train = read_split(dir, fmt::format("session_{}_train", t));
        s.test = read_split(dir, fmt::format("session_{}_test", t));
        for (const auto& smp : s.train)
            if (std::find(s.classes.begin(), s.classes.end(), smp.y) == s.classes.end()) s.classes.push_back(smp.y);
        task.sessions.push_back(std::move(s));
    }
    if (task.sessions.empty()) throw FormatError("load_task: no session files in " + dir);
    return task;
}

}  // namespace ckpd
