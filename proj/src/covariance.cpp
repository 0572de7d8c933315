// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include "ckpd/covariance.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "ckpd/errors.hpp"

namespace ckpd {

CovarianceBuffer::CovarianceBuffer(std::uint64_t rng_seed) : seed_(rng_seed), rng_(rng_seed) {}

bool CovarianceBuffer::contains(ClassId id) const {
    return std::any_of(exemplars_.begin(), exemplars_.end(),
                       [id](const ClassExemplar& e) { return e.class_id == id; });
}

void CovarianceBuffer::append(ClassExemplar exemplar) {
    if (contains(exemplar.class_id)) {
        throw DuplicateClass(fmt::format("buffer: class {} already stored", exemplar.class_id));
    }
    if (!exemplars_.empty() && exemplars_.front().input.size() != exemplar.input.size()) {
        throw ShapeError(fmt::format("buffer: exemplar of dim {} in buffer of dim {}",
                                     exemplar.input.size(), exemplars_.front().input.size()));
    }
    exemplars_.push_back(std::move(exemplar));
}

std::size_t CovarianceBuffer::draw_index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    return pick(rng_);
}

CovarianceBuffer update_buffer(CovarianceBuffer buffer, const std::vector<ClassSamples>& new_classes) {
    std::set<ClassId> incoming;
    for (const auto& [id, samples] : new_classes) {
        if (buffer.contains(id) || !incoming.insert(id).second) {
            throw DuplicateClass(fmt::format("update_buffer: class {} already present", id));
        }
        if (samples.empty()) throw EmptyClass(fmt::format("update_buffer: class {} has no samples", id));
    }
    for (const auto& [id, samples] : new_classes) {
        const std::size_t pick = buffer.draw_index(samples.size());
        buffer.append(ClassExemplar{id, samples[pick]});
    }
    return buffer;
}

Matrix compute_input_covariance(const Matrix& features) {
    const std::size_t d = features.rows();
    const std::size_t m = features.cols();
    if (m == 0) throw DegenerateCovariance("input covariance: capture has no columns");
    Matrix cov(d, d);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < d; ++i) {
        const auto ri = features.row(i);
        for (std::size_t j = i; j < d; ++j) {
            const double v = dot(ri, features.row(j)) * inv_m;
            cov(i, j) = v;
            cov(j, i) = v;
        }
    }
    return cov;
}

Matrix compute_input_covariance(const ActivationCapture& capture) {
    return compute_input_covariance(capture.features);
}

std::vector<ActivationCapture> capture_activations(const Backbone& model, const CovarianceBuffer& buffer) {
    if (buffer.empty()) throw EmptyBuffer("capture_activations: covariance buffer is empty");
    const std::size_t n_layers = model.num_layers();
    std::vector<std::vector<Vector>> columns(n_layers);
    for (const auto& ex : buffer.exemplars()) {
        ForwardResult fr = forward(model, ex.input);
        for (std::size_t l = 0; l < n_layers; ++l) columns[l].push_back(std::move(fr.layer_inputs[l]));
    }
    std::vector<ActivationCapture> out;
    out.reserve(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) out.push_back({l, Matrix::from_columns(columns[l])});
    return out;
}

void write_buffer(std::ostream& out, const CovarianceBuffer& buffer) {
    const std::size_t dim = buffer.empty() ? 0 : buffer.exemplars().front().input.size();
    out << "CKPD-BUF v1 " << buffer.size() << ' ' << dim << '\n';
    for (const auto& ex : buffer.exemplars()) {
        out << ex.class_id;
        for (double v : ex.input) out << ' ' << format_double(v);
        out << '\n';
    }
}

CovarianceBuffer read_buffer(std::istream& in, std::uint64_t rng_seed) {
    std::string header;
    if (!std::getline(in, header)) throw FormatError("CKPD-BUF: missing header");
    std::istringstream hs(header);
    std::string magic, version;
    long long count = -1, dim = -1;
    hs >> magic >> version >> count >> dim;
    if (magic != "CKPD-BUF" || version != "v1") throw FormatError("CKPD-BUF: bad magic '" + header + "'");
    if (hs.fail() || count < 0 || dim < 0) throw FormatError("CKPD-BUF: bad header '" + header + "'");

    CovarianceBuffer buffer(rng_seed);
    std::string line;
    for (long long i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw FormatError(fmt::format("CKPD-BUF: missing exemplar {}", i));
        std::istringstream ls(line);
        ClassExemplar ex;
        if (!(ls >> ex.class_id)) throw FormatError(fmt::format("CKPD-BUF: bad class id on line {}", i + 2));
        double v;
        while (ls >> v) ex.input.push_back(v);
        if (!ls.eof() || ex.input.size() != static_cast<std::size_t>(dim)) {
            throw FormatError(fmt::format("CKPD-BUF: exemplar {} has wrong dimension", i));
        }
        buffer.append(std::move(ex));
    }
    return buffer;
}

void save_buffer(const std::string& path, const CovarianceBuffer& buffer) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing: " + path);
    write_buffer(out, buffer);
}

CovarianceBuffer load_buffer(const std::string& path, std::uint64_t rng_seed) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open: " + path);
    return read_buffer(in, rng_seed);
}

}  // namespace ckpd
