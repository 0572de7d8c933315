// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "ckpd/fscil.hpp"
#include "ckpd/kpd.hpp"
#include "ckpd/net.hpp"

namespace ckpd {

// Decomposed layer on disk: <stem>_w_frozen.mat, <stem>_b.mat, <stem>_a.mat
// and <stem>.json with layer_id, rank_r, singular_values, lambda_final.
void save_decomposed(const std::string& dir, const std::string& stem, const DecomposedLayer& layer);
DecomposedLayer load_decomposed(const std::string& dir, const std::string& stem);

struct Checkpoint {
    Backbone model;
    PrototypeClassifier clf;
};

// Checkpoint directory: manifest.json, one file set per layer, prototypes.mat.
void save_checkpoint(const std::string& dir, const Backbone& model, const PrototypeClassifier& clf);
Checkpoint load_checkpoint(const std::string& dir);

// Dataset directory: session_<t>_{train,test}.mat (one sample per row) and
// matching _labels.csv files.
void save_task(const std::string& dir, const SyntheticTask& task);
SyntheticTask load_task(const std::string& dir);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace ckpd
