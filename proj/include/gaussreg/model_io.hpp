// Copyright 2026 The gaussreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaussreg/datasets.hpp"
#include "gaussreg/error.hpp"
#include "gaussreg/network.hpp"
#include "gaussreg/trainer.hpp"

namespace gaussreg {

/// A network together with what is needed to apply it to raw data.
struct Model {
  Network network;
  std::optional<Standardizer> standardizer;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::optional<TrainConfig> train_config;
};

inline nlohmann::json to_json(const ColumnStats& s) {
  std::vector<int> flags;
  for (bool b : s.degenerate) flags.push_back(b ? 1 : 0);
  return {{"mean", s.mean}, {"std", s.std}, {"degenerate", flags}};
}

inline ColumnStats column_stats_from_json(const nlohmann::json& j) {
  ColumnStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  for (int f : j.at("degenerate").get<std::vector<int>>()) s.degenerate.push_back(f != 0);
  if (s.std.size() != s.mean.size() || s.degenerate.size() != s.mean.size()) {
    throw FormatError("model file: standardizer column counts differ");
  }
  for (double v : s.std) {
    if (!(v > 0.0)) throw FormatError("model file: standardizer std must be positive");
  }
  return s;
}

inline nlohmann::json to_json(const Standardizer& st) {
  return {{"features", to_json(st.feature_stats())}, {"targets", to_json(st.target_stats())}};
}

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
  return Standardizer(column_stats_from_json(j.at("features")), column_stats_from_json(j.at("targets")));
}

inline std::string serialize(const Model& m) {
  nlohmann::json body = network_to_json(m.network);
  body["standardizer"] = m.standardizer ? to_json(*m.standardizer) : nlohmann::json();
  body["feature_names"] = m.feature_names;
  body["target_names"] = m.target_names;
  body["train_config"] = m.train_config ? nlohmann::json(*m.train_config) : nlohmann::json();
  return serialize_model(body);
}

inline void save_model(const Model& m, const std::string& path) { write_text_file(path, serialize(m)); }

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  const nlohmann::json doc = parse_model(in);
  Model m{network_from_json(doc), std::nullopt, {}, {}, std::nullopt};
  try {
    if (doc.contains("standardizer") && !doc["standardizer"].is_null()) {
      m.standardizer = standardizer_from_json(doc["standardizer"]);
      if (m.standardizer->feature_stats().size() != m.network.spec().input_dim ||
          m.standardizer->target_stats().size() != m.network.spec().output_dim) {
        throw FormatError("model file: standardizer does not match network dimensions");
      }
    }
    if (doc.contains("feature_names")) m.feature_names = doc["feature_names"].get<std::vector<std::string>>();
    if (doc.contains("target_names")) m.target_names = doc["target_names"].get<std::vector<std::string>>();
    if (doc.contains("train_config") && !doc["train_config"].is_null()) {
      m.train_config = doc["train_config"].get<TrainConfig>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  return m;
}

}  // namespace gaussreg
