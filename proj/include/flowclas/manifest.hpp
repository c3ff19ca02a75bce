/*
 * Copyright 2026 The flowclas Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// JSON-lines dataset manifests.
//
// Each line is an object with at least "image"; optional "mask", "features"
// and "split". Relative paths resolve against $FLOWCLAS_DATA_DIR when the file
// exists there, otherwise against the manifest's own directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowclas/error.hpp"

namespace flowclas {

struct ManifestRecord {
  std::string image;
  std::optional<std::string> mask;
  std::optional<std::string> features;
  std::string split;
  nlohmann::json raw;
  std::size_t line = 0;
};

struct Manifest {
  std::filesystem::path path;
  std::vector<ManifestRecord> records;
  std::vector<std::string> missing;  // referenced files that do not exist

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path rel(p);
    if (rel.is_absolute()) return rel;
    if (const char* root = std::getenv("FLOWCLAS_DATA_DIR"); root != nullptr && *root != '\0') {
      std::filesystem::path candidate = std::filesystem::path(root) / rel;
      if (std::filesystem::exists(candidate)) return candidate;
    }
    return path.parent_path() / rel;
  }

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

// Splits whose records must carry a mask.
inline bool split_requires_mask(const std::string& split) {
  return split == "outlier" || split == "mixed" || split == "test";
}

inline std::optional<std::string> optional_string(const nlohmann::json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) throw ValidationError("manifest line " + std::to_string(line) + ": '" + key + "' must be a string");
  return j[key].get<std::string>();
}

inline Manifest load_manifest(const std::filesystem::path& path, bool require_masks = false) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  Manifest m;
  m.path = path;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("manifest " + path.string() + " line " + std::to_string(line) + ": malformed JSON");
    }
    if (!j.is_object()) throw ValidationError("manifest " + path.string() + " line " + std::to_string(line) + ": not an object");
    ManifestRecord r;
    r.line = line;
    auto image = optional_string(j, "image", line);
    if (!image) throw ValidationError("manifest " + path.string() + " line " + std::to_string(line) + ": missing 'image'");
    r.image = *image;
    r.mask = optional_string(j, "mask", line);
    r.features = optional_string(j, "features", line);
    r.split = optional_string(j, "split", line).value_or("");
    if ((require_masks || split_requires_mask(r.split)) && !r.mask) {
      throw ValidationError("manifest " + path.string() + " line " + std::to_string(line) + ": record requires a mask");
    }
    r.raw = std::move(j);
    for (const auto& p : {std::optional<std::string>(r.image), r.mask, r.features}) {
      if (p && !std::filesystem::exists(m.resolve(*p))) m.missing.push_back(*p);
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<nlohmann::json>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write manifest " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

}  // namespace flowclas
