#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "stepscale/harness.hpp"

namespace stepscale {

/// Reads a JSON config. A top-level "include" (string or array of strings,
/// relative to the including file) names shared blocks that are loaded first;
/// the including document then overrides them key by key (RFC 7386 merge).
nlohmann::json load_config_json(const std::filesystem::path& path);

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyConfig& config);

StudyConfig load_study_config(const std::filesystem::path& path);

/// Applies "B=2,4,8;s=0,0.9" style overrides to the study grid.
void apply_grid_override(StudyConfig& config, const std::string& spec);

}  // namespace stepscale
