#pragma once

#include "inverseflow/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace inverseflow {

inline constexpr int kArtifactSchema = 1;

std::uint64_t fnv1a64(const std::string& bytes);
// Hash of the compact JSON dump (keys are sorted by nlohmann::json).
std::uint64_t config_hash(const nlohmann::json& config);
std::string hex64(std::uint64_t v);

// Identifies the run that produced an artifact.
struct ArtifactMeta {
  std::string kind;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  // "# key=value" lines for CSV files.
  std::string csv_header() const;
  nlohmann::ordered_json json() const;
};

void write_text(const std::filesystem::path& path, const std::string& text);
// JSON report with the metadata block first.
void write_json_report(const std::filesystem::path& path, const ArtifactMeta& meta, const nlohmann::ordered_json& body);
// CSV: metadata comment lines, header row, numeric rows formatted with %.17g.
void write_csv(const std::filesystem::path& path, const ArtifactMeta& meta, const std::vector<std::string>& columns,
               const Mat& rows);

std::string format_double(double v);

}  // namespace inverseflow
