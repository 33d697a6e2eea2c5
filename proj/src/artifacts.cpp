#include "inverseflow/artifacts.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace inverseflow {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const nlohmann::json& config) { return fnv1a64(config.dump()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string ArtifactMeta::csv_header() const {
  std::ostringstream os;
  os << "# schema_version=" << kArtifactSchema << "\n"
     << "# kind=" << kind << "\n"
     << "# config_hash=" << hex64(config_hash) << "\n"
     << "# seed=" << seed << "\n";
  return os.str();
}

nlohmann::ordered_json ArtifactMeta::json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = kArtifactSchema;
  j["kind"] = kind;
  j["config_hash"] = hex64(config_hash);
  j["seed"] = seed;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_json_report(const std::filesystem::path& path, const ArtifactMeta& meta,
                       const nlohmann::ordered_json& body) {
  nlohmann::ordered_json j;
  j["metadata"] = meta.json();
  for (const auto& [k, v] : body.items()) j[k] = v;
  write_text(path, j.dump(2) + "\n");
}

void write_csv(const std::filesystem::path& path, const ArtifactMeta& meta, const std::vector<std::string>& columns,
               const Mat& rows) {
  require_shape(rows.cols() == static_cast<Eigen::Index>(columns.size()) || rows.rows() == 0,
                "CSV column count mismatch");
  std::ostringstream os;
  os << meta.csv_header();
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << "\n";
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) os << (c ? "," : "") << format_double(rows(r, c));
    os << "\n";
  }
  write_text(path, os.str());
}

}  // namespace inverseflow
