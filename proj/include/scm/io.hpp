#pragma once

#include "scm/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

// CSV and JSON surfaces. Series CSV: header row `x_<unit>,y_<unit>`, decimal
// point, LF line endings, shortest round-trip float formatting. 2D fields:
// one-line header `# nx ny dx_nm dy_nm` followed by ny rows of nx values.

namespace scm {

std::string format_double(double value);  // shortest round-trip representation

std::string series_to_csv(const Series& s);
Series series_from_csv(const std::string& text);
void write_series_csv(const std::filesystem::path& path, const Series& s);
Series read_series_csv(const std::filesystem::path& path);

struct FieldGrid {
  Eigen::MatrixXd values;  // ny rows, nx cols
  double dx = 1;
  double dy = 1;
};

std::string field_grid_to_csv(const FieldGrid& grid);
FieldGrid field_grid_from_csv(const std::string& text);
void write_field_grid_csv(const std::filesystem::path& path, const FieldGrid& grid);
FieldGrid read_field_grid_csv(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// FNV-1a 64-bit content hash, hex-encoded; used in run manifests.
std::string fnv1a64_hex(const std::string& bytes);
std::string hash_file(const std::filesystem::path& path);

// JSON conversions (nlohmann idiom).
void to_json(nlohmann::json& j, const Series& s);
void from_json(const nlohmann::json& j, Series& s);
void to_json(nlohmann::json& j, const CavityMode& m);
void from_json(const nlohmann::json& j, CavityMode& m);
void to_json(nlohmann::json& j, const Emitter& e);
void from_json(const nlohmann::json& j, Emitter& e);
void to_json(nlohmann::json& j, const CoupledSystemParams& p);
void from_json(const nlohmann::json& j, CoupledSystemParams& p);
void to_json(nlohmann::json& j, const DetectionCoeffs& c);
void from_json(const nlohmann::json& j, DetectionCoeffs& c);
void to_json(nlohmann::json& j, const EmissionBudget& b);
void from_json(const nlohmann::json& j, EmissionBudget& b);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace scm
