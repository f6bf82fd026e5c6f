#pragma once

#include "mmdcal/calibration.hpp"
#include "mmdcal/preprocessing.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace mmdcal {

using Json = nlohmann::json;

inline constexpr int kModelSchemaVersion = 1;

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Parses comma-separated text: a header row of column names, then one
/// numeric row per point. Errors carry 1-based line and column positions.
Sample parse_csv(std::string_view text, const std::string& provenance);
Sample read_csv(const std::filesystem::path& path);

std::string format_csv(const Matrix& data, const std::vector<std::string>& column_names);
void write_csv(const std::filesystem::path& path, const Matrix& data, const std::vector<std::string>& column_names);
void write_csv(const std::filesystem::path& path, const Sample& sample);

Json network_to_json(const Network& net);
Network network_from_json(const Json& j);

Json training_config_to_json(const TrainingConfig& c);
TrainingConfig training_config_from_json(const Json& j, TrainingConfig defaults = {});

Json kernel_to_json(const KernelSpec& k);
KernelSpec kernel_from_json(const Json& j);

Json calibration_map_to_json(const CalibrationMap& map);
CalibrationMap calibration_map_from_json(const Json& j);

void save_calibration_map(const std::filesystem::path& path, const CalibrationMap& map);
CalibrationMap load_calibration_map(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mmdcal
