#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "denoiser.hpp"
#include "pointcloud.hpp"
#include "schedule.hpp"
#include "toydata.hpp"

namespace bdm {

// XYZ text: one point per line, whitespace-separated coordinates.
void save_xyz(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud load_xyz(const std::filesystem::path& path);

// JSON schedule spec {T, beta0, betaT}; derived arrays are recomputed.
void save_schedule(const NoiseSchedule& sched, const std::filesystem::path& path);
NoiseSchedule load_schedule(const std::filesystem::path& path);

// Flat binary parameter container: magic, JSON header (kind, dim, tensor
// shapes, content hash), then little-endian float64 payload in tensor order.
void save_params(const DenoiserParams& params, const std::filesystem::path& path);
DenoiserParams load_params(const std::filesystem::path& path);
void save_merged(const MergedParams& merged, const std::filesystem::path& path);
MergedParams load_merged(const std::filesystem::path& path);

// Dataset directory: xyz files per cloud plus manifest.json with specs,
// conditions and split membership.
void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_dataset(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& body);

}  // namespace bdm
