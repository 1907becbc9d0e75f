#pragma once

#include "gcf/features.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <vector>

namespace gcf {

using KeypointTable = std::map<int, std::vector<Keypoint>>;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary layout, all fields little-endian:
//   char[8]  magic "GCFKPT01"
//   uint32   descriptor length D
//   uint32   reserved (0)
//   uint64   record count N
//   N records of: int32 frame, float32 x, y, depth, scale, orientation,
//                 float32[D] descriptor
void write_keypoints_binary(const std::filesystem::path& path, const KeypointTable& table);
KeypointTable read_keypoints_binary(const std::filesystem::path& path);

// Text layout: a header line "# gcf-keypoints v1 descriptor_length=D", then
// one whitespace-separated record per line in the binary field order.
void write_keypoints_text(const std::filesystem::path& path, const KeypointTable& table);
KeypointTable read_keypoints_text(const std::filesystem::path& path);

// Dispatches on the leading magic bytes.
KeypointTable read_keypoints(const std::filesystem::path& path);

}  // namespace gcf
