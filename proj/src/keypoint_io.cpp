#include "gcf/keypoint_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gcf {

namespace {

constexpr std::array<char, 8> kMagic{'G', 'C', 'F', 'K', 'P', 'T', '0', '1'};

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T)))
    throw FormatError("keypoint file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

std::size_t descriptor_length(const KeypointTable& table) {
  for (const auto& [frame, kps] : table)
    for (const auto& kp : kps) return kp.descriptor.size();
  return 0;
}

void check_lengths(const KeypointTable& table, std::size_t d) {
  for (const auto& [frame, kps] : table)
    for (const auto& kp : kps)
      if (kp.descriptor.size() != d) throw FormatError("descriptor lengths differ within one table");
}

}  // namespace

void write_keypoints_binary(const std::filesystem::path& path, const KeypointTable& table) {
  const std::size_t d = descriptor_length(table);
  check_lengths(table, d);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  put_le<std::uint32_t>(os, 0);
  std::uint64_t n = 0;
  for (const auto& [frame, kps] : table) n += kps.size();
  put_le<std::uint64_t>(os, n);
  for (const auto& [frame, kps] : table) {
    for (const auto& kp : kps) {
      put_le<std::int32_t>(os, frame);
      put_le<float>(os, static_cast<float>(kp.pixel.x()));
      put_le<float>(os, static_cast<float>(kp.pixel.y()));
      put_le<float>(os, static_cast<float>(kp.depth));
      put_le<float>(os, static_cast<float>(kp.scale));
      put_le<float>(os, static_cast<float>(kp.orientation));
      for (float v : kp.descriptor) put_le<float>(os, v);
    }
  }
}

KeypointTable read_keypoints_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw FormatError(path.string() + ": not a binary keypoint file");
  const auto d = get_le<std::uint32_t>(is);
  (void)get_le<std::uint32_t>(is);
  const auto n = get_le<std::uint64_t>(is);
  KeypointTable table;
  for (std::uint64_t i = 0; i < n; ++i) {
    Keypoint kp;
    const int frame = get_le<std::int32_t>(is);
    kp.pixel.x() = get_le<float>(is);
    kp.pixel.y() = get_le<float>(is);
    kp.depth = get_le<float>(is);
    kp.scale = get_le<float>(is);
    kp.orientation = get_le<float>(is);
    kp.descriptor.resize(d);
    for (auto& v : kp.descriptor) v = get_le<float>(is);
    table[frame].push_back(std::move(kp));
  }
  return table;
}

void write_keypoints_text(const std::filesystem::path& path, const KeypointTable& table) {
  const std::size_t d = descriptor_length(table);
  check_lengths(table, d);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << "# gcf-keypoints v1 descriptor_length=" << d << '\n';
  os.precision(9);
  for (const auto& [frame, kps] : table) {
    for (const auto& kp : kps) {
      os << frame << ' ' << static_cast<float>(kp.pixel.x()) << ' ' << static_cast<float>(kp.pixel.y()) << ' '
         << static_cast<float>(kp.depth) << ' ' << static_cast<float>(kp.scale) << ' '
         << static_cast<float>(kp.orientation);
      for (float v : kp.descriptor) os << ' ' << v;
      os << '\n';
    }
  }
}

KeypointTable read_keypoints_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path.string() + ": empty keypoint file");
  const std::string key = "descriptor_length=";
  const auto pos = line.find(key);
  if (line.rfind("# gcf-keypoints v1", 0) != 0 || pos == std::string::npos)
    throw FormatError(path.string() + ":1: missing keypoint header");
  const std::size_t d = std::stoul(line.substr(pos + key.size()));
  KeypointTable table;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Keypoint kp;
    int frame = 0;
    float x, y, depth, scale, orientation;
    if (!(ls >> frame >> x >> y >> depth >> scale >> orientation))
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed keypoint record");
    kp.pixel = Vec2d(x, y);
    kp.depth = depth;
    kp.scale = scale;
    kp.orientation = orientation;
    kp.descriptor.resize(d);
    for (auto& v : kp.descriptor)
      if (!(ls >> v))
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": short descriptor");
    table[frame].push_back(std::move(kp));
  }
  return table;
}

KeypointTable read_keypoints(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (is && magic == kMagic) return read_keypoints_binary(path);
  return read_keypoints_text(path);
}

}  // namespace gcf
