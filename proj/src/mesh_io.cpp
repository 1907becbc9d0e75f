#include "gcf/mesh.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gcf {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("unexpected end of file");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

constexpr char kVolumeMagic[8] = {'G', 'C', 'F', 'V', 'O', 'L', '0', '1'};

}  // namespace

void write_ply(const std::filesystem::path& path, const Mesh& mesh) {
  if (mesh.colors.size() != mesh.vertices.size()) throw std::invalid_argument("mesh needs one color per vertex");
  std::ofstream os = open_out(path);
  os << "ply\nformat binary_little_endian 1.0\n"
     << "element vertex " << mesh.vertices.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
     << "element face " << mesh.triangles.size() << "\n"
     << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int k = 0; k < 3; ++k) put(os, mesh.vertices[i][k]);
    put(os, mesh.colors[i].r);
    put(os, mesh.colors[i].g);
    put(os, mesh.colors[i].b);
  }
  for (const auto& t : mesh.triangles) {
    put(os, std::uint8_t{3});
    for (int k = 0; k < 3; ++k) put(os, static_cast<std::int32_t>(t[k]));
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Mesh read_ply(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::size_t n_vertices = 0, n_faces = 0;
  std::getline(is, line);
  if (line != "ply") throw std::runtime_error("not a PLY file: " + path.string());
  while (std::getline(is, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string word, kind;
    ls >> word;
    if (word == "format") {
      ls >> kind;
      if (kind != "binary_little_endian") throw std::runtime_error("unsupported PLY format " + kind);
    } else if (word == "element") {
      std::size_t count = 0;
      ls >> kind >> count;
      (kind == "vertex" ? n_vertices : n_faces) = count;
    }
  }
  if (line != "end_header") throw std::runtime_error("truncated PLY header");

  Mesh mesh;
  mesh.vertices.resize(n_vertices);
  mesh.colors.resize(n_vertices);
  for (std::size_t i = 0; i < n_vertices; ++i) {
    for (int k = 0; k < 3; ++k) mesh.vertices[i][k] = get<float>(is);
    mesh.colors[i] = {get<std::uint8_t>(is), get<std::uint8_t>(is), get<std::uint8_t>(is)};
  }
  mesh.triangles.resize(n_faces);
  for (std::size_t f = 0; f < n_faces; ++f) {
    if (get<std::uint8_t>(is) != 3) throw std::runtime_error("only triangle faces are supported");
    for (int k = 0; k < 3; ++k) mesh.triangles[f][k] = get<std::int32_t>(is);
  }
  return mesh;
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream os = open_out(path);
  os.precision(9);
  for (const auto& v : mesh.vertices) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void save_volume(const std::filesystem::path& path, const TsdfVolume& volume) {
  std::ofstream os = open_out(path);
  os.write(kVolumeMagic, sizeof(kVolumeMagic));
  const TsdfParams& p = volume.params();
  put(os, p.voxel_size);
  put(os, volume.truncation());
  put(os, p.min_depth);
  put(os, p.max_depth);
  put(os, static_cast<std::uint8_t>(p.depth_weighted));
  const std::vector<BlockCoord> coords = volume.block_coords();
  put(os, static_cast<std::uint64_t>(coords.size()));
  for (const BlockCoord& c : coords) {
    for (int k = 0; k < 3; ++k) put(os, static_cast<std::int32_t>(c[k]));
    for (const Voxel& v : volume.block(c)->voxels) {
      put(os, v.sdf_sum);
      put(os, v.weight);
      for (float col : v.color_sum) put(os, col);
    }
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

TsdfVolume load_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kVolumeMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a volume dump: " + path.string());
  TsdfParams p;
  p.voxel_size = get<double>(is);
  p.truncation = get<double>(is);
  p.min_depth = get<float>(is);
  p.max_depth = get<float>(is);
  p.depth_weighted = get<std::uint8_t>(is) != 0;
  TsdfVolume volume(p);
  const auto n_blocks = get<std::uint64_t>(is);
  VoxelBlock block;
  for (std::uint64_t b = 0; b < n_blocks; ++b) {
    for (int k = 0; k < 3; ++k) block.coord[k] = get<std::int32_t>(is);
    for (Voxel& v : block.voxels) {
      v.sdf_sum = get<double>(is);
      v.weight = get<double>(is);
      for (float& col : v.color_sum) col = get<float>(is);
    }
    volume.restore_block(block);
  }
  return volume;
}

}  // namespace gcf
