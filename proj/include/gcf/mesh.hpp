#pragma once

#include "gcf/image.hpp"
#include "gcf/parallel.hpp"
#include "gcf/tsdf.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <vector>

namespace gcf {

struct Mesh {
  std::vector<Eigen::Vector3f> vertices;
  std::vector<Rgb8> colors;  // one per vertex
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

// Marching cubes over every cube whose eight corner voxels are initialized.
// Vertices on shared cube edges are emitted once.
Mesh extract_mesh(const TsdfVolume& volume, Execution exec = Execution::Serial);

// Cube tables. Corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
// Edges 0-3 run along x, 4-7 along y, 8-11 along z.
namespace mc {
using TriangleRow = std::array<int, 16>;  // edge triples, -1 terminated
const std::array<std::array<int, 2>, 12>& edge_corners();
// Indexed by the mask whose bit c is set when corner c has negative distance.
// Triangles wind counterclockwise seen from the positive side. Faces with
// diagonally opposite negative corners keep those corners apart, identically
// for both cubes sharing the face.
const std::array<TriangleRow, 256>& triangle_table();
}  // namespace mc

// Binary little-endian PLY: float x y z, uchar red green blue per vertex and
// a uchar-count int list per face.
void write_ply(const std::filesystem::path& path, const Mesh& mesh);
Mesh read_ply(const std::filesystem::path& path);
// Wavefront OBJ with "v x y z" and 1-based "f a b c" records.
void write_obj(const std::filesystem::path& path, const Mesh& mesh);

// Volume dump, little-endian:
//   char[8] "GCFVOL01", float64 voxel_size, float64 truncation,
//   float32 min_depth, float32 max_depth, uint8 depth_weighted, uint64 blocks,
//   then per block int32 x y z and 512 voxels of
//   float64 sdf_sum, float64 weight, float32 color_sum[3] in (z, y, x) order.
void save_volume(const std::filesystem::path& path, const TsdfVolume& volume);
TsdfVolume load_volume(const std::filesystem::path& path);

}  // namespace gcf
