#include "gcf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace gcf {
namespace mc {
namespace {

int corner_bit(int c, int axis) { return (c >> axis) & 1; }

std::array<std::array<int, 2>, 12> make_edges() {
  std::array<std::array<int, 2>, 12> edges{};
  int e = 0;
  for (int axis = 0; axis < 3; ++axis)
    for (int c = 0; c < 8; ++c)
      if (!corner_bit(c, axis)) edges[e++] = {c, c | (1 << axis)};
  return edges;
}

int edge_between(const std::array<std::array<int, 2>, 12>& edges, int a, int b) {
  for (int e = 0; e < 12; ++e)
    if ((edges[e][0] == a && edges[e][1] == b) || (edges[e][0] == b && edges[e][1] == a)) return e;
  throw std::logic_error("corners not adjacent");
}

Vec3d corner_position(int c) { return {double(corner_bit(c, 0)), double(corner_bit(c, 1)), double(corner_bit(c, 2))}; }

Vec3d edge_midpoint(const std::array<std::array<int, 2>, 12>& edges, int e) {
  return 0.5 * (corner_position(edges[e][0]) + corner_position(edges[e][1]));
}

bool on_face(const std::array<std::array<int, 2>, 12>& edges, int e, int axis, int side) {
  const int a = edges[e][0], b = edges[e][1];
  return corner_bit(a, axis) == side && corner_bit(b, axis) == side;
}

bool share_face(const std::array<std::array<int, 2>, 12>& edges, int e, int f) {
  for (int axis = 0; axis < 3; ++axis)
    for (int side = 0; side < 2; ++side)
      if (on_face(edges, e, axis, side) && on_face(edges, f, axis, side)) return true;
  return false;
}

// Triangulates loop[i..j] with (i, j) as a polygon side. Diagonals never join
// two vertices of one cube face: such a chord lies in the face, and the cube
// across it may pick the same chord, leaving four triangles on one edge.
bool triangulate(const std::array<std::array<int, 2>, 12>& edges, const std::vector<int>& loop, int i, int j,
                 std::vector<std::array<int, 3>>& tris) {
  if (j - i < 2) return true;
  const auto chord_ok = [&](int a, int b) {
    return b - a == 1 || (a == 0 && b == static_cast<int>(loop.size()) - 1) || !share_face(edges, loop[a], loop[b]);
  };
  for (int m = i + 1; m < j; ++m) {
    if (!chord_ok(i, m) || !chord_ok(m, j)) continue;
    const std::size_t mark = tris.size();
    tris.push_back({i, m, j});
    if (triangulate(edges, loop, i, m, tris) && triangulate(edges, loop, m, j, tris)) return true;
    tris.resize(mark);
  }
  return false;
}

TriangleRow build_row(const std::array<std::array<int, 2>, 12>& edges, int mask) {
  const auto inside = [&](int c) { return (mask >> c) & 1; };
  // next[e]: successor of edge vertex e along its boundary loop.
  std::array<int, 12> next;
  next.fill(-1);

  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      const int base = side << axis;
      const std::array<int, 4> ring{base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)};
      Vec3d normal = Vec3d::Zero();
      normal[axis] = side ? 1.0 : -1.0;

      // Segments on this face, each paired with the negative corners it cuts off.
      struct Segment {
        int a, b;
        Vec3d inside_centroid;
      };
      std::vector<Segment> segments;
      std::array<int, 4> crossing{};
      int n_cross = 0;
      for (int k = 0; k < 4; ++k)
        if (inside(ring[k]) != inside(ring[(k + 1) % 4])) crossing[n_cross++] = k;
      if (n_cross == 2) {
        Vec3d centroid = Vec3d::Zero();
        int count = 0;
        for (int k = 0; k < 4; ++k)
          if (inside(ring[k])) {
            centroid += corner_position(ring[k]);
            ++count;
          }
        segments.push_back({edge_between(edges, ring[crossing[0]], ring[(crossing[0] + 1) % 4]),
                            edge_between(edges, ring[crossing[1]], ring[(crossing[1] + 1) % 4]),
                            centroid / count});
      } else if (n_cross == 4) {
        for (int k = 0; k < 4; ++k) {
          if (!inside(ring[k])) continue;
          const int prev = ring[(k + 3) % 4], next_c = ring[(k + 1) % 4];
          segments.push_back(
              {edge_between(edges, prev, ring[k]), edge_between(edges, ring[k], next_c), corner_position(ring[k])});
        }
      }

      for (const Segment& s : segments) {
        const Vec3d pa = edge_midpoint(edges, s.a), pb = edge_midpoint(edges, s.b);
        // Negative side on the left when viewed from outside the cube.
        const bool forward = normal.cross(pb - pa).dot(s.inside_centroid - 0.5 * (pa + pb)) > 0.0;
        const int from = forward ? s.a : s.b, to = forward ? s.b : s.a;
        if (next[from] != -1) throw std::logic_error("inconsistent cube loop");
        next[from] = to;
      }
    }
  }

  TriangleRow row;
  row.fill(-1);
  int out = 0;
  std::array<bool, 12> seen{};
  for (int start = 0; start < 12; ++start) {
    if (next[start] == -1 || seen[start]) continue;
    std::vector<int> loop;
    for (int e = start; !seen[e]; e = next[e]) {
      seen[e] = true;
      loop.push_back(e);
    }
    // The left-hand traversal winds toward the negative side; reverse it.
    std::vector<std::array<int, 3>> tris;
    if (!triangulate(edges, loop, 0, static_cast<int>(loop.size()) - 1, tris))
      throw std::logic_error("cube loop has no face-free triangulation");
    for (const auto& t : tris) {
      row[out++] = loop[t[0]];
      row[out++] = loop[t[2]];
      row[out++] = loop[t[1]];
    }
  }
  return row;
}

}  // namespace

const std::array<std::array<int, 2>, 12>& edge_corners() {
  static const auto edges = make_edges();
  return edges;
}

const std::array<TriangleRow, 256>& triangle_table() {
  static const auto table = [] {
    std::array<TriangleRow, 256> t;
    for (int mask = 0; mask < 256; ++mask) t[mask] = build_row(edge_corners(), mask);
    return t;
  }();
  return table;
}

}  // namespace mc

namespace {

struct EdgeKey {
  int x, y, z, axis;
  bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& k) const {
    return BlockHash::hash(BlockCoord(k.x, k.y, k.z)) * 3u + static_cast<std::size_t>(k.axis);
  }
};

struct Sample {
  float sdf = 0.0f;
  Eigen::Vector3f color = Eigen::Vector3f::Zero();
  bool valid = false;
};

struct BlockMesh {
  std::vector<EdgeKey> keys;
  std::vector<Eigen::Vector3f> positions;
  std::vector<Eigen::Vector3f> colors;
  std::vector<std::array<int, 3>> triangles;  // indices into keys
};

constexpr int kSpan = kBlockSide + 1;

BlockMesh mesh_block(const TsdfVolume& volume, const BlockCoord& coord) {
  // Samples of this block plus one layer from the +x/+y/+z neighbors.
  std::vector<Sample> grid(kSpan * kSpan * kSpan);
  const auto at = [&](int x, int y, int z) -> Sample& { return grid[(z * kSpan + y) * kSpan + x]; };
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const VoxelBlock* b = volume.block(coord + BlockCoord(dx, dy, dz));
        if (!b) continue;
        const int z0 = dz * kBlockSide, y0 = dy * kBlockSide, x0 = dx * kBlockSide;
        for (int z = z0; z < std::min(kSpan, z0 + kBlockSide); ++z)
          for (int y = y0; y < std::min(kSpan, y0 + kBlockSide); ++y)
            for (int x = x0; x < std::min(kSpan, x0 + kBlockSide); ++x) {
              const Voxel& v = b->voxels[VoxelBlock::index(x - x0, y - y0, z - z0)];
              if (v.weight <= 0.0) continue;
              Sample& s = at(x, y, z);
              s.valid = true;
              s.sdf = static_cast<float>(v.sdf());
              const float inv = static_cast<float>(1.0 / v.weight);
              s.color = Eigen::Vector3f(v.color_sum[0], v.color_sum[1], v.color_sum[2]) * inv;
            }
      }

  const auto& edges = mc::edge_corners();
  const auto& table = mc::triangle_table();
  const float vs = static_cast<float>(volume.voxel_size());
  const VoxelCoord origin = coord * kBlockSide;

  BlockMesh out;
  std::unordered_map<EdgeKey, int, EdgeKeyHash> local;
  for (int z = 0; z < kBlockSide; ++z)
    for (int y = 0; y < kBlockSide; ++y)
      for (int x = 0; x < kBlockSide; ++x) {
        std::array<const Sample*, 8> corner;
        int mask = 0;
        bool complete = true;
        for (int c = 0; c < 8 && complete; ++c) {
          corner[c] = &at(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
          complete = corner[c]->valid;
          if (complete && corner[c]->sdf < 0.0f) mask |= 1 << c;
        }
        if (!complete || mask == 0 || mask == 255) continue;

        const auto& row = table[mask];
        std::array<int, 12> vertex;
        vertex.fill(-1);
        for (int k = 0; k < 16 && row[k] >= 0; ++k) {
          const int e = row[k];
          if (vertex[e] >= 0) continue;
          const int a = edges[e][0], b = edges[e][1];
          const int axis = (a ^ b) == 1 ? 0 : (a ^ b) == 2 ? 1 : 2;
          const EdgeKey key{origin.x() + x + (a & 1), origin.y() + y + ((a >> 1) & 1),
                            origin.z() + z + ((a >> 2) & 1), axis};
          auto [it, inserted] = local.try_emplace(key, static_cast<int>(out.keys.size()));
          if (inserted) {
            const Sample& sa = *corner[a];
            const Sample& sb = *corner[b];
            const float t = sa.sdf / (sa.sdf - sb.sdf);
            Eigen::Vector3f p = (Eigen::Vector3f(float(key.x), float(key.y), float(key.z)) +
                                 Eigen::Vector3f::Constant(0.5f)) * vs;
            p[axis] += t * vs;
            out.keys.push_back(key);
            out.positions.push_back(p);
            out.colors.push_back(sa.color + t * (sb.color - sa.color));
          }
          vertex[e] = it->second;
        }
        for (int k = 0; k < 16 && row[k] >= 0; k += 3)
          out.triangles.push_back({vertex[row[k]], vertex[row[k + 1]], vertex[row[k + 2]]});
      }
  return out;
}

std::uint8_t to_byte(float c) { return static_cast<std::uint8_t>(std::clamp(std::lround(c), 0L, 255L)); }

}  // namespace

Mesh extract_mesh(const TsdfVolume& volume, Execution exec) {
  const std::vector<BlockCoord> coords = volume.block_coords();
  std::vector<BlockMesh> parts(coords.size());
  for_each_index(exec, static_cast<std::ptrdiff_t>(coords.size()),
                 [&](std::ptrdiff_t b) { parts[b] = mesh_block(volume, coords[b]); });

  Mesh mesh;
  std::unordered_map<EdgeKey, int, EdgeKeyHash> global;
  for (const BlockMesh& part : parts) {
    std::vector<int> remap(part.keys.size());
    for (std::size_t v = 0; v < part.keys.size(); ++v) {
      auto [it, inserted] = global.try_emplace(part.keys[v], static_cast<int>(mesh.vertices.size()));
      if (inserted) {
        mesh.vertices.push_back(part.positions[v]);
        const Eigen::Vector3f& c = part.colors[v];
        mesh.colors.push_back({to_byte(c[0]), to_byte(c[1]), to_byte(c[2])});
      }
      remap[v] = it->second;
    }
    for (const auto& t : part.triangles) mesh.triangles.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
  }
  return mesh;
}

}  // namespace gcf
