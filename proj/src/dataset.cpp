#include "gcf/dataset.hpp"

#include "gcf/image_io.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace gcf {
namespace {

std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open " + path.string());
  return is;
}

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

[[noreturn]] void malformed(const std::filesystem::path& path, int line_no, const std::string& what) {
  throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::vector<TimedPose> read_tum_trajectory(const std::filesystem::path& path) {
  std::ifstream is = open_text(path);
  std::vector<TimedPose> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v)
      if (!(ls >> x)) malformed(path, line_no, "expected 8 numbers");
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 1e-9) || !std::isfinite(q.norm())) malformed(path, line_no, "degenerate quaternion");
    q.normalize();
    out.push_back({v[0], {q.toRotationMatrix(), Vec3d(v[1], v[2], v[3])}});
  }
  return out;
}

void write_tum_trajectory(const std::filesystem::path& path, const std::vector<TimedPose>& poses) {
  std::ofstream os(path);
  if (!os) throw DatasetError("cannot write " + path.string());
  os << std::fixed;
  for (const TimedPose& p : poses) {
    Eigen::Quaterniond q(p.pose.rotation);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3d& t = p.pose.translation;
    os << std::setprecision(6) << p.timestamp << std::setprecision(9) << ' ' << t.x() << ' ' << t.y() << ' '
       << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
  if (!os) throw DatasetError("failed writing " + path.string());
}

std::vector<TimedFile> read_file_list(const std::filesystem::path& path) {
  std::ifstream is = open_text(path);
  std::vector<TimedFile> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    std::istringstream ls(line);
    TimedFile f;
    if (!(ls >> f.timestamp >> f.file)) malformed(path, line_no, "expected \"timestamp filename\"");
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<Association> associate_timestamps(const std::vector<double>& a, const std::vector<double>& b,
                                              double max_difference) {
  struct Candidate {
    double diff;
    int a, b;
  };
  std::vector<int> order_b(b.size());
  std::iota(order_b.begin(), order_b.end(), 0);
  std::sort(order_b.begin(), order_b.end(), [&](int x, int y) { return b[x] != b[y] ? b[x] < b[y] : x < y; });
  std::vector<double> sorted_b(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) sorted_b[k] = b[order_b[k]];

  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto it = std::lower_bound(sorted_b.begin(), sorted_b.end(), a[i] - max_difference);
    for (; it != sorted_b.end() && *it <= a[i] + max_difference; ++it) {
      const double d = std::abs(*it - a[i]);
      if (d < max_difference)
        candidates.push_back({d, static_cast<int>(i), order_b[static_cast<std::size_t>(it - sorted_b.begin())]});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    if (x.diff != y.diff) return x.diff < y.diff;
    return x.a != y.a ? x.a < y.a : x.b < y.b;
  });
  std::vector<char> used_a(a.size(), 0), used_b(b.size(), 0);
  std::vector<Association> out;
  for (const Candidate& c : candidates) {
    if (used_a[c.a] || used_b[c.b]) continue;
    used_a[c.a] = used_b[c.b] = 1;
    out.push_back({c.a, c.b});
  }
  std::sort(out.begin(), out.end(), [](const Association& x, const Association& y) { return x.a < y.a; });
  return out;
}

RgbdFrame TumSequence::frame(int i) const {
  const Entry& e = entries_.at(i);
  RgbdFrame f;
  f.index = i;
  f.timestamp = e.timestamp;
  f.depth = read_depth_png(e.depth, depth_scale_);
  f.color = read_png_rgb(e.color);
  if (f.color.width != f.depth.width || f.color.height != f.depth.height)
    throw DatasetError("color and depth sizes differ for " + e.depth.string());
  return f;
}

TumSequence load_tum(const std::filesystem::path& root, const TumOptions& options) {
  const std::vector<TimedFile> depth = read_file_list(root / "depth.txt");
  const std::vector<TimedFile> color = read_file_list(root / "rgb.txt");
  std::vector<double> td, tc;
  for (const auto& d : depth) td.push_back(d.timestamp);
  for (const auto& c : color) tc.push_back(c.timestamp);
  const std::vector<Association> pairs = associate_timestamps(td, tc, options.max_difference);

  TumSequence seq;
  seq.depth_scale_ = options.depth_scale;
  seq.dropped_depth_ = static_cast<int>(depth.size() - pairs.size());
  seq.dropped_color_ = static_cast<int>(color.size() - pairs.size());
  for (const Association& p : pairs) {
    TumSequence::Entry e{depth[p.a].timestamp, root / color[p.b].file, root / depth[p.a].file};
    if (!std::filesystem::exists(e.depth)) throw DatasetError("missing file " + e.depth.string());
    if (!std::filesystem::exists(e.color)) throw DatasetError("missing file " + e.color.string());
    seq.entries_.push_back(std::move(e));
  }

  if (options.intrinsics) {
    seq.intrinsics_ = *options.intrinsics;
  } else {
    const auto calib = root / "calibration.txt";
    if (std::filesystem::exists(calib)) {
      std::ifstream is = open_text(calib);
      std::string line;
      int line_no = 0;
      while (std::getline(is, line)) {
        ++line_no;
        if (skip_line(line)) continue;
        std::istringstream ls(line);
        Intrinsics& k = seq.intrinsics_;
        if (!(ls >> k.fx >> k.fy >> k.cx >> k.cy)) malformed(calib, line_no, "expected \"fx fy cx cy [width height]\"");
        int w = 0, h = 0;
        if (ls >> w >> h) {
          k.width = w;
          k.height = h;
        }
        break;
      }
    }
    if (!seq.entries_.empty()) {
      const Image<std::uint16_t> first = read_png16(seq.entries_.front().depth);
      seq.intrinsics_.width = first.width;
      seq.intrinsics_.height = first.height;
    }
  }

  const auto gt_path = root / "groundtruth.txt";
  if (std::filesystem::exists(gt_path)) {
    const std::vector<TimedPose> gt = read_tum_trajectory(gt_path);
    std::vector<double> tf, tg;
    for (const auto& e : seq.entries_) tf.push_back(e.timestamp);
    for (const auto& g : gt) tg.push_back(g.timestamp);
    const std::vector<Association> matched = associate_timestamps(tf, tg, options.max_difference);
    seq.missing_ground_truth_ = static_cast<int>(seq.entries_.size() - matched.size());
    if (seq.missing_ground_truth_ == 0) {
      std::vector<RigidTransform> poses(seq.entries_.size());
      for (const Association& m : matched) poses[m.a] = gt[m.b].pose;
      seq.ground_truth_ = std::move(poses);
    }
  }
  return seq;
}

void write_tum(const std::filesystem::path& root, const Sequence& sequence, double depth_scale) {
  std::filesystem::create_directories(root / "rgb");
  std::filesystem::create_directories(root / "depth");
  std::ofstream rgb(root / "rgb.txt"), dep(root / "depth.txt");
  if (!rgb || !dep) throw DatasetError("cannot write lists in " + root.string());
  rgb << "# color images\n" << std::fixed << std::setprecision(6);
  dep << "# depth images\n" << std::fixed << std::setprecision(6);
  std::vector<TimedPose> gt_out;
  const auto gt = sequence.ground_truth();
  for (int i = 0; i < sequence.size(); ++i) {
    const RgbdFrame f = sequence.frame(i);
    std::ostringstream name;
    name << std::fixed << std::setprecision(6) << sequence.timestamp(i) << ".png";
    write_png_rgb(root / "rgb" / name.str(), f.color);
    write_depth_png(root / "depth" / name.str(), f.depth, depth_scale);
    rgb << sequence.timestamp(i) << " rgb/" << name.str() << '\n';
    dep << sequence.timestamp(i) << " depth/" << name.str() << '\n';
    if (gt) gt_out.push_back({sequence.timestamp(i), (*gt)[i]});
  }
  if (gt) write_tum_trajectory(root / "groundtruth.txt", gt_out);
  std::ofstream calib(root / "calibration.txt");
  const Intrinsics& k = sequence.intrinsics();
  calib << std::setprecision(10) << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' '
        << k.height << '\n';
}

}  // namespace gcf
