#include "gcf/reintegration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gcf {

Vec3d euler_zyx(const Mat3d& r) {
  const double sp = std::clamp(-r(2, 0), -1.0, 1.0);
  const double pitch = std::asin(sp);
  if (std::abs(sp) > 1.0 - 1e-12) return {std::atan2(-r(0, 1), r(1, 1)), pitch, 0.0};
  return {std::atan2(r(1, 0), r(0, 0)), pitch, std::atan2(r(2, 1), r(2, 2))};
}

Mat3d from_euler_zyx(const Vec3d& ypr) {
  return (Eigen::AngleAxisd(ypr[0], Vec3d::UnitZ()) * Eigen::AngleAxisd(ypr[1], Vec3d::UnitY()) *
          Eigen::AngleAxisd(ypr[2], Vec3d::UnitX()))
      .toRotationMatrix();
}

double transform_distance(const RigidTransform& integrated, const RigidTransform& optimized) {
  Vec6d d;
  d << 2.0 * (euler_zyx(integrated.rotation) - euler_zyx(optimized.rotation)),
      integrated.translation - optimized.translation;
  return d.norm();
}

double FrameState::staleness() const {
  if (invalid || !optimized_pose) return 0.0;
  if (!integrated_pose) return std::numeric_limits<double>::infinity();
  return transform_distance(*integrated_pose, *optimized_pose);
}

ReintegrationManager::ReintegrationManager(TsdfVolume& volume, Intrinsics intrinsics, FrameSource source, int n_fix,
                                           Execution exec)
    : volume_(volume), intrinsics_(intrinsics), source_(std::move(source)), n_fix_(n_fix), exec_(exec) {
  if (n_fix_ < 1) throw std::invalid_argument("n_fix must be positive");
}

void ReintegrationManager::add_frame(int frame, const std::optional<RigidTransform>& initial_pose,
                                     const RgbdFrame* loaded) {
  if (frame != static_cast<int>(states_.size())) throw std::invalid_argument("frames must be added in order");
  FrameState s;
  s.frame = frame;
  if (initial_pose) {
    if (loaded)
      volume_.integrate(*loaded, intrinsics_, *initial_pose, exec_);
    else
      volume_.integrate(source_(frame), intrinsics_, *initial_pose, exec_);
    s.integrated_pose = initial_pose;
  }
  states_.push_back(std::move(s));
}

void ReintegrationManager::set_optimized(int frame, const RigidTransform& pose) {
  FrameState& s = states_.at(frame);
  s.optimized_pose = pose;
  s.invalid = false;
}

void ReintegrationManager::invalidate(int frame) {
  FrameState& s = states_.at(frame);
  s.invalid = true;
  s.optimized_pose.reset();
}

std::vector<int> ReintegrationManager::stale_order() const {
  std::vector<double> key(states_.size());
  for_each_index(exec_, static_cast<std::ptrdiff_t>(states_.size()),
                 [&](std::ptrdiff_t f) { key[f] = states_[f].staleness(); });
  std::vector<int> order;
  for (std::size_t f = 0; f < states_.size(); ++f)
    if (key[f] > 0.0) order.push_back(static_cast<int>(f));
  const std::size_t take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(n_fix_));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), [&](int a, int b) {
    return key[a] != key[b] ? key[a] > key[b] : a < b;
  });
  order.resize(take);
  return order;
}

ReintegrationReport ReintegrationManager::step() {
  ReintegrationReport report;
  const auto max_distance = [&] {
    double m = 0.0;
    for (const FrameState& s : states_)
      if (s.integrated() && s.optimized_pose) m = std::max(m, s.staleness());
    return m;
  };
  report.max_distance_before = max_distance();

  for (FrameState& s : states_) {
    if (!s.invalid || !s.integrated()) continue;
    volume_.deintegrate(source_(s.frame), intrinsics_, *s.integrated_pose, exec_);
    s.integrated_pose.reset();
    report.removed.push_back(s.frame);
  }

  for (int f : stale_order()) {
    FrameState& s = states_[f];
    const RgbdFrame frame = source_(f);
    if (s.integrated()) volume_.deintegrate(frame, intrinsics_, *s.integrated_pose, exec_);
    volume_.integrate(frame, intrinsics_, *s.optimized_pose, exec_);
    s.integrated_pose = s.optimized_pose;
    report.moved.push_back(f);
  }

  report.max_distance_after = max_distance();
  return report;
}

int ReintegrationManager::flush() {
  int steps = 0;
  while (true) {
    const bool pending_removal = std::any_of(states_.begin(), states_.end(),
                                             [](const FrameState& s) { return s.invalid && s.integrated(); });
    if (!pending_removal && stale_order().empty()) return steps;
    step();
    ++steps;
  }
}

}  // namespace gcf
