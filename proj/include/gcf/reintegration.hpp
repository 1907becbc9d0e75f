#pragma once

#include "gcf/frame.hpp"
#include "gcf/geometry.hpp"
#include "gcf/parallel.hpp"
#include "gcf/tsdf.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace gcf {

// Intrinsic Z-Y-X angles (yaw, pitch, roll) with R = Rz(yaw) Ry(pitch) Rx(roll).
// Pitch lies in [-pi/2, pi/2]; at gimbal lock roll is reported as 0.
Vec3d euler_zyx(const Mat3d& r);
Mat3d from_euler_zyx(const Vec3d& yaw_pitch_roll);

// Distance between the 6-vectors (yaw, pitch, roll, x, y, z) of the two poses
// after scaling the angles by 2.
double transform_distance(const RigidTransform& integrated, const RigidTransform& optimized);

struct FrameState {
  int frame = 0;
  std::optional<RigidTransform> integrated_pose;  // set iff the frame is in the volume
  std::optional<RigidTransform> optimized_pose;
  bool invalid = false;  // never integrated while set

  bool integrated() const { return integrated_pose.has_value(); }
  // Staleness key: +inf for valid frames not yet in the volume, 0 without an
  // optimized pose.
  double staleness() const;
};

struct ReintegrationReport {
  std::vector<int> moved;    // re-integrated at their optimized pose
  std::vector<int> removed;  // de-integrated after invalidation
  double max_distance_before = 0.0;  // over integrated frames with an optimized pose
  double max_distance_after = 0.0;
};

// Keeps a volume consistent with evolving pose estimates by moving the
// stalest frames each step.
class ReintegrationManager {
 public:
  using FrameSource = std::function<RgbdFrame(int frame)>;

  ReintegrationManager(TsdfVolume& volume, Intrinsics intrinsics, FrameSource source, int n_fix = 10,
                       Execution exec = Execution::Serial);

  // Registers frame ids consecutively from 0 and integrates at the initial
  // pose when one is given. loaded, when set, is the frame's data.
  void add_frame(int frame, const std::optional<RigidTransform>& initial_pose, const RgbdFrame* loaded = nullptr);
  void set_optimized(int frame, const RigidTransform& pose);
  void invalidate(int frame);

  // De-integrates invalidated frames, then moves the n_fix frames with the
  // largest positive staleness (lower frame id first on ties).
  ReintegrationReport step();
  // The frames step() would move next, in order.
  std::vector<int> stale_order() const;
  // Steps until no frame is stale; returns the number of steps taken.
  int flush();

  const std::vector<FrameState>& states() const { return states_; }
  int n_fix() const { return n_fix_; }

 private:
  TsdfVolume& volume_;
  Intrinsics intrinsics_;
  FrameSource source_;
  int n_fix_;
  Execution exec_;
  std::vector<FrameState> states_;
};

}  // namespace gcf
