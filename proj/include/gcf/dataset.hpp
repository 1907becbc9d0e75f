#pragma once

#include "gcf/frame.hpp"
#include "gcf/geometry.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcf {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Random-access RGB-D sequence. frame(i) is deterministic, so frames can be
// dropped from memory and fetched again.
class Sequence {
 public:
  virtual ~Sequence() = default;
  virtual int size() const = 0;
  virtual double timestamp(int i) const = 0;
  virtual RgbdFrame frame(int i) const = 0;
  virtual const Intrinsics& intrinsics() const = 0;
  // Camera-to-world pose per frame when known.
  virtual std::optional<std::vector<RigidTransform>> ground_truth() const { return std::nullopt; }
};

struct TimedPose {
  double timestamp = 0.0;
  RigidTransform pose;
};

// "timestamp tx ty tz qx qy qz qw" per line; '#' starts a comment line.
std::vector<TimedPose> read_tum_trajectory(const std::filesystem::path& path);
void write_tum_trajectory(const std::filesystem::path& path, const std::vector<TimedPose>& poses);

struct TimedFile {
  double timestamp = 0.0;
  std::string file;  // relative to the dataset root
};

// "timestamp filename" lists as used by rgb.txt and depth.txt.
std::vector<TimedFile> read_file_list(const std::filesystem::path& path);

struct Association {
  int a = 0;  // index into the first list
  int b = 0;
};

// Unique pairs with |t_a - t_b| < max_difference, chosen greedily by
// ascending difference and returned in order of a.
std::vector<Association> associate_timestamps(const std::vector<double>& a, const std::vector<double>& b,
                                              double max_difference);

struct TumOptions {
  double depth_scale = 5000.0;      // raw PNG units per meter
  double max_difference = 0.02;     // s, color/depth and ground-truth association
  // Overrides the calibration file. Without either, the default 640x480
  // intrinsics apply with width and height taken from the first depth image.
  std::optional<Intrinsics> intrinsics;
};

// TUM RGB-D layout: rgb.txt and depth.txt lists plus images, an optional
// groundtruth.txt and an optional calibration.txt holding "fx fy cx cy".
class TumSequence final : public Sequence {
 public:
  int size() const override { return static_cast<int>(entries_.size()); }
  double timestamp(int i) const override { return entries_[i].timestamp; }
  RgbdFrame frame(int i) const override;
  const Intrinsics& intrinsics() const override { return intrinsics_; }
  std::optional<std::vector<RigidTransform>> ground_truth() const override { return ground_truth_; }

  struct Entry {
    double timestamp = 0.0;  // depth timestamp
    std::filesystem::path color;
    std::filesystem::path depth;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  int dropped_depth() const { return dropped_depth_; }
  int dropped_color() const { return dropped_color_; }
  int missing_ground_truth() const { return missing_ground_truth_; }

 private:
  friend TumSequence load_tum(const std::filesystem::path& root, const TumOptions& options);

  std::vector<Entry> entries_;
  Intrinsics intrinsics_;
  double depth_scale_ = 5000.0;
  int dropped_depth_ = 0;
  int dropped_color_ = 0;
  int missing_ground_truth_ = 0;
  std::optional<std::vector<RigidTransform>> ground_truth_;  // only when every frame has one
};

TumSequence load_tum(const std::filesystem::path& root, const TumOptions& options = {});

// Writes a sequence in the TUM layout, including groundtruth.txt when the
// sequence has ground truth and calibration.txt always.
void write_tum(const std::filesystem::path& root, const Sequence& sequence, double depth_scale = 5000.0);

}  // namespace gcf
