#ifndef DISPTRACK_INGEST_HPP_
#define DISPTRACK_INGEST_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "disptrack/geom.hpp"
#include "disptrack/kv_config.hpp"

namespace disptrack {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FrameLabel {
  int frame_index = 0;
  std::vector<Box3D> boxes;
};

struct Frame {
  PointCloud cloud;
  FrameLabel label;
};

struct Sequence {
  std::string name;
  double frame_period = 0.1;  // seconds
  std::vector<Frame> frames;

  /// Frame indices strictly increasing, track ids unique per frame.
  void validate() const;
  std::vector<FrameLabel> labels() const;
};

// ---------------------------------------------------------------------------
// KITTI tracking labels
//
//   frame track_id type truncated occluded alpha x1 y1 x2 y2 h w l x y z ry [score]
//
// Coordinates are kept as written; size is stored as (l, w, h).
// ---------------------------------------------------------------------------

struct LabelParseResult {
  std::vector<FrameLabel> frames;  // ascending frame_index, only frames with boxes
  int skipped_unknown = 0;
};

/// Maps a KITTI type string to a class id; nullopt for unknown types.
std::optional<int> kitti_class_id(std::string_view type);
std::string kitti_type_name(int class_id);

LabelParseResult parse_kitti_labels(std::string_view text);
std::string serialize_kitti_labels(std::span<const FrameLabel> frames);

// Velodyne scans: little-endian float32 (x, y, z, intensity) per point.
PointCloud read_point_cloud(std::span<const std::byte> bytes);
std::vector<std::byte> write_point_cloud(const PointCloud& cloud);

/// Keeps points with z > z_threshold in their original order.
PointCloud remove_ground(const PointCloud& cloud, double z_threshold = -1.4);

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

struct SceneConfig {
  int frames = 50;
  int objects = 5;
  double velocity_min = 0.0;  // m/frame
  double velocity_max = 1.0;  // m/frame
  int points_per_object = 200;
  int background_points = 800;
  int ground_points = 400;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
  double lane_spacing = 20.0;
  double area_half_extent = 40.0;
  Vec3 size_min{3.6, 1.5, 1.4};
  Vec3 size_max{4.4, 1.8, 1.7};
  double ground_z = -1.73;
  // Per-frame chance that an object re-draws its speed.
  double speed_change_probability = 0.0;
  double frame_period = 0.1;
  // Optional per-object velocities overriding the random draw.
  std::vector<Vec3> velocities;

  void validate() const;
  static SceneConfig from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
};

Sequence synthesize_sequence(const SceneConfig& config, std::uint64_t seed);

enum class DisplacementMode { kFixed, kUniformRandom };

struct AugmentationOptions {
  double magnitude = 0.0;
  DisplacementMode mode = DisplacementMode::kFixed;
  // Independent shift per object (default) or one shared ego-like shift.
  bool per_object = true;
};

/// Adds an accumulating horizontal shift to every labelled object (its points
/// and its box) from frame to frame. Background points are untouched.
Sequence apply_displacement_augmentation(const Sequence& seq,
                                         const AugmentationOptions& options,
                                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Sequence directories
//
//   <dir>/sequence.cfg          name and frame_period
//   <dir>/labels.txt            KITTI tracking labels
//   <dir>/velodyne/NNNNNN.bin   one scan per frame, named by frame index
//
// Scans are stored as float32, so coordinates round-trip to float precision.
// ---------------------------------------------------------------------------

class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::filesystem::path& path);
std::vector<std::byte> read_binary_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file(const std::filesystem::path& path, std::string_view text);

void write_sequence_dir(const Sequence& seq, const std::filesystem::path& dir);
Sequence read_sequence_dir(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Training targets
// ---------------------------------------------------------------------------

struct TrainingTargets {
  std::vector<bool> foreground;
  // Foreground points whose track vanishes in the next frame; zero target,
  // left out of the loss.
  std::vector<bool> excluded;
  std::vector<Vec3> displacement;
  std::vector<std::optional<BoxEncoding>> box_targets;
};

TrainingTargets label_targets(const PointCloud& cloud_prev,
                              const FrameLabel& labels_prev,
                              const FrameLabel& labels_curr,
                              const BoxCodec& codec = BoxCodec{});

}  // namespace disptrack

#endif  // DISPTRACK_INGEST_HPP_
