#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "disptrack/ingest.hpp"

namespace disptrack {
namespace {

constexpr std::array<std::string_view, 8> kKittiTypes = {
    "Car", "Van", "Truck", "Pedestrian", "Person_sitting", "Cyclist", "Tram", "Misc"};

double to_double(const std::string& tok, int line, const char* field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, std::string("bad ") + field + " '" + tok + "'");
  }
}

int to_int(const std::string& tok, int line, const char* field) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, std::string("bad ") + field + " '" + tok + "'");
  }
}

}  // namespace

void Sequence::validate() const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameLabel& label = frames[i].label;
    if (label.frame_index < 0) {
      throw std::invalid_argument("Sequence: negative frame index");
    }
    if (i > 0 && label.frame_index <= frames[i - 1].label.frame_index) {
      throw std::invalid_argument("Sequence: frame indices must increase");
    }
    std::set<int> ids;
    for (const Box3D& box : label.boxes) {
      if (!box.track_id) {
        throw std::invalid_argument("Sequence: label box without track id");
      }
      if (!ids.insert(*box.track_id).second) {
        throw std::invalid_argument("Sequence: duplicate track id " +
                                    std::to_string(*box.track_id) + " in frame " +
                                    std::to_string(label.frame_index));
      }
    }
    frames[i].cloud.validate();
  }
}

std::vector<FrameLabel> Sequence::labels() const {
  std::vector<FrameLabel> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) out.push_back(f.label);
  return out;
}

std::optional<int> kitti_class_id(std::string_view type) {
  for (std::size_t i = 0; i < kKittiTypes.size(); ++i) {
    if (kKittiTypes[i] == type) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::string kitti_type_name(int class_id) {
  if (class_id < 0 || class_id >= static_cast<int>(kKittiTypes.size())) {
    return "Misc";
  }
  return std::string(kKittiTypes[static_cast<std::size_t>(class_id)]);
}

LabelParseResult parse_kitti_labels(std::string_view text) {
  LabelParseResult result;
  std::map<int, FrameLabel> by_frame;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 17 && tok.size() != 18) {
      throw ParseError(line_no, "expected 17 or 18 fields, got " +
                                    std::to_string(tok.size()));
    }
    const int frame = to_int(tok[0], line_no, "frame");
    const int track = to_int(tok[1], line_no, "track_id");
    if (frame < 0) throw ParseError(line_no, "negative frame index");
    // Numeric fields are checked even on lines that end up skipped.
    for (std::size_t i = 3; i < tok.size(); ++i) to_double(tok[i], line_no, "value");
    if (tok[2] == "DontCare") continue;
    const auto cls = kitti_class_id(tok[2]);
    if (!cls) {
      ++result.skipped_unknown;
      continue;
    }
    Box3D box;
    const double h = to_double(tok[10], line_no, "h");
    const double w = to_double(tok[11], line_no, "w");
    const double l = to_double(tok[12], line_no, "l");
    box.size = Vec3(l, w, h);
    box.center = Vec3(to_double(tok[13], line_no, "x"), to_double(tok[14], line_no, "y"),
                      to_double(tok[15], line_no, "z"));
    box.yaw = wrap_angle(to_double(tok[16], line_no, "rotation_y"));
    box.class_id = *cls;
    box.track_id = track;
    if (tok.size() == 18) {
      const double s = to_double(tok[17], line_no, "score");
      box.score = std::clamp(s, 0.0, 1.0);
    }
    if (!(box.size.array() > 0.0).all()) {
      throw ParseError(line_no, "box dimensions must be positive");
    }
    FrameLabel& fl = by_frame[frame];
    fl.frame_index = frame;
    fl.boxes.push_back(box);
  }
  for (auto& [frame, label] : by_frame) result.frames.push_back(std::move(label));
  return result;
}

std::string serialize_kitti_labels(std::span<const FrameLabel> frames) {
  std::string out;
  for (const FrameLabel& fl : frames) {
    for (const Box3D& b : fl.boxes) {
      out += std::to_string(fl.frame_index);
      out += ' ';
      out += std::to_string(b.track_id.value_or(-1));
      out += ' ';
      out += kitti_type_name(b.class_id);
      out += " 0 0 -10 0 0 0 0 ";
      out += format_double(b.size.z()) + ' ' + format_double(b.size.y()) + ' ' +
             format_double(b.size.x()) + ' ';
      out += format_double(b.center.x()) + ' ' + format_double(b.center.y()) + ' ' +
             format_double(b.center.z()) + ' ';
      out += format_double(b.yaw);
      if (b.score) out += ' ' + format_double(*b.score);
      out += '\n';
    }
  }
  return out;
}

PointCloud read_point_cloud(std::span<const std::byte> bytes) {
  if (bytes.size() % 16 != 0) {
    throw FormatError("point cloud byte length " + std::to_string(bytes.size()) +
                      " is not a multiple of 16");
  }
  const std::size_t n = bytes.size() / 16;
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.intensity.reserve(n);
  auto read_f32 = [&](std::size_t offset) {
    std::uint32_t raw = 0;
    for (int b = 3; b >= 0; --b) {
      raw = (raw << 8) | std::to_integer<std::uint32_t>(bytes[offset + static_cast<std::size_t>(b)]);
    }
    return static_cast<double>(std::bit_cast<float>(raw));
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t o = 16 * i;
    cloud.points.emplace_back(read_f32(o), read_f32(o + 4), read_f32(o + 8));
    cloud.intensity.push_back(read_f32(o + 12));
  }
  cloud.validate();
  return cloud;
}

std::vector<std::byte> write_point_cloud(const PointCloud& cloud) {
  std::vector<std::byte> out(16 * cloud.size());
  auto write_f32 = [&](std::size_t offset, double value) {
    const auto raw = std::bit_cast<std::uint32_t>(static_cast<float>(value));
    for (std::size_t b = 0; b < 4; ++b) {
      out[offset + b] = static_cast<std::byte>((raw >> (8 * b)) & 0xffu);
    }
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const std::size_t o = 16 * i;
    write_f32(o, cloud.points[i].x());
    write_f32(o + 4, cloud.points[i].y());
    write_f32(o + 8, cloud.points[i].z());
    write_f32(o + 12, cloud.has_intensity() ? cloud.intensity[i] : 0.0);
  }
  return out;
}

PointCloud remove_ground(const PointCloud& cloud, double z_threshold) {
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.points[i].z() > z_threshold) {
      out.points.push_back(cloud.points[i]);
      if (cloud.has_intensity()) out.intensity.push_back(cloud.intensity[i]);
    }
  }
  return out;
}

}  // namespace disptrack
