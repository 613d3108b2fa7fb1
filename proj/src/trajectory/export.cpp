#include <algorithm>
#include <sstream>

#include "disptrack/kv_config.hpp"
#include "disptrack/trajectory.hpp"

namespace disptrack {

std::string export_kitti(std::span<const Track> tracks, bool include_virtual) {
  const std::vector<FrameLabel> frames = to_hypotheses(tracks, include_virtual);
  return serialize_kitti_labels(frames);
}

std::string export_csv(std::span<const Track> tracks, bool include_virtual) {
  struct Row {
    int frame;
    int id;
    const TrackEntry* entry;
  };
  std::vector<Row> rows;
  for (const Track& track : tracks) {
    for (const TrackEntry& e : track.history) {
      if (e.is_virtual && !include_virtual) continue;
      rows.push_back({e.frame_index, track.id, &e});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
  });
  std::ostringstream out;
  out << kTrackCsvHeader << "\n";
  for (const Row& r : rows) {
    const Box3D& b = r.entry->box;
    out << r.frame << "," << r.id << "," << b.class_id << "," << format_double(b.center.x())
        << "," << format_double(b.center.y()) << "," << format_double(b.center.z()) << ","
        << format_double(b.size.x()) << "," << format_double(b.size.y()) << ","
        << format_double(b.size.z()) << "," << format_double(b.yaw) << ","
        << (b.score ? format_double(*b.score) : std::string()) << ","
        << (r.entry->is_virtual ? 1 : 0) << "\n";
  }
  return out.str();
}

}  // namespace disptrack
