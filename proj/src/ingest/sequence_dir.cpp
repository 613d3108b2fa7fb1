#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>

#include "disptrack/ingest.hpp"

namespace disptrack {

namespace fs = std::filesystem;

std::vector<std::byte> read_binary_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [](char c) { return std::byte(c); });
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Written next to the target and renamed into place, so readers never see a
// partial file.
void write_file(const fs::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FileError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_file(const fs::path& path, std::string_view text) {
  write_file(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

void write_sequence_dir(const Sequence& seq, const fs::path& dir) {
  seq.validate();
  KeyValueConfig meta;
  meta.set("name", seq.name);
  meta.set("frame_period", format_double(seq.frame_period));
  write_file(dir / "sequence.cfg", meta.to_text());
  write_file(dir / "labels.txt", serialize_kitti_labels(seq.labels()));
  char name[32];
  for (const Frame& f : seq.frames) {
    std::snprintf(name, sizeof(name), "%06d.bin", f.label.frame_index);
    write_file(dir / "velodyne" / name, write_point_cloud(f.cloud));
  }
}

Sequence read_sequence_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FileError("no sequence directory " + dir.string());
  Sequence seq;
  seq.name = dir.filename().string();
  if (fs::exists(dir / "sequence.cfg")) {
    const KeyValueConfig meta = KeyValueConfig::parse(read_text_file(dir / "sequence.cfg"));
    meta.require_known({"name", "frame_period"});
    seq.name = meta.get_string("name", seq.name);
    seq.frame_period = meta.get_double("frame_period", seq.frame_period);
  }

  const fs::path scans = dir / "velodyne";
  if (!fs::is_directory(scans)) throw FileError("no velodyne directory in " + dir.string());
  std::map<int, fs::path> files;
  for (const auto& entry : fs::directory_iterator(scans)) {
    if (entry.path().extension() != ".bin") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) {
      throw FormatError("scan name is not a frame index: " + entry.path().string());
    }
    files.emplace(std::stoi(stem), entry.path());
  }

  std::map<int, FrameLabel> labels;
  if (fs::exists(dir / "labels.txt")) {
    for (FrameLabel& fl : parse_kitti_labels(read_text_file(dir / "labels.txt")).frames) {
      if (!files.count(fl.frame_index)) {
        throw FormatError("labels for frame " + std::to_string(fl.frame_index) +
                          " have no scan");
      }
      labels[fl.frame_index] = std::move(fl);
    }
  }

  for (const auto& [index, path] : files) {
    Frame frame;
    frame.cloud = read_point_cloud(read_binary_file(path));
    const auto it = labels.find(index);
    if (it != labels.end()) frame.label = std::move(it->second);
    frame.label.frame_index = index;
    seq.frames.push_back(std::move(frame));
  }
  seq.validate();
  return seq;
}

}  // namespace disptrack
