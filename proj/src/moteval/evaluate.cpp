#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "disptrack/kv_config.hpp"
#include "disptrack/moteval.hpp"

namespace disptrack {
namespace {

constexpr double kGatedCost = 1e3;

void finish_ratios(MotReport& r) {
  if (r.gt_count == 0) throw std::invalid_argument("evaluate: no ground-truth boxes");
  r.mota = 1.0 - static_cast<double>(r.fn + r.fp + r.ids) / static_cast<double>(r.gt_count);
  r.motp = r.matches ? r.iou_sum / static_cast<double>(r.matches) : 0.0;
  const double n = static_cast<double>(std::max<std::size_t>(r.trajectories, 1));
  r.mt = static_cast<double>(r.mostly_tracked) / n;
  r.ml = static_cast<double>(r.mostly_lost) / n;
}

std::map<int, const FrameLabel*> index_frames(std::span<const FrameLabel> frames,
                                              const char* what) {
  std::map<int, const FrameLabel*> out;
  for (const FrameLabel& f : frames) {
    if (!out.emplace(f.frame_index, &f).second) {
      throw std::invalid_argument(std::string("evaluate: duplicate ") + what + " frame " +
                                  std::to_string(f.frame_index));
    }
    std::set<int> ids;
    for (const Box3D& b : f.boxes) {
      if (!b.track_id) throw std::invalid_argument(std::string("evaluate: ") + what +
                                                   " box without track id");
      if (!ids.insert(*b.track_id).second) {
        throw std::invalid_argument(std::string("evaluate: repeated ") + what + " id " +
                                    std::to_string(*b.track_id) + " in frame " +
                                    std::to_string(f.frame_index));
      }
    }
  }
  return out;
}

}  // namespace

MotReport evaluate(std::span<const FrameLabel> gt, std::span<const FrameLabel> hyp,
                   const EvalParams& params) {
  if (!(params.iou_threshold > 0.0 && params.iou_threshold < 1.0)) {
    throw std::invalid_argument("evaluate: iou_threshold must be in (0, 1)");
  }
  const auto gt_frames = index_frames(gt, "ground-truth");
  const auto hyp_frames = index_frames(hyp, "hypothesis");
  std::set<int> frames;
  for (const auto& [f, _] : gt_frames) frames.insert(f);
  for (const auto& [f, _] : hyp_frames) frames.insert(f);

  MotReport report;
  std::map<int, int> last_hyp;                 // gt id -> hyp id of its latest match
  std::map<int, std::vector<bool>> tracked;    // gt id -> matched flag per present frame
  static const FrameLabel kEmpty;

  for (int frame : frames) {
    const FrameLabel& g = gt_frames.count(frame) ? *gt_frames.at(frame) : kEmpty;
    const FrameLabel& h = hyp_frames.count(frame) ? *hyp_frames.at(frame) : kEmpty;
    const std::size_t ng = g.boxes.size();
    const std::size_t nh = h.boxes.size();
    Eigen::MatrixXd iou(static_cast<Eigen::Index>(ng), static_cast<Eigen::Index>(nh));
    for (std::size_t i = 0; i < ng; ++i) {
      for (std::size_t j = 0; j < nh; ++j) {
        iou(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            box_iou(g.boxes[i], h.boxes[j], params.iou_mode);
      }
    }
    auto valid = [&](std::size_t i, std::size_t j) {
      return iou(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >=
             params.iou_threshold;
    };

    std::vector<int> gt_to_hyp(ng, -1);
    std::vector<bool> hyp_used(nh, false);
    // Keep pairings that are still valid.
    for (std::size_t i = 0; i < ng; ++i) {
      const auto it = last_hyp.find(*g.boxes[i].track_id);
      if (it == last_hyp.end()) continue;
      for (std::size_t j = 0; j < nh; ++j) {
        if (!hyp_used[j] && *h.boxes[j].track_id == it->second && valid(i, j)) {
          gt_to_hyp[i] = static_cast<int>(j);
          hyp_used[j] = true;
          break;
        }
      }
    }
    // Assign the rest optimally.
    std::vector<std::size_t> free_gt, free_hyp;
    for (std::size_t i = 0; i < ng; ++i) {
      if (gt_to_hyp[i] < 0) free_gt.push_back(i);
    }
    for (std::size_t j = 0; j < nh; ++j) {
      if (!hyp_used[j]) free_hyp.push_back(j);
    }
    if (!free_gt.empty() && !free_hyp.empty()) {
      Eigen::MatrixXd cost(static_cast<Eigen::Index>(free_gt.size()),
                           static_cast<Eigen::Index>(free_hyp.size()));
      for (std::size_t a = 0; a < free_gt.size(); ++a) {
        for (std::size_t b = 0; b < free_hyp.size(); ++b) {
          cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
              valid(free_gt[a], free_hyp[b])
                  ? 1.0 - iou(static_cast<Eigen::Index>(free_gt[a]),
                              static_cast<Eigen::Index>(free_hyp[b]))
                  : kGatedCost;
        }
      }
      const Assignment assignment = hungarian(cost);
      for (std::size_t a = 0; a < free_gt.size(); ++a) {
        const int b = assignment.row_to_col[a];
        if (b < 0 || !valid(free_gt[a], free_hyp[static_cast<std::size_t>(b)])) continue;
        gt_to_hyp[free_gt[a]] = static_cast<int>(free_hyp[static_cast<std::size_t>(b)]);
        hyp_used[free_hyp[static_cast<std::size_t>(b)]] = true;
      }
    }

    FrameMatches fm;
    fm.frame_index = frame;
    fm.gt = ng;
    fm.hyp = nh;
    for (std::size_t i = 0; i < ng; ++i) {
      const int gid = *g.boxes[i].track_id;
      const int j = gt_to_hyp[i];
      tracked[gid].push_back(j >= 0);
      if (j < 0) {
        ++fm.fn;
        continue;
      }
      ++fm.matches;
      report.iou_sum += iou(static_cast<Eigen::Index>(i), j);
      const int hid = *h.boxes[static_cast<std::size_t>(j)].track_id;
      const auto it = last_hyp.find(gid);
      if (it != last_hyp.end() && it->second != hid) ++fm.ids;
      last_hyp[gid] = hid;
    }
    fm.fp = nh - fm.matches;
    report.fn += fm.fn;
    report.fp += fm.fp;
    report.ids += fm.ids;
    report.matches += fm.matches;
    report.gt_count += ng;
    report.matches_per_frame.push_back(fm);
  }

  for (const auto& [gid, flags] : tracked) {
    ++report.trajectories;
    const auto hits = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
    const double ratio = static_cast<double>(hits) / static_cast<double>(flags.size());
    if (ratio >= 0.8) ++report.mostly_tracked;
    if (ratio <= 0.2) ++report.mostly_lost;
    // An interruption counts only when tracking resumes later.
    bool seen_tracked = false, gap = false;
    for (bool f : flags) {
      if (f) {
        if (gap) ++report.frag;
        seen_tracked = true;
        gap = false;
      } else if (seen_tracked) {
        gap = true;
      }
    }
  }
  finish_ratios(report);
  return report;
}

MotReport combine(std::span<const MotReport> reports) {
  MotReport out;
  for (const MotReport& r : reports) {
    out.ids += r.ids;
    out.frag += r.frag;
    out.fp += r.fp;
    out.fn += r.fn;
    out.gt_count += r.gt_count;
    out.matches += r.matches;
    out.iou_sum += r.iou_sum;
    out.trajectories += r.trajectories;
    out.mostly_tracked += r.mostly_tracked;
    out.mostly_lost += r.mostly_lost;
    out.matches_per_frame.insert(out.matches_per_frame.end(), r.matches_per_frame.begin(),
                                 r.matches_per_frame.end());
  }
  finish_ratios(out);
  return out;
}

std::string report_csv(const MotReport& r) {
  std::ostringstream out;
  out << "metric,value\n"
      << "mota," << format_double(r.mota) << "\n"
      << "motp," << format_double(r.motp) << "\n"
      << "mt," << format_double(r.mt) << "\n"
      << "ml," << format_double(r.ml) << "\n"
      << "ids," << r.ids << "\n"
      << "frag," << r.frag << "\n"
      << "fp," << r.fp << "\n"
      << "fn," << r.fn << "\n"
      << "gt_count," << r.gt_count << "\n";
  return out.str();
}

std::string report_table(const MotReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%-8s %-8s %-8s %-8s %6s %6s %6s %6s %8s\n"
                "%-8.4f %-8.4f %-8.4f %-8.4f %6zu %6zu %6zu %6zu %8zu\n",
                "MOTA", "MOTP", "MT", "ML", "IDS", "FRAG", "FP", "FN", "GT", r.mota, r.motp,
                r.mt, r.ml, r.ids, r.frag, r.fp, r.fn, r.gt_count);
  return buf;
}

}  // namespace disptrack
