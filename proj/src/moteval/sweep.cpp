#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "disptrack/kv_config.hpp"
#include "disptrack/moteval.hpp"

namespace disptrack {

std::vector<SweepRow> sweep_displacement(std::span<const SequenceTracker* const> trackers,
                                         std::span<const Sequence> base,
                                         const SweepOptions& options) {
  if (base.empty()) throw std::invalid_argument("sweep: no sequences");
  for (double m : options.magnitudes) {
    if (!(m >= 0.0)) throw std::invalid_argument("sweep: magnitudes must be >= 0");
  }
  const std::size_t cells = options.magnitudes.size() * trackers.size();
  std::vector<SweepRow> rows(cells);

  auto run_cell = [&](std::size_t cell) {
    const std::size_t mi = cell / trackers.size();
    const SequenceTracker& tracker = *trackers[cell % trackers.size()];
    const AugmentationOptions aug{options.magnitudes[mi], options.mode, options.per_object};
    std::vector<MotReport> reports;
    for (std::size_t s = 0; s < base.size(); ++s) {
      const Sequence seq = apply_displacement_augmentation(base[s], aug, options.seed + s);
      const std::vector<FrameLabel> hyp = tracker.run(seq, options.seed + s);
      const std::vector<FrameLabel> gt = seq.labels();
      reports.push_back(evaluate(gt, hyp, options.eval));
    }
    rows[cell] = {tracker.name(), options.magnitudes[mi], combine(reports)};
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, cells));
  if (threads == 1) {
    for (std::size_t c = 0; c < cells; ++c) run_cell(c);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = next++; c < cells; c = next++) run_cell(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "tracker,magnitude,metric,value\n";
  for (const SweepRow& row : rows) {
    const std::string prefix = row.tracker + "," + format_double(row.magnitude) + ",";
    const MotReport& r = row.report;
    out << prefix << "mota," << format_double(r.mota) << "\n"
        << prefix << "motp," << format_double(r.motp) << "\n"
        << prefix << "mt," << format_double(r.mt) << "\n"
        << prefix << "ml," << format_double(r.ml) << "\n"
        << prefix << "ids," << r.ids << "\n"
        << prefix << "frag," << r.frag << "\n"
        << prefix << "fp," << r.fp << "\n"
        << prefix << "fn," << r.fn << "\n";
  }
  return out.str();
}

}  // namespace disptrack
