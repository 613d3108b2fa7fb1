// disptrack command-line front end. Every subcommand writes its outputs and a
// manifest.json into --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <sstream>

#include "disptrack/moteval.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace disptrack {
namespace {

// Thrown for bad flag values found after parsing; reported like a CLI11 error.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Run {
  std::string command;
  fs::path out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  json config = json::object();
  std::vector<std::string> outputs;

  void write(const std::string& rel, std::string_view text) {
    write_file(out / rel, text);
    outputs.push_back(rel);
  }
};

struct Common {
  std::string out;
  std::uint64_t seed = 0;
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c, bool with_config) {
  sub->add_option("--out", c.out, "output directory (default $DISPTRACK_OUT/<command>)");
  sub->add_option("--seed", c.seed, "random seed");
  if (with_config) {
    sub->add_option("--config", c.config, "key = value config file");
    sub->add_option("--set", c.sets, "config override key=value (repeatable)");
  }
}

// Flag > file > built-in default.
KeyValueConfig resolve_config(const Common& c) {
  KeyValueConfig cfg;
  if (!c.config.empty()) cfg = KeyValueConfig::parse(read_text_file(c.config));
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return cfg;
}

json to_json(const KeyValueConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg.values()) j[k] = v;
  return j;
}

Run start_run(const std::string& command, const Common& c, const CLI::App* sub) {
  Run run;
  run.command = command;
  if (!c.out.empty()) {
    run.out = c.out;
  } else {
    const char* env = std::getenv("DISPTRACK_OUT");
    run.out = fs::path(env && *env ? env : "runs") / command;
  }
  run.seed = c.seed;
  run.seed_given = sub->count("--seed") > 0;
  fs::create_directories(run.out);
  return run;
}

void finish_run(Run& run, const CLI::App* sub, double seconds) {
  json options = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->count() == 0) continue;
    const auto& results = opt->results();
    options[opt->get_name()] =
        results.size() == 1 ? json(results[0]) : json(std::vector<std::string>(results));
  }
  json m;
  m["command"] = run.command;
  m["version"] = DISPTRACK_VERSION;
  m["seed"] = run.seed;
  m["options"] = options;
  m["config"] = run.config;
  m["outputs"] = run.outputs;
  m["duration_seconds"] = seconds;
  write_file(run.out / "manifest.json", m.dump(2) + "\n");
}

DisplacementMode parse_mode(const std::string& s) {
  if (s == "fixed") return DisplacementMode::kFixed;
  if (s == "uniform") return DisplacementMode::kUniformRandom;
  throw UsageError("unknown displacement mode '" + s + "' (fixed|uniform)");
}

IouMode parse_iou_mode(const std::string& s) {
  if (s == "bev") return IouMode::kBev;
  if (s == "3d") return IouMode::k3d;
  throw UsageError("unknown IoU mode '" + s + "' (bev|3d)");
}

std::vector<Sequence> load_sequences(const std::vector<std::string>& dirs) {
  std::vector<Sequence> out;
  for (const std::string& d : dirs) out.push_back(read_sequence_dir(d));
  return out;
}

std::vector<FrameLabel> load_labels(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "labels.txt" : path;
  return parse_kitti_labels(read_text_file(file)).frames;
}

std::shared_ptr<const AssociationModel> load_model(const std::string& path,
                                                   PipelineConfig& config) {
  auto [model, cfg] =
      AssociationModel::from_checkpoint(micronet::parse_checkpoint(read_text_file(path)));
  config = cfg;
  return std::make_shared<const AssociationModel>(std::move(model));
}

std::string format_fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthArgs {
  Common common;
  int sequences = 1;
  double augment = 0.0;
  std::string mode = "fixed";
  bool shared = false;
};

void cmd_synth(Run& run, const SynthArgs& a) {
  KeyValueConfig cfg = resolve_config(a.common);
  if (a.sequences < 1) throw UsageError("--sequences must be >= 1");
  const SceneConfig scene = SceneConfig::from_config(cfg);
  const AugmentationOptions aug{a.augment, parse_mode(a.mode), !a.shared};
  run.config = to_json(scene.to_config());
  run.write("scene.cfg", scene.to_config().to_text());
  for (int s = 0; s < a.sequences; ++s) {
    const std::uint64_t seed = run.seed + static_cast<std::uint64_t>(s);
    Sequence seq = synthesize_sequence(scene, seed);
    if (a.augment > 0.0) seq = apply_displacement_augmentation(seq, aug, seed);
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%03d", s);
    seq.name = name;
    write_sequence_dir(seq, run.out / name);
    run.outputs.push_back(name);
    std::cout << name << ": " << seq.frames.size() << " frames\n";
  }
}

struct TrainArgs {
  Common common;
  std::vector<std::string> data;
  std::vector<std::string> eval_data;
  std::size_t epochs = 24;
  int toy_sequences = 10;
  int holdout_sequences = 2;
  double augment = 2.0;
};

SceneConfig toy_scene() {
  SceneConfig sc;
  sc.frames = 21;
  sc.objects = 5;
  sc.velocity_max = 1.5;
  return sc;
}

void cmd_train(Run& run, const TrainArgs& a) {
  KeyValueConfig cfg = resolve_config(a.common);
  if (run.seed_given || !cfg.has("seed")) cfg.set("seed", std::to_string(run.seed));
  const PipelineConfig config = PipelineConfig::from_config(cfg);
  run.seed = config.seed;
  run.config = to_json(config.to_config());

  std::vector<Sequence> train, held;
  if (!a.data.empty()) {
    train = load_sequences(a.data);
    held = load_sequences(a.eval_data);
  } else {
    // Constant-velocity toy set; every second sequence gets random jumps.
    if (a.toy_sequences < 1 || a.holdout_sequences < 0) throw UsageError("bad toy set size");
    const SceneConfig sc = toy_scene();
    for (int s = 0; s < a.toy_sequences; ++s) {
      const std::uint64_t seed = config.seed * 1000 + static_cast<std::uint64_t>(s);
      Sequence seq = synthesize_sequence(sc, seed);
      if (s % 2 == 1 && a.augment > 0.0) {
        seq = apply_displacement_augmentation(
            seq, {a.augment, DisplacementMode::kUniformRandom, true}, seed);
      }
      train.push_back(std::move(seq));
    }
    for (int s = 0; s < a.holdout_sequences; ++s) {
      held.push_back(synthesize_sequence(
          sc, config.seed * 1000 + 500 + static_cast<std::uint64_t>(s)));
    }
  }

  std::ostringstream log;
  log << "epoch,loss,lr\n";
  const TrainResult result =
      train_association(train, config, a.epochs, [&](std::size_t e, double loss, double lr) {
        log << e << "," << format_double(loss) << "," << format_double(lr) << "\n";
        std::cout << "epoch " << e << " loss " << format_fixed(loss, 6) << " lr "
                  << format_double(lr) << std::endl;
      });
  run.write("train_log.csv", log.str());
  run.write("model.ckpt", micronet::serialize_checkpoint(result.model.to_checkpoint(config)));
  if (!held.empty()) {
    const auto pairs = build_training_pairs(held, config);
    const FieldError err = evaluate_field_error(result.model, config, pairs);
    std::ostringstream csv;
    csv << "pairs,points,mean_error\n"
        << err.pairs << "," << err.points << "," << format_double(err.mean_error) << "\n";
    run.write("heldout.csv", csv.str());
    std::cout << "held-out mean displacement error " << format_fixed(err.mean_error)
              << " m over " << err.pairs << " pairs\n";
  }
}

struct GradcheckArgs {
  Common common;
  std::size_t probes = 100;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
};

bool cmd_gradcheck(Run& run, const GradcheckArgs& a) {
  KeyValueConfig cfg = resolve_config(a.common);
  if (run.seed_given || !cfg.has("seed")) cfg.set("seed", std::to_string(run.seed));
  const PipelineConfig config = PipelineConfig::from_config(cfg);
  run.seed = config.seed;
  run.config = to_json(config.to_config());
  if (a.probes == 0) throw UsageError("--probes must be >= 1");

  SceneConfig sc;
  sc.frames = 2;
  const Sequence seq = synthesize_sequence(sc, config.seed);
  const auto pairs = build_training_pairs(std::span<const Sequence>(&seq, 1), config);
  const AssociationModel model = AssociationModel::init(config, config.seed);
  const micronet::GradientCheckReport r =
      pipeline_gradient_check(model, config, pairs.at(0), a.probes, a.epsilon, config.seed);

  json j;
  j["max_relative_error"] = r.max_relative_error;
  j["max_kink_tolerant_error"] = r.max_kink_tolerant_error;
  j["kinks"] = r.kinks;
  j["probes"] = r.probes;
  j["epsilon"] = a.epsilon;
  j["finite"] = r.finite;
  run.write("gradcheck.json", j.dump(2) + "\n");
  std::cout << "max_relative_error " << r.max_relative_error << " probes " << r.probes
            << " kinks " << r.kinks << "\n";
  return r.finite && r.max_relative_error < a.tolerance;
}

struct TrackArgs {
  Common common;
  std::string sequence;
  std::string tracker = "displacement";
  std::string model;
  double center_sigma = 0.0;
  double yaw_sigma = 0.0;
  double dropout = 0.0;
  double fp_rate = 0.0;
  int max_age = 2;
  bool include_virtual = false;
};

DetectorNoise noise_from(const TrackArgs& a) {
  DetectorNoise n;
  n.center_sigma = a.center_sigma;
  n.yaw_sigma = a.yaw_sigma;
  n.dropout = a.dropout;
  n.false_positive_rate = a.fp_rate;
  return n;
}

void cmd_track(Run& run, const TrackArgs& a) {
  const Sequence seq = read_sequence_dir(a.sequence);
  const DetectorNoise noise = noise_from(a);
  if (a.tracker == "displacement") {
    PipelineConfig config = PipelineConfig::from_config(resolve_config(a.common));
    std::shared_ptr<const AssociationModel> model;
    if (!a.model.empty()) model = load_model(a.model, config);
    TrackerParams params;
    params.tau = config.tau;
    params.max_age = a.max_age;
    run.config = to_json(config.to_config());
    const DisplacementTracker tracker(config, params, noise, model);
    const std::vector<Track> tracks = tracker.run_tracks(seq, run.seed);
    run.write("tracks.txt", export_kitti(tracks, a.include_virtual));
    run.write("tracks.csv", export_csv(tracks, a.include_virtual));
    std::cout << seq.frames.size() << " frames, " << tracks.size() << " tracks\n";
  } else if (a.tracker == "kalman") {
    if (!a.model.empty()) throw UsageError("--model applies to the displacement tracker only");
    SortParams params;
    params.max_age = a.max_age;
    const KalmanTracker tracker(params, noise);
    const std::vector<FrameLabel> hyp = tracker.run(seq, run.seed);
    run.write("tracks.txt", serialize_kitti_labels(hyp));
    std::cout << seq.frames.size() << " frames\n";
  } else {
    throw UsageError("unknown tracker '" + a.tracker + "' (displacement|kalman)");
  }
}

struct EvalArgs {
  Common common;
  std::string gt;
  std::string hyp;
  double iou = 0.25;
  std::string iou_mode = "bev";
};

void cmd_eval(Run& run, const EvalArgs& a) {
  const EvalParams params{a.iou, parse_iou_mode(a.iou_mode)};
  const std::vector<FrameLabel> gt = load_labels(a.gt);
  const std::vector<FrameLabel> hyp = load_labels(a.hyp);
  const MotReport r = evaluate(gt, hyp, params);
  run.write("report.csv", report_csv(r));
  std::ostringstream frames;
  frames << "frame,gt,hyp,matches,fp,fn,ids\n";
  for (const FrameMatches& f : r.matches_per_frame) {
    frames << f.frame_index << "," << f.gt << "," << f.hyp << "," << f.matches << "," << f.fp
           << "," << f.fn << "," << f.ids << "\n";
  }
  run.write("frames.csv", frames.str());
  std::cout << report_table(r);
}

struct SweepArgs {
  Common common;
  std::vector<std::string> trackers{"displacement", "kalman"};
  std::vector<double> magnitudes{0.0, 0.5, 1.0, 1.5, 2.0};
  std::vector<std::string> data;
  int sequences = 3;
  std::string mode = "fixed";
  bool shared = false;
  std::size_t threads = 1;
  std::string model;
  double iou = 0.25;
};

void cmd_sweep(Run& run, const SweepArgs& a) {
  KeyValueConfig scene_cfg = resolve_config(a.common);
  std::vector<Sequence> base;
  if (!a.data.empty()) {
    base = load_sequences(a.data);
  } else {
    if (a.sequences < 1) throw UsageError("--sequences must be >= 1");
    const SceneConfig scene = SceneConfig::from_config(scene_cfg);
    run.config = to_json(scene.to_config());
    for (int s = 0; s < a.sequences; ++s) {
      base.push_back(synthesize_sequence(scene, run.seed + static_cast<std::uint64_t>(s)));
    }
  }

  PipelineConfig config;
  std::shared_ptr<const AssociationModel> model;
  if (!a.model.empty()) model = load_model(a.model, config);
  std::vector<std::unique_ptr<SequenceTracker>> owned;
  for (const std::string& name : a.trackers) {
    if (name == "displacement") {
      TrackerParams params;
      params.tau = config.tau;
      owned.push_back(std::make_unique<DisplacementTracker>(config, params, DetectorNoise{}, model));
    } else if (name == "kalman") {
      owned.push_back(std::make_unique<KalmanTracker>());
    } else {
      throw UsageError("unknown tracker '" + name + "' (displacement|kalman)");
    }
  }
  std::vector<const SequenceTracker*> trackers;
  for (const auto& t : owned) trackers.push_back(t.get());

  SweepOptions options;
  options.magnitudes = a.magnitudes;
  options.mode = parse_mode(a.mode);
  options.per_object = !a.shared;
  options.seed = run.seed;
  options.eval.iou_threshold = a.iou;
  options.threads = a.threads;
  const std::vector<SweepRow> rows = sweep_displacement(trackers, base, options);
  run.write("sweep.csv", sweep_csv(rows));
  for (const SweepRow& row : rows) {
    std::cout << row.tracker << " " << format_double(row.magnitude) << " mota "
              << format_fixed(row.report.mota) << " ids " << row.report.ids << "\n";
  }
}

struct IngestArgs {
  Common common;
  std::string velodyne;
  std::string labels;
  std::string name = "sequence";
  double frame_period = 0.1;
  double ground_z = 0.0;
};

void cmd_ingest(Run& run, const IngestArgs& a, bool remove_ground_points) {
  if (!fs::is_directory(a.velodyne)) throw FileError("no velodyne directory " + a.velodyne);
  // Stage the scans and labels in our layout, then read them back through
  // the normal loader so the same validation applies.
  Sequence seq;
  seq.name = a.name;
  seq.frame_period = a.frame_period;
  const fs::path staging = run.out / (a.name + ".staging");
  fs::remove_all(staging);
  fs::create_directories(staging / "velodyne");
  for (const auto& entry : fs::directory_iterator(a.velodyne)) {
    if (entry.path().extension() == ".bin") {
      fs::copy_file(entry.path(), staging / "velodyne" / entry.path().filename());
    }
  }
  if (!a.labels.empty()) {
    write_file(staging / "labels.txt", serialize_kitti_labels(load_labels(a.labels)));
  }
  Sequence loaded = read_sequence_dir(staging);
  fs::remove_all(staging);
  seq.frames = std::move(loaded.frames);
  if (remove_ground_points) {
    for (Frame& f : seq.frames) f.cloud = remove_ground(f.cloud, a.ground_z);
  }
  write_sequence_dir(seq, run.out / a.name);
  run.outputs.push_back(a.name);
  std::cout << a.name << ": " << seq.frames.size() << " frames\n";
}

int fail(const std::string& message, int code) {
  std::string line = message;
  for (char& c : line) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "error: " << line << std::endl;
  return code;
}

int run_main(int argc, char** argv) {
  CLI::App app{"disptrack: displacement-based 3D multi-object tracking"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* s_synth = app.add_subcommand("synth", "generate synthetic sequences");
  add_common(s_synth, synth.common, true);
  s_synth->add_option("--sequences", synth.sequences, "number of sequences");
  s_synth->add_option("--augment", synth.augment, "displacement augmentation magnitude (m)");
  s_synth->add_option("--mode", synth.mode, "augmentation mode: fixed|uniform");
  s_synth->add_flag("--shared", synth.shared, "one shift for all objects per frame");

  TrainArgs train;
  CLI::App* s_train = app.add_subcommand("train", "train the association network");
  add_common(s_train, train.common, true);
  s_train->add_option("--data", train.data, "training sequence directories");
  s_train->add_option("--eval-data", train.eval_data, "held-out sequence directories");
  s_train->add_option("--epochs", train.epochs, "training epochs");
  s_train->add_option("--toy-sequences", train.toy_sequences, "toy training sequences");
  s_train->add_option("--holdout-sequences", train.holdout_sequences, "toy held-out sequences");
  s_train->add_option("--augment", train.augment,
                      "jump magnitude for every second toy sequence (0 disables)");

  GradcheckArgs grad;
  CLI::App* s_grad = app.add_subcommand("gradcheck", "finite-difference check of the network");
  add_common(s_grad, grad.common, true);
  s_grad->add_option("--probes", grad.probes, "parameters to probe");
  s_grad->add_option("--epsilon", grad.epsilon, "finite-difference step");
  s_grad->add_option("--tolerance", grad.tolerance, "pass threshold on relative error");

  TrackArgs track;
  CLI::App* s_track = app.add_subcommand("track", "run a tracker on a sequence");
  add_common(s_track, track.common, true);
  s_track->add_option("--sequence", track.sequence, "sequence directory")->required();
  s_track->add_option("--tracker", track.tracker, "displacement|kalman");
  s_track->add_option("--model", track.model, "trained checkpoint (learned field)");
  s_track->add_option("--center-sigma", track.center_sigma, "detector center noise (m)");
  s_track->add_option("--yaw-sigma", track.yaw_sigma, "detector yaw noise (rad)");
  s_track->add_option("--dropout", track.dropout, "detector miss rate");
  s_track->add_option("--fp-rate", track.fp_rate, "spurious detections per true box");
  s_track->add_option("--max-age", track.max_age, "frames a track may coast");
  s_track->add_flag("--include-virtual", track.include_virtual, "export coasted boxes");

  EvalArgs ev;
  CLI::App* s_eval = app.add_subcommand("eval", "CLEAR-MOT metrics of a hypothesis");
  add_common(s_eval, ev.common, false);
  s_eval->add_option("--gt", ev.gt, "ground-truth labels or sequence directory")->required();
  s_eval->add_option("--hyp", ev.hyp, "hypothesis labels")->required();
  s_eval->add_option("--iou", ev.iou, "match threshold");
  s_eval->add_option("--iou-mode", ev.iou_mode, "bev|3d");

  SweepArgs sw;
  CLI::App* s_sweep = app.add_subcommand("sweep", "displacement-robustness sweep");
  add_common(s_sweep, sw.common, true);
  s_sweep->add_option("--trackers", sw.trackers, "displacement,kalman")->delimiter(',');
  s_sweep->add_option("--magnitudes", sw.magnitudes, "jump magnitudes (m)")->delimiter(',');
  s_sweep->add_option("--data", sw.data, "base sequence directories");
  s_sweep->add_option("--sequences", sw.sequences, "synthetic base sequences");
  s_sweep->add_option("--mode", sw.mode, "fixed|uniform");
  s_sweep->add_flag("--shared", sw.shared, "one shift for all objects per frame");
  s_sweep->add_option("--threads", sw.threads, "worker threads");
  s_sweep->add_option("--model", sw.model, "trained checkpoint for the displacement tracker");
  s_sweep->add_option("--iou", sw.iou, "match threshold");

  IngestArgs in;
  CLI::App* s_ingest = app.add_subcommand("ingest", "convert a KITTI tracking sequence");
  add_common(s_ingest, in.common, false);
  s_ingest->add_option("--velodyne", in.velodyne, "directory of NNNNNN.bin scans")->required();
  s_ingest->add_option("--labels", in.labels, "KITTI tracking label file");
  s_ingest->add_option("--name", in.name, "sequence name");
  s_ingest->add_option("--frame-period", in.frame_period, "seconds between scans");
  CLI::Option* ground = s_ingest->add_option("--ground-z", in.ground_z,
                                             "drop points at or below this height");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const int code = fail(e.what(), 2);
    std::cerr << app.help();
    return code;
  }

  CLI::App* sub = app.get_subcommands().front();
  const Common& common = sub == s_synth    ? synth.common
                         : sub == s_train  ? train.common
                         : sub == s_grad   ? grad.common
                         : sub == s_track  ? track.common
                         : sub == s_eval   ? ev.common
                         : sub == s_sweep  ? sw.common
                                           : in.common;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    Run run = start_run(sub->get_name(), common, sub);
    bool ok = true;
    if (sub == s_synth) cmd_synth(run, synth);
    else if (sub == s_train) cmd_train(run, train);
    else if (sub == s_grad) ok = cmd_gradcheck(run, grad);
    else if (sub == s_track) cmd_track(run, track);
    else if (sub == s_eval) cmd_eval(run, ev);
    else if (sub == s_sweep) cmd_sweep(run, sw);
    else cmd_ingest(run, in, ground->count() > 0);
    finish_run(run, sub, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (!ok) return fail("gradient check above tolerance", 1);
    return 0;
  } catch (const UsageError& e) {
    const int code = fail(e.what(), 2);
    std::cerr << sub->help();
    return code;
  } catch (const std::exception& e) {
    return fail(e.what(), 1);
  }
}

}  // namespace
}  // namespace disptrack

int main(int argc, char** argv) { return disptrack::run_main(argc, argv); }
