// SPDX-License-Identifier: Apache-2.0

#include "ief/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "ief/data.hpp"
#include "ief/errors.hpp"
#include "ief/evaluation.hpp"
#include "ief/inference.hpp"
#include "ief/io.hpp"
#include "ief/model.hpp"
#include "ief/selfcheck.hpp"
#include "ief/training.hpp"

namespace fs = std::filesystem;

namespace ief::cli {

namespace {

class MissingPath : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Contradiction : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class CheckFailed : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_out() {
  const char* env = std::getenv("IEF_OUTPUT_DIR");
  return env && *env ? env : "ief_out";
}

void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw MissingPath(std::string(what) + " not given");
  if (!fs::exists(path)) throw MissingPath(std::string(what) + " '" + path + "' does not exist");
}

std::string quote(const std::string& v) {
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

// Current value of an option: what was parsed, else its default.
std::string toml_value(const CLI::Option& opt) {
  if (opt.get_expected_min() == 0) {
    const bool on = opt.count() > 0 ? opt.as<bool>() : opt.get_default_str() == "true";
    return on ? "true" : "false";
  }
  std::vector<std::string> values;
  if (opt.count() > 0) {
    for (const std::string& r : opt.reduced_results()) values.push_back(r);
  } else if (!opt.get_default_str().empty()) {
    values.push_back(opt.get_default_str());
  }
  if (opt.get_expected_max() > 1) {
    std::string list = "[";
    for (std::size_t i = 0; i < values.size(); ++i) list += (i ? "," : "") + quote(values[i]);
    return list + "]";
  }
  return values.empty() ? quote("") : quote(values.back());
}

// The effective configuration goes next to the outputs before any work, so
// `ief --config <file>` reproduces the run.
void echo_config(const CLI::App& app, const CLI::App& sub, const fs::path& out) {
  fs::create_directories(out);
  std::string text;
  for (const CLI::Option* opt : app.get_options()) {
    if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
    text += opt->get_lnames()[0] + "=" + toml_value(*opt) + "\n";
  }
  text += "[" + sub.get_name() + "]\n";
  for (const CLI::Option* opt : sub.get_options()) {
    if (!opt->get_configurable()) continue;
    const std::string key = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames()[0];
    if (key.empty() || key == "help") continue;
    text += key + "=" + toml_value(*opt) + "\n";
  }
  io::write_text(out / (sub.get_name() + ".toml"), text);
}

std::vector<int> parse_keypoints(const std::string& text, const Skeleton& skel) {
  std::vector<int> out;
  if (text.empty()) return out;
  for (const std::string& token : io::split(text, ',')) {
    int k = skel.index_of(token);
    if (k < 0) {
      try {
        k = int(io::parse_int(token));
      } catch (const IoError&) {
        throw ValidationError("unknown keypoint '" + token + "'");
      }
    }
    if (k < 0 || k >= skel.size()) throw ValidationError("keypoint index " + token + " out of range");
    out.push_back(k);
  }
  return out;
}

std::vector<int> non_given(const Skeleton& skel) {
  std::vector<int> out;
  for (int k = 0; k < skel.size(); ++k) {
    if (std::find(skel.given.begin(), skel.given.end(), k) == skel.given.end()) out.push_back(k);
  }
  return out;
}

// name=path pairs; a bare path is named after its position.
std::vector<std::pair<std::string, std::string>> parse_runs(const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::size_t eq = specs[i].find('=');
    if (eq == std::string::npos) {
      out.emplace_back("run" + std::to_string(i + 1), specs[i]);
    } else {
      out.emplace_back(specs[i].substr(0, eq), specs[i].substr(eq + 1));
    }
  }
  return out;
}

std::vector<Trajectory> load_aligned(const std::string& path, const Dataset& data) {
  require_path(path, "trajectory file");
  std::vector<Trajectory> t = parse_trajectories_csv(io::read_text(path));
  if (t.size() != data.examples.size()) {
    throw StructuralError(path + " holds " + std::to_string(t.size()) + " trajectories for " +
                          std::to_string(data.examples.size()) + " examples");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].example_id != data.examples[i].id) {
      throw StructuralError(path + " is not aligned with the dataset at row " + std::to_string(i));
    }
    if (t[i].poses.empty() || int(t[i].poses[0].size()) != data.manifest.keypoints) {
      throw StructuralError(path + " has the wrong keypoint count");
    }
  }
  return t;
}

struct GenOptions {
  std::size_t n = 2500;
  std::size_t test_n = 500;
  std::uint64_t seed = 7;
  int dims = 64;
  int channels = 1;
  int boxes = 3;
  int test_boxes = 1;
  bool mirror = true;
  double min_scale = 0.4;
  double max_scale = 0.9;
};

struct TrainOptions {
  std::string regime = "ief";
  std::string data;
  std::string curriculum;
  std::string loss_mask = "annotated";
  std::string subset;
  TrainConfig config;
  bool stage_checkpoints = true;
};

struct InferOptionsCli {
  std::string model;
  std::string data;
  int test_steps = 3;
  double early_stop = 0.0;
  bool mirror = false;
};

struct EvalOptions {
  std::string data;
  std::string trajectories;
  std::vector<std::string> runs;
  std::string model;
  std::string keypoints;
  std::string baseline;
  std::vector<std::string> notes;
  double alpha = 0.5;
};

struct PlotOptions {
  std::string data;
  std::string trajectories;
  std::vector<std::string> runs;
  std::size_t count = 4;
  std::string keypoints;
  double alpha = 0.5;
};

void run_gen(const GenOptions& o, const fs::path& out) {
  if (o.n == 0) throw ValidationError("--n must be positive");
  GeneratorConfig g;
  g.width = g.height = o.dims;
  g.channels = o.channels;
  g.min_scale = o.min_scale;
  g.max_scale = o.max_scale;
  const Skeleton& skel = stick_figure_skeleton();

  PrepareConfig train_prep;
  train_prep.resolution = o.dims;
  train_prep.boxes = o.boxes;
  train_prep.mirror = o.mirror;
  PrepareConfig test_prep = train_prep;
  test_prep.boxes = o.test_boxes;
  test_prep.mirror = false;

  auto describe = [](const PrepareConfig& p) {
    return "boxes=" + std::to_string(p.boxes) + " of " + std::to_string(p.n_scales) + " scales [" +
           io::format_double(p.lo) + "," + io::format_double(p.hi) + "] ratio " +
           io::format_double(p.ratio) + (p.mirror ? " mirrored" : "");
  };
  // Test figures use ids past the training range so the two never share a stream.
  const Dataset train = make_dataset(
      prepare_examples(generate_examples(o.seed, 0, o.n, g), skel, train_prep), skel, o.seed,
      describe(train_prep));
  save_dataset(train, out / "train");
  std::cout << "train: " << train.examples.size() << " examples -> " << (out / "train").string() << "\n";
  if (o.test_n > 0) {
    const Dataset test = make_dataset(
        prepare_examples(generate_examples(o.seed, o.n, o.test_n, g), skel, test_prep), skel, o.seed,
        describe(test_prep));
    save_dataset(test, out / "test");
    std::cout << "test: " << test.examples.size() << " examples -> " << (out / "test").string() << "\n";
  }
}

void run_train(TrainOptions o, const fs::path& out) {
  require_path(o.data, "training dataset");
  const Curriculum implied = o.regime == "joint" ? Curriculum::joint : Curriculum::fpc;
  if (!o.curriculum.empty() && curriculum_from_string(o.curriculum) != implied) {
    throw Contradiction("curriculum=" + o.curriculum + " cannot be combined with regime " + o.regime);
  }
  o.config.curriculum = implied;
  o.config.loss_mask = loss_mask_from_string(o.loss_mask);
  const Dataset data = load_dataset(o.data);
  if (!o.subset.empty()) {
    o.config = channel_subset_config(o.config, parse_keypoints(o.subset, data.manifest.skeleton));
  }

  const StageCallback save_stage = [&](int stage, const Model& m) {
    if (o.stage_checkpoints) save_model(m, out / "stages" / ("stage" + std::to_string(stage)));
    std::cout << "stage " << stage << " done, " << m.params.version << " updates\n";
  };
  TrainResult r;
  if (o.regime == "ief") r = fpc_train(data, o.config, save_stage);
  else if (o.regime == "joint") r = joint_train(data, o.config, save_stage);
  else if (o.regime == "direct") r = direct_train(data, o.config, save_stage);
  else r = iterative_direct_train(data, o.config, save_stage);

  save_model(r.model, out / "model");
  io::write_text(out / "train_log.csv", format_log(r.log));
  std::cout << "model -> " << (out / "model").string() << "\n";
}

void run_infer(const InferOptionsCli& o, const fs::path& out) {
  require_path(o.model, "model checkpoint");
  require_path(o.data, "dataset");
  const Model model = load_model(o.model);
  const Dataset data = load_dataset(o.data);
  InferOptions opts;
  opts.steps = o.test_steps;
  if (o.early_stop > 0.0) opts.early_stop = o.early_stop;

  std::vector<Trajectory> t;
  if (o.mirror) {
    const Skeleton& skel = data.manifest.skeleton;
    for (const Example& ex : data.examples) {
      Trajectory m = infer_example(mirror(ex, skel), model, opts);
      t.push_back(unmirror(m, ex.image.width, skel));
    }
  } else {
    t = batch_infer(data.examples, model, opts);
  }
  io::write_text(out / "trajectories.csv", trajectories_csv(t));
  std::cout << t.size() << " trajectories -> " << (out / "trajectories.csv").string() << "\n";
}

void run_eval(const EvalOptions& o, const fs::path& out) {
  require_path(o.data, "dataset");
  std::vector<std::string> specs = o.runs;
  if (!o.trajectories.empty()) specs.insert(specs.begin(), "run=" + o.trajectories);
  if (specs.empty()) throw MissingPath("no trajectories given (--trajectories or --run)");
  const Dataset data = load_dataset(o.data);
  const Skeleton& skel = data.manifest.skeleton;

  std::vector<int> keypoints = parse_keypoints(o.keypoints, skel);
  if (keypoints.empty() && !o.model.empty()) {
    require_path(o.model, "model checkpoint");
    keypoints = load_model(o.model).layout.predicted;
  }
  if (keypoints.empty()) keypoints = non_given(skel);

  std::vector<std::pair<std::string, MetricReport>> reports;
  std::vector<std::pair<std::string, std::vector<double>>> curves;
  for (const auto& [name, path] : parse_runs(specs)) {
    const auto t = load_aligned(path, data);
    MetricReport r = evaluate(t, data.examples, skel, keypoints, o.alpha);
    curves.emplace_back(name, r.per_step);
    io::write_text(out / (specs.size() == 1 ? std::string("report.csv") : "report_" + name + ".csv"),
                   report_csv(r));
    std::cout << name << ": FBody PCKh@" << io::fixed4(o.alpha) << " = " << io::fixed4(r.group("FBody"))
              << "\n";
    reports.emplace_back(name, std::move(r));
  }

  std::size_t baseline = 0;
  if (!o.baseline.empty()) {
    auto it = std::find_if(reports.begin(), reports.end(), [&](const auto& r) { return r.first == o.baseline; });
    if (it == reports.end()) throw ValidationError("baseline run '" + o.baseline + "' not among the runs");
    baseline = std::size_t(it - reports.begin());
  }
  const Comparison c = compare_report(reports, baseline);
  io::write_text(out / "comparison.csv", comparison_csv(c));
  io::write_text(out / "report.svg", comparison_svg(c, o.notes));
  io::write_text(out / "pckh_curve.svg", curve_svg(curves, "PCKh@" + io::fixed4(o.alpha) + " by step"));
}

void run_plot(const PlotOptions& o, const fs::path& out) {
  require_path(o.data, "dataset");
  std::vector<std::string> specs = o.runs;
  if (!o.trajectories.empty()) specs.insert(specs.begin(), "run=" + o.trajectories);
  if (specs.empty()) throw MissingPath("no trajectories given (--trajectories or --run)");
  const Dataset data = load_dataset(o.data);
  const Skeleton& skel = data.manifest.skeleton;
  std::vector<int> keypoints = parse_keypoints(o.keypoints, skel);
  if (keypoints.empty()) keypoints = non_given(skel);

  std::vector<std::pair<std::string, std::vector<double>>> curves;
  std::vector<Pose> truths;
  std::vector<double> refs;
  for (const Example& ex : data.examples) {
    truths.push_back(ex.pose);
    refs.push_back(reference_length(ex, skel));
  }
  const auto runs = parse_runs(specs);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto t = load_aligned(runs[r].second, data);
    curves.emplace_back(runs[r].first, pckh_curve(t, truths, refs, o.alpha, keypoints));
    if (r == 0) {
      for (std::size_t i = 0; i < std::min(o.count, t.size()); ++i) {
        const fs::path file = out / ("overlay_" + std::to_string(data.examples[i].id) + ".svg");
        io::write_text(file, pose_overlay_svg(data.examples[i], t[i], skel));
      }
    }
  }
  io::write_text(out / "pckh_curve.svg", curve_svg(curves, "PCKh@" + io::fixed4(o.alpha) + " by step"));
}

void run_check(const SelfCheckConfig& c, const fs::path& out) {
  std::string text;
  bool ok = true;
  for (const CheckOutcome& r : run_self_checks(c)) {
    const std::string line = std::string(r.passed ? "PASS " : "FAIL ") + r.name + ": " + r.detail;
    std::cout << line << "\n";
    text += line + "\n";
    ok = ok && r.passed;
  }
  io::write_text(out / "check.txt", text);
  if (!ok) throw CheckFailed("self checks failed");
}

int exit_code_for(const Error& e) {
  const std::string& c = e.category();
  if (c == "divergence") return kDivergence;
  if (c == "inference") return kInference;
  if (c == "io" || c == "version_mismatch" || c == "truncated_blob" || c == "checksum") return kIo;
  return kInvalid;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Iterative error feedback pose estimation on synthetic stick figures"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Read options from a TOML file written by a previous run");
  app.require_subcommand(1);
  std::string out = default_out();
  int threads = 1;
  app.add_option("--out", out, "Output directory (default: $IEF_OUTPUT_DIR or ./ief_out)");
  app.add_option("--threads", threads, "Worker threads; the computation is single-threaded and "
                                       "bit-reproducible for every value")
      ->check(CLI::PositiveNumber);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate train and test datasets")->configurable();
  gen_cmd->add_option("--n", gen.n, "Training figures");
  gen_cmd->add_option("--test-n", gen.test_n, "Test figures (0 skips the test split)");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--dims", gen.dims, "Image width and height")->check(CLI::Range(32, 4096));
  gen_cmd->add_option("--channels", gen.channels, "Image channels")->check(CLI::Range(1, 3));
  gen_cmd->add_option("--boxes", gen.boxes, "Scale boxes kept per training figure (0: no crop)");
  gen_cmd->add_option("--test-boxes", gen.test_boxes, "Scale boxes kept per test figure");
  gen_cmd->add_flag("--mirror,!--no-mirror", gen.mirror, "Add mirrored training copies")
      ->default_str("true");
  gen_cmd->add_option("--min-scale", gen.min_scale, "Smallest figure height / image height");
  gen_cmd->add_option("--max-scale", gen.max_scale, "Largest figure height / image height");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a correction model")->configurable();
  train_cmd->add_option("regime", train.regime, "ief, joint, direct or iterdirect")
      ->check(CLI::IsMember({"ief", "joint", "direct", "iterdirect"}));
  train_cmd->add_option("--data", train.data, "Training dataset directory");
  train_cmd->add_option("--L", train.config.bound, "Correction bound in pixels");
  train_cmd->add_option("--steps", train.config.steps, "Curriculum steps T");
  train_cmd->add_option("--epochs-per-stage", train.config.epochs_per_stage, "Epochs per stage N");
  train_cmd->add_option("--sigma", train.config.sigma, "Heatmap sigma in pixels (0: default)");
  double lr = 0.0;
  train_cmd->add_option("--lr", lr, "Learning rate (0: 0.001 for ief/joint, 0.0003 for direct/iterdirect)")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--momentum", train.config.momentum, "Momentum coefficient");
  train_cmd->add_option("--batch", train.config.batch_size, "Batch size");
  train_cmd->add_option("--seed", train.config.seed, "Initialization and shuffling seed");
  train_cmd->add_option("--heatmap-std", train.config.heatmap_std, "Init std of heatmap-channel weights");
  train_cmd->add_option("--curriculum", train.curriculum, "fpc or joint (implied by the regime)");
  train_cmd->add_option("--loss-mask", train.loss_mask, "annotated or all");
  train_cmd->add_option("--subset", train.subset, "Comma-separated keypoints to render and predict");
  train_cmd->add_flag("--stage-checkpoints,!--no-stage-checkpoints", train.stage_checkpoints,
                      "Save a checkpoint after every stage")
      ->default_str("true");

  InferOptionsCli infer_o;
  auto* infer_cmd = app.add_subcommand("infer", "Run the correction loop on a dataset")->configurable();
  infer_cmd->add_option("--model", infer_o.model, "Checkpoint directory");
  infer_cmd->add_option("--data", infer_o.data, "Dataset directory");
  infer_cmd->add_option("--test-steps", infer_o.test_steps, "Correction steps")->check(CLI::NonNegativeNumber);
  infer_cmd->add_option("--early-stop", infer_o.early_stop,
                        "Stop when every correction is shorter than this (pixels, 0: off)");
  infer_cmd->add_flag("--mirror", infer_o.mirror, "Infer on mirrored inputs and map the result back")
      ->default_str("false");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "PCKh/PCP reports and run comparisons")->configurable();
  eval_cmd->add_option("--data", eval.data, "Dataset directory");
  eval_cmd->add_option("--trajectories", eval.trajectories, "Trajectory CSV");
  eval_cmd->add_option("--run", eval.runs, "Additional runs as name=trajectories.csv");
  eval_cmd->add_option("--model", eval.model, "Checkpoint whose predicted keypoints are evaluated");
  eval_cmd->add_option("--keypoints", eval.keypoints, "Comma-separated keypoints to evaluate");
  eval_cmd->add_option("--baseline", eval.baseline, "Run the deltas are taken against");
  eval_cmd->add_option("--note", eval.notes, "Annotation printed under the chart");
  eval_cmd->add_option("--alpha", eval.alpha, "PCKh threshold fraction")->check(CLI::PositiveNumber);

  PlotOptions plot;
  auto* plot_cmd = app.add_subcommand("plot", "Pose overlays and PCKh-by-step curves")->configurable();
  plot_cmd->add_option("--data", plot.data, "Dataset directory");
  plot_cmd->add_option("--trajectories", plot.trajectories, "Trajectory CSV");
  plot_cmd->add_option("--run", plot.runs, "Additional runs as name=trajectories.csv");
  plot_cmd->add_option("--count", plot.count, "Overlays to draw");
  plot_cmd->add_option("--keypoints", plot.keypoints, "Comma-separated keypoints for the curve");
  plot_cmd->add_option("--alpha", plot.alpha, "PCKh threshold fraction")->check(CLI::PositiveNumber);

  SelfCheckConfig check;
  auto* check_cmd = app.add_subcommand("check", "Gradient oracle and invariant suites")->configurable();
  check_cmd->add_option("--seed", check.seed, "Seed of the randomized checks");
  check_cmd->add_option("--epsilon", check.epsilon, "Finite-difference step")->check(CLI::Range(1e-7, 1e-3));
  check_cmd->add_option("--gradient-inputs", check.gradient_inputs, "Random inputs for the gradient check");
  check_cmd->add_option("--gradient-samples", check.gradient_samples, "Parameters checked per input");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const fs::path root(out);
    if (gen_cmd->parsed()) {
      echo_config(app, *gen_cmd, root);
      run_gen(gen, root);
    } else if (train_cmd->parsed()) {
      echo_config(app, *train_cmd, root);
      const bool unbounded = train.regime == "direct" || train.regime == "iterdirect";
      train.config.learning_rate = lr > 0.0 ? lr : unbounded ? kDirectLearningRate : kBoundedLearningRate;
      run_train(train, root);
    } else if (infer_cmd->parsed()) {
      echo_config(app, *infer_cmd, root);
      run_infer(infer_o, root);
    } else if (eval_cmd->parsed()) {
      echo_config(app, *eval_cmd, root);
      run_eval(eval, root);
    } else if (plot_cmd->parsed()) {
      echo_config(app, *plot_cmd, root);
      run_plot(plot, root);
    } else if (check_cmd->parsed()) {
      echo_config(app, *check_cmd, root);
      run_check(check, root);
    }
  } catch (const MissingPath& e) {
    std::cerr << "error [missing_path]: " << e.what() << "\n";
    return kMissingPath;
  } catch (const Contradiction& e) {
    std::cerr << "error [contradiction]: " << e.what() << "\n";
    return kContradiction;
  } catch (const CheckFailed& e) {
    std::cerr << "error [check]: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const Error& e) {
    std::cerr << "error [" << e.category() << "]: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}

}  // namespace ief::cli
