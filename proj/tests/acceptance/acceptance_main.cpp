// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion A1..A10. The training
// criteria share one desk-scale dataset and the models trained on it.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "ief/data.hpp"
#include "ief/evaluation.hpp"
#include "ief/inference.hpp"
#include "ief/io.hpp"
#include "ief/model.hpp"
#include "ief/pose.hpp"
#include "ief/predictor.hpp"
#include "ief/rng.hpp"
#include "ief/training.hpp"
#include "metric_oracle.hpp"

namespace fs = std::filesystem;
using namespace ief;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string pts(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

struct Outcome {
  bool passed = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Desk-scale experiment state, built on first use.

struct Desk {
  std::size_t figures = 2500;
  std::size_t test_figures = 500;
  std::uint64_t seed = 7;
  fs::path out;

  std::optional<Dataset> train, test;
  std::map<std::string, Model> models;
  std::map<std::string, double> train_seconds;
  double data_seconds = 0.0;

  const Skeleton& skeleton() const { return stick_figure_skeleton(); }

  void ensure_data() {
    if (train) return;
    const auto t0 = Clock::now();
    GeneratorConfig g;
    PrepareConfig tp;
    tp.boxes = 1;
    tp.mirror = true;
    train = make_dataset(prepare_examples(generate_examples(seed, 0, figures, g), skeleton(), tp), skeleton(),
                         seed, "boxes=1 mirrored");
    PrepareConfig vp = tp;
    vp.mirror = false;
    test = make_dataset(prepare_examples(generate_examples(seed, figures, test_figures, g), skeleton(), vp),
                        skeleton(), seed, "boxes=1");
    data_seconds = seconds_since(t0);
    std::cerr << "data: " << train->examples.size() << " train, " << test->examples.size() << " test ("
              << io::fixed4(data_seconds) << " s)\n";
  }

  TrainConfig base_config() const {
    TrainConfig c;
    c.seed = seed;
    return c;
  }

  const Model& model(const std::string& name) {
    if (auto it = models.find(name); it != models.end()) return it->second;
    ensure_data();
    const auto t0 = Clock::now();
    TrainConfig c = base_config();
    TrainResult r;
    if (name == "ief") {
      r = fpc_train(*train, c);
    } else if (name == "joint") {
      c.curriculum = Curriculum::joint;
      r = joint_train(*train, c);
    } else if (name == "direct") {
      c.learning_rate = kDirectLearningRate;
      r = direct_train(*train, c);
    } else if (name == "iterdirect") {
      c.learning_rate = kDirectLearningRate;
      r = iterative_direct_train(*train, c);
    } else if (name == "left_foot") {
      r = fpc_train(*train, channel_subset_config(c, {stick::kLeftFoot}));
    } else if (name == "left_foot+pelvis") {
      r = fpc_train(*train, channel_subset_config(c, {stick::kLeftFoot, stick::kPelvis}));
    } else {
      throw std::logic_error("unknown model " + name);
    }
    train_seconds[name] = seconds_since(t0);
    std::cerr << "trained " << name << ": " << r.updates << " updates (" << io::fixed4(train_seconds[name])
              << " s)\n";
    if (!out.empty()) {
      save_model(r.model, out / "models" / name);
      io::write_text(out / "models" / (name + "_log.csv"), format_log(r.log));
    }
    return models.emplace(name, std::move(r.model)).first->second;
  }

  // The direct baseline predicts in one shot; every other regime runs 3 steps.
  MetricReport report(const std::string& name, std::optional<std::vector<int>> keypoints = std::nullopt) {
    const Model& m = model(name);
    InferOptions o;
    o.steps = name == "direct" ? 1 : 3;
    const auto t = batch_infer(test->examples, m, o);
    return evaluate(t, test->examples, skeleton(), keypoints.value_or(m.layout.predicted));
  }

  std::map<std::string, MetricReport> reports;
  const MetricReport& cached_report(const std::string& name) {
    if (auto it = reports.find(name); it != reports.end()) return it->second;
    return reports.emplace(name, report(name)).first->second;
  }

  std::uint64_t updates(const std::string& name) { return model(name).params.version; }
};

// ---------------------------------------------------------------------------

// Dense uniform inputs: every weight sees nonzero activity. Rendered inputs
// are exactly zero away from the keypoints, which leaves many parameters with
// gradients below what a double-precision central difference can resolve.
Outcome check_a1(std::uint64_t seed) {
  const auto t0 = Clock::now();
  const KeypointLayout layout = KeypointLayout::standard(stick_figure_skeleton());
  const NetSpec spec = net_spec_for(layout, 64, 64, 1);
  Rng rng(seed);
  const PredictorParams<double> params = init_params<double>(spec, rng);

  constexpr int kInputs = 10;
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  for (int n = 0; n < kInputs; ++n) {
    AugmentedInput input(spec.width, spec.height, spec.image_channels, spec.in_channels - spec.image_channels);
    for (float& v : input.data) v = float(rng.uniform());
    Correction target;
    for (std::size_t i = 0; i < layout.predicted.size(); ++i) {
      target.deltas.push_back({rng.normal(0, 3), rng.normal(0, 3)});
    }
    const auto r = gradient_check(params, input, target, std::vector<bool>(layout.predicted.size(), true), 1e-6,
                                  20, rng);
    checked += r.checked;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = r.worst_parameter;
    }
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "max relative error %.3e (%s) over %zu parameters on %d inputs, eps 1e-6, %.1f s",
                worst, worst_name.c_str(), checked, kInputs, secs);
  return {worst < 1e-4 && checked >= 200 && secs < 60.0, buf};
}

Outcome check_a2(std::uint64_t seed) {
  Rng rng(seed);
  constexpr int kCases = 100000;
  constexpr long double kSlack = 1e-10L;  // displacements this close to L land exactly
  std::size_t clipped = 0, failures = 0;
  long double worst_excess = 0, worst_cross = 0, worst_dir = 0;
  for (int n = 0; n < kCases; ++n) {
    const double bound = std::exp(rng.uniform(std::log(0.05), std::log(50.0)));
    double r = bound * std::exp(rng.uniform(-6, 4));
    if (n % 10 == 0) r = bound;
    const double angle = rng.uniform(0, 6.283185307179586);
    const Vec2 from{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const Vec2 to{from.x + r * std::cos(angle), from.y + r * std::sin(angle)};
    const Correction c = bounded_correction(Pose::annotated({to}), Pose::annotated({from}), bound, {true});
    const Vec2 d = c.deltas[0];
    const Vec2 u = to - from;
    const long double ux = u.x, uy = u.y, dx = d.x, dy = d.y;
    const long double ul = std::sqrt(ux * ux + uy * uy), dl = std::sqrt(dx * dx + dy * dy);
    const long double excess = dl - bound;
    const long double cross = std::fabs(dx * uy - dy * ux);
    bool ok = excess <= kSlack && cross < 1e-9L;
    if (ul > bound + kSlack) {
      ++clipped;
      const long double dev = std::max(std::fabs(dx - bound * ux / ul), std::fabs(dy - bound * uy / ul));
      worst_dir = std::max(worst_dir, dev / bound);
      ok = ok && dev <= 1e-14L * bound;
    }
    worst_excess = std::max(worst_excess, excess);
    worst_cross = std::max(worst_cross, cross);
    failures += !ok;
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "%d cases (%zu clipped): max |delta|-L %.2Le, max |cross| %.2Le, max rel deviation from L*u/|u| "
                "%.2Le, %zu failures",
                kCases, clipped, worst_excess, worst_cross, worst_dir, failures);
  return {failures == 0, buf};
}

Outcome check_a3(std::uint64_t seed) {
  Rng rng(seed);
  constexpr int kCases = 10000;
  std::size_t failures = 0, max_steps = 0;
  for (int n = 0; n < kCases; ++n) {
    const int k = 1 + int(rng.below(7));
    const double bound = std::exp(rng.uniform(std::log(0.5), std::log(20.0)));
    std::vector<Vec2> a, b;
    for (int i = 0; i < k; ++i) {
      a.push_back({rng.uniform(-20, 84), rng.uniform(-20, 84)});
      b.push_back({rng.uniform(-20, 84), rng.uniform(-20, 84)});
    }
    const Pose y0 = Pose::annotated(a), y = Pose::annotated(b);
    long double longest = 0;
    for (int i = 0; i < k; ++i) {
      const long double dx = (long double)b[i].x - a[i].x, dy = (long double)b[i].y - a[i].y;
      longest = std::max(longest, std::sqrt(dx * dx + dy * dy));
    }
    const std::size_t need = std::size_t(std::ceil(longest / bound));
    max_steps = std::max(max_steps, need);
    const FixedPath p = fixed_path(y0, y, bound, int(need) + 3);
    bool ok = need == 0 || !(p.poses[need - 1].points == y.points);
    for (std::size_t s = need; s < p.poses.size(); ++s) ok = ok && p.poses[s].points == y.points;
    for (std::size_t s = need; s < p.targets.size(); ++s) ok = ok && p.targets[s].max_norm() == 0.0;
    failures += !ok;
  }
  return {failures == 0, std::to_string(kCases) + " cases up to " + std::to_string(max_steps) +
                             " steps, " + std::to_string(failures) + " failures"};
}

Outcome check_a4(Desk& desk, const fs::path& out) {
  const auto t0 = Clock::now();
  const MetricReport& ief = desk.cached_report("ief");
  const MetricReport& direct = desk.cached_report("direct");
  const MetricReport& iter = desk.cached_report("iterdirect");
  const double secs = seconds_since(t0);
  const double f = ief.group("FBody"), d = direct.group("FBody"), i = iter.group("FBody");
  const bool matched = desk.updates("ief") == desk.updates("direct") && desk.updates("ief") == desk.updates("iterdirect");
  if (!out.empty()) {
    std::vector<std::pair<std::string, MetricReport>> runs{{"direct", direct}, {"iterdirect", iter}, {"ief", ief}};
    const Comparison c = compare_report(runs, 0);
    io::write_text(out / "a4_comparison.csv", comparison_csv(c));
    io::write_text(out / "a4_comparison.svg", comparison_svg(c));
  }
  const bool ok = matched && f >= d + 0.03 && f >= i + 0.03 && secs < 45 * 60;
  return {ok, "FBody PCKh@0.5 IEF " + pts(f) + " vs direct " + pts(d) + " vs iterative direct " + pts(i) + ", " +
                  std::to_string(desk.updates("ief")) + " updates each" + (matched ? "" : " (NOT matched)") +
                  ", " + std::to_string(int(secs)) + " s"};
}

Outcome check_a5(Desk& desk, const fs::path& out) {
  const auto& curve = desk.cached_report("ief").per_step;
  bool ok = curve.size() == 4;
  std::string text;
  for (std::size_t t = 0; t < curve.size(); ++t) {
    text += (t ? " -> " : "") + pts(curve[t]);
    if (t > 0) ok = ok && curve[t] >= curve[t - 1] - 0.01;
  }
  ok = ok && curve.back() >= curve.front() + 0.15;
  if (!out.empty()) {
    std::vector<std::pair<std::string, std::vector<double>>> curves{{"ief", curve},
                                                                     {"joint", desk.cached_report("joint").per_step}};
    io::write_text(out / "a5_curve.svg", curve_svg(curves, "FBody PCKh@0.5 by step"));
  }
  return {ok, "FBody PCKh by step " + text};
}

Outcome check_a6(Desk& desk) {
  const double f = desk.cached_report("ief").group("FBody");
  const double j = desk.cached_report("joint").group("FBody");
  const bool matched = desk.updates("ief") == desk.updates("joint");
  return {matched && f >= j + 0.02, "step-3 FBody FPC " + pts(f) + " vs joint " + pts(j) +
                                        (matched ? ", matched updates" : ", updates NOT matched")};
}

Outcome check_a7(Desk& desk) {
  const std::vector<int> lf{stick::kLeftFoot};
  const double single = desk.report("left_foot", lf).keypoint("left_foot");
  const double pair = desk.report("left_foot+pelvis", lf).keypoint("left_foot");
  const double all = desk.cached_report("ief").keypoint("left_foot");
  const double direct = desk.cached_report("direct").keypoint("left_foot");
  const bool ordered = single <= pair + 0.01 && pair <= all + 0.01;
  const bool above = single > direct && pair > direct && all > direct;
  return {ordered && above, "left-foot PCKh direct " + pts(direct) + ", single " + pts(single) + ", pair " +
                                pts(pair) + ", all " + pts(all)};
}

Outcome check_a8(std::uint64_t seed) {
  Rng rng(seed);
  constexpr int kCases = 10000;
  std::size_t mismatches = 0, boundary = 0;
  for (int n = 0; n < kCases; ++n) {
    const auto c = testing::random_lattice_instance(rng, 2 + int(rng.below(6)));
    std::size_t deg = 0;
    const auto want_pcp = testing::oracle_pcp(c, &deg);
    const PcpResult got = pcp(c.predicted(), c.truth(), c.limbs, 0.5);
    mismatches += pckh(c.predicted(), c.truth(), double(2 * c.half_ref), 0.5) != testing::oracle_pckh(c);
    mismatches += got.hits != want_pcp || got.degenerate != deg;
    for (std::size_t k = 0; k < c.tx.size(); ++k) {
      boundary += testing::sq(c.px[k] - c.tx[k]) + testing::sq(c.py[k] - c.ty[k]) == testing::sq(c.half_ref);
    }
  }
  return {mismatches == 0, std::to_string(kCases) + " lattice instances, " + std::to_string(boundary) +
                               " keypoints exactly on the threshold, " + std::to_string(mismatches) + " mismatches"};
}

// The training log records wall time, the one column that may differ.
std::string strip_wall_time(const std::string& log) {
  std::string out;
  for (const std::string& line : io::split(log, '\n')) {
    auto f = io::split(line, ',');
    if (f.size() == 6) f.erase(f.begin() + 4);
    out += io::join(f, ',') + "\n";
  }
  return out;
}

// Byte-for-byte comparison of two directory trees, training-log wall time aside.
std::vector<std::string> tree_differences(const fs::path& a, const fs::path& b, std::size_t* files) {
  std::set<std::string> names;
  for (const fs::path& root : {a, b}) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) names.insert(fs::relative(e.path(), root).string());
    }
  }
  std::vector<std::string> diff;
  for (const std::string& n : names) {
    if (!fs::exists(a / n) || !fs::exists(b / n)) {
      diff.push_back(n);
    } else if (n.ends_with("train_log.csv")) {
      if (strip_wall_time(io::read_text(a / n)) != strip_wall_time(io::read_text(b / n))) diff.push_back(n);
    } else if (io::read_bytes(a / n) != io::read_bytes(b / n)) {
      diff.push_back(n);
    }
  }
  *files = names.size();
  return diff;
}

Outcome check_a9(const std::string& cli, const fs::path& work) {
  if (cli.empty() || !fs::exists(cli)) return {false, "CLI binary '" + cli + "' not found"};
  const std::vector<std::string> steps{
      "--threads 1 --out data gen --n 200 --test-n 50 --boxes 1 --seed 7",
      "--threads 1 --out model train ief --data data/train --seed 7",
      "--threads 1 --out infer infer --model model/model --data data/test",
      "--threads 1 --out eval eval --data data/test --trajectories infer/trajectories.csv",
  };
  for (const char* run : {"run_a", "run_b"}) {
    const fs::path dir = work / run;
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const std::string& s : steps) {
      // Each step is its own process, so nothing carries over in memory.
      const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + s + " > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    }
  }
  std::size_t files = 0;
  const auto diff = tree_differences(work / "run_a", work / "run_b", &files);
  std::string text = std::to_string(files) + " files compared (checkpoints, trajectories, reports, configs)";
  if (!diff.empty()) text += ", differing: " + io::join(diff, ' ');
  return {diff.empty() && files > 0, text};
}

Outcome check_a10(Desk& desk) {
  const Model& m = desk.model("ief");
  const double plain = desk.cached_report("ief").group("FBody");
  std::vector<Trajectory> t;
  InferOptions o;
  for (const Example& ex : desk.test->examples) {
    t.push_back(unmirror(infer_example(mirror(ex, desk.skeleton()), m, o), ex.image.width, desk.skeleton()));
  }
  const double mirrored = evaluate(t, desk.test->examples, desk.skeleton(), m.layout.predicted).group("FBody");
  return {std::fabs(plain - mirrored) < 0.02, "FBody PCKh " + pts(plain) + " plain vs " + pts(mirrored) + " mirrored"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria A1..A10"};
  std::string out = "acceptance_out";
  std::string cli = IEF_CLI_PATH;
  std::vector<std::string> only;
  std::uint64_t seed = 7;
  app.add_option("--out", out, "Directory for models, reports and the reproducibility runs");
  app.add_option("--cli", cli, "Path of the ief binary used by A9");
  app.add_option("--only", only, "Run just these criteria, e.g. --only A1 A8");
  app.add_option("--seed", seed, "Seed of the randomized criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path out_dir = fs::absolute(out);
  fs::create_directories(out_dir);
  Desk desk;
  desk.out = out_dir;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1", [&] { return check_a1(seed); }},
      {"A2", [&] { return check_a2(seed); }},
      {"A3", [&] { return check_a3(seed); }},
      {"A4", [&] { return check_a4(desk, out_dir); }},
      {"A5", [&] { return check_a5(desk, out_dir); }},
      {"A6", [&] { return check_a6(desk); }},
      {"A7", [&] { return check_a7(desk); }},
      {"A8", [&] { return check_a8(seed); }},
      {"A9", [&] { return check_a9(cli, out_dir / "repro"); }},
      {"A10", [&] { return check_a10(desk); }},
  };

  std::string summary;
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {false, std::string("error: ") + e.what()};
    }
    const std::string line = name + " " + (r.passed ? "PASS" : "FAIL") + " " + r.detail;
    std::cout << line << std::endl;
    summary += line + "\n";
    failed += !r.passed;
  }
  io::write_text(out_dir / "acceptance.txt", summary);
  return failed == 0 ? 0 : 1;
}
