// ana: scene generation, training, evaluation, property checks and timing.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "ana/bench.hpp"
#include "ana/check.hpp"
#include "ana/config.hpp"
#include "ana/errors.hpp"
#include "ana/metrics.hpp"
#include "ana/report.hpp"
#include "ana/scene.hpp"
#include "ana/train.hpp"
#include "ana/weights.hpp"

namespace fs = std::filesystem;
using namespace ana;

namespace {

// Config file first, then --set pairs, then dedicated flags.
struct SettingsArgs {
  std::string config;
  std::vector<std::string> set;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "key = value settings file")->check(CLI::ExistingFile);
    app->add_option("--set", set, "override one setting, key=value (repeatable)");
  }

  Settings resolve() const {
    Settings s = config.empty() ? Settings{} : Settings::load(config);
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
      s.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    reject_unknown_keys(s);
    return s;
  }
};

std::vector<CorrespondenceSet> load_dir(const std::string& dir) {
  const auto files = list_scene_files(dir);
  if (files.empty()) throw ArgumentError("no .scene files in '" + dir + "'");
  std::vector<CorrespondenceSet> scenes;
  scenes.reserve(files.size());
  for (const auto& f : files) {
    try {
      scenes.push_back(read_scene(f.string()));
    } catch (const ParseError& e) {
      throw ParseError(e.line(), f.string() + ": " + e.what());
    }
  }
  return scenes;
}

template <typename T>
std::vector<T> split_list(const std::string& text, T (*parse)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse(item));
  return out;
}

std::size_t parse_size(const std::string& s) {
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw ArgumentError("not a count: '" + s + "'");
  return static_cast<std::size_t>(v);
}

SocForm parse_form(const std::string& s) { return parse_soc_form(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Second-order attention context for correspondence pruning"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "write synthetic labeled scenes");
  SettingsArgs gen_settings;
  gen_settings.add_to(gen);
  std::string gen_out;
  std::size_t gen_count = 1;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of scenes")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "seed of the first scene; scene i uses seed + i");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  SettingsArgs tr_settings;
  tr_settings.add_to(tr);
  std::string tr_data;
  std::string tr_out;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::size_t> tr_steps;
  std::size_t tr_log_every = 100;
  tr->add_option("--data", tr_data, "directory of .scene files (omit to generate scenes on the fly)");
  tr->add_option("--out", tr_out, "weights file")->required();
  tr->add_option("--seed", tr_seed, "initialization seed");
  tr->add_option("--steps", tr_steps, "training steps");
  tr->add_option("--log-every", tr_log_every, "progress interval in steps (0 = silent)");

  // eval
  auto* ev = app.add_subcommand("eval", "precision/recall/F1 by inlier-ratio bucket");
  std::string ev_weights;
  std::string ev_data;
  std::string ev_report;
  std::size_t ev_buckets = 10;
  std::string ev_predictor = "model";
  ev->add_option("--weights", ev_weights, "weights file");
  ev->add_option("--data", ev_data, "directory of labeled .scene files")->required();
  ev->add_option("--report", ev_report, "report path; a .csv twin is written beside it");
  ev->add_option("--buckets", ev_buckets, "inlier-ratio buckets over [0, 1]")->check(CLI::PositiveNumber);
  ev->add_option("--predictor", ev_predictor, "model, all-inlier or oracle")
      ->check(CLI::IsMember({"model", "all-inlier", "oracle"}));

  // bench
  auto* be = app.add_subcommand("bench", "time the SOC forms on one pinned thread");
  std::string be_forms = "cubic,quadratic,linear";
  std::string be_sizes = "2048,4096,8192";
  std::size_t be_trials = 50;
  std::string be_out;
  std::uint64_t be_seed = 0;
  bool be_end_to_end = false;
  bool be_no_flush = false;
  be->add_option("--forms", be_forms, "comma-separated forms");
  be->add_option("--sizes", be_sizes, "comma-separated N, ascending");
  be->add_option("--trials", be_trials, "trials per (form, N)")->check(CLI::PositiveNumber);
  be->add_option("--out", be_out, "report path; a .csv twin is written beside it");
  be->add_option("--seed", be_seed, "input seed");
  be->add_flag("--end-to-end", be_end_to_end, "include softmax map construction and column sums");
  be->add_flag("--no-flush", be_no_flush, "leave caches warm between trials");

  // check
  auto* ch = app.add_subcommand("check", "run the property suite; exit status 0 iff all pass");
  bool ch_fast = false;
  std::string ch_fault = "none";
  std::uint64_t ch_seed = 0;
  ch->add_flag("--fast", ch_fast, "smaller random suites");
  ch->add_option("--inject-fault", ch_fault, "none or quadratic-sign");
  ch->add_option("--seed", ch_seed, "random suite seed");

  // knn
  auto* kn = app.add_subcommand("knn", "inlier ratio among feature-space neighbours per block");
  std::string kn_weights;
  std::string kn_data;
  std::string kn_ks = "1,5,10,20";
  std::string kn_out;
  kn->add_option("--weights", kn_weights, "weights file")->required();
  kn->add_option("--data", kn_data, "directory of labeled .scene files")->required();
  kn->add_option("--ks", kn_ks, "comma-separated neighbour counts");
  kn->add_option("--out", kn_out, "report path; a .csv twin is written beside it");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const Settings s = gen_settings.resolve();
      SceneConfig cfg;
      apply(s, cfg);
      if (gen_seed) cfg.seed = *gen_seed;
      fs::create_directories(gen_out);
      for (std::size_t i = 0; i < gen_count; ++i) {
        SceneConfig c = cfg;
        c.seed = cfg.seed + i;
        const auto scene = c.motion_count > 1 ? generate_multi_motion(c) : generate_scene(c);
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%05zu.scene", i);
        write_scene(scene, fs::path(gen_out) / name);
        // Pixel noise can push a planted inlier past sigma (and an outlier can
        // land on an epipolar line by chance).
        std::size_t lost = 0, gained = 0;
        for (std::size_t r = 0; r < scene.size(); ++r) {
          const bool planted = scene.groups[r] >= 0;
          lost += planted && scene.labels[r] == 0;
          gained += !planted && scene.labels[r] == 1;
        }
        if (lost || gained)
          std::cerr << name << ": " << lost << " planted inlier(s) labeled 0, " << gained
                    << " planted outlier(s) labeled 1\n";
      }
      std::cout << "wrote " << gen_count << " scene(s) to " << gen_out << "\n";
      return 0;
    }

    if (tr->parsed()) {
      const Settings s = tr_settings.resolve();
      TrainConfig cfg;
      apply(s, cfg);
      if (tr_seed) cfg.seed = *tr_seed;
      if (tr_steps) cfg.steps = *tr_steps;
      cfg.validate();
      SceneSource source;
      if (tr_data.empty()) {
        SceneConfig scene;
        apply(s, scene);
        source = synthetic_scenes(scene);
      } else {
        auto scenes = load_dir(tr_data);
        for (std::size_t i = 0; i < scenes.size(); ++i)
          if (!scenes[i].has_labels()) throw ArgumentError("training scene " + std::to_string(i) + " has no labels");
        source = cycle_scenes(std::move(scenes));
      }
      double window = 0.0;
      std::size_t window_n = 0;
      const auto result = train(source, cfg, [&](std::size_t step, double loss) {
        window += loss;
        ++window_n;
        if (tr_log_every && (step + 1) % tr_log_every == 0) {
          std::cerr << "step " << step + 1 << "/" << cfg.steps << "  mean loss " << window / window_n << "\n";
          window = 0.0;
          window_n = 0;
        }
      });
      save_weights(result.params, tr_out);
      if (result.single_class_steps)
        std::cerr << result.single_class_steps << " step(s) had a scene with one empty class\n";
      std::cout << "saved " << result.params.parameter_count() << " parameters to " << tr_out << "\n";
      return 0;
    }

    if (ev->parsed()) {
      const auto scenes = load_dir(ev_data);
      std::optional<ModelParams<float>> params;
      Predictor predictor;
      if (ev_predictor == "model") {
        if (ev_weights.empty()) throw ArgumentError("eval: --weights is required with the model predictor");
        params = load_weights(ev_weights);
        predictor = model_predictor(*params);
      } else if (ev_predictor == "all-inlier") {
        predictor = all_inlier_predictor();
      } else {
        predictor = oracle_predictor();
      }
      const auto report = evaluate(scenes, predictor, ev_buckets);
      const std::string text = format_eval_report(report);
      std::cout << text;
      if (!ev_report.empty()) write_report_pair(ev_report, text, eval_report_csv(report));
      return 0;
    }

    if (be->parsed()) {
      BenchOptions opts;
      opts.forms = split_list<SocForm>(be_forms, parse_form);
      opts.sizes = split_list<std::size_t>(be_sizes, parse_size);
      opts.trials = be_trials;
      opts.seed = be_seed;
      opts.end_to_end = be_end_to_end;
      opts.flush_cache = !be_no_flush;
      opts.log = [](const std::string& line) { std::cerr << line << "\n"; };
      const auto records = bench_forms(opts);
      const std::string text = format_bench_table(records);
      std::cout << text;
      if (!be_out.empty()) write_report_pair(be_out, text, bench_table_csv(records));
      return 0;
    }

    if (ch->parsed()) {
      CheckOptions opts;
      opts.fast = ch_fast;
      opts.seed = ch_seed;
      opts.kernels = with_fault(SocKernels::library(), parse_check_fault(ch_fault));
      const auto lines = run_checks(opts);
      std::cout << format_check_report(lines);
      const bool ok = all_passed(lines);
      std::cout << (ok ? "all properties pass\n" : "property failures\n");
      return ok ? 0 : 1;
    }

    if (kn->parsed()) {
      const auto params = load_weights(kn_weights);
      const auto scenes = load_dir(kn_data);
      const auto ks = split_list<std::size_t>(kn_ks, parse_size);
      const auto table = knn_table(params, scenes, ks);
      const std::string text = format_knn_table(table);
      std::cout << text;
      if (!kn_out.empty()) write_report_pair(kn_out, text, knn_table_csv(table));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
