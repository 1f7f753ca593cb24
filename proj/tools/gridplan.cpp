// gridplan: route planning, synthetic data, CVAE training and evaluation.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cvae.hpp"
#include "dataset.hpp"
#include "metrics.hpp"
#include "osm.hpp"
#include "planner.hpp"
#include "plot.hpp"
#include "scene.hpp"

namespace {

using namespace gridplan;

// Merged run configuration: compiled defaults < config file < flags.
struct RunConfig {
  int horizon = 10;
  int past = 20;
  int future = 20;
  int num_modes = 12;
  int crop_side = 400;
  double crop_resolution = 2.0;
  double spacing = 3.0;
  double lambda_mse = 1.0;
  int plan_embed = 128;
  int scene_embed = 256;
  int gru_hidden = 64;
  int lstm_hidden = 32;
  double lr = 1e-3;
  int epochs = 10;
  int batch = 8;
  uint64_t seed = 1;
  int threads = 1;
  std::string variant = "STPF";
};

nlohmann::ordered_json config_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["horizon"] = c.horizon;
  j["past"] = c.past;
  j["future"] = c.future;
  j["num_modes"] = c.num_modes;
  j["crop_side"] = c.crop_side;
  j["crop_resolution"] = c.crop_resolution;
  j["spacing"] = c.spacing;
  j["lambda_mse"] = c.lambda_mse;
  j["plan_embed"] = c.plan_embed;
  j["scene_embed"] = c.scene_embed;
  j["gru_hidden"] = c.gru_hidden;
  j["lstm_hidden"] = c.lstm_hidden;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["variant"] = c.variant;
  return j;
}

void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  nlohmann::json j;
  f >> j;
  c.horizon = j.value("horizon", c.horizon);
  c.past = j.value("past", c.past);
  c.future = j.value("future", c.future);
  c.num_modes = j.value("num_modes", c.num_modes);
  c.crop_side = j.value("crop_side", c.crop_side);
  c.crop_resolution = j.value("crop_resolution", c.crop_resolution);
  c.spacing = j.value("spacing", c.spacing);
  c.lambda_mse = j.value("lambda_mse", c.lambda_mse);
  c.plan_embed = j.value("plan_embed", c.plan_embed);
  c.scene_embed = j.value("scene_embed", c.scene_embed);
  c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.variant = j.value("variant", c.variant);
}

void validate(const RunConfig& c) {
  if (c.horizon < 1 || c.past < 0 || c.future < 1 || c.num_modes < 1 ||
      c.crop_side < 2 || c.crop_resolution <= 0.0 || c.spacing <= 0.0 ||
      c.lr <= 0.0 || c.epochs < 1 || c.batch < 1 || c.threads < 1)
    throw std::invalid_argument("invalid run configuration");
  plan_variant_from_string(c.variant);  // throws on bad name
}

ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  m.past = c.past;
  m.future = c.future;
  m.crop_side = c.crop_side;
  m.crop_resolution = c.crop_resolution;
  m.horizon = c.horizon;
  m.num_modes = c.num_modes;
  m.plan_embed = c.plan_embed;
  m.scene_embed = c.scene_embed;
  m.gru_hidden = c.gru_hidden;
  m.lstm_hidden = c.lstm_hidden;
  m.lambda_mse = c.lambda_mse;
  return m;
}

DatasetConfig dataset_config(const RunConfig& c) {
  DatasetConfig d;
  d.horizon = c.horizon;
  d.past = c.past;
  d.future = c.future;
  d.spacing = c.spacing;
  d.crop = GridSpec::from_resolution(
      c.crop_resolution, c.crop_side / (2.0 * c.crop_resolution));
  d.variant = plan_variant_from_string(c.variant);
  return d;
}

OsmDocument read_osm(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open OSM file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_osm(ss.str());
}

std::vector<ScenarioSpec> preset_scenarios(const std::string& names) {
  std::vector<ScenarioSpec> out;
  std::stringstream ss(names);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name == "straight")
      out.push_back(straight_scenario());
    else if (name == "four_way")
      out.push_back(four_way_scenario());
    else if (name == "four_way_stops")
      out.push_back(four_way_scenario(110.0, 7.0, false));
    else if (name == "three_way")
      out.push_back(three_way_scenario());
    else if (name == "u_turn")
      out.push_back(u_turn_scenario());
    else if (name == "sharp_turn")
      out.push_back(sharp_turn_scenario());
    else
      throw std::invalid_argument("unknown scenario preset '" + name + "'");
  }
  if (out.empty()) throw std::invalid_argument("no scenarios requested");
  return out;
}

Sample sample_at(const Dataset& d, int index) {
  if (index < 0 || index >= static_cast<int>(d.samples.size()))
    throw std::runtime_error("sample index " + std::to_string(index) +
                             " out of range (dataset has " +
                             std::to_string(d.samples.size()) + ")");
  return d.samples[static_cast<size_t>(index)];
}

CvaeModel load_model(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("checkpoint not found: " + path);
  return CvaeModel::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridplan: plan-conditioned trajectory prediction pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  RunConfig cfg;
  // config file resolves before flag parsing: --config beats GRIDPLAN_CONFIG
  std::string config_path;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
  if (config_path.empty())
    if (const char* env = std::getenv("GRIDPLAN_CONFIG")) config_path = env;

  try {
    if (!config_path.empty()) apply_config_file(cfg, config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  std::string config_flag;  // consumed by the pre-scan above
  app.add_option("--config", config_flag, "JSON run-config file");
  app.add_option("--horizon", cfg.horizon, "decoded waypoints H");
  app.add_option("--past", cfg.past, "plan rows before ego P");
  app.add_option("--future", cfg.future, "plan rows from ego F");
  app.add_option("--modes", cfg.num_modes, "latent modes K");
  app.add_option("--crop-side", cfg.crop_side, "scene crop side L");
  app.add_option("--crop-res", cfg.crop_resolution, "crop pixels per meter D");
  app.add_option("--spacing", cfg.spacing, "waypoint spacing, meters");
  app.add_option("--lambda", cfg.lambda_mse, "MSE loss weight");
  app.add_option("--plan-embed", cfg.plan_embed, "plan embedding width");
  app.add_option("--scene-embed", cfg.scene_embed, "scene embedding width");
  app.add_option("--gru-hidden", cfg.gru_hidden, "decoder GRU width");
  app.add_option("--lstm-hidden", cfg.lstm_hidden, "recognition LSTM width");
  app.add_option("--lr", cfg.lr, "Adam learning rate");
  app.add_option("--epochs", cfg.epochs, "training epochs");
  app.add_option("--batch", cfg.batch, "batch size");
  app.add_option("--seed", cfg.seed, "global RNG seed");
  app.add_option("--threads", cfg.threads, "worker threads (1 keeps runs deterministic)");
  app.add_option("--variant", cfg.variant, "plan variant: PF, STPF, STCPF");

  // plan
  auto* plan = app.add_subcommand("plan", "route + ego pose to a plan graph");
  std::string osm_path, ego_str = "0,0,0";
  int64_t src = 0, dst = 0;
  plan->add_option("--osm", osm_path, "OSM XML file")->required();
  plan->add_option("--src", src, "source node id")->required();
  plan->add_option("--dst", dst, "destination node id")->required();
  plan->add_option("--ego", ego_str, "ego pose x,y,theta in the frame of the route's first node");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string presets = "straight,four_way,u_turn,sharp_turn";
  std::string scen_file, synth_out = "dataset.tnds", split = "train";
  int per_scenario = 16;
  synth->add_option("--presets", presets, "comma list: straight, four_way, four_way_stops, three_way, u_turn, sharp_turn");
  synth->add_option("--scenarios", scen_file, "JSON file with a list of scenario specs (overrides --presets)");
  synth->add_option("--per", per_scenario, "samples per scenario")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "output dataset path");
  synth->add_option("--split", split, "split label");

  // train
  auto* train = app.add_subcommand("train", "train the CVAE");
  std::string data_path, ckpt_dir = "checkpoints", loss_csv;
  std::string init_from;
  int keep_last = 3;
  bool quiet = false;
  train->add_option("--data", data_path, "training dataset (.tnds)")->required();
  train->add_option("--out", ckpt_dir, "checkpoint directory");
  train->add_option("--loss-csv", loss_csv, "per-epoch loss CSV path");
  train->add_option("--init-from", init_from, "warm-start checkpoint");
  train->add_option("--keep-last", keep_last, "epoch checkpoints retained");
  train->add_flag("--quiet", quiet, "suppress per-epoch loss lines");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_data, eval_ckpt, eval_csv, eval_label = "gridplan";
  eval->add_option("--data", eval_data, "dataset (.tnds)")->required();
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--csv", eval_csv, "also write the report as CSV");
  eval->add_option("--label", eval_label, "row label in the report table");

  // infer
  auto* infer = app.add_subcommand("infer", "predict one sample");
  std::string inf_data, inf_ckpt, inf_out, inf_svg;
  int inf_index = 0;
  infer->add_option("--data", inf_data, "dataset (.tnds)")->required();
  infer->add_option("--checkpoint", inf_ckpt, "model checkpoint")->required();
  infer->add_option("--index", inf_index, "sample index");
  infer->add_option("--out", inf_out, "trajectory JSON path (default stdout)");
  infer->add_option("--svg", inf_svg, "optional SVG render path");

  // bench
  auto* bench = app.add_subcommand("bench", "single-sample inference latency");
  std::string bench_ckpt, bench_data;
  int bench_n = 100;
  bench->add_option("--checkpoint", bench_ckpt, "model checkpoint")->required();
  bench->add_option("--data", bench_data, "dataset for input samples (synthesized when omitted)");
  bench->add_option("--n", bench_n, "iterations")->check(CLI::PositiveNumber);

  // plot
  auto* plot = app.add_subcommand("plot", "render a sample to SVG");
  std::string plot_data, plot_pred, plot_out = "sample.svg";
  int plot_index = 0;
  plot->add_option("--data", plot_data, "dataset (.tnds)")->required();
  plot->add_option("--sample", plot_index, "sample index");
  plot->add_option("--pred", plot_pred, "predicted trajectory JSON");
  plot->add_option("--out", plot_out, "output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // exit 0 with the help text
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  try {
    validate(cfg);
    std::cerr << "config " << config_json(cfg).dump() << "\n";

    if (*plan) {
      OsmDocument doc = read_osm(osm_path);
      RoadGraph g = build_road_graph(doc.nodes, doc.ways);
      Route route;
      try {
        route = shortest_route(g, src, dst);
      } catch (const NoRouteError& e) {
        std::cerr << "no route: " << e.what() << "\n";
        return 2;
      }
      double ex = 0.0, ey = 0.0, eh = 0.0;
      if (std::sscanf(ego_str.c_str(), "%lf,%lf,%lf", &ex, &ey, &eh) != 3)
        throw std::invalid_argument("--ego expects x,y,theta");
      GeoPoint origin = g.nodes.at(route.node_ids.front()).location;
      auto pts = route_local_points(route, g, origin);
      size_t idx = match_waypoint(pts, {ex, ey});
      double heading = estimate_heading(pts, idx);
      PlanGraph pg = build_plan_graph(route, g, pts, idx, heading,
                                      plan_variant_from_string(cfg.variant),
                                      cfg.past, cfg.future);
      std::cout << plan_graph_to_json(pg) << "\n";
      return 0;
    }

    if (*synth) {
      std::vector<ScenarioSpec> scenarios;
      if (!scen_file.empty()) {
        std::ifstream f(scen_file);
        if (!f) throw std::runtime_error("cannot open " + scen_file);
        nlohmann::json j;
        f >> j;
        for (const auto& item : j)
          scenarios.push_back(scenario_from_json(item.dump()));
      } else {
        scenarios = preset_scenarios(presets);
      }
      SynthOptions opt;
      opt.config = dataset_config(cfg);
      SynthStats stats;
      Dataset d = generate_synthetic(scenarios, per_scenario, cfg.seed, opt,
                                     &stats);
      d.split = split;
      save_dataset(d, synth_out);
      std::cerr << "generated " << stats.generated << " samples ("
                << stats.skipped << " skipped) -> " << synth_out << "\n";
      return 0;
    }

    if (*train) {
      Dataset d = load_dataset(data_path);
      CvaeModel model = init_from.empty()
                            ? [&] {
                                CvaeModel m(model_config(cfg));
                                m.init(cfg.seed);
                                return m;
                              }()
                            : load_model(init_from);
      TrainOptions opt;
      opt.epochs = cfg.epochs;
      opt.batch_size = cfg.batch;
      opt.seed = cfg.seed;
      opt.adam.lr = cfg.lr;
      opt.checkpoint_dir = ckpt_dir;
      opt.keep_last = keep_last;
      opt.loss_csv = loss_csv;
      opt.verbose = !quiet;
      TrainStats stats = train_model(model, d, opt);
      std::cerr << "final loss " << stats.epoch_total.back() << "\n";
      return 0;
    }

    if (*eval) {
      Dataset d = load_dataset(eval_data);
      CvaeModel model = load_model(eval_ckpt);
      MetricsReport rep = evaluate(model, d);
      std::cout << report_table({{eval_label, rep}});
      if (!eval_csv.empty()) {
        std::ofstream f(eval_csv);
        f << report_csv(rep);
      }
      return 0;
    }

    if (*infer) {
      Dataset d = load_dataset(inf_data);
      CvaeModel model = load_model(inf_ckpt);
      Sample s = sample_at(d, inf_index);
      Trajectory pred = model.infer(s);
      nlohmann::ordered_json j;
      j["index"] = inf_index;
      j["waypoints"] = nlohmann::json::array();
      for (const auto& wp : pred.waypoints)
        j["waypoints"].push_back({wp.x, wp.y});
      std::string text = j.dump();
      if (inf_out.empty()) {
        std::cout << text << "\n";
      } else {
        std::ofstream f(inf_out);
        f << text << "\n";
      }
      if (!inf_svg.empty()) write_plot_svg(inf_svg, s, &pred);
      return 0;
    }

    if (*bench) {
      CvaeModel model = load_model(bench_ckpt);
      Sample s;
      if (!bench_data.empty()) {
        s = sample_at(load_dataset(bench_data), 0);
      } else {
        SynthOptions opt;
        const ModelConfig& mc = model.config();
        opt.config.horizon = mc.horizon;
        opt.config.past = mc.past;
        opt.config.future = mc.future;
        opt.config.crop = GridSpec::from_resolution(
            mc.crop_resolution, mc.crop_side / (2.0 * mc.crop_resolution));
        Dataset d = generate_synthetic({straight_scenario()}, 1, cfg.seed, opt);
        s = d.samples.at(0);
      }
      std::vector<double> ms(static_cast<size_t>(bench_n));
      for (auto& sample_ms : ms) {
        auto t0 = std::chrono::steady_clock::now();
        volatile double sink = model.infer(s).waypoints.back().x;
        (void)sink;
        auto t1 = std::chrono::steady_clock::now();
        sample_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      }
      std::vector<double> sorted = ms;
      std::sort(sorted.begin(), sorted.end());
      double mean = 0.0;
      for (double v : ms) mean += v;
      mean /= ms.size();
      size_t params = model.params().total_values();
      std::printf("params %zu\n", params);
      std::printf("inference ms: mean %.3f p50 %.3f p99 %.3f (n=%d)\n", mean,
                  sorted[sorted.size() / 2],
                  sorted[std::min(sorted.size() - 1,
                                  static_cast<size_t>(sorted.size() * 0.99))],
                  bench_n);
      return 0;
    }

    if (*plot) {
      Dataset d = load_dataset(plot_data);
      Sample s = sample_at(d, plot_index);
      Trajectory pred;
      bool have_pred = false;
      if (!plot_pred.empty()) {
        std::ifstream f(plot_pred);
        if (!f) throw std::runtime_error("cannot open " + plot_pred);
        nlohmann::json j;
        f >> j;
        for (const auto& wp : j.at("waypoints"))
          pred.waypoints.push_back({wp.at(0).get<double>(),
                                    wp.at(1).get<double>()});
        have_pred = true;
      }
      write_plot_svg(plot_out, s, have_pred ? &pred : nullptr);
      return 0;
    }
  } catch (const NoRouteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const OffRouteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
