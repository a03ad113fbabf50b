#include "loadshare/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "loadshare/io.hpp"

#include "CLI11.hpp"

namespace loadshare::cli {

namespace fs = std::filesystem;
using io::format_double;
using io::format_int;

namespace {

std::string timeseries_csv(const harness::CaseRun& run, int n_c) {
  std::vector<std::string> header = {"time_s", "target_kg_s"};
  for (int c = 0; c < n_c; ++c) header.push_back("flow_" + std::to_string(c + 1));
  header.push_back("pr");
  for (int c = 0; c < n_c; ++c)
    header.push_back("eta_true_" + std::to_string(c + 1));
  for (int c = 0; c < n_c; ++c)
    header.push_back("eta_model_" + std::to_string(c + 1));
  header.insert(header.end(),
                {"plant_power_w", "predicted_power_w", "settled"});
  std::vector<std::vector<std::string>> rows;
  rows.reserve(run.steps.size());
  for (const auto& s : run.steps) {
    std::vector<std::string> row = {format_double(s.time),
                                    format_double(s.target)};
    for (double f : s.flows) row.push_back(format_double(f));
    row.push_back(format_double(s.pr));
    for (double e : s.eta_true) row.push_back(format_double(e));
    for (double e : s.eta_model) row.push_back(format_double(e));
    row.push_back(format_double(s.plant_power));
    row.push_back(format_double(s.predicted_power));
    row.push_back(s.settled ? "1" : "0");
    rows.push_back(std::move(row));
  }
  return io::build_csv(header, rows);
}

std::string dataset_csv(const harness::CaseRun& run, int compressor) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : run.samples) {
    if (s.compressor != compressor) continue;
    rows.push_back({format_double(s.time), format_double(s.mdot),
                    format_double(s.pr), format_double(s.eta_est),
                    format_double(s.target), s.admitted ? "1" : "0"});
  }
  return io::build_csv({"time", "mdot", "pr", "eta_est", "target", "admitted_flag"},
                       rows);
}

std::string solves_jsonl(const harness::CaseRun& run) {
  std::string out;
  for (const auto& d : run.solves) {
    nlohmann::ordered_json j;
    j["time"] = d.time;
    j["target"] = d.target;
    j["starts"] = d.starts_used;
    j["iterations"] = d.iterations;
    j["kkt_residual"] = d.kkt_residual;
    j["status"] = d.status;
    j["clamped_model"] = d.clamped_model_seen;
    j["predicted_power"] = d.predicted_power;
    out += j.dump();
    out += '\n';
  }
  return out;
}

const surrogate::PolyPrior* prior_of(const surrogate::MapModel& model) {
  if (const auto* r = std::get_if<surrogate::ResidualModel>(&model))
    return &r->prior;
  if (const auto* p = std::get_if<surrogate::PolyOnlyModel>(&model))
    return &p->prior;
  return nullptr;
}

}  // namespace

nlohmann::ordered_json build_summary(const config::RunConfig& cfg,
                                     const std::vector<harness::CaseRun>& runs) {
  nlohmann::ordered_json summary;
  summary["cases"] = nlohmann::ordered_json::object();
  for (const auto& run : runs) {
    nlohmann::ordered_json c;
    c["total_energy_j"] = run.cumulative_energy;
    nlohmann::ordered_json rmse = nlohmann::ordered_json::array();
    for (size_t i = 0; i < run.final_models.size(); ++i) {
      std::vector<surrogate::MapModel> one(run.final_models.size(),
                                           run.final_models[i]);
      // RMSE of this compressor's model along its own visited points.
      double acc = 0.0;
      long count = 0;
      for (const auto& rec : run.steps) {
        if (!rec.settled) continue;
        const double m = rec.flows[i];
        const double truth = thermo::true_efficiency(
            cfg.batch.station.plant.maps[i], m, rec.pr);
        const double model =
            surrogate::model_efficiency(run.final_models[i], m, rec.pr);
        acc += (model - truth) * (model - truth);
        ++count;
      }
      rmse.push_back(count ? std::sqrt(acc / count) : 0.0);
    }
    c["final_model_rmse"] = rmse;
    long iters = 0;
    double max_kkt = 0.0;
    int converged = 0;
    for (const auto& d : run.solves) {
      iters += d.iterations;
      max_kkt = std::max(max_kkt, d.kkt_residual);
      if (d.status == 0) ++converged;
    }
    c["solves"] = {{"count", run.solves.size()},
                   {"converged", converged},
                   {"iterations", iters},
                   {"max_kkt_residual", max_kkt}};
    nlohmann::ordered_json sizes = nlohmann::ordered_json::array();
    for (const auto& ds : run.datasets) sizes.push_back(ds.size());
    c["gp_dataset_sizes"] = sizes;
    c["gp_fit_failures"] = run.gp_fit_failures;
    summary["cases"][harness::case_name(run.id)] = c;
  }

  // Energy ranking, cheapest first.
  std::vector<size_t> order(runs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return runs[a].cumulative_energy < runs[b].cumulative_energy;
  });
  nlohmann::ordered_json ranking = nlohmann::ordered_json::array();
  for (size_t i : order) ranking.push_back(harness::case_name(runs[i].id));
  summary["energy_ranking"] = ranking;
  return summary;
}

void write_outputs(const config::RunConfig& cfg,
                   const std::vector<harness::CaseRun>& runs,
                   const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const int n_c = static_cast<int>(cfg.batch.station.plant.maps.size());

  io::write_file_atomic(out_dir / "effective_config.json",
                        cfg.to_json().dump(2) + "\n");

  for (const auto& run : runs) {
    const std::string id = harness::case_name(run.id);
    io::write_file_atomic(out_dir / ("case_" + id + "_timeseries.csv"),
                          timeseries_csv(run, n_c));
    io::write_file_atomic(out_dir / ("case_" + id + "_solves.jsonl"),
                          solves_jsonl(run));
    for (int c = 0; c < n_c; ++c) {
      io::write_file_atomic(
          out_dir / ("case_" + id + "_datasets_" + std::to_string(c + 1) + ".csv"),
          dataset_csv(run, c));
      io::write_file_atomic(
          out_dir / ("case_" + id + "_model_" + std::to_string(c + 1) + ".json"),
          surrogate::model_to_json(run.final_models[c]).dump(2) + "\n");
    }
    for (const auto& [change_idx, models] : run.model_snapshots) {
      for (int c = 0; c < n_c; ++c) {
        const std::string name = "case_" + id + "_map_" + std::to_string(c + 1) +
                                 "_" + std::to_string(change_idx) + ".csv";
        io::write_file_atomic(
            out_dir / name,
            surrogate::map_grid_csv(models[c], cfg.batch.station.plant.maps[c],
                                    prior_of(models[c]), cfg.output.map_grid));
      }
    }
    for (int c = 0; c < n_c; ++c) {
      const std::string name =
          "case_" + id + "_map_" + std::to_string(c + 1) + "_final.csv";
      io::write_file_atomic(
          out_dir / name,
          surrogate::map_grid_csv(run.final_models[c],
                                  cfg.batch.station.plant.maps[c],
                                  prior_of(run.final_models[c]),
                                  cfg.output.map_grid));
    }
  }
  io::write_file_atomic(out_dir / "summary.json",
                        build_summary(cfg, runs).dump(2) + "\n");
}

namespace {

struct CommonArgs {
  std::string config_path;
  std::string cases_csv;
  std::string out_dir;
  int parallel = 1;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
};

config::RunConfig load_with_overrides(const CommonArgs& args) {
  config::RunConfig cfg = config::load_config(args.config_path);
  if (!args.cases_csv.empty()) {
    std::vector<harness::CaseId> cases;
    std::stringstream ss(args.cases_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto id = harness::case_from_name(item);
      if (!id) throw ConfigError("--cases", "unknown case '" + item + "'");
      cases.push_back(*id);
    }
    if (cases.empty()) throw ConfigError("--cases", "no cases given");
    cfg.batch.cases = cases;
  }
  if (args.has_seed_override) cfg.batch.master_seed = args.seed_override;
  if (!args.out_dir.empty()) {
    cfg.output.directory = args.out_dir;
  } else if (const char* env = std::getenv("LOADSHARE_OUT")) {
    if (env[0] != '\0') cfg.output.directory = env;
  }
  return cfg;
}

void print_energy_table(const std::vector<harness::CaseRun>& runs) {
  std::cout << "case      total energy [J]\n";
  for (const auto& run : runs) {
    std::string name = harness::case_name(run.id);
    name.resize(10, ' ');
    std::cout << name << format_double(run.cumulative_energy) << "\n";
  }
}

}  // namespace

int run_main(const std::vector<std::string>& args) {
  CLI::App app{"Compressor-station load-sharing simulator"};
  app.require_subcommand(1);

  CommonArgs common;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", common.config_path, "config file (JSON)");
    if (needs_config) opt->required();
    sub->add_option("--cases", common.cases_csv,
                    "comma-separated case list (default: config)");
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--parallel", common.parallel, "worker threads for cases");
    sub->add_option_function<std::uint64_t>(
        "--seed-override",
        [&](const std::uint64_t& v) {
          common.seed_override = v;
          common.has_seed_override = true;
        },
        "replace the master seed");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "simulate the enabled cases");
  add_common(run_cmd, true);
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "check a config without simulating");
  add_common(validate_cmd, true);
  CLI::App* snapshot_cmd = app.add_subcommand(
      "snapshot-maps", "re-emit map grids from serialized models");
  add_common(snapshot_cmd, true);

  std::vector<const char*> argv;
  argv.push_back("loadshare");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(validate_cmd)) {
      config::RunConfig cfg = load_with_overrides(common);
      // Also prove the profile is realizable before declaring success.
      harness::build_profile(cfg.batch.profile, cfg.batch.station);
      std::cout << "config ok: " << common.config_path << "\n";
      return 0;
    }
    if (app.got_subcommand(snapshot_cmd)) {
      config::RunConfig cfg = load_with_overrides(common);
      const fs::path dir = cfg.output.directory;
      const int n_c = static_cast<int>(cfg.batch.station.plant.maps.size());
      for (harness::CaseId id : cfg.batch.cases) {
        const std::string name = harness::case_name(id);
        for (int c = 0; c < n_c; ++c) {
          const fs::path model_path =
              dir / ("case_" + name + "_model_" + std::to_string(c + 1) + ".json");
          if (!fs::exists(model_path)) continue;
          std::ifstream in(model_path);
          nlohmann::json j;
          in >> j;
          const surrogate::MapModel model = surrogate::model_from_json(j);
          io::write_file_atomic(
              dir / ("case_" + name + "_map_" + std::to_string(c + 1) +
                     "_snapshot.csv"),
              surrogate::map_grid_csv(model, cfg.batch.station.plant.maps[c],
                                      prior_of(model), cfg.output.map_grid));
        }
      }
      return 0;
    }
    // run
    config::RunConfig cfg = load_with_overrides(common);
    try {
      const auto runs = harness::run_all(cfg.batch, common.parallel);
      write_outputs(cfg, runs, cfg.output.directory);
      print_energy_table(runs);
      return 0;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      std::cerr << "error: run aborted: " << e.what() << "\n";
      return 2;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace loadshare::cli
