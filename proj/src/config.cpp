#include "loadshare/config.hpp"

#include <fstream>
#include <limits>
#include <set>

namespace loadshare::config {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& path,
                  const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key))
      throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
  }
}

double get_num(const json& obj, const std::string& path, const std::string& key,
               double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(path + "." + key, "expected a number");
  return v.get<double>();
}

long get_int(const json& obj, const std::string& path, const std::string& key,
             long fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer())
    throw ConfigError(path + "." + key, "expected an integer");
  return v.get<long>();
}

std::uint64_t get_u64(const json& obj, const std::string& path,
                      const std::string& key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.is_number_float())
    throw ConfigError(path + "." + key, "expected an integer seed");
  return v.get<std::uint64_t>();
}

std::string get_str(const json& obj, const std::string& path,
                    const std::string& key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(path + "." + key, "expected a string");
  return v.get<std::string>();
}

void parse_gas(const json& j, thermo::GasConditions& gas) {
  require_keys(j, "station.gas", {"z_in", "t_in_k", "mw_kg_per_mol", "n_v"});
  gas.z_in = get_num(j, "station.gas", "z_in", gas.z_in);
  gas.t_in = get_num(j, "station.gas", "t_in_k", gas.t_in);
  gas.mw = get_num(j, "station.gas", "mw_kg_per_mol", gas.mw);
  gas.n_v = get_num(j, "station.gas", "n_v", gas.n_v);
}

thermo::TrueMap parse_true_map(const json& j, const std::string& path,
                               const thermo::TrueMap& base) {
  require_keys(j, path,
               {"peak_eff", "scale", "ridge_flow", "curvature_flow",
                "curvature_pr", "pr_center", "eta_floor"});
  thermo::TrueMap m = base;
  m.peak_eff = get_num(j, path, "peak_eff", m.peak_eff);
  m.scale = get_num(j, path, "scale", m.scale);
  if (j.contains("ridge_flow")) {
    const json& r = j.at("ridge_flow");
    if (!r.is_array() || r.size() != 2)
      throw ConfigError(path + ".ridge_flow", "expected [r0, r1]");
    m.ridge_r0 = r[0].get<double>();
    m.ridge_r1 = r[1].get<double>();
  }
  m.curvature_flow = get_num(j, path, "curvature_flow", m.curvature_flow);
  m.curvature_pr = get_num(j, path, "curvature_pr", m.curvature_pr);
  m.pr_center = get_num(j, path, "pr_center", m.pr_center);
  m.eta_floor = get_num(j, path, "eta_floor", m.eta_floor);
  return m;
}

thermo::Envelope parse_envelope(const json& j, const std::string& path,
                                const thermo::Envelope& base) {
  require_keys(j, path, {"surge", "choke", "pr_range"});
  thermo::Envelope e = base;
  auto pair_of = [&](const char* key, double& a, double& b) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_array() || v.size() != 2)
      throw ConfigError(path + "." + key, "expected [a, b]");
    a = v[0].get<double>();
    b = v[1].get<double>();
  };
  pair_of("surge", e.surge_c0, e.surge_c1);
  pair_of("choke", e.choke_d0, e.choke_d1);
  pair_of("pr_range", e.pr_min, e.pr_max);
  return e;
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  auto& st = cfg.batch.station;
  st.capacity = 60.0;
  st.plant.tau_loop = 30.0;
  st.plant.curve = thermo::SystemCurve{};
  st.plant.gas = thermo::GasConditions{};
  const double scales[3] = {1.0, 0.96, 0.92};
  for (double s : scales) {
    thermo::TrueMap m;
    m.scale = s;
    st.plant.maps.push_back(m);
    st.envelopes.push_back(thermo::Envelope{});
  }
  cfg.batch.snapshot_every_changes = cfg.output.snapshot_every_changes;
  return cfg;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg = default_config();
  require_keys(j, "",
               {"seed", "station", "profile", "noise", "adaptation", "optimizer",
                "cases", "output"});

  cfg.batch.master_seed = get_u64(j, "", "seed", cfg.batch.master_seed);

  if (j.contains("station")) {
    const json& s = j.at("station");
    require_keys(s, "station",
                 {"n_compressors", "capacity_kg_s", "tau_loop_s", "gas",
                  "true_maps", "envelopes", "system_curve"});
    auto& st = cfg.batch.station;
    const long n_c = get_int(s, "station", "n_compressors",
                             static_cast<long>(st.plant.maps.size()));
    if (n_c < 1) throw ConfigError("station.n_compressors", "must be >= 1");
    // Resize defaults to n_c entries before applying per-compressor values.
    while (static_cast<long>(st.plant.maps.size()) < n_c) {
      st.plant.maps.push_back(st.plant.maps.back());
      st.envelopes.push_back(st.envelopes.back());
    }
    st.plant.maps.resize(n_c);
    st.envelopes.resize(n_c);

    st.capacity = get_num(s, "station", "capacity_kg_s", st.capacity);
    st.plant.tau_loop = get_num(s, "station", "tau_loop_s", st.plant.tau_loop);
    if (!(st.plant.tau_loop > 0.0))
      throw ConfigError("station.tau_loop_s", "must be > 0");
    if (s.contains("gas")) parse_gas(s.at("gas"), st.plant.gas);
    if (s.contains("system_curve")) {
      const json& c = s.at("system_curve");
      require_keys(c, "station.system_curve", {"pr_base", "k_sys"});
      st.plant.curve.pr_base =
          get_num(c, "station.system_curve", "pr_base", st.plant.curve.pr_base);
      st.plant.curve.k_sys =
          get_num(c, "station.system_curve", "k_sys", st.plant.curve.k_sys);
    }
    if (s.contains("true_maps")) {
      const json& arr = s.at("true_maps");
      if (!arr.is_array() || static_cast<long>(arr.size()) != n_c)
        throw ConfigError("station.true_maps", "expected one entry per compressor");
      for (long i = 0; i < n_c; ++i)
        st.plant.maps[i] = parse_true_map(
            arr[i], "station.true_maps[" + std::to_string(i) + "]",
            st.plant.maps[i]);
    }
    if (s.contains("envelopes")) {
      const json& arr = s.at("envelopes");
      if (!arr.is_array() || static_cast<long>(arr.size()) != n_c)
        throw ConfigError("station.envelopes", "expected one entry per compressor");
      for (long i = 0; i < n_c; ++i)
        st.envelopes[i] = parse_envelope(
            arr[i], "station.envelopes[" + std::to_string(i) + "]",
            st.envelopes[i]);
    }
  }

  if (j.contains("profile")) {
    const json& p = j.at("profile");
    require_keys(p, "profile",
                 {"base_frac", "peak_frac", "changes_per_day", "days", "dt_s"});
    auto& pr = cfg.batch.profile;
    pr.base_frac = get_num(p, "profile", "base_frac", pr.base_frac);
    pr.peak_frac = get_num(p, "profile", "peak_frac", pr.peak_frac);
    pr.changes_per_day = static_cast<int>(
        get_int(p, "profile", "changes_per_day", pr.changes_per_day));
    pr.days = static_cast<int>(get_int(p, "profile", "days", pr.days));
    cfg.batch.sim.dt = get_num(p, "profile", "dt_s", cfg.batch.sim.dt);
    if (!(cfg.batch.sim.dt > 0.0)) throw ConfigError("profile.dt_s", "must be > 0");
  }

  if (j.contains("noise")) {
    const json& n = j.at("noise");
    require_keys(n, "noise",
                 {"rel_flow", "rel_pr", "rel_power", "abs_t_k", "seed"});
    auto& nm = cfg.batch.noise;
    nm.rel_flow = get_num(n, "noise", "rel_flow", nm.rel_flow);
    nm.rel_pr = get_num(n, "noise", "rel_pr", nm.rel_pr);
    nm.rel_power = get_num(n, "noise", "rel_power", nm.rel_power);
    nm.abs_t = get_num(n, "noise", "abs_t_k", nm.abs_t);
    nm.seed = get_u64(n, "noise", "seed", 0);
    if (nm.rel_flow < 0 || nm.rel_pr < 0 || nm.rel_power < 0 || nm.abs_t < 0)
      throw ConfigError("noise", "noise levels must be >= 0");
  }

  if (j.contains("adaptation")) {
    const json& a = j.at("adaptation");
    require_keys(a, "adaptation",
                 {"delta_admit", "max_points", "settle_delay_s",
                  "hold_sample_period_s", "schedule", "gp_fit"});
    auto& ad = cfg.batch.admission;
    ad.delta_admit = get_num(a, "adaptation", "delta_admit", ad.delta_admit);
    if (!(ad.delta_admit > 0.0))
      throw ConfigError("adaptation.delta_admit", "must be > 0");
    const long mp = get_int(a, "adaptation", "max_points",
                            static_cast<long>(ad.max_points));
    if (mp < 1) throw ConfigError("adaptation.max_points", "must be >= 1");
    ad.max_points = static_cast<std::size_t>(mp);
    cfg.batch.sim.settle_delay =
        get_num(a, "adaptation", "settle_delay_s", cfg.batch.sim.settle_delay);
    cfg.batch.sim.hold_sample_period = get_num(
        a, "adaptation", "hold_sample_period_s", cfg.batch.sim.hold_sample_period);
    if (a.contains("schedule")) {
      const json& sc = a.at("schedule");
      require_keys(sc, "adaptation.schedule",
                   {"opt_every_up_to", "opt_interval_after"});
      cfg.batch.refit.opt_every_up_to = static_cast<int>(get_int(
          sc, "adaptation.schedule", "opt_every_up_to", cfg.batch.refit.opt_every_up_to));
      cfg.batch.refit.opt_interval_after = static_cast<int>(
          get_int(sc, "adaptation.schedule", "opt_interval_after",
                  cfg.batch.refit.opt_interval_after));
    }
    if (a.contains("gp_fit")) {
      const json& g = a.at("gp_fit");
      require_keys(g, "adaptation.gp_fit",
                   {"restarts", "max_iter", "grad_tol", "seed"});
      auto& f = cfg.batch.gp_fit;
      f.restarts = static_cast<int>(get_int(g, "adaptation.gp_fit", "restarts",
                                            f.restarts));
      f.max_iter = static_cast<int>(get_int(g, "adaptation.gp_fit", "max_iter",
                                            f.max_iter));
      f.grad_tol = get_num(g, "adaptation.gp_fit", "grad_tol", f.grad_tol);
      f.seed = get_u64(g, "adaptation.gp_fit", "seed", f.seed);
    }
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    require_keys(o, "optimizer", {"starts", "max_iter", "kkt_tol_rel", "seed"});
    auto& so = cfg.batch.solver;
    so.lhs_starts = static_cast<int>(get_int(o, "optimizer", "starts",
                                             so.lhs_starts));
    so.max_iter = static_cast<int>(get_int(o, "optimizer", "max_iter",
                                           so.max_iter));
    so.kkt_tol_rel = get_num(o, "optimizer", "kkt_tol_rel", so.kkt_tol_rel);
    cfg.batch.optimizer_seed = get_u64(o, "optimizer", "seed", 0);
    if (so.lhs_starts < 0) throw ConfigError("optimizer.starts", "must be >= 0");
  }

  if (j.contains("cases")) {
    const json& c = j.at("cases");
    require_keys(c, "cases",
                 {"enabled", "prior_seed", "shift_magnitude",
                  "prior_sample_count", "direct_gp_fallback"});
    if (c.contains("enabled")) {
      const json& en = c.at("enabled");
      if (!en.is_array()) throw ConfigError("cases.enabled", "expected a list");
      cfg.batch.cases.clear();
      for (const auto& item : en) {
        const auto id = harness::case_from_name(item.get<std::string>());
        if (!id)
          throw ConfigError("cases.enabled",
                            "unknown case '" + item.get<std::string>() + "'");
        cfg.batch.cases.push_back(*id);
      }
      if (cfg.batch.cases.empty())
        throw ConfigError("cases.enabled", "no cases enabled");
    }
    cfg.batch.prior_seed = get_u64(c, "cases", "prior_seed", 0);
    cfg.batch.shift_magnitude =
        get_num(c, "cases", "shift_magnitude", cfg.batch.shift_magnitude);
    if (cfg.batch.shift_magnitude < 0)
      throw ConfigError("cases.shift_magnitude", "must be >= 0");
    cfg.batch.prior_sample_count = static_cast<int>(get_int(
        c, "cases", "prior_sample_count", cfg.batch.prior_sample_count));
    if (cfg.batch.prior_sample_count < 20)
      throw ConfigError("cases.prior_sample_count",
                        "need at least 20 samples for the largest prior");
    cfg.batch.direct_gp_fallback =
        get_num(c, "cases", "direct_gp_fallback", cfg.batch.direct_gp_fallback);
  }

  if (j.contains("output")) {
    const json& o = j.at("output");
    require_keys(o, "output", {"directory", "snapshot_every_changes", "map_grid"});
    cfg.output.directory = get_str(o, "output", "directory", cfg.output.directory);
    cfg.output.snapshot_every_changes = static_cast<int>(
        get_int(o, "output", "snapshot_every_changes",
                cfg.output.snapshot_every_changes));
    if (cfg.output.snapshot_every_changes < 1)
      throw ConfigError("output.snapshot_every_changes", "must be >= 1");
    if (o.contains("map_grid")) {
      const json& g = o.at("map_grid");
      require_keys(g, "output.map_grid",
                   {"mdot", "pr", "n_mdot", "n_pr"});
      auto& grid = cfg.output.map_grid;
      if (g.contains("mdot")) {
        grid.mdot_lo = g.at("mdot")[0].get<double>();
        grid.mdot_hi = g.at("mdot")[1].get<double>();
      }
      if (g.contains("pr")) {
        grid.pr_lo = g.at("pr")[0].get<double>();
        grid.pr_hi = g.at("pr")[1].get<double>();
      }
      grid.n_mdot = static_cast<int>(get_int(g, "output.map_grid", "n_mdot",
                                             grid.n_mdot));
      grid.n_pr = static_cast<int>(get_int(g, "output.map_grid", "n_pr",
                                           grid.n_pr));
    }
  }
  cfg.batch.snapshot_every_changes = cfg.output.snapshot_every_changes;

  // Cross-field validation.
  cfg.batch.station.plant.gas.validate();
  cfg.batch.station.plant.curve.validate();
  for (const auto& m : cfg.batch.station.plant.maps) m.validate();
  for (const auto& e : cfg.batch.station.envelopes) e.validate();
  {
    double s_prev = std::numeric_limits<double>::infinity();
    for (const auto& m : cfg.batch.station.plant.maps) {
      if (m.scale > s_prev)
        throw ConfigError("station.true_maps",
                          "scales must be non-increasing across compressors");
      s_prev = m.scale;
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", std::string("parse error: ") + e.what());
  }
  return config_from_json(j);
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = batch.master_seed;

  nlohmann::ordered_json st;
  st["n_compressors"] = batch.station.plant.maps.size();
  st["capacity_kg_s"] = batch.station.capacity;
  st["tau_loop_s"] = batch.station.plant.tau_loop;
  st["gas"] = {{"z_in", batch.station.plant.gas.z_in},
               {"t_in_k", batch.station.plant.gas.t_in},
               {"mw_kg_per_mol", batch.station.plant.gas.mw},
               {"n_v", batch.station.plant.gas.n_v}};
  st["system_curve"] = {{"pr_base", batch.station.plant.curve.pr_base},
                        {"k_sys", batch.station.plant.curve.k_sys}};
  nlohmann::ordered_json maps = nlohmann::ordered_json::array();
  for (const auto& m : batch.station.plant.maps) {
    maps.push_back({{"peak_eff", m.peak_eff},
                    {"scale", m.scale},
                    {"ridge_flow", {m.ridge_r0, m.ridge_r1}},
                    {"curvature_flow", m.curvature_flow},
                    {"curvature_pr", m.curvature_pr},
                    {"pr_center", m.pr_center},
                    {"eta_floor", m.eta_floor}});
  }
  st["true_maps"] = maps;
  nlohmann::ordered_json envs = nlohmann::ordered_json::array();
  for (const auto& e : batch.station.envelopes) {
    envs.push_back({{"surge", {e.surge_c0, e.surge_c1}},
                    {"choke", {e.choke_d0, e.choke_d1}},
                    {"pr_range", {e.pr_min, e.pr_max}}});
  }
  st["envelopes"] = envs;
  j["station"] = st;

  j["profile"] = {{"base_frac", batch.profile.base_frac},
                  {"peak_frac", batch.profile.peak_frac},
                  {"changes_per_day", batch.profile.changes_per_day},
                  {"days", batch.profile.days},
                  {"dt_s", batch.sim.dt}};
  j["noise"] = {{"rel_flow", batch.noise.rel_flow},
                {"rel_pr", batch.noise.rel_pr},
                {"rel_power", batch.noise.rel_power},
                {"abs_t_k", batch.noise.abs_t},
                {"seed", batch.noise.seed}};
  j["adaptation"] = {
      {"delta_admit", batch.admission.delta_admit},
      {"max_points", batch.admission.max_points},
      {"settle_delay_s", batch.sim.settle_delay},
      {"hold_sample_period_s", batch.sim.hold_sample_period},
      {"schedule",
       {{"opt_every_up_to", batch.refit.opt_every_up_to},
        {"opt_interval_after", batch.refit.opt_interval_after}}},
      {"gp_fit",
       {{"restarts", batch.gp_fit.restarts},
        {"max_iter", batch.gp_fit.max_iter},
        {"grad_tol", batch.gp_fit.grad_tol},
        {"seed", batch.gp_fit.seed}}}};
  j["optimizer"] = {{"starts", batch.solver.lhs_starts},
                    {"max_iter", batch.solver.max_iter},
                    {"kkt_tol_rel", batch.solver.kkt_tol_rel},
                    {"seed", batch.optimizer_seed}};
  nlohmann::ordered_json enabled = nlohmann::ordered_json::array();
  for (harness::CaseId id : batch.cases) enabled.push_back(harness::case_name(id));
  j["cases"] = {{"enabled", enabled},
                {"prior_seed", batch.prior_seed},
                {"shift_magnitude", batch.shift_magnitude},
                {"prior_sample_count", batch.prior_sample_count},
                {"direct_gp_fallback", batch.direct_gp_fallback}};
  j["output"] = {{"directory", output.directory},
                 {"snapshot_every_changes", output.snapshot_every_changes},
                 {"map_grid",
                  {{"mdot", {output.map_grid.mdot_lo, output.map_grid.mdot_hi}},
                   {"pr", {output.map_grid.pr_lo, output.map_grid.pr_hi}},
                   {"n_mdot", output.map_grid.n_mdot},
                   {"n_pr", output.map_grid.n_pr}}}};
  return j;
}

}  // namespace loadshare::config
