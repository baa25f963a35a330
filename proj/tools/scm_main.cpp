// scm: spectra, fits, scans, photon statistics, and spin signals from one
// deterministic config-driven binary. Every run drops a manifest.json with the
// fully resolved parameters so it can be rerun byte-for-byte.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "scm/dynamics.hpp"
#include "scm/io.hpp"
#include "scm/model.hpp"
#include "scm/qstats.hpp"
#include "scm/scanfield.hpp"
#include "scm/spectro.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kSchemaVersion = 1;

struct RunContext {
  fs::path out_dir;
  json section;  // fully resolved subcommand config
  std::uint64_t seed = 0;
  int threads = 1;
  std::map<std::string, std::string> input_hashes;

  std::string read_input(const std::string& path) {
    input_hashes[path] = scm::hash_file(path);
    return path;
  }
};

Eigen::ArrayXd linspace(double lo, double hi, Eigen::Index n) {
  if (n < 2 || !(hi > lo))
    throw scm::Error(scm::ErrorKind::InvalidRequest, "grid needs min < max and points >= 2");
  return Eigen::ArrayXd::LinSpaced(n, lo, hi);
}

Eigen::ArrayXd lambda_grid_from(const json& grid) {
  return linspace(grid.at("lambda_min").get<double>(), grid.at("lambda_max").get<double>(),
                  grid.at("points").get<Eigen::Index>());
}

scm::DetectionCoeffs coeffs_from(const json& j) {
  scm::DetectionCoeffs c;
  c.c_nv = j.value("c_nv", 1.0);
  c.c_cav = j.value("c_cav", 0.0);
  c.c_int = j.value("c_int", 0.0);
  c.delta_phi = j.value("delta_phi", 0.0);
  return scm::validate(c);
}

std::vector<scm::FitMode> modes_from(const json& j) {
  std::vector<scm::FitMode> modes;
  for (const auto& m : j)
    modes.push_back({m.at("lambda_c").get<double>(), m.at("q_factor").get<double>(),
                     m.value("f_c", 0.0)});
  return modes;
}

json modes_to_json(const std::vector<scm::FitMode>& modes) {
  json out = json::array();
  for (const auto& m : modes)
    out.push_back({{"lambda_c", m.lambda_c}, {"q_factor", m.q_factor}, {"f_c", m.f_c}});
  return out;
}

scm::Spectrum baseline_from(const json& spec, const Eigen::ArrayXd& grid, RunContext& ctx) {
  if (spec.contains("csv"))
    return scm::read_series_csv(ctx.read_input(spec.at("csv").get<std::string>()));
  if (spec.contains("flat")) {
    scm::Spectrum flat;
    flat.x = grid;
    flat.y = Eigen::ArrayXd::Constant(grid.size(), spec.at("flat").get<double>());
    return flat;
  }
  const double scale = spec.contains("synthetic") ? spec["synthetic"].value("scale", 1.0) : 1.0;
  return scm::synthetic_bare_spectrum(grid, scale);
}

// ---- subcommand runners ----------------------------------------------------

void run_spectrum(RunContext& ctx) {
  const json& s = ctx.section;
  const std::string kind = s.value("kind", "detected");

  if (kind == "detected" || kind == "both") {
    const Eigen::ArrayXd grid = lambda_grid_from(s.at("grid"));
    const auto coeffs = coeffs_from(s.value("coeffs", json::object()));
    const auto modes = modes_from(s.at("modes"));
    const auto baseline = baseline_from(s.value("baseline", json::object()), grid, ctx);
    scm::write_series_csv(ctx.out_dir / "spectrum.csv",
                          scm::detected_spectrum_lambda(coeffs, modes, baseline, grid));
  }
  if (kind == "numeric" || kind == "both") {
    const json& pj = s.at("params");
    scm::CoupledSystemParams params;
    params.detuning = pj.value("detuning", 0.0);
    params.g = pj.at("g").get<double>();
    params.kappa = pj.at("kappa").get<double>();
    params.gamma = pj.at("gamma").get<double>();
    params.gamma_d = pj.value("gamma_d", 0.0);
    const json& og = s.at("omega");
    const Eigen::ArrayXd omega = linspace(og.at("min").get<double>(), og.at("max").get<double>(),
                                          og.at("points").get<Eigen::Index>());
    const auto coeffs = coeffs_from(s.value("coeffs", json::object()));
    const auto name = kind == "both" ? "numeric_spectrum.csv" : "spectrum.csv";
    scm::write_series_csv(ctx.out_dir / name,
                          scm::emission_spectrum_numeric(params, coeffs, omega));
  }
  if (kind != "detected" && kind != "numeric" && kind != "both")
    throw scm::Error(scm::ErrorKind::InvalidRequest, "spectrum.kind must be detected|numeric|both");
}

void run_fit(RunContext& ctx) {
  const json& s = ctx.section;
  if (!s.contains("data"))
    throw scm::Error(scm::ErrorKind::InvalidRequest, "fit.data (spectrum CSV path) is required");
  const scm::Spectrum data = scm::read_series_csv(ctx.read_input(s.at("data").get<std::string>()));
  scm::validate(data);
  const auto baseline = baseline_from(s.value("baseline", json::object()), data.x, ctx);

  scm::SpectrumFit init;
  const json& ij = s.at("init");
  init.coeffs = coeffs_from(ij.value("coeffs", json::object()));
  init.modes = modes_from(ij.at("modes"));
  std::set<std::string> fixed;
  for (const auto& f : s.value("fixed", json::array())) fixed.insert(f.get<std::string>());
  const auto weights =
      s.value("weights", "poisson") == "uniform" ? scm::FitWeights::Uniform
                                                 : scm::FitWeights::Poisson;

  const scm::SpectrumFit fit =
      scm::fit_spectrum(data, baseline, init, fixed, weights, s.value("max_iterations", 200));

  json out;
  out["modes"] = modes_to_json(fit.modes);
  out["coeffs"] = {{"c_nv", fit.coeffs.c_nv},
                   {"c_cav", fit.coeffs.c_cav},
                   {"c_int", fit.coeffs.c_int},
                   {"delta_phi", fit.coeffs.delta_phi}};
  out["residual_rms"] = fit.residual_rms;
  out["iterations"] = fit.iterations;
  out["converged"] = fit.converged;
  out["free_names"] = fit.free_names;
  json cov = json::array();
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c) row.push_back(fit.covariance(r, c));
    cov.push_back(row);
  }
  out["covariance"] = cov;
  scm::write_json_file(ctx.out_dir / "fit.json", out);

  scm::Series resid;
  resid.x = data.x;
  resid.x_unit = data.x_unit;
  resid.y_unit = data.y_unit;
  resid.y = data.y - scm::detected_spectrum_lambda(fit.coeffs, fit.modes, baseline, data.x).y;
  scm::write_series_csv(ctx.out_dir / "residuals.csv", resid);
}

scm::ScanTrack track_from(const json& tj, std::uint64_t seed) {
  auto vec3 = [](const json& j) {
    return Eigen::Vector3d(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
  };
  return scm::make_linear_track(vec3(tj.at("start")), vec3(tj.at("direction")),
                                tj.at("step").get<double>(), tj.at("points").get<int>(),
                                tj.value("slip_sigma", 0.0), seed);
}

void run_scan(RunContext& ctx) {
  const json& s = ctx.section;

  std::vector<scm::FieldModel> fields;
  for (const auto& fj : s.at("fields")) {
    scm::FieldModel f;
    f.mode = fj.at("mode").get<scm::CavityMode>();
    scm::validate(f.mode);
    f.f_c_max = fj.value("f_c_max", 1.0);
    if (fj.contains("sampled_csv"))
      f.sampled = scm::read_field_grid_csv(ctx.read_input(fj.at("sampled_csv").get<std::string>()));
    fields.push_back(std::move(f));
  }

  const Eigen::ArrayXd grid = lambda_grid_from(s.at("grid"));
  const json& ej = s.at("emitter");
  scm::Emitter emitter;
  emitter.tau0 = ej.value("tau0", 16.4);
  emitter.dipole_angle = ej.value("dipole_angle", 0.0);
  if (ej.contains("position")) {
    const auto& p = ej.at("position");
    emitter.position = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
  }
  emitter.bare_spectrum = baseline_from(ej.value("baseline", json::object()), grid, ctx);

  const auto coeffs = coeffs_from(s.value("coeffs", json::object()));
  const scm::ScanTrack track = track_from(s.at("track"), ctx.seed);

  scm::ScanOptions opts;
  opts.noise_peak_counts = s.value("noise_peak_counts", 0.0);
  opts.seed = ctx.seed;
  opts.threads = ctx.threads;

  const scm::ScanResult result = scm::simulate_scan(fields, emitter, coeffs, track, grid, opts);

  std::string fc_csv = "index,x_nm,y_nm,z_nm";
  for (Eigen::Index m = 0; m < result.fc.cols(); ++m)
    fc_csv += ",fc_" + std::to_string(m);
  fc_csv += "\n";
  for (Eigen::Index i = 0; i < result.fc.rows(); ++i) {
    fc_csv += std::to_string(i);
    for (int d = 0; d < 3; ++d) fc_csv += "," + scm::format_double(result.track.positions(i, d));
    for (Eigen::Index m = 0; m < result.fc.cols(); ++m)
      fc_csv += "," + scm::format_double(result.fc(i, m));
    fc_csv += "\n";
  }
  scm::write_text_file(ctx.out_dir / "fc_track.csv", fc_csv);

  std::string sp_csv = "lambda_nm";
  for (std::size_t i = 0; i < result.spectra.size(); ++i)
    sp_csv += ",pos_" + std::to_string(i);
  sp_csv += "\n";
  for (Eigen::Index r = 0; r < grid.size(); ++r) {
    sp_csv += scm::format_double(grid[r]);
    for (const auto& sp : result.spectra) sp_csv += "," + scm::format_double(sp.y[r]);
    sp_csv += "\n";
  }
  scm::write_text_file(ctx.out_dir / "spectra.csv", sp_csv);
}

void run_deconvolve(RunContext& ctx) {
  const json& s = ctx.section;
  if (!s.contains("pl") || !s.contains("response"))
    throw scm::Error(scm::ErrorKind::InvalidRequest, "deconvolve needs pl and response CSV paths");
  const scm::Series pl = scm::read_series_csv(ctx.read_input(s.at("pl").get<std::string>()));
  const scm::Series response =
      scm::read_series_csv(ctx.read_input(s.at("response").get<std::string>()));

  scm::DeconvolveOptions opts;
  const std::string method = s.value("method", "regularized");
  if (method == "multiplicative") opts.method = scm::DeconvolveMethod::Multiplicative;
  else if (method != "regularized")
    throw scm::Error(scm::ErrorKind::InvalidRequest,
                     "deconvolve.method must be regularized|multiplicative");
  opts.epsilon_rel = s.value("epsilon_rel", 1e-3);
  opts.iterations = s.value("iterations", 50);

  scm::write_series_csv(ctx.out_dir / "estimate.csv", scm::deconvolve(pl, response, opts));
}

scm::ThreeLevelRates rates_from(const json& j) {
  scm::ThreeLevelRates r;
  r.k_pump = j.value("k_pump", 0.05);
  r.k_decay = j.value("k_decay", 1.0 / 16.4);
  r.k_shelve = j.value("k_shelve", 0.02);
  r.k_deshelve = j.value("k_deshelve", 0.003);
  return scm::validate(r);
}

void run_g2(RunContext& ctx) {
  const json& s = ctx.section;
  const auto rates = rates_from(s.value("rates", json::object()));

  const json& tj = s.at("tau");
  const double tau_max = tj.at("max").get<double>();
  const auto points = tj.at("points").get<Eigen::Index>();
  scm::write_series_csv(ctx.out_dir / "g2.csv",
                        scm::g2_rate_model(rates, linspace(-tau_max, tau_max, points)));

  const json hbt = s.value("hbt", json::object());
  if (hbt.value("enabled", false)) {
    const auto result =
        scm::hbt_histogram(rates, hbt.at("total_time").get<double>(),
                           hbt.at("bin_width").get<double>(), ctx.seed,
                           hbt.value("tau_max", tau_max));
    scm::write_series_csv(ctx.out_dir / "hbt.csv", result.histogram);
  }
}

void run_spin(RunContext& ctx) {
  const json& s = ctx.section;
  const json pj = s.value("params", json::object());
  scm::SpinParams spin;
  spin.zero_field_split = pj.value("zero_field_split", 2.87);
  spin.zeeman_split = pj.value("zeeman_split", 0.0);
  spin.linewidth = pj.value("linewidth", 0.01);
  spin.contrast = pj.value("contrast", 0.3);
  spin.rabi_freq = pj.value("rabi_freq", 0.3);
  spin.t2_star = pj.value("t2_star", 150.0);

  if (s.contains("esr")) {
    const json& ej = s.at("esr");
    const Eigen::ArrayXd nu = linspace(ej.at("nu_min").get<double>(),
                                       ej.at("nu_max").get<double>(),
                                       ej.at("points").get<Eigen::Index>());
    scm::write_series_csv(ctx.out_dir / "esr.csv", scm::esr_spectrum(spin, nu));
  }
  if (s.contains("rabi")) {
    const json& rj = s.at("rabi");
    const Eigen::ArrayXd t =
        linspace(0.0, rj.at("t_max").get<double>(), rj.at("points").get<Eigen::Index>());
    scm::write_series_csv(ctx.out_dir / "rabi.csv",
                          scm::rabi_trace(spin, t, rj.value("envelope", false)));
  }
}

// ---- config resolution -----------------------------------------------------

json default_section(const std::string& name) {
  if (name == "spectrum")
    return json{
        {"kind", "detected"},
        {"coeffs", {{"c_nv", 1.0}, {"c_cav", 1.0}, {"c_int", 0.0}, {"delta_phi", 0.0}}},
        {"modes", json::array({json{{"lambda_c", 643.0}, {"q_factor", 610.0}, {"f_c", 5.3}},
                               json{{"lambda_c", 667.3}, {"q_factor", 550.0}, {"f_c", 0.7}}})},
        {"baseline", {{"synthetic", {{"scale", 1000.0}}}}},
        {"grid", {{"lambda_min", 620.0}, {"lambda_max", 700.0}, {"points", 1601}}},
        {"params",
         {{"detuning", 0.0}, {"g", 0.05}, {"kappa", 2.7}, {"gamma", 0.061}, {"gamma_d", 60.0}}},
        {"omega", {{"min", -200.0}, {"max", 200.0}, {"points", 2001}}},
        {"seed", 0}};
  if (name == "fit")
    return json{{"baseline", {{"synthetic", {{"scale", 1000.0}}}}},
                {"init",
                 {{"coeffs", {{"c_nv", 1.0}, {"c_cav", 1.0}, {"c_int", 0.0}, {"delta_phi", 0.0}}},
                  {"modes",
                   json::array({json{{"lambda_c", 643.0}, {"q_factor", 600.0}, {"f_c", 4.0}},
                                json{{"lambda_c", 667.3}, {"q_factor", 600.0}, {"f_c", 1.0}}})}}},
                {"fixed", json::array({"c_cav", "c_int", "delta_phi"})},
                {"weights", "poisson"},
                {"max_iterations", 200},
                {"seed", 0}};
  if (name == "scan")
    return json{
        {"fields", json::array({json{{"mode",
                                      {{"lambda_c", 667.3},
                                       {"q_factor", 550.0},
                                       {"lattice_a", 176.0},
                                       {"envelope_wx", 352.0},
                                       {"envelope_wy", 176.0},
                                       {"z_decay", 100.0},
                                       {"polarization_angle", 0.0}}},
                                     {"f_c_max", 2.9}}})},
        {"emitter",
         {{"tau0", 16.4},
          {"position", json::array({0.0, 70.0, 98.0})},
          {"dipole_angle", 0.349},
          {"baseline", {{"synthetic", {{"scale", 1000.0}}}}}}},
        {"coeffs", {{"c_nv", 1.0}, {"c_cav", 1.0}, {"c_int", 0.0}, {"delta_phi", 0.0}}},
        {"track",
         {{"start", json::array({-300.0, 0.0, 0.0})},
          {"direction", json::array({1.0, 0.0, 0.0})},
          {"step", 3.4},
          {"points", 200},
          {"slip_sigma", 0.0}}},
        {"grid", {{"lambda_min", 650.0}, {"lambda_max", 685.0}, {"points", 701}}},
        {"noise_peak_counts", 0.0},
        {"seed", 0}};
  if (name == "deconvolve")
    return json{{"method", "regularized"}, {"epsilon_rel", 1e-3}, {"iterations", 50}, {"seed", 0}};
  if (name == "g2")
    return json{{"rates",
                 {{"k_pump", 0.05},
                  {"k_decay", 1.0 / 16.4},
                  {"k_shelve", 0.02},
                  {"k_deshelve", 0.003}}},
                {"tau", {{"max", 400.0}, {"points", 1601}}},
                {"hbt",
                 {{"enabled", false}, {"total_time", 1e7}, {"bin_width", 2.0}, {"tau_max", 400.0}}},
                {"seed", 0}};
  if (name == "spin")
    return json{{"params",
                 {{"zero_field_split", 2.87},
                  {"zeeman_split", 0.0},
                  {"linewidth", 0.01},
                  {"contrast", 0.3},
                  {"rabi_freq", 0.3},
                  {"t2_star", 150.0}}},
                {"esr", {{"nu_min", 2.77}, {"nu_max", 2.97}, {"points", 401}}},
                {"rabi", {{"t_max", 60.0}, {"points", 601}, {"envelope", false}}},
                {"seed", 0}};
  return json::object();
}

struct CliArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
};

json resolve_section(const std::string& name, const CliArgs& args, RunContext& ctx) {
  json section = default_section(name);
  if (!args.config_path.empty()) {
    const json cfg = scm::read_json_file(ctx.read_input(args.config_path));
    if (cfg.contains("resolved_config")) {
      // manifest rerun: the stored section is already complete
      section.merge_patch(cfg.at("resolved_config"));
    } else if (cfg.contains(name)) {
      section.merge_patch(cfg.at(name));
    } else {
      section.merge_patch(cfg);  // flat section-only config
    }
  }
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw scm::Error(scm::ErrorKind::InvalidRequest, "--set expects key=value: " + kv);
    std::string key = "/" + kv.substr(0, eq);
    for (auto& c : key)
      if (c == '.') c = '/';
    const std::string raw = kv.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // unquoted strings
    section[json::json_pointer(key)] = value;
  }
  if (args.seed_given) section["seed"] = args.seed;
  if (!section.contains("seed")) section["seed"] = 0;
  return section;
}

int run(const std::string& name, const CliArgs& args) {
  RunContext ctx;
  ctx.out_dir = args.out_dir;
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec)
    throw scm::Error(scm::ErrorKind::IoFailure, "cannot create output dir: " + args.out_dir);

  ctx.section = resolve_section(name, args, ctx);
  ctx.seed = ctx.section.at("seed").get<std::uint64_t>();
  ctx.threads = args.threads;

  if (name == "spectrum") run_spectrum(ctx);
  else if (name == "fit") run_fit(ctx);
  else if (name == "scan") run_scan(ctx);
  else if (name == "deconvolve") run_deconvolve(ctx);
  else if (name == "g2") run_g2(ctx);
  else run_spin(ctx);

  json manifest;
  manifest["tool"] = "scm";
  manifest["version"] = kVersion;
  manifest["schema_version"] = kSchemaVersion;
  manifest["subcommand"] = name;
  manifest["seed"] = ctx.seed;
  manifest["inputs"] = ctx.input_hashes;
  manifest["resolved_config"] = ctx.section;
  scm::write_json_file(ctx.out_dir / "manifest.json", manifest);
  return 0;
}

bool is_numerical_failure(scm::ErrorKind kind) {
  switch (kind) {
    case scm::ErrorKind::ToleranceNotMet:
    case scm::ErrorKind::DivergentIntegral:
    case scm::ErrorKind::DegenerateJacobian:
    case scm::ErrorKind::SingularRateMatrix:
      return true;
    default:
      return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scanning cavity microscope toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("scm ") + kVersion);

  CliArgs args;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"spectrum", "detected or coupled-system emission spectrum"},
      {"fit", "fit the line model to a measured spectrum"},
      {"scan", "simulate a positioner scan over the cavity field"},
      {"deconvolve", "recover a sample profile from a measured scan"},
      {"g2", "pair-correlation model and optional coincidence simulation"},
      {"spin", "ESR spectrum and Rabi trace"}};
  for (const auto& [name, desc] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", args.config_path, "JSON config (or a previous manifest.json)");
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--set", args.sets, "override config values, key.path=value");
    sub->add_option("--seed", args.seed, "random seed")
        ->each([&args](const std::string&) { args.seed_given = true; });
    sub->add_option("--threads", args.threads, "worker threads for scan positions");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();

  try {
    return run(name, args);
  } catch (const scm::ValidationError& e) {
    std::cerr << "scm " << name << ": " << e.what() << "\n";
    return 2;
  } catch (const scm::Error& e) {
    std::cerr << "scm " << name << ": " << e.what() << "\n";
    return is_numerical_failure(e.kind()) ? 3 : 2;
  } catch (const json::exception& e) {
    std::cerr << "scm " << name << ": config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "scm " << name << ": " << e.what() << "\n";
    return 2;
  }
}
