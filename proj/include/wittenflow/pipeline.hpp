#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wittenflow/core.hpp"
#include "wittenflow/dec.hpp"
#include "wittenflow/flow.hpp"
#include "wittenflow/io.hpp"
#include "wittenflow/morse_complex.hpp"
#include "wittenflow/resonance.hpp"
#include "wittenflow/surface.hpp"
#include "wittenflow/wkb.hpp"
#include "wittenflow/witten.hpp"

namespace wittenflow {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  // model
  std::string model_kind = "flat-torus-unit-square";
  std::string function_name = "cosine";
  double epsilon = 0.5;                 // bumped-sphere parameter
  std::array<double, 2> shift{0.0, 0.0};  // shifted-cosine parameter
  double normalization = 1.0;

  std::vector<int> mesh_levels = {16};
  std::vector<double> hbar_grid = {0.3, 0.2, 0.15};
  double lambda_cutoff = 2.5;
  std::string epsilon0_policy = "half-gap";  // or a positive number as string
  double tol_quadrature = 1e-10;
  double tol_ode = 1e-10;
  double tol_eigen = 1e-10;
  double tol_merge = 1e-9;
  std::uint64_t seed = 0;
  std::vector<std::string> pipelines = {"resonances"};

  // correlations pipeline
  std::string psi1 = "";  // default chosen by model kind
  std::string psi2 = "one";
  double corr_t_max = 8.0;
  double corr_dt = 0.1;

  std::string config_hash;

  MorseModel make_model() const {
    if (model_kind == "unit-sphere-embedded") {
      if (function_name == "height") return sphere_height(normalization);
      if (function_name == "bumped") return sphere_bumped(epsilon, normalization);
      if (function_name == "quadric") return sphere_quadric(normalization);
      throw ConfigError("unknown sphere function: " + function_name);
    }
    if (model_kind == "flat-torus-unit-square") {
      if (function_name == "cosine") return torus_cosine(shift[0], shift[1], normalization);
      if (function_name == "x-cosine") return torus_x_cosine(normalization);
      throw ConfigError("unknown torus function: " + function_name);
    }
    if (model_kind == "chart-parameterized")
      return MorseModel(SurfaceKind::ChartParameterized, function_name, zero_field(), normalization);
    throw ConfigError("unknown model kind: " + model_kind);
  }
};

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  ExperimentConfig cfg;
  detail::reject_unknown_keys(j, {"model", "mesh_levels", "hbar_grid", "lambda_cutoff",
                                  "epsilon0_policy", "tolerances", "seed", "pipelines",
                                  "correlation"},
                              "top level");
  if (j.contains("model")) {
    const Json& m = j.at("model");
    detail::reject_unknown_keys(m, {"kind", "function", "params", "normalization"}, "model");
    if (m.contains("kind")) cfg.model_kind = m.at("kind").get<std::string>();
    if (m.contains("function")) cfg.function_name = m.at("function").get<std::string>();
    if (m.contains("normalization")) cfg.normalization = m.at("normalization").get<double>();
    if (m.contains("params")) {
      const Json& p = m.at("params");
      detail::reject_unknown_keys(p, {"epsilon", "shift_x", "shift_y"}, "model.params");
      if (p.contains("epsilon")) cfg.epsilon = p.at("epsilon").get<double>();
      if (p.contains("shift_x")) cfg.shift[0] = p.at("shift_x").get<double>();
      if (p.contains("shift_y")) cfg.shift[1] = p.at("shift_y").get<double>();
    }
  }
  if (j.contains("mesh_levels")) cfg.mesh_levels = j.at("mesh_levels").get<std::vector<int>>();
  if (j.contains("hbar_grid")) cfg.hbar_grid = j.at("hbar_grid").get<std::vector<double>>();
  if (j.contains("lambda_cutoff")) cfg.lambda_cutoff = j.at("lambda_cutoff").get<double>();
  if (j.contains("epsilon0_policy")) cfg.epsilon0_policy = j.at("epsilon0_policy").get<std::string>();
  if (j.contains("tolerances")) {
    const Json& t = j.at("tolerances");
    detail::reject_unknown_keys(t, {"quadrature", "ode", "eigen", "merge"}, "tolerances");
    if (t.contains("quadrature")) cfg.tol_quadrature = t.at("quadrature").get<double>();
    if (t.contains("ode")) cfg.tol_ode = t.at("ode").get<double>();
    if (t.contains("eigen")) cfg.tol_eigen = t.at("eigen").get<double>();
    if (t.contains("merge")) cfg.tol_merge = t.at("merge").get<double>();
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("pipelines")) cfg.pipelines = j.at("pipelines").get<std::vector<std::string>>();
  if (j.contains("correlation")) {
    const Json& c = j.at("correlation");
    detail::reject_unknown_keys(c, {"psi1", "psi2", "t_max", "dt"}, "correlation");
    if (c.contains("psi1")) cfg.psi1 = c.at("psi1").get<std::string>();
    if (c.contains("psi2")) cfg.psi2 = c.at("psi2").get<std::string>();
    if (c.contains("t_max")) cfg.corr_t_max = c.at("t_max").get<double>();
    if (c.contains("dt")) cfg.corr_dt = c.at("dt").get<double>();
  }

  // validation
  for (size_t i = 1; i < cfg.hbar_grid.size(); ++i)
    if (cfg.hbar_grid[i] >= cfg.hbar_grid[i - 1])
      throw ConfigError("config: hbar_grid must be strictly decreasing");
  for (double h : cfg.hbar_grid)
    if (h <= 0) throw ConfigError("config: hbar values must be positive");
  for (double t : {cfg.tol_quadrature, cfg.tol_ode, cfg.tol_eigen, cfg.tol_merge})
    if (t <= 0) throw ConfigError("config: tolerances must be positive");
  if (cfg.lambda_cutoff <= 0) throw ConfigError("config: lambda_cutoff must be positive");
  const std::set<std::string> known = {"resonances", "spectrum", "converge", "correlations",
                                       "morse",      "tunneling", "fukaya"};
  for (const auto& p : cfg.pipelines)
    if (!known.count(p)) throw ConfigError("config: unknown pipeline '" + p + "'");

  cfg.config_hash = hex64(fnv1a(j.dump()));
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Pipeline runner
// ---------------------------------------------------------------------------

struct RunReport {
  int exit_code = 0;
  std::vector<std::string> warnings;
  std::map<std::string, std::string> files;  // filename -> producing stage
  int under_resolved_rows = 0;
};

namespace detail {

inline double epsilon0_from_policy(const ExperimentConfig& cfg, const CriticalSet& crits, int k) {
  if (cfg.epsilon0_policy == "half-gap") return 0.5 * std::abs(spectral_gap(crits, k));
  double v = 0.0;
  try {
    v = std::stod(cfg.epsilon0_policy);
  } catch (const std::exception&) {
    throw ConfigError("epsilon0_policy must be 'half-gap' or a positive number");
  }
  if (v <= 0) throw ConfigError("epsilon0_policy must be 'half-gap' or a positive number");
  return v;
}

inline std::function<double(const Vec3&)> named_form(const std::string& name, bool torus) {
  if (name == "one") return [](const Vec3&) { return 1.0; };
  if (name == "cos2pix") return [](const Vec3& p) { return std::cos(kTwoPi * p.x()); };
  if (name == "sin2pix") return [](const Vec3& p) { return std::sin(kTwoPi * p.x()); };
  if (name == "one-plus-half-sin2pix")
    return [](const Vec3& p) { return 1.0 + 0.5 * std::sin(kTwoPi * p.x()); };
  if (name == "height") return [](const Vec3& p) { return p.z(); };
  if (name.empty()) return named_form(torus ? "cos2pix" : "height", torus);
  throw ConfigError("unknown test form: " + name);
}

}  // namespace detail

inline RunReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  RunReport report;
  auto outfile = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
  auto want = [&](const std::string& p) {
    return std::find(cfg.pipelines.begin(), cfg.pipelines.end(), p) != cfg.pipelines.end();
  };

  MorseModel model = cfg.make_model();

  // Stage 1: critical structure (every pipeline depends on it).
  CriticalSet crits = find_critical_points(model);
  for (const auto& w : crits.warnings) report.warnings.push_back(w);
  write_critical_points_csv(outfile("critical_points.csv"), cfg.config_hash, model, crits);
  report.files["critical_points.csv"] = "critical_structure";

  SmaleReport smale;
  bool has_saddle = false;
  for (const auto& cp : crits.points) has_saddle = has_saddle || cp.index_r == 1;
  if (has_saddle) {
    TraceOptions topts;
    topts.limit.ode.tol = cfg.tol_ode;
    smale = check_smale_transversality(model, crits, 1e-3, topts);
    if (!smale.ok) {
      for (const auto& s : smale.suspects)
        report.warnings.push_back("smale suspect: saddle " + std::to_string(s.saddle_from) + " " +
                                  s.note);
      report.exit_code = 4;
    }
  }

  OrientationData orient = cfg.seed == 0 ? OrientationData::canonical(crits)
                                         : OrientationData::random_redraw(crits, cfg.seed);

  // Stage 2: resonances.
  std::vector<ResonanceSet> resonance_sets;
  if (want("resonances") || want("spectrum") || want("converge")) {
    for (int k = 0; k <= 2; ++k)
      resonance_sets.push_back(global_resonances(crits, k, cfg.lambda_cutoff, 1000000, cfg.tol_merge));
    write_resonances_csv(outfile("resonances.csv"), cfg.config_hash, resonance_sets);
    report.files["resonances.csv"] = "resonance_engine";

    Json summary;
    summary["config_hash"] = cfg.config_hash;
    Json degrees = Json::array();
    for (int k = 0; k <= 2; ++k) {
      Json d;
      d["degree"] = k;
      d["kernel_multiplicity"] = kernel_multiplicity(crits, k);
      d["spectral_gap"] = spectral_gap(crits, k);
      d["entries"] = static_cast<int>(resonance_sets[k].entries.size());
      d["total_multiplicity"] = resonance_sets[k].total_multiplicity();
      degrees.push_back(d);
    }
    summary["degrees"] = degrees;
    write_json(outfile("resonances_summary.json"), summary);
    report.files["resonances_summary.json"] = "resonance_engine";
  }

  LowSpectrumOptions eig_opts;
  eig_opts.tol_rel = cfg.tol_eigen;
  eig_opts.seed = 12345 + cfg.seed;

  // Stage 3a: spectrum across the (level, hbar, degree) grid.
  if (want("spectrum")) {
    CsvWriter csv(outfile("spectrum.csv"), cfg.config_hash, "degree,hbar,mesh_level,j,lambda,resolved_flag");
    auto counts = critical_counts(crits);
    for (int level : cfg.mesh_levels) {
      TriMesh mesh = build_mesh(model, level);
      DecComplex dec = build_dec(mesh, model);
      for (double hbar : cfg.hbar_grid) {
        for (int k = 0; k <= 2; ++k) {
          WittenOperator W = witten_matrix(dec, hbar, k);
          int m = std::min(dec.dim(k), counts[k] + 4);
          EigenPairs eig = low_spectrum(W, m, eig_opts);
          if (W.under_resolved) report.under_resolved_rows += m;
          for (int jj = 0; jj < eig.values.size(); ++jj)
            csv.row({std::to_string(k), format_full(hbar), std::to_string(level),
                     std::to_string(jj + 1), format_full(eig.values[jj]),
                     W.under_resolved ? "0" : "1"});
        }
      }
    }
    report.files["spectrum.csv"] = "witten_dec";
    if (report.under_resolved_rows > 0)
      report.warnings.push_back(std::to_string(report.under_resolved_rows) +
                                " spectral rows are under-resolved for their mesh");
  }

  // Stage 3b: coupled (hbar, level) convergence schedule, degree 0.
  if (want("converge")) {
    if (cfg.mesh_levels.size() != cfg.hbar_grid.size())
      throw ConfigError("converge pipeline: mesh_levels and hbar_grid must pair up");
    double gap = std::abs(spectral_gap(crits, 0));
    auto counts = critical_counts(crits);
    // the spectrum pipeline owns spectrum.csv when both are requested
    std::unique_ptr<CsvWriter> spec_csv;
    if (!want("spectrum"))
      spec_csv = std::make_unique<CsvWriter>(outfile("spectrum.csv"), cfg.config_hash,
                                             "degree,hbar,mesh_level,j,lambda,resolved_flag");
    CsvWriter conv_csv(outfile("converge.csv"), cfg.config_hash,
                       "hbar,mesh_level,lambda_next,gap,deviation");
    for (size_t i = 0; i < cfg.hbar_grid.size(); ++i) {
      double hbar = cfg.hbar_grid[i];
      int level = cfg.mesh_levels[i];
      TriMesh mesh = build_mesh(model, level);
      DecComplex dec = build_dec(mesh, model);
      WittenOperator W = witten_matrix(dec, hbar, 0);
      int m = std::min(dec.dim(0), counts[0] + 3);
      EigenPairs eig = low_spectrum(W, m, eig_opts);
      if (W.under_resolved) ++report.under_resolved_rows;
      if (spec_csv)
        for (int jj = 0; jj < eig.values.size(); ++jj)
          spec_csv->row({"0", format_full(hbar), std::to_string(level), std::to_string(jj + 1),
                         format_full(eig.values[jj]), W.under_resolved ? "0" : "1"});
      double lam_next = eig.values[counts[0]];
      conv_csv.row({format_full(hbar), std::to_string(level), format_full(lam_next),
                    format_full(gap), format_full(std::abs(lam_next - gap))});
    }
    if (spec_csv) report.files["spectrum.csv"] = "witten_dec";
    report.files["converge.csv"] = "witten_dec";
  }

  // Stage 3c: correlation functions (time domain).
  if (want("correlations")) {
    int level = cfg.mesh_levels.front();
    TriMesh mesh = build_mesh(model, level);
    auto psi1 = detail::named_form(cfg.psi1, model.is_torus());
    auto psi2 = detail::named_form(cfg.psi2, model.is_torus());
    std::vector<double> t_grid;
    for (double t = 0.0; t <= cfg.corr_t_max + 1e-12; t += cfg.corr_dt) t_grid.push_back(t);
    OdeOptions ode;
    ode.tol = cfg.tol_ode;
    CorrelationSeries series = correlation(model, mesh, psi1, psi2, t_grid, ode);
    OmegaLimitOptions lopts;
    lopts.ode.tol = cfg.tol_ode;
    BasinMasks basins = basin_masks(model, mesh, crits, lopts);
    series.limit_prediction = correlation_limit_prediction(model, mesh, crits, basins, psi1, psi2);
    double gap = spectral_gap(crits, 0);

    Json fit_json;
    fit_json["config_hash"] = cfg.config_hash;
    fit_json["limit_prediction"] = series.limit_prediction;
    fit_json["gap_prediction"] = gap;
    try {
      DecayFit fit = decay_rate_fit(series, series.limit_prediction, gap);
      series.fitted_rate = fit.rate;
      fit_json["fitted_rate"] = fit.rate;
      fit_json["status"] = fit.status == FitStatus::Fitted ? "fitted" : "already-converged";
      fit_json["window"] = {fit.window_lo, fit.window_hi};
      fit_json["window_points"] = fit.window_points;
    } catch (const FitWindowError& e) {
      fit_json["status"] = "fit-window-error";
      fit_json["error"] = e.what();
    }
    write_json(outfile("fit.json"), fit_json);
    report.files["fit.json"] = "flow_dynamics";

    CsvWriter csv(outfile("correlation.csv"), cfg.config_hash, "t,C,residual");
    for (size_t i = 0; i < series.t_grid.size(); ++i)
      csv.row({format_full(series.t_grid[i]), format_full(series.values[i]),
               format_full(std::abs(series.values[i] - series.limit_prediction))});
    report.files["correlation.csv"] = "flow_dynamics";
  }

  // Stage 4: Morse complex over Z.
  std::optional<MorseComplexData> morse_data;
  if (want("morse") || want("tunneling")) {
    morse_data = boundary_matrix(model, crits, orient);
  }
  if (want("morse")) {
    auto ver = verify_complex(*morse_data);
    Json mj;
    mj["config_hash"] = cfg.config_hash;
    Json jc = Json::array();
    for (const auto& cp : crits.points)
      jc.push_back({{"id", cp.id},
                    {"position", {cp.position.x(), cp.position.y(), cp.position.z()}},
                    {"index", cp.index_r},
                    {"f_value", cp.f_value},
                    {"lyapunov", {cp.lyapunov[0], cp.lyapunov[1]}}});
    mj["crits"] = jc;
    mj["orientations"] = morse_data->orientations;
    Json ji = Json::array();
    for (const auto& inst : morse_data->instantons) {
      Json poly = Json::array();
      size_t stride = std::max<size_t>(1, inst.polyline.size() / 200);
      for (size_t i = 0; i < inst.polyline.size(); i += stride) {
        const Vec3& p = inst.polyline[i];
        poly.push_back({p.x(), p.y(), p.z()});
      }
      const Vec3& last = inst.polyline.back();
      poly.push_back({last.x(), last.y(), last.z()});
      ji.push_back({{"from", inst.from_id}, {"to", inst.to_id}, {"sign", inst.sign},
                    {"polyline", poly}});
    }
    mj["instantons"] = ji;
    auto mat_to_json = [](const Eigen::MatrixXi& m) {
      Json rows = Json::array();
      for (int i = 0; i < m.rows(); ++i) {
        Json r = Json::array();
        for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
      }
      return rows;
    };
    mj["n_ab"] = {{"d01", mat_to_json(morse_data->boundary[0])},
                  {"d12", mat_to_json(morse_data->boundary[1])}};
    mj["instanton_sign_factor"] = morse_data->instanton_sign_factor;
    mj["betti"] = ver.betti;
    mj["torsion"] = ver.torsion;
    mj["d2_zero"] = ver.d2_zero;
    write_json(outfile("morse.json"), mj);
    report.files["morse.json"] = "morse_complex";
    if (!ver.d2_zero) throw NumericalError("morse complex: boundary squared is nonzero");
  }

  // Stage 5a: tunneling coefficients.
  if (want("tunneling")) {
    int level = cfg.mesh_levels.back();
    double hbar = cfg.hbar_grid.back();
    TriMesh mesh = build_mesh(model, level);
    DecComplex dec = build_dec(mesh, model);
    auto counts = critical_counts(crits);

    Json tj;
    tj["config_hash"] = cfg.config_hash;
    tj["hbar"] = hbar;
    tj["mesh_level"] = level;
    Json entries = Json::array();
    for (int k = 0; k <= 1; ++k) {
      if (counts[k] == 0) continue;
      double eps0_k = detail::epsilon0_from_policy(cfg, crits, k);
      WkbCluster cl_k = build_wkb_cluster(dec, k, hbar, eps0_k, counts[k], eig_opts);
      std::vector<WkbState> states_b;
      std::vector<int> ids_b;
      if (counts[k + 1] > 0) {
        double eps0_k1 = detail::epsilon0_from_policy(cfg, crits, k + 1);
        WkbCluster cl_k1 = build_wkb_cluster(dec, k + 1, hbar, eps0_k1, counts[k + 1], eig_opts);
        for (const auto& cp : crits.points) {
          if (cp.index_r != k + 1) continue;
          UnstableCochain u = discrete_unstable_cochain(model, mesh, crits, orient, cp.id);
          states_b.push_back(wkb_state(dec, crits, cl_k1, u));
          ids_b.push_back(cp.id);
        }
      }
      for (const auto& cp : crits.points) {
        if (cp.index_r != k) continue;
        UnstableCochain u = discrete_unstable_cochain(model, mesh, crits, orient, cp.id);
        WkbState st = wkb_state(dec, crits, cl_k, u);
        TunnelingResult tr = tunneling_check(dec, crits, hbar, st, states_b);
        Json e;
        e["a"] = cp.id;
        e["residual"] = tr.residual;
        e["leakage"] = tr.leakage;
        Json nh = Json::object(), nr = Json::object(), ref = Json::object();
        for (size_t j = 0; j < tr.b_ids.size(); ++j) {
          std::string key = std::to_string(tr.b_ids[j]);
          nh[key] = tr.n_hat[j];
          nr[key] = tr.n_rounded[j];
          int row = -1, col = -1;
          const auto& rows = morse_data->index_ids[k];
          const auto& cols = morse_data->index_ids[k + 1];
          for (size_t i = 0; i < rows.size(); ++i)
            if (rows[i] == cp.id) row = static_cast<int>(i);
          for (size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == tr.b_ids[j]) col = static_cast<int>(i);
          ref[key] = morse_data->boundary[k](row, col);
        }
        e["n_hat"] = nh;
        e["n_rounded"] = nr;
        e["n_reference"] = ref;
        entries.push_back(e);
      }
    }
    tj["entries"] = entries;
    write_json(outfile("tunneling.json"), tj);
    report.files["tunneling.json"] = "wkb_quasimodes";
  }

  // Stage 5b: Fukaya triple products on the canonical triple for this model.
  if (want("fukaya")) {
    ScalarField f1 = zero_field();
    ScalarField f2 = model.field;
    ScalarField f3 = model.is_torus() ? torus_cosine(cfg.shift[0] + 1.0 / 3.0, cfg.shift[1] + 1.0 / 3.0).field
                                      : field_rotate(f2, rotation_z(2.0 * kPi / 3.0));
    TraceOptions topts;
    topts.limit.ode.tol = cfg.tol_ode;
    TripleContext ctx = make_triple_context(model.kind, f1, f2, f3, topts);

    auto pick = [](const CriticalSet& cs, int index) {
      for (const auto& cp : cs.points)
        if (cp.index_r == index) return cp.id;
      throw DomainError("fukaya: no critical point of the requested index");
    };
    TripleProblem prob;
    prob.flows = {&ctx.f12, &ctx.f23, &ctx.f31};
    prob.chosen = {pick(ctx.f12.crits, 0), pick(ctx.f23.crits, 1), pick(ctx.f31.crits, 1)};

    int count = triple_intersection_count(prob, topts);
    TraceOptions refined = topts;
    refined.ds_max = 0.5 * topts.ds_max;
    int count_refined = triple_intersection_count(prob, refined);

    Json fj;
    fj["config_hash"] = cfg.config_hash;
    fj["triple"] = {{"a12", prob.chosen[0]}, {"a23", prob.chosen[1]}, {"a31", prob.chosen[2]}};
    fj["geometric_count"] = count;
    fj["geometric_count_refined"] = count_refined;

    int level = cfg.mesh_levels.back();
    TriMesh mesh = build_mesh(ctx.f12.model, level);
    DecComplex dec12 = build_dec(mesh, ctx.f12.model);
    DecComplex dec23 = build_dec(mesh, ctx.f23.model);
    DecComplex dec31 = build_dec(mesh, ctx.f31.model);
    Json wv = Json::array(), pe = Json::array();
    for (double hbar : cfg.hbar_grid) {
      auto c12 = critical_counts(ctx.f12.crits);
      auto c23 = critical_counts(ctx.f23.crits);
      auto c31 = critical_counts(ctx.f31.crits);
      WkbCluster cl12 = build_wkb_cluster(dec12, 0, hbar,
                                          0.5 * std::abs(spectral_gap(ctx.f12.crits, 0)), c12[0], eig_opts);
      WkbCluster cl23 = build_wkb_cluster(dec23, 1, hbar,
                                          0.5 * std::abs(spectral_gap(ctx.f23.crits, 1)), c23[1], eig_opts);
      WkbCluster cl31 = build_wkb_cluster(dec31, 1, hbar,
                                          0.5 * std::abs(spectral_gap(ctx.f31.crits, 1)), c31[1], eig_opts);
      UnstableCochain u12 = discrete_unstable_cochain(ctx.f12.model, mesh, ctx.f12.crits, ctx.f12.orient, prob.chosen[0], topts);
      UnstableCochain u23 = discrete_unstable_cochain(ctx.f23.model, mesh, ctx.f23.crits, ctx.f23.orient, prob.chosen[1], topts);
      UnstableCochain u31 = discrete_unstable_cochain(ctx.f31.model, mesh, ctx.f31.crits, ctx.f31.orient, prob.chosen[2], topts);
      WkbState s12 = wkb_state(dec12, ctx.f12.crits, cl12, u12);
      WkbState s23 = wkb_state(dec23, ctx.f23.crits, cl23, u23);
      WkbState s31 = wkb_state(dec31, ctx.f31.crits, cl31, u31);
      auto res = triple_product_witten(mesh, {&dec12, &dec23, &dec31}, prob, {&s12, &s23, &s31},
                                       {&cl12, &cl23, &cl31});
      wv.push_back({{"hbar", hbar}, {"scaled_value", res.scaled_value},
                    {"raw_integral", res.raw_integral}, {"under_resolved", res.under_resolved}});
      pe.push_back(res.prefactor_exponent);
    }
    fj["witten_values"] = wv;
    fj["prefactor_exponents"] = pe;
    write_json(outfile("fukaya.json"), fj);
    report.files["fukaya.json"] = "wkb_quasimodes";
  }

  // Summary with provenance.
  Json summary;
  summary["config_hash"] = cfg.config_hash;
  summary["model"] = {{"kind", cfg.model_kind}, {"function", cfg.function_name}};
  summary["pipelines"] = cfg.pipelines;
  Json files = Json::object();
  for (const auto& [f, stage] : report.files) files[f] = stage;
  summary["files"] = files;
  summary["warnings"] = report.warnings;
  summary["under_resolved_rows"] = report.under_resolved_rows;
  summary["exit_code"] = report.exit_code;
  write_json(outfile("summary.json"), summary);
  return report;
}

// ---------------------------------------------------------------------------
// Spectrum vs resonance comparison
// ---------------------------------------------------------------------------

struct SpectrumMatchRow {
  int degree = 0;
  double hbar = 0.0;
  int mesh_level = 0;
  int j = 0;
  double minus_lambda = 0.0;
  double resonance = 0.0;
  double deviation = 0.0;
};

// Greedy nearest matching of -lambda_j against the resonance multiset,
// respecting multiplicities, grouped per (degree, hbar, level).
inline std::vector<SpectrumMatchRow> compare_spectra(const std::string& dir) {
  namespace fs = std::filesystem;
  std::string spec_path = (fs::path(dir) / "spectrum.csv").string();
  std::string res_path = (fs::path(dir) / "resonances.csv").string();
  std::string h1 = read_config_hash_line(spec_path);
  std::string h2 = read_config_hash_line(res_path);
  if (h1 != h2) throw ConfigError("compare: config hash mismatch between spectrum and resonances");

  // degree -> list of (value, multiplicity)
  std::map<int, std::vector<std::pair<double, int>>> resonances;
  {
    std::ifstream in(res_path);
    std::string line;
    std::getline(in, line);  // hash
    std::getline(in, line);  // header
    std::set<std::tuple<int, long long>> seen;  // (degree, rounded value) per entry
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      int deg = std::stoi(cells[0]);
      double value = std::stod(cells[1]);
      int mult = std::stoi(cells[2]);
      auto key = std::make_tuple(deg, static_cast<long long>(std::llround(value * 1e12)));
      if (seen.insert(key).second) resonances[deg].push_back({value, mult});
    }
  }

  struct SpecRow {
    int degree, level, j;
    double hbar, lambda;
  };
  std::vector<SpecRow> rows;
  {
    std::ifstream in(spec_path);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      rows.push_back({std::stoi(cells[0]), std::stoi(cells[2]), std::stoi(cells[3]),
                      std::stod(cells[1]), std::stod(cells[4])});
    }
  }

  std::vector<SpectrumMatchRow> out;
  std::map<std::tuple<int, double, int>, std::vector<std::pair<double, int>>> budget;
  for (const auto& r : rows) {
    auto key = std::make_tuple(r.degree, r.hbar, r.level);
    if (!budget.count(key)) budget[key] = resonances[r.degree];
    auto& pool = budget[key];
    double target = -r.lambda;
    int best = -1;
    double best_d = 1e300;
    for (size_t i = 0; i < pool.size(); ++i) {
      if (pool[i].second <= 0) continue;
      double d = std::abs(pool[i].first - target);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) continue;
    pool[best].second -= 1;
    out.push_back({r.degree, r.hbar, r.level, r.j, target, pool[best].first, best_d});
  }
  return out;
}

inline void write_compare_csv(const std::string& dir, const std::vector<SpectrumMatchRow>& rows,
                              const std::string& hash) {
  namespace fs = std::filesystem;
  CsvWriter csv((fs::path(dir) / "compare.csv").string(), hash,
                "degree,hbar,mesh_level,j,minus_lambda,matched_resonance,deviation");
  for (const auto& r : rows)
    csv.row({std::to_string(r.degree), format_full(r.hbar), std::to_string(r.mesh_level),
             std::to_string(r.j), format_full(r.minus_lambda), format_full(r.resonance),
             format_full(r.deviation)});
}

}  // namespace wittenflow
