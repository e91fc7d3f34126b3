#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rfb/format.hpp"
#include "rfb/harness.hpp"

namespace rfb {

namespace {

Vec parse_point(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) vals.push_back(parse_double(item));
  if (vals.empty()) throw std::invalid_argument("expected comma-separated coordinates");
  Vec v(static_cast<int>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) v(static_cast<int>(i)) = vals[i];
  return v;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) vals.push_back(parse_double(item));
  return vals;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) vals.push_back(std::stoi(item));
  return vals;
}

nlohmann::json plane_json(const AffinePlane& p) {
  nlohmann::json j;
  j["base"] = std::vector<double>(p.base().data(), p.base().data() + p.base().size());
  nlohmann::json frame = nlohmann::json::array();
  for (int c = 0; c < p.k(); ++c) {
    const Vec col = p.frame().col(c);
    frame.push_back(std::vector<double>(col.data(), col.data() + col.size()));
  }
  j["frame"] = std::move(frame);
  return j;
}

ScaleLadder ladder_for(const DiscreteMeasure& mu, double rho, double tau) {
  if (!mu.finest_scale())
    throw std::invalid_argument("input measure lacks a finest_scale declaration");
  const double t = tau > 0.0 ? tau : ScaleLadder::default_tau(mu.n());
  return ScaleLadder(rho, *mu.finest_scale(), t);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Jones beta numbers, flatness functionals, and multiscale covering experiments"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "emit synthetic measure families");
  bool g_snowflake = false, g_lattice = false, g_perturbed = false;
  double g_theta = 0.0, g_veryflat = -1.0, g_invsq = -1.0, g_rho = 0.25, g_amplitude = 0.0;
  int g_gens = 3, g_k = 1, g_n = 2, g_scale = 0, g_frequency = 3;
  std::string g_out = "polyline.csv", g_balls_out;
  gen->add_flag("--snowflake", g_snowflake, "snowflake polyline family");
  gen->add_flag("--lattice", g_lattice, "planar lattice ball family");
  gen->add_flag("--perturbed", g_perturbed, "perturbed sine-graph family");
  gen->add_option("--theta", g_theta, "constant bend angle");
  gen->add_option("--veryflat", g_veryflat, "angles c/i with this c");
  gen->add_option("--invsq", g_invsq, "angles c/i^2 with this c");
  gen->add_option("--gens", g_gens, "generation count");
  gen->add_option("--k", g_k, "intrinsic dimension");
  gen->add_option("--n", g_n, "ambient dimension");
  gen->add_option("--scale", g_scale, "rho-adic scale index (0: derived from gens)");
  gen->add_option("--rho", g_rho, "scale ratio");
  gen->add_option("--amplitude", g_amplitude, "sine amplitude");
  gen->add_option("--frequency", g_frequency, "sine frequency");
  gen->add_option("--out", g_out, "polyline CSV path (snowflake)");
  gen->add_option("--balls-out", g_balls_out, "measure JSON path");

  // beta
  auto* beta = app.add_subcommand("beta", "one beta_q evaluation");
  std::string b_input, b_x = "0,0";
  double b_r = 1.0, b_q = 2.0;
  beta->add_option("--input", b_input, "measure JSON")->required();
  beta->add_option("--x", b_x, "center coordinates");
  beta->add_option("--r", b_r, "radius");
  beta->add_option("--q", b_q, "exponent q >= 2");

  // jones
  auto* jones = app.add_subcommand("jones", "Jones square function profile");
  std::string j_input, j_x = "0,0", j_csv;
  double j_r = 1.0, j_q = 2.0, j_rho = 0.25;
  jones->add_option("--input", j_input, "measure JSON")->required();
  jones->add_option("--x", j_x, "center coordinates");
  jones->add_option("--r", j_r, "top radius");
  jones->add_option("--q", j_q, "exponent");
  jones->add_option("--rho", j_rho, "scale ratio");
  jones->add_option("--csv", j_csv, "also write the per-scale beta table");

  // flatness
  auto* flat = app.add_subcommand("flatness", "sup/avg flatness functionals");
  std::string f_input;
  double f_q = 2.0, f_rho = 0.25;
  flat->add_option("--input", f_input, "measure JSON")->required();
  flat->add_option("--q", f_q, "exponent");
  flat->add_option("--rho", f_rho, "scale ratio");

  // cover
  auto* cover = app.add_subcommand("cover", "multiscale covering + surface run");
  std::string c_input, c_config, c_outdir = "cover_out";
  double c_rho = 0.25, c_tau = 0.0, c_q = 2.0, c_mesh_edge = 0.0, c_m = 0.0;
  std::string c_mode = "sup";
  bool c_beta_series = false;
  cover->add_option("--input", c_input, "measure JSON")->required();
  cover->add_option("--config", c_config, "run-config JSON");
  cover->add_option("--outdir", c_outdir, "output directory");
  cover->add_option("--rho", c_rho, "scale ratio");
  cover->add_option("--tau", c_tau, "mass threshold constant (0: default)");
  cover->add_option("--q", c_q, "exponent");
  cover->add_option("--mode", c_mode, "M policy exponent: sup|avg");
  cover->add_option("--mesh-edge", c_mesh_edge, "mesh edge length (0: r_A/2)");
  cover->add_option("--m", c_m, "fixed mass bound M (0: policy)");
  cover->add_flag("--beta-series", c_beta_series, "compute the beta^2 series");

  // verify
  auto* verify = app.add_subcommand("verify", "main-bound verdict");
  std::string v_input, v_mode = "sup";
  double v_q = 2.0, v_rho = 0.25, v_tau = 0.0;
  verify->add_option("--input", v_input, "measure JSON")->required();
  verify->add_option("--q", v_q, "exponent");
  verify->add_option("--mode", v_mode, "sup|avg");
  verify->add_option("--rho", v_rho, "scale ratio");
  verify->add_option("--tau", v_tau, "mass threshold constant (0: default)");

  // plot
  auto* plot = app.add_subcommand("plot", "emit a static SVG figure");
  std::string p_kind, p_input, p_out = "figure.svg";
  int p_scale = 0;
  plot->add_option("--kind", p_kind, "curve|covering|surface|scaling-plot")->required();
  plot->add_option("--input", p_input, "input file")->required();
  plot->add_option("--out", p_out, "SVG path");
  plot->add_option("--scale", p_scale, "covering scale index");

  // ensemble
  auto* ens = app.add_subcommand("ensemble", "grid of flatness/cover runs");
  std::string e_family = "veryflat", e_c = "0.1,0.2,0.3", e_gens = "4,5,6,7", e_q = "2",
              e_out = "ensemble.csv";
  double e_rho = 0.25, e_tau = 0.0;
  int e_frequency = 3;
  bool e_no_cover = false;
  ens->add_option("--family", e_family, "veryflat|flat|invsq|perturbed");
  ens->add_option("--c", e_c, "comma list: angle scales (or amplitudes)");
  ens->add_option("--gens", e_gens, "comma list: generations (or scale indices)");
  ens->add_option("--q", e_q, "comma list of exponents");
  ens->add_option("--rho", e_rho, "scale ratio");
  ens->add_option("--tau", e_tau, "mass threshold constant (0: default)");
  ens->add_option("--frequency", e_frequency, "sine frequency (perturbed)");
  ens->add_flag("--no-cover", e_no_cover, "skip covering runs");
  ens->add_option("--out", e_out, "report CSV path");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("reifenberg");
  for (const std::string& a : args) argv_store.push_back(a);
  std::vector<const char*> argv;
  for (const std::string& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());

    if (app.got_subcommand(gen)) {
      nlohmann::json summary;
      if (g_snowflake) {
        SnowflakeSpec spec = g_veryflat >= 0.0 ? SnowflakeSpec::harmonic(g_veryflat, g_gens)
                             : g_invsq >= 0.0 ? SnowflakeSpec::inverse_square(g_invsq, g_gens)
                                              : SnowflakeSpec::constant(g_theta, g_gens);
        const std::vector<Vec> poly = snowflake_polyline(spec);
        save_polyline_csv(poly, g_out);
        summary["polyline"] = g_out;
        summary["vertices"] = poly.size();
        summary["length"] = polyline_length(poly);
        if (!g_balls_out.empty()) {
          const int scale = g_scale > 0 ? g_scale : snowflake_scale_index(g_gens, g_rho);
          const BallCollection balls = polyline_to_balls(poly, scale, g_rho);
          DiscreteMeasure mu = collection_measure(balls, 2, 1, scale, "snowflake");
          save_measure_json(mu, g_balls_out);
          summary["measure"] = g_balls_out;
          summary["atoms"] = mu.size();
        }
      } else if (g_lattice) {
        const int scale = g_scale > 0 ? g_scale : 2;
        const BallCollection balls = plane_lattice_balls(g_k, g_n, scale, g_rho);
        DiscreteMeasure mu = collection_measure(balls, g_n, g_k, scale, "lattice");
        const std::string out = g_balls_out.empty() ? "measure.json" : g_balls_out;
        save_measure_json(mu, out);
        summary["measure"] = out;
        summary["atoms"] = mu.size();
      } else if (g_perturbed) {
        const int scale = g_scale > 0 ? g_scale : 3;
        const BallCollection balls = perturbed_graph_balls(g_amplitude, g_frequency, scale, g_rho);
        DiscreteMeasure mu = collection_measure(balls, 2, 1, scale, "perturbed");
        const std::string out = g_balls_out.empty() ? "measure.json" : g_balls_out;
        save_measure_json(mu, out);
        summary["measure"] = out;
        summary["atoms"] = mu.size();
      } else {
        throw CLI::ValidationError("generate", "pick one of --snowflake, --lattice, --perturbed");
      }
      std::cout << summary.dump(2) << "\n";
    } else if (app.got_subcommand(beta)) {
      const DiscreteMeasure mu = load_measure_json(b_input);
      const BetaResult res = beta_q(mu, parse_point(b_x), b_r, b_q);
      nlohmann::json j;
      j["value"] = res.value;
      j["residual_q"] = res.residual_q;
      if (res.plane) j["plane"] = plane_json(*res.plane);
      std::cout << j.dump(2) << "\n";
    } else if (app.got_subcommand(jones)) {
      const DiscreteMeasure mu = load_measure_json(j_input);
      const JonesProfile p = jones_square(mu, parse_point(j_x), j_r, j_q, j_rho);
      if (!j_csv.empty()) save_beta_table_csv(p, j_csv);
      std::cout << jones_profile_json(p) << "\n";
    } else if (app.got_subcommand(flat)) {
      const DiscreteMeasure mu = load_measure_json(f_input);
      std::cout << flatness_report_json(flatness_sup(mu, f_q, f_rho)) << "\n";
    } else if (app.got_subcommand(cover)) {
      RunConfig cfg;
      if (!c_config.empty()) cfg = RunConfig::from_json_file(c_config);
      if (cover->count("--rho")) cfg.rho = c_rho;
      if (cover->count("--tau")) cfg.tau = c_tau;
      if (cover->count("--q")) cfg.q = c_q;
      if (cover->count("--mode")) cfg.mode = c_mode;
      if (cover->count("--mesh-edge")) cfg.mesh_edge = c_mesh_edge;
      if (cover->count("--m")) cfg.m_override = c_m;
      if (cover->count("--beta-series")) cfg.beta_series = c_beta_series;
      const DiscreteMeasure mu = load_measure_json(c_input);
      const ScaleLadder ladder = ladder_for(mu, cfg.rho, cfg.tau);
      CoverOptions opt;
      opt.q = cfg.q;
      opt.mode = cfg.mode;
      opt.mesh_edge = cfg.mesh_edge;
      opt.m_override = cfg.m_override;
      opt.max_doublings = cfg.max_doublings;
      opt.with_beta_series = cfg.beta_series;
      const CoverRunResult run = cover_run(mu, ladder, opt);
      std::filesystem::create_directories(c_outdir);
      {
        std::ofstream out(c_outdir + "/hierarchy.json", std::ios::binary);
        out << hierarchy_json(run.hierarchy) << "\n";
      }
      for (std::size_t i = 0; i < run.surfaces.size(); ++i)
        save_mesh_off(run.surfaces[i], c_outdir + "/T" + std::to_string(i) + ".off");
      nlohmann::json rep;
      rep["M"] = run.m_final;
      rep["doublings"] = run.doublings;
      rep["J"] = run.j_used;
      rep["areas"] = run.report.areas;
      rep["max_lip"] = run.report.max_lip;
      rep["excess_mass"] = run.report.excess_mass_cum;
      if (!run.report.beta_series.empty()) rep["beta_series"] = run.report.beta_series;
      rep["comparison_c1"] = run.report.comparison_c1;
      rep["max_mu_over_surf"] = run.report.max_mu_over_surf;
      rep["min_surf_density"] = run.report.min_surf_density;
      rep["comparison_pass"] = run.report.comparison_pass;
      rep["density_pass"] = run.report.density_pass;
      rep["balls_checked"] = run.report.balls_checked;
      {
        std::ofstream out(c_outdir + "/report.json", std::ios::binary);
        out << rep.dump(2) << "\n";
      }
      std::cout << rep.dump(2) << "\n";
    } else if (app.got_subcommand(verify)) {
      const DiscreteMeasure mu = load_measure_json(v_input);
      const ScaleLadder ladder = ladder_for(mu, v_rho, v_tau);
      std::cout << verdict_json(verify_bound(mu, v_q, ladder, v_mode)) << "\n";
    } else if (app.got_subcommand(plot)) {
      if (p_kind == "curve") {
        emit_svg_curve(load_polyline_csv(p_input), p_out);
      } else if (p_kind == "covering") {
        std::ifstream in(p_input, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open for reading: " + p_input);
        nlohmann::json j;
        in >> j;
        const auto& lv = j.at("levels").at(static_cast<std::size_t>(p_scale));
        auto parse_balls = [](const nlohmann::json& arr) {
          std::vector<Ball> out;
          for (const auto& e : arr) {
            const auto c = e.at("center").get<std::vector<double>>();
            Vec center(static_cast<int>(c.size()));
            for (std::size_t i = 0; i < c.size(); ++i) center(static_cast<int>(i)) = c[i];
            out.push_back(Ball{center, e.at("radius").get<double>()});
          }
          return out;
        };
        emit_svg_covering(parse_balls(lv.at("good")), parse_balls(lv.at("bad")),
                          parse_balls(lv.at("fin")), p_out);
      } else if (p_kind == "surface") {
        emit_svg_surface(load_mesh_off(p_input), p_out);
      } else if (p_kind == "scaling-plot") {
        std::ifstream in(p_input, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open for reading: " + p_input);
        const auto rows = read_csv(in);
        std::vector<double> xs, ys;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (r == 0 && !rows[r].empty() && !rows[r][0].empty() &&
              !(rows[r][0][0] == '-' || rows[r][0][0] == '.' || std::isdigit(rows[r][0][0])))
            continue;  // header
          if (rows[r].size() < 2) continue;
          xs.push_back(parse_double(rows[r][0]));
          ys.push_back(parse_double(rows[r][1]));
        }
        emit_svg_scaling(xs, ys, p_out);
      } else {
        throw CLI::ValidationError("plot", "unknown --kind " + p_kind);
      }
      nlohmann::json j;
      j["svg"] = p_out;
      std::cout << j.dump(2) << "\n";
    } else if (app.got_subcommand(ens)) {
      EnsembleRequest req;
      req.family = e_family;
      req.c_values = parse_doubles(e_c);
      req.generations = parse_ints(e_gens);
      req.q_values = parse_doubles(e_q);
      req.rho = e_rho;
      req.tau = e_tau;
      req.frequency = e_frequency;
      req.with_cover = !e_no_cover;
      const std::vector<EnsembleRow> rows = run_ensemble(req);
      save_ensemble_csv(rows, e_out);
      nlohmann::json j;
      j["report"] = e_out;
      j["rows"] = rows.size();
      std::cout << j.dump(2) << "\n";
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems exit 2, --help exits 0
  } catch (const CoveringViolation& v) {
    nlohmann::json j;
    j["error"] = v.what();
    j["identifier"] = v.identifier;
    std::cerr << j.dump() << "\n";
    return 3;
  } catch (const std::exception& e) {
    nlohmann::json j;
    j["error"] = e.what();
    std::cerr << j.dump() << "\n";
    return 1;
  }
}

}  // namespace rfb
