#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rfb/format.hpp"
#include "rfb/harness.hpp"

namespace rfb {

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json j;
  in >> j;
  RunConfig c;
  c.rho = j.value("rho", c.rho);
  c.tau = j.value("tau", c.tau);
  c.q = j.value("q", c.q);
  c.mode = j.value("mode", c.mode);
  c.mesh_edge = j.value("mesh_edge", c.mesh_edge);
  c.m_override = j.value("m_override", c.m_override);
  c.max_doublings = j.value("max_doublings", c.max_doublings);
  c.beta_series = j.value("beta_series", c.beta_series);
  return c;
}

std::string RunConfig::to_json() const {
  nlohmann::json j;
  j["rho"] = rho;
  j["tau"] = tau;
  j["q"] = q;
  j["mode"] = mode;
  j["mesh_edge"] = mesh_edge;
  j["m_override"] = m_override;
  j["max_doublings"] = max_doublings;
  j["beta_series"] = beta_series;
  return j.dump(2);
}

void RunConfig::save_json(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << to_json() << "\n";
}

int snowflake_scale_index(int generations, double rho) {
  if (generations < 0) throw std::invalid_argument("snowflake_scale_index: generations >= 0");
  const double ratio = std::log(3.0) / std::log(1.0 / rho);
  int s = static_cast<int>(std::ceil(ratio * std::max(1, generations) - 1e-12));
  return std::max(1, s);
}

namespace {

std::string spec_identifier(const EnsembleRequest& req, double c, int gens, double q) {
  std::ostringstream os;
  os << req.family << "_c" << format_double(c) << "_g" << gens << "_q" << format_double(q);
  return os.str();
}

}  // namespace

std::vector<EnsembleRow> run_ensemble(const EnsembleRequest& req) {
  std::vector<EnsembleRow> rows;
  for (double c : req.c_values) {
    for (int gens : req.generations) {
      BallCollection balls;
      int scale = 0;
      if (req.family == "perturbed") {
        scale = gens;  // the grid carries scale indices for this family
        balls = perturbed_graph_balls(c, req.frequency, scale, req.rho);
      } else {
        SnowflakeSpec spec = req.family == "flat" ? SnowflakeSpec::constant(c, gens)
                             : req.family == "invsq" ? SnowflakeSpec::inverse_square(c, gens)
                                                     : SnowflakeSpec::harmonic(c, gens);
        scale = snowflake_scale_index(gens, req.rho);
        balls = polyline_to_balls(snowflake_polyline(spec), scale, req.rho);
      }
      const double tau = req.tau > 0.0 ? req.tau : ScaleLadder::default_tau(2);
      const ScaleLadder ladder(req.rho, scale, tau);
      DiscreteMeasure mu = collection_measure(balls, 2, 1, scale, req.family);

      for (double q : req.q_values) {
        EnsembleRow row;
        row.spec_id = spec_identifier(req, c, gens, q);
        row.generations = gens;
        row.c = c;
        row.q = q;
        row.mu_b1 = mass_in_ball(mu, Vec::Zero(2), 1.0);
        const FlatnessReport rep = flatness_sup(mu, q, req.rho);
        row.j_sup = rep.J_sup;
        row.j_avg = rep.J_avg;
        row.ratio_sup = row.mu_b1 / std::max(1.0, std::pow(row.j_sup, q / (q + 2.0)));
        row.ratio_avg = row.mu_b1 / std::max(1.0, std::pow(row.j_avg, q / 2.0));
        if (req.with_cover) {
          CoverOptions opt;
          opt.q = q;
          try {
            const CoverRunResult run = cover_run(mu, ladder, opt);
            row.excess_mass = run.hierarchy.excess_mass(mu);
            row.t_area = run.report.areas.empty() ? 0.0 : run.report.areas.back();
            row.max_comparison = run.report.max_mu_over_surf;
            row.comparison_pass = run.report.comparison_pass;
            row.density_pass = run.report.density_pass;
          } catch (const CoveringViolation& v) {
            row.cover_ok = false;
            row.violated = v.identifier;
          }
        }
        rows.push_back(std::move(row));
      }
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const EnsembleRow& a, const EnsembleRow& b) { return a.spec_id < b.spec_id; });
  return rows;
}

void save_ensemble_csv(const std::vector<EnsembleRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << csv_row({"spec_id", "generations", "c", "q", "mu_B1", "J_sup", "J_avg", "ratio_sup",
                  "ratio_avg", "excess_mass", "T_A_area", "max_comparison", "cover_ok",
                  "comparison_pass", "density_pass", "violated"});
  for (const EnsembleRow& r : rows) {
    out << csv_row({r.spec_id, std::to_string(r.generations), format_double(r.c),
                    format_double(r.q), format_double(r.mu_b1), format_double(r.j_sup),
                    format_double(r.j_avg), format_double(r.ratio_sup), format_double(r.ratio_avg),
                    format_double(r.excess_mass), format_double(r.t_area),
                    format_double(r.max_comparison), r.cover_ok ? "1" : "0",
                    r.comparison_pass ? "1" : "0", r.density_pass ? "1" : "0", r.violated});
  }
}

}  // namespace rfb
