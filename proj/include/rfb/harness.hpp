#pragma once

#include <string>
#include <vector>

#include "rfb/generators.hpp"
#include "rfb/reifenberg.hpp"

namespace rfb {

// Parameters of a covering run as consumed by the `cover` subcommand; the
// JSON round-trip is lossless.
struct RunConfig {
  double rho = 0.25;
  double tau = 0.0;  // 0 -> default tau(n)
  double q = 2.0;
  std::string mode = "sup";
  double mesh_edge = 0.0;
  double m_override = 0.0;
  int max_doublings = 40;
  bool beta_series = false;

  static RunConfig from_json_file(const std::string& path);
  void save_json(const std::string& path) const;
  std::string to_json() const;
};

// Scale index for a generation-N snowflake under a rho ladder: the smallest
// s with rho^s below the finest feature size 3^{-N}.
int snowflake_scale_index(int generations, double rho);

struct EnsembleRow {
  std::string spec_id;
  int generations = 0;
  double c = 0.0;
  double q = 2.0;
  double mu_b1 = 0.0;
  double j_sup = 0.0;
  double j_avg = 0.0;
  double ratio_sup = 0.0;
  double ratio_avg = 0.0;
  double excess_mass = 0.0;
  double t_area = 0.0;
  double max_comparison = 0.0;
  bool cover_ok = true;
  bool comparison_pass = true;
  bool density_pass = true;
  std::string violated;  // identifier of the failed invariant, empty if none
};

struct EnsembleRequest {
  std::string family = "veryflat";  // veryflat | flat | invsq | perturbed
  std::vector<double> c_values;     // angles scale c, or amplitudes for perturbed
  std::vector<int> generations;     // or scale indices for perturbed
  std::vector<double> q_values = {2.0};
  double rho = 0.25;
  double tau = 0.0;  // 0 -> default
  int frequency = 3;
  bool with_cover = true;
};

std::vector<EnsembleRow> run_ensemble(const EnsembleRequest& req);
void save_ensemble_csv(const std::vector<EnsembleRow>& rows, const std::string& path);

// Static SVG figures; byte-deterministic for identical inputs.
void emit_svg_curve(const std::vector<Vec>& polyline, const std::string& path);
void emit_svg_covering(const std::vector<Ball>& good, const std::vector<Ball>& bad,
                       const std::vector<Ball>& fin, const std::string& path);
void emit_svg_covering(const CoveringHierarchy& h, int scale, const std::string& path);
void emit_svg_surface(const MeshSurface& mesh, const std::string& path);
// Log-log scatter with the fitted power law; the slope annotation comes from
// fit_loglog on the same samples.
void emit_svg_scaling(const std::vector<double>& x, const std::vector<double>& y,
                      const std::string& path);

int run_cli(const std::vector<std::string>& args);

}  // namespace rfb
