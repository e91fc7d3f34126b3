#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rfb/format.hpp"
#include "rfb/measure.hpp"

namespace rfb {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

}  // namespace

void save_measure_csv(const DiscreteMeasure& mu, const std::string& path) {
  std::ofstream out = open_out(path);
  std::vector<std::string> header;
  for (int c = 0; c < mu.n(); ++c) header.push_back("x" + std::to_string(c));
  header.push_back("weight");
  header.push_back("radius");
  out << csv_row(header);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    std::vector<std::string> row;
    const Vec p = mu.position(i);
    for (int c = 0; c < mu.n(); ++c) row.push_back(format_double(p(c)));
    row.push_back(format_double(mu.weight(i)));
    const auto r = mu.source_radius(i);
    row.push_back(r ? format_double(*r) : std::string());
    out << csv_row(row);
  }
}

DiscreteMeasure load_measure_csv(const std::string& path, int n, int k) {
  std::ifstream in = open_in(path);
  const auto rows = read_csv(in);
  std::vector<Atom> atoms;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (r == 0 && !row.empty() && row[0] == "x0") continue;  // header
    if (row.size() < static_cast<std::size_t>(n) + 1)
      throw std::runtime_error("measure CSV: short row in " + path);
    Atom a;
    a.position = Vec(n);
    for (int c = 0; c < n; ++c) a.position(c) = parse_double(row[static_cast<std::size_t>(c)]);
    a.weight = parse_double(row[static_cast<std::size_t>(n)]);
    if (row.size() > static_cast<std::size_t>(n) + 1 && !row[static_cast<std::size_t>(n) + 1].empty())
      a.source_radius = parse_double(row[static_cast<std::size_t>(n) + 1]);
    atoms.push_back(std::move(a));
  }
  return DiscreteMeasure(std::move(atoms), n, k);
}

void save_measure_json(const DiscreteMeasure& mu, const std::string& path) {
  nlohmann::json j;
  j["n"] = mu.n();
  j["k"] = mu.k();
  j["description"] = mu.description();
  if (mu.finest_scale()) j["finest_scale"] = *mu.finest_scale();
  nlohmann::json atoms = nlohmann::json::array();
  for (std::size_t i = 0; i < mu.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    const Vec p = mu.position(i);
    for (int c = 0; c < mu.n(); ++c) row.push_back(p(c));
    row.push_back(mu.weight(i));
    if (const auto r = mu.source_radius(i)) row.push_back(*r);
    atoms.push_back(std::move(row));
  }
  j["atoms"] = std::move(atoms);
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

DiscreteMeasure load_measure_json(const std::string& path) {
  std::ifstream in = open_in(path);
  nlohmann::json j;
  in >> j;
  const int n = j.at("n").get<int>();
  const int k = j.at("k").get<int>();
  std::vector<Atom> atoms;
  for (const auto& row : j.at("atoms")) {
    if (row.size() < static_cast<std::size_t>(n) + 1)
      throw std::runtime_error("measure JSON: short atom row in " + path);
    Atom a;
    a.position = Vec(n);
    for (int c = 0; c < n; ++c) a.position(c) = row[static_cast<std::size_t>(c)].get<double>();
    a.weight = row[static_cast<std::size_t>(n)].get<double>();
    if (row.size() > static_cast<std::size_t>(n) + 1)
      a.source_radius = row[static_cast<std::size_t>(n) + 1].get<double>();
    atoms.push_back(std::move(a));
  }
  std::optional<int> finest;
  if (j.contains("finest_scale")) finest = j["finest_scale"].get<int>();
  DiscreteMeasure mu(std::move(atoms), n, k, finest);
  if (j.contains("description")) mu.set_description(j["description"].get<std::string>());
  return mu;
}

}  // namespace rfb
