#include "flowuq/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace flowuq::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_field_csv(const fs::path& path, const pde::GridField& f) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "x,t,rho,u\n";
  for (std::size_t i = 0; i < f.nx; ++i) {
    for (std::size_t j = 0; j < f.nt; ++j) {
      os << format_double(f.x(i)) << ',' << format_double(f.t(j)) << ','
         << format_double(f.rho.at(i, j)) << ',' << format_double(f.u.at(i, j)) << '\n';
    }
  }
}

namespace {

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

pde::GridField read_field_csv(const fs::path& path, std::size_t nx, std::size_t nt, double x_min,
                              double x_max, double t_min, double t_max) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,t,rho,u") {
    throw std::runtime_error(path.string() + ": expected header 'x,t,rho,u'");
  }
  pde::GridField f(nx, nt, x_min, x_max, t_min, t_max);
  std::size_t row = 0;
  const double tol_x = 1e-6 * (x_max - x_min), tol_t = 1e-6 * (t_max - t_min);
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row >= nx * nt) throw std::runtime_error(path.string() + ": more rows than nx*nt");
    std::stringstream ss(line);
    std::string cell[4];
    for (auto& c : cell) {
      if (!std::getline(ss, c, ',')) {
        throw std::runtime_error(path.string() + ":" + std::to_string(row + 2) + ": expected 4 columns");
      }
    }
    const std::size_t i = row / nt, j = row % nt;
    const double x = parse_double(cell[0], path, row + 2);
    const double t = parse_double(cell[1], path, row + 2);
    if (std::abs(x - f.x(i)) > tol_x || std::abs(t - f.t(j)) > tol_t) {
      throw std::runtime_error(path.string() + ":" + std::to_string(row + 2) +
                               ": coordinates do not follow the declared grid");
    }
    f.rho.at(i, j) = parse_double(cell[2], path, row + 2);
    f.u.at(i, j) = parse_double(cell[3], path, row + 2);
    ++row;
  }
  if (row != nx * nt) throw std::runtime_error(path.string() + ": fewer rows than nx*nt");
  return f;
}

void write_dataset(const fs::path& sidecar, const Dataset& ds) {
  const fs::path dir = sidecar.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  const std::string stem = sidecar.stem().string();
  const auto& f = ds.observed;
  json j;
  j["format"] = "flowuq-dataset";
  j["version"] = 1;
  j["grid"] = {{"nx", f.nx}, {"nt", f.nt}, {"x_min", f.x_min}, {"x_max", f.x_max},
               {"t_min", f.t_min}, {"t_max", f.t_max}};
  j["data_file"] = stem + ".csv";
  if (ds.clean) j["clean_file"] = stem + "_clean.csv";
  if (ds.meta.arz) {
    j["arz"] = {{"rho_max", ds.meta.arz->rho_max}, {"u_max", ds.meta.arz->u_max},
                {"tau", ds.meta.arz->tau}};
  }
  if (ds.meta.bell) {
    j["bell"] = {{"rho_base", ds.meta.bell->rho_base}, {"rho_peak", ds.meta.bell->rho_peak},
                 {"u_base", ds.meta.bell->u_base}, {"u_peak", ds.meta.bell->u_peak}};
  }
  j["noise_sigma"] = ds.meta.noise_sigma;
  j["seed"] = ds.meta.seed;
  std::ofstream os(sidecar);
  if (!os) throw std::runtime_error("cannot write " + sidecar.string());
  os << j.dump(2) << '\n';
  os.close();
  write_field_csv(dir / (stem + ".csv"), f);
  if (ds.clean) write_field_csv(dir / (stem + "_clean.csv"), *ds.clean);
}

Dataset read_dataset(const fs::path& sidecar) {
  std::ifstream is(sidecar);
  if (!is) throw std::runtime_error("cannot read dataset sidecar " + sidecar.string());
  const json j = json::parse(is);
  if (j.value("format", "") != "flowuq-dataset") {
    throw std::runtime_error(sidecar.string() + " is not a dataset sidecar");
  }
  const auto& g = j.at("grid");
  const auto nx = g.at("nx").get<std::size_t>(), nt = g.at("nt").get<std::size_t>();
  const double x0 = g.value("x_min", 0.0), x1 = g.value("x_max", 1.0);
  const double t0 = g.value("t_min", 0.0), t1 = g.value("t_max", 3.0);
  const fs::path dir = sidecar.parent_path();
  Dataset ds;
  ds.observed = read_field_csv(dir / j.at("data_file").get<std::string>(), nx, nt, x0, x1, t0, t1);
  if (j.contains("clean_file")) {
    ds.clean = read_field_csv(dir / j.at("clean_file").get<std::string>(), nx, nt, x0, x1, t0, t1);
  }
  if (j.contains("arz")) {
    const auto& a = j.at("arz");
    ds.meta.arz = pde::ArzParams{a.at("rho_max").get<double>(), a.at("u_max").get<double>(),
                                 a.at("tau").get<double>()};
  }
  if (j.contains("bell")) {
    const auto& b = j.at("bell");
    ds.meta.bell = pde::BellProfile{b.at("rho_base").get<double>(), b.at("rho_peak").get<double>(),
                                    b.at("u_base").get<double>(), b.at("u_peak").get<double>()};
  }
  ds.meta.noise_sigma = j.value("noise_sigma", 0.0);
  ds.meta.seed = j.value("seed", std::uint64_t{0});
  return ds;
}

}  // namespace flowuq::io
