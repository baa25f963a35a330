#include "scm/io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace scm {

std::string format_double(double value) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& token, const char* where) {
  const char* begin = token.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin) throw Error(ErrorKind::IoFailure, std::string("bad number in ") + where);
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::string series_to_csv(const Series& s) {
  std::string out = "x_" + s.x_unit + ",y_" + s.y_unit + "\n";
  for (Eigen::Index i = 0; i < s.size(); ++i)
    out += format_double(s.x[i]) + "," + format_double(s.y[i]) + "\n";
  return out;
}

Series series_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::IoFailure, "empty CSV");
  auto header = split(strip_cr(line), ',');
  if (header.size() != 2 || header[0].rfind("x_", 0) != 0 || header[1].rfind("y_", 0) != 0)
    throw Error(ErrorKind::IoFailure, "expected header x_<unit>,y_<unit>");
  Series s;
  s.x_unit = header[0].substr(2);
  s.y_unit = header[1].substr(2);
  std::vector<double> xs, ys;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split(line, ',');
    if (cols.size() != 2) throw Error(ErrorKind::IoFailure, "expected two CSV columns");
    xs.push_back(parse_double(cols[0], "x column"));
    ys.push_back(parse_double(cols[1], "y column"));
  }
  s.x = Eigen::Map<Eigen::ArrayXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  s.y = Eigen::Map<Eigen::ArrayXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  return s;
}

void write_series_csv(const std::filesystem::path& path, const Series& s) {
  write_text_file(path, series_to_csv(s));
}

Series read_series_csv(const std::filesystem::path& path) {
  return series_from_csv(read_text_file(path));
}

std::string field_grid_to_csv(const FieldGrid& grid) {
  std::string out = "# " + std::to_string(grid.values.cols()) + " " +
                    std::to_string(grid.values.rows()) + " " + format_double(grid.dx) + " " +
                    format_double(grid.dy) + "\n";
  for (Eigen::Index r = 0; r < grid.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.values.cols(); ++c) {
      if (c) out += ",";
      out += format_double(grid.values(r, c));
    }
    out += "\n";
  }
  return out;
}

FieldGrid field_grid_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::IoFailure, "empty field CSV");
  line = strip_cr(line);
  if (line.empty() || line[0] != '#')
    throw Error(ErrorKind::IoFailure, "expected header '# nx ny dx_nm dy_nm'");
  std::istringstream head(line.substr(1));
  Eigen::Index nx = 0, ny = 0;
  double dx = 0, dy = 0;
  if (!(head >> nx >> ny >> dx >> dy))
    throw Error(ErrorKind::IoFailure, "expected header '# nx ny dx_nm dy_nm'");
  FieldGrid grid;
  grid.dx = dx;
  grid.dy = dy;
  grid.values.resize(ny, nx);
  for (Eigen::Index r = 0; r < ny; ++r) {
    if (!std::getline(in, line)) throw Error(ErrorKind::IoFailure, "truncated field CSV");
    auto cols = split(strip_cr(line), ',');
    if (static_cast<Eigen::Index>(cols.size()) != nx)
      throw Error(ErrorKind::IoFailure, "field CSV row width mismatch");
    for (Eigen::Index c = 0; c < nx; ++c) grid.values(r, c) = parse_double(cols[c], "field value");
  }
  return grid;
}

void write_field_grid_csv(const std::filesystem::path& path, const FieldGrid& grid) {
  write_text_file(path, field_grid_to_csv(grid));
}

FieldGrid read_field_grid_csv(const std::filesystem::path& path) {
  return field_grid_from_csv(read_text_file(path));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_file(const std::filesystem::path& path) {
  return fnv1a64_hex(read_text_file(path));
}

namespace {

Eigen::ArrayXd array_from_json(const nlohmann::json& j) {
  auto values = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::ArrayXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json array_to_json(const Eigen::ArrayXd& a) {
  return std::vector<double>(a.data(), a.data() + a.size());
}

}  // namespace

void to_json(nlohmann::json& j, const Series& s) {
  j = {{"x", array_to_json(s.x)},
       {"y", array_to_json(s.y)},
       {"x_unit", s.x_unit},
       {"y_unit", s.y_unit}};
}

void from_json(const nlohmann::json& j, Series& s) {
  s.x = array_from_json(j.at("x"));
  s.y = array_from_json(j.at("y"));
  s.x_unit = j.value("x_unit", "nm");
  s.y_unit = j.value("y_unit", "counts");
}

void to_json(nlohmann::json& j, const CavityMode& m) {
  j = {{"lambda_c", m.lambda_c},
       {"q_factor", m.q_factor},
       {"lattice_a", m.lattice_a},
       {"envelope_wx", m.envelope_wx},
       {"envelope_wy", m.envelope_wy},
       {"z_decay", m.z_decay},
       {"polarization_angle", m.polarization_angle},
       {"n_slab", m.n_slab}};
  if (m.mode_volume) j["mode_volume"] = *m.mode_volume;
}

void from_json(const nlohmann::json& j, CavityMode& m) {
  m.lambda_c = j.at("lambda_c").get<double>();
  m.q_factor = j.at("q_factor").get<double>();
  m.lattice_a = j.value("lattice_a", 176.0);
  m.envelope_wx = j.value("envelope_wx", 352.0);
  m.envelope_wy = j.value("envelope_wy", 176.0);
  m.z_decay = j.value("z_decay", 100.0);
  m.polarization_angle = j.value("polarization_angle", 0.0);
  m.n_slab = j.value("n_slab", 3.4);
  if (j.contains("mode_volume")) m.mode_volume = j.at("mode_volume").get<double>();
}

void to_json(nlohmann::json& j, const Emitter& e) {
  j = {{"bare_spectrum", e.bare_spectrum},
       {"tau0", e.tau0},
       {"position", std::vector<double>{e.position.x(), e.position.y(), e.position.z()}},
       {"dipole_angle", e.dipole_angle},
       {"zero_field_split", e.zero_field_split},
       {"gyromagnetic_ratio", e.gyromagnetic_ratio},
       {"contrast", e.contrast}};
}

void from_json(const nlohmann::json& j, Emitter& e) {
  if (j.contains("bare_spectrum")) e.bare_spectrum = j.at("bare_spectrum").get<Series>();
  e.tau0 = j.at("tau0").get<double>();
  if (j.contains("position")) {
    auto p = j.at("position").get<std::vector<double>>();
    if (p.size() != 3) throw Error(ErrorKind::IoFailure, "position needs 3 components");
    e.position = Eigen::Vector3d(p[0], p[1], p[2]);
  }
  e.dipole_angle = j.value("dipole_angle", 0.0);
  e.zero_field_split = j.value("zero_field_split", 2.87);
  e.gyromagnetic_ratio = j.value("gyromagnetic_ratio", 28.0);
  e.contrast = j.value("contrast", 0.3);
}

void to_json(nlohmann::json& j, const CoupledSystemParams& p) {
  j = {{"detuning", p.detuning},
       {"g", p.g},
       {"kappa", p.kappa},
       {"gamma", p.gamma},
       {"gamma_d", p.gamma_d}};
}

void from_json(const nlohmann::json& j, CoupledSystemParams& p) {
  p.detuning = j.value("detuning", 0.0);
  p.g = j.at("g").get<double>();
  p.kappa = j.at("kappa").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.gamma_d = j.value("gamma_d", 0.0);
}

void to_json(nlohmann::json& j, const DetectionCoeffs& c) {
  j = {{"c_nv", c.c_nv}, {"c_cav", c.c_cav}, {"c_int", c.c_int}, {"delta_phi", c.delta_phi}};
}

void from_json(const nlohmann::json& j, DetectionCoeffs& c) {
  c.c_nv = j.value("c_nv", 1.0);
  c.c_cav = j.value("c_cav", 0.0);
  c.c_int = j.value("c_int", 0.0);
  c.delta_phi = j.value("delta_phi", 0.0);
}

void to_json(nlohmann::json& j, const EmissionBudget& b) {
  j = {{"pump_rate", b.pump_rate},
       {"collection_eff", array_to_json(b.collection_eff)},
       {"proportionality", b.proportionality},
       {"channel_rates", array_to_json(b.channel_rates)},
       {"gamma_nr", b.gamma_nr}};
}

void from_json(const nlohmann::json& j, EmissionBudget& b) {
  b.pump_rate = j.value("pump_rate", 1.0);
  b.collection_eff = array_from_json(j.at("collection_eff"));
  b.proportionality = j.value("proportionality", 1.0);
  b.channel_rates = array_from_json(j.at("channel_rates"));
  b.gamma_nr = j.value("gamma_nr", 0.0);
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  auto text = read_text_file(path);
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::IoFailure, "invalid JSON: " + path.string());
  return j;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace scm
