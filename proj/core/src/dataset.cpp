#include "atebench/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "atebench/errors.hpp"

namespace atebench {

std::string family_name(Family family) {
  return family == Family::linear ? "linear" : "logistic";
}

Family family_from_name(const std::string& name) {
  if (name == "linear") return Family::linear;
  if (name == "logistic") return Family::logistic;
  throw config_error("unknown family '" + name + "' (expected linear or logistic)");
}

void SimulationConfig::validate() const {
  if (n < 1) throw config_error("n must be positive");
  if (d < 8 || d % 8 != 0) {
    throw config_error("d must be a positive multiple of 8");
  }
  if (d >= n) throw config_error("d must be smaller than n");
  if (!(gamma2 >= 0.0) || !std::isfinite(gamma2)) {
    throw config_error("gamma2 must be finite and nonnegative");
  }
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw config_error("sigma2 must be finite and positive");
  }
  if (family == Family::linear) {
    if (!(r2_treated >= 0.0 && r2_treated < 1.0)) {
      throw config_error("r2_treated must lie in [0, 1)");
    }
    if (!(r2_control >= 0.0 && r2_control < 1.0)) {
      throw config_error("r2_control must lie in [0, 1)");
    }
  }
  if (!std::isfinite(tau)) throw config_error("tau must be finite");
  if (n_reps < 1) throw config_error("n_reps must be positive");
  if (folds < 2) throw config_error("folds must be at least 2");
  if (folds > n) throw config_error("folds cannot exceed n");
}

std::string SimulationConfig::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["d"] = d;
  j["gamma2"] = gamma2;
  j["r2_treated"] = r2_treated;
  j["r2_control"] = r2_control;
  j["sigma2"] = sigma2;
  j["tau"] = tau;
  j["family"] = family_name(family);
  j["seed"] = seed;
  j["n_reps"] = n_reps;
  j["folds"] = folds;
  return j.dump(2);
}

SimulationConfig SimulationConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  SimulationConfig cfg;
  try {
    cfg.n = j.at("n").get<int>();
    cfg.d = j.at("d").get<int>();
    cfg.family = family_from_name(j.at("family").get<std::string>());
    if (j.contains("gamma2")) cfg.gamma2 = j["gamma2"].get<double>();
    if (j.contains("r2_treated")) cfg.r2_treated = j["r2_treated"].get<double>();
    if (j.contains("r2_control")) cfg.r2_control = j["r2_control"].get<double>();
    if (j.contains("sigma2")) cfg.sigma2 = j["sigma2"].get<double>();
    if (j.contains("tau")) cfg.tau = j["tau"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("n_reps")) cfg.n_reps = j["n_reps"].get<int>();
    if (j.contains("folds")) cfg.folds = j["folds"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("bad config field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

SimulationConfig SimulationConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

namespace {

void append_double(std::string& out, double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view field, int row, int col) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    std::ostringstream msg;
    msg << "cannot parse '" << std::string(field) << "' as a number at data row "
        << row << ", column " << col;
    throw config_error(msg.str());
  }
  return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

}  // namespace

Family infer_family(const Dataset& data) {
  if (data.truth) return data.truth->family;
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    if (data.y[i] != 0.0 && data.y[i] != 1.0) return Family::linear;
  }
  return Family::logistic;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open dataset file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw config_error("dataset file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "w" || header[1] != "y") {
    throw config_error("dataset header must be 'w,y,x1,...,xd'");
  }
  const int d = static_cast<int>(header.size()) - 2;
  for (int j = 0; j < d; ++j) {
    const std::string expected = "x" + std::to_string(j + 1);
    if (header[j + 2] != expected) {
      throw config_error("dataset header must be 'w,y,x1,...,xd'; found '" +
                         std::string(header[j + 2]) + "' where '" + expected +
                         "' was expected");
    }
  }

  std::vector<double> w_vals, y_vals, x_vals;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto fields = split_csv(line);
    if (static_cast<int>(fields.size()) != d + 2) {
      std::ostringstream msg;
      msg << "data row " << row << " has " << fields.size()
          << " fields, expected " << d + 2;
      throw config_error(msg.str());
    }
    const double w = parse_double(fields[0], row, 1);
    if (w != 0.0 && w != 1.0) {
      std::ostringstream msg;
      msg << "treatment must be 0 or 1; data row " << row << " has " << w;
      throw config_error(msg.str());
    }
    w_vals.push_back(w);
    y_vals.push_back(parse_double(fields[1], row, 2));
    for (int j = 0; j < d; ++j) {
      x_vals.push_back(parse_double(fields[j + 2], row, j + 3));
    }
  }
  if (row == 0) throw config_error("dataset has no data rows");

  Dataset data;
  data.w = Eigen::Map<Eigen::VectorXd>(w_vals.data(), row);
  data.y = Eigen::Map<Eigen::VectorXd>(y_vals.data(), row);
  data.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                    Eigen::RowMajor>>(x_vals.data(), row, d);
  return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
  const int n = data.n();
  const int d = data.d();
  if (data.y.size() != n || data.x.rows() != n) {
    throw config_error("dataset components have mismatched row counts");
  }
  std::string out;
  out.reserve(static_cast<std::size_t>(n) * (d + 2) * 12);
  out += "w,y";
  for (int j = 0; j < d; ++j) {
    out += ",x";
    out += std::to_string(j + 1);
  }
  out += '\n';
  for (int i = 0; i < n; ++i) {
    out += (data.w[i] == 1.0) ? '1' : '0';
    out += ',';
    append_double(out, data.y[i]);
    for (int j = 0; j < d; ++j) {
      out += ',';
      append_double(out, data.x(i, j));
    }
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw config_error("cannot open '" + path + "' for writing");
  file << out;
  if (!file) throw config_error("failed while writing '" + path + "'");
}

}  // namespace atebench
