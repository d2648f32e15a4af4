#include "perfzo/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "perfzo/format.hpp"

namespace perfzo {

double kl_closed_form(const DistributionFamily& family, const Vector& phi1, const Vector& phi2) {
  return family.kl(phi1, phi2);
}

std::size_t n_kl(double c_cal, double eps_kl, double p_kl) {
  if (!(c_cal > 0.0)) throw Error(ErrorKind::CalibrationMissing, "calibration constant must be positive");
  if (!(eps_kl > 0.0)) throw Error(ErrorKind::InvalidParameter, "eps_kl must be positive");
  if (!(p_kl > 0.0 && p_kl < 1.0)) throw Error(ErrorKind::InvalidParameter, "p_kl must lie in (0, 1)");
  const double n = std::ceil(c_cal * std::log(2.0 / p_kl) / (eps_kl * eps_kl) - 1e-9);
  if (!(n < 1e15)) throw Error(ErrorKind::InvalidParameter, "N_KL overflows");
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

std::size_t n_kl(const KLCalibration& cal, double eps_kl, double p_kl) { return n_kl(cal.c_cal, eps_kl, p_kl); }

std::size_t n_kl(const KLCalibrationTable& table, const DistributionFamily& family, double eps_kl, double p_kl) {
  auto it = table.find(family.name());
  if (it == table.end()) throw Error(ErrorKind::CalibrationMissing, "no KL calibration for family " + family.name());
  return n_kl(it->second, eps_kl, p_kl);
}

Vector clamped_mle(const DistributionFamily& family, const Vector& mle, std::size_t n) {
  const ParamSpace& space = family.param_space();
  if (n <= 1) return space.center();
  return project_shrunk(space, mle, 1.0 / static_cast<double>(n));
}

KLEstimate estimate_kl(const DistributionFamily& family, const Vector& phi_target, const SampleBatch& samples,
                       std::size_t required_samples) {
  if (samples.size() < std::max<std::size_t>(required_samples, 1))
    throw Error(ErrorKind::InsufficientSamples, "EstimateKL needs " + std::to_string(required_samples) +
                                                    " samples, got " + std::to_string(samples.size()));
  KLEstimate out;
  out.n_samples_used = samples.size();
  out.target_phi = phi_target;
  out.fitted_phi = clamped_mle(family, family.mle(samples), samples.size());
  out.value = family.kl(phi_target, out.fitted_phi);
  return out;
}

KLEstimate estimate_kl(const DistributionFamily& family, const Vector& phi_target, const SampleBatch& samples,
                       double eps_kl, double p_kl, const KLCalibration& cal) {
  if (cal.family != family.name())
    throw Error(ErrorKind::CalibrationMissing, "calibration is for " + cal.family + ", not " + family.name());
  return estimate_kl(family, phi_target, samples, n_kl(cal, eps_kl, p_kl));
}

// ---------------------------------------------------------------------------

KLCalibrationTable load_calibration(const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::Io, "cannot read calibration file " + path + ": " + e.message());
  }
  KLCalibrationTable table;
  for (const auto& [section, node] : tree) {
    try {
      KLCalibration cal;
      cal.family = section;
      cal.c_cal = node.get<double>("c_cal");
      cal.c_raw = node.get<double>("c_raw", cal.c_cal);
      cal.safety = node.get<double>("safety", 1.0);
      cal.eps = node.get<double>("eps", 0.0);
      cal.p = node.get<double>("p", 0.0);
      cal.trials = node.get<std::size_t>("trials", 0);
      cal.seed = node.get<std::uint64_t>("seed", 0);
      cal.worst_failure_rate = node.get<double>("worst_failure_rate", 0.0);
      std::stringstream grid(node.get<std::string>("grid", ""));
      for (std::string item; std::getline(grid, item, ',');)
        if (!item.empty()) cal.grid.push_back(std::stod(item));
      if (!(cal.c_cal > 0.0)) throw Error(ErrorKind::InvalidConfig, "c_cal must be positive");
      table[section] = std::move(cal);
    } catch (const pt::ptree_error& e) {
      throw Error(ErrorKind::InvalidConfig, "calibration section [" + section + "]: " + e.what());
    }
  }
  return table;
}

void save_calibration(const std::string& path, const KLCalibrationTable& table) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  for (const auto& [name, cal] : table) {
    pt::ptree node;
    node.put("c_cal", format_double(cal.c_cal));
    node.put("c_raw", format_double(cal.c_raw));
    node.put("safety", format_double(cal.safety));
    node.put("eps", format_double(cal.eps));
    node.put("p", format_double(cal.p));
    node.put("trials", cal.trials);
    node.put("seed", cal.seed);
    node.put("worst_failure_rate", format_double(cal.worst_failure_rate));
    std::string grid;
    for (std::size_t i = 0; i < cal.grid.size(); ++i) grid += (i ? "," : "") + format_double(cal.grid[i]);
    node.put("grid", grid);
    tree.add_child(name, node);
  }
  try {
    pt::write_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::Io, "cannot write calibration file " + path + ": " + e.message());
  }
}

}  // namespace perfzo
