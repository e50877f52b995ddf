#include "knockens/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "knockens/errors.hpp"

namespace knockens {

using nlohmann::json;

namespace {

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void check_q(double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("target FDR q must be in (0, 1)");
}

}  // namespace

FeatureStats single_knockoff_stats(const Eigen::VectorXd& z) {
  if (z.size() % 2 != 0)
    throw DataError("single-knockoff statistic: importance vector length must be even");
  const Eigen::Index p = z.size() / 2;
  FeatureStats stats;
  stats.copies = 1;
  stats.w = z.head(p) - z.tail(p);
  return stats;
}

FeatureStats multiple_knockoff_stats(const Eigen::VectorXd& z, int copies) {
  if (copies < 2)
    throw ConfigError("multiple-knockoff statistic requires at least 2 copies");
  if (z.size() % (copies + 1) != 0)
    throw DataError("multiple-knockoff statistic: importance vector length must be (1+M)*p");
  const Eigen::Index p = z.size() / (copies + 1);

  FeatureStats stats;
  stats.copies = copies;
  stats.w.resize(p);
  stats.kappa = Eigen::VectorXi(p);
  stats.tau = Eigen::VectorXd(p);

  std::vector<double> scores(copies + 1);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (int m = 0; m <= copies; ++m) scores[m] = z(j + m * p);

    int argmax = 0;
    for (int m = 1; m <= copies; ++m)
      if (scores[m] > scores[argmax]) argmax = m;

    std::vector<double> remaining;
    remaining.reserve(copies);
    for (int m = 0; m <= copies; ++m)
      if (m != argmax) remaining.push_back(scores[m]);

    std::vector<double> knockoffs(scores.begin() + 1, scores.end());
    const double knockoff_max = *std::max_element(knockoffs.begin(), knockoffs.end());
    const double knockoff_median = median_of(knockoffs);

    (*stats.kappa)(j) = argmax;
    (*stats.tau)(j) = scores[argmax] - median_of(remaining);
    stats.w(j) = scores[0] >= knockoff_max ? scores[0] - knockoff_median : 0.0;
  }
  return stats;
}

SelectionResult single_knockoff_threshold(const Eigen::VectorXd& w, double q) {
  check_q(q);
  std::vector<double> candidates;
  for (Eigen::Index j = 0; j < w.size(); ++j)
    if (w(j) != 0.0) candidates.push_back(std::abs(w(j)));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  SelectionResult result;
  for (double t : candidates) {
    const long negatives = (w.array() <= -t).count();
    const long positives = (w.array() >= t).count();
    if (positives > 0 && double(negatives + 1) / double(positives) <= q) {
      result.threshold = t;
      break;
    }
  }
  if (std::isinf(result.threshold)) return result;

  for (Eigen::Index j = 0; j < w.size(); ++j)
    if (w(j) >= result.threshold) result.selected.push_back(static_cast<int>(j));
  return result;
}

SelectionResult multiple_knockoff_threshold(const Eigen::VectorXi& kappa,
                                            const Eigen::VectorXd& tau, int copies, double q) {
  check_q(q);
  if (copies < 2) throw ConfigError("multiple-knockoff filter requires at least 2 copies");
  if (kappa.size() != tau.size())
    throw DataError("multiple-knockoff filter: kappa/tau length mismatch");

  std::vector<double> candidates;
  for (Eigen::Index j = 0; j < tau.size(); ++j)
    if (tau(j) > 0.0) candidates.push_back(tau(j));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  const double inv_m = 1.0 / double(copies);
  SelectionResult result;
  for (double t : candidates) {
    long knockoff_wins = 0;
    long original_wins = 0;
    for (Eigen::Index j = 0; j < tau.size(); ++j) {
      if (tau(j) < t) continue;
      (kappa(j) == 0 ? original_wins : knockoff_wins)++;
    }
    const double ratio =
        (inv_m + inv_m * double(knockoff_wins)) / double(std::max(1L, original_wins));
    if (ratio <= q) {
      result.threshold = t;
      break;
    }
  }
  if (std::isinf(result.threshold)) return result;

  for (Eigen::Index j = 0; j < tau.size(); ++j)
    if (kappa(j) == 0 && tau(j) >= result.threshold)
      result.selected.push_back(static_cast<int>(j));
  return result;
}

SelectionResult select_features(const FeatureStats& stats, double q) {
  if (stats.copies == 1) return single_knockoff_threshold(stats.w, q);
  if (!stats.kappa || !stats.tau)
    throw DataError("multiple-knockoff selection needs kappa/tau statistics");
  return multiple_knockoff_threshold(*stats.kappa, *stats.tau, stats.copies, q);
}

void save_selection_report(const SelectionReport& report, const std::filesystem::path& path) {
  json doc;
  doc["q"] = report.q;
  doc["M"] = report.copies;
  doc["strategy"] = report.strategy;
  doc["threshold"] = std::isinf(report.threshold) ? json(nullptr) : json(report.threshold);
  json selected = json::array();
  for (int j : report.selected) selected.push_back(j + 1);
  doc["selected"] = selected;
  doc["W"] = std::vector<double>(report.stats.w.data(),
                                 report.stats.w.data() + report.stats.w.size());
  if (report.stats.kappa)
    doc["kappa"] = std::vector<int>(report.stats.kappa->data(),
                                    report.stats.kappa->data() + report.stats.kappa->size());
  if (report.stats.tau)
    doc["tau"] = std::vector<double>(report.stats.tau->data(),
                                     report.stats.tau->data() + report.stats.tau->size());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write selection report: " + path.string());
  out << doc.dump(2) << '\n';
}

SelectionReport load_selection_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open selection report: " + path.string());
  json doc;
  in >> doc;

  SelectionReport report;
  report.q = doc.at("q").get<double>();
  report.copies = doc.at("M").get<int>();
  report.strategy = doc.value("strategy", std::string());
  report.threshold = doc.at("threshold").is_null()
                         ? std::numeric_limits<double>::infinity()
                         : doc.at("threshold").get<double>();
  for (const auto& v : doc.at("selected")) report.selected.push_back(v.get<int>() - 1);
  const auto& w = doc.at("W");
  report.stats.w.resize(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) report.stats.w(j) = w[j].get<double>();
  report.stats.copies = report.copies;
  if (doc.contains("kappa")) {
    Eigen::VectorXi kappa(doc["kappa"].size());
    for (std::size_t j = 0; j < doc["kappa"].size(); ++j) kappa(j) = doc["kappa"][j].get<int>();
    report.stats.kappa = kappa;
  }
  if (doc.contains("tau")) {
    Eigen::VectorXd tau(doc["tau"].size());
    for (std::size_t j = 0; j < doc["tau"].size(); ++j) tau(j) = doc["tau"][j].get<double>();
    report.stats.tau = tau;
  }
  return report;
}

}  // namespace knockens
