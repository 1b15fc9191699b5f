#include <algorithm>
#include <cmath>

#include "phonecls/errors.hpp"
#include "phonecls/perceptual.hpp"

namespace phonecls {

double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw CorrelationError("pearson: vectors differ in length");
  if (x.size() < 3) throw CorrelationError("pearson: need at least 3 points, got " + std::to_string(x.size()));
  if (!x.allFinite() || !y.allFinite()) throw CorrelationError("pearson: non-finite input");
  const Eigen::ArrayXd dx = x.array() - x.mean();
  const Eigen::ArrayXd dy = y.array() - y.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx <= 0.0 || syy <= 0.0) throw CorrelationError("pearson: zero variance");
  const double r = (dx * dy).sum() / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

LineFit linear_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw FitError("linear fit: vectors differ in length");
  if (x.size() < 2) throw FitError("linear fit: need at least 2 points");
  if (!x.allFinite() || !y.allFinite()) throw FitError("linear fit: non-finite input");
  const double mx = x.mean();
  const double my = y.mean();
  const Eigen::ArrayXd dx = x.array() - mx;
  const double sxx = dx.square().sum();
  if (sxx <= 0.0) throw FitError("linear fit: zero variance in x");
  LineFit fit;
  fit.slope = (dx * (y.array() - my)).sum() / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

CorrelationResult correlate(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  CorrelationResult c;
  c.r = pearson(x, y);
  const auto fit = linear_fit(x, y);
  c.slope = fit.slope;
  c.intercept = fit.intercept;
  c.n_speakers = static_cast<int>(x.size());
  return c;
}

nlohmann::json CorrelationResult::to_json() const {
  return {{"r", r}, {"slope", slope}, {"intercept", intercept}, {"n_speakers", n_speakers}};
}

CorrelationResult CorrelationResult::from_json(const nlohmann::json& j) {
  CorrelationResult c;
  c.r = j.at("r").get<double>();
  c.slope = j.at("slope").get<double>();
  c.intercept = j.at("intercept").get<double>();
  c.n_speakers = j.at("n_speakers").get<int>();
  return c;
}

}  // namespace phonecls
