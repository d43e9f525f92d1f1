#pragma once

// Linear C-SVC trained by sequential minimal optimisation on the dual
//
//   min_a  1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_i <= C,
//   Q_ij = y_i y_j <x_i, x_j>
//
// with maximal-violating-pair working-set selection and no shrinking.
// The primal weights w = sum_i a_i y_i x_i are maintained alongside the
// gradient so the returned model is a plain (w, b) pair.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probe3d/error.hpp"

namespace probe3d::svm {

enum class WorkingSet {
  max_violating_pair,  // first-order: the pair with the largest KKT violation
  second_order,        // i as above, j maximising the guaranteed objective decrease
};

struct Problem {
  std::span<const float> vectors;  // [n, dimension], row-major
  std::size_t dimension = 0;
  std::span<const int> labels;     // each -1 or +1
  double penalty = 1.0;
  double tolerance = 1e-3;
  std::size_t max_iterations = 0;  // 0: max(10^4, 10 n)
  WorkingSet working_set = WorkingSet::max_violating_pair;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const {
    return vectors.subspan(i * dimension, dimension);
  }
};

struct Model {
  std::vector<double> weights;
  double bias = 0.0;
  double penalty = 0.0;
  double tolerance = 0.0;
  std::vector<double> alphas;
  double objective = 0.0;  // dual objective 1/2 a'Qa - e'a at the solution
  std::size_t iterations = 0;
  bool converged = false;
};

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += double(a[k]) * b[k];
  return s;
}

inline double dot(std::span<const double> w, std::span<const float> x) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * x[k];
  return s;
}

// Full kernel matrix <x_i, x_j>. Depends only on the vectors, so one instance
// serves every penalty value tried on the same training set.
class Gram {
 public:
  Gram() = default;

  explicit Gram(const Problem& p) : n_(p.size()), values_(n_ * n_) {
    for (std::size_t i = 0; i < n_; ++i) {
      const auto xi = p.row(i);
      for (std::size_t j = i; j < n_; ++j) {
        const double k = dot(xi, p.row(j));
        values_[i * n_ + j] = k;
        values_[j * n_ + i] = k;
      }
    }
  }

  std::size_t size() const { return n_; }
  std::span<const double> column(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * n_, n_);
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

inline void validate(const Problem& p) {
  const auto n = p.size();
  if (n < 2) throw TrainingError("SVM needs at least two training vectors");
  if (p.dimension == 0) throw ValidationError("SVM input dimension must be positive");
  if (p.vectors.size() != n * p.dimension)
    throw ValidationError("SVM vectors hold " + std::to_string(p.vectors.size()) +
                          " values, expected " + std::to_string(n * p.dimension));
  if (!(p.penalty > 0.0) || !std::isfinite(p.penalty))
    throw ValidationError("SVM penalty C must be positive and finite");
  if (!(p.tolerance > 0.0)) throw ValidationError("SVM tolerance must be positive");
  bool pos = false, neg = false;
  for (int y : p.labels) {
    if (y == 1) pos = true;
    else if (y == -1) neg = true;
    else throw ValidationError("SVM labels must be -1 or +1");
  }
  if (!pos || !neg) throw TrainingError("SVM training data contains a single class");
  for (float v : p.vectors)
    if (!std::isfinite(v)) throw ValidationError("SVM input contains a non-finite value");
}

/// Trains on `problem`. `gram`, if given, must be the kernel matrix of the
/// same vectors; otherwise kernel columns are computed on demand.
inline Model train(const Problem& problem, const Gram* gram = nullptr) {
  validate(problem);
  const std::size_t n = problem.size();
  const std::size_t d = problem.dimension;
  const double C = problem.penalty;
  const double eps = problem.tolerance;
  const std::size_t max_iter = problem.max_iterations
                                   ? problem.max_iterations
                                   : std::max<std::size_t>(10000, 10 * n);
  if (gram && gram->size() != n) throw ValidationError("Gram matrix size mismatch");
  const auto y = problem.labels;

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);  // Qa - e
  std::vector<double> w(d, 0.0);
  std::vector<double> qd(n);
  for (std::size_t i = 0; i < n; ++i) qd[i] = dot(problem.row(i), problem.row(i));

  std::vector<double> col_i_buf, col_j_buf;
  auto column = [&](std::size_t i, std::vector<double>& buf) -> std::span<const double> {
    if (gram) return gram->column(i);
    buf.resize(n);
    const auto xi = problem.row(i);
    for (std::size_t k = 0; k < n; ++k) buf[k] = dot(xi, problem.row(k));
    return buf;
  };

  auto below_upper = [&](std::size_t t) { return alpha[t] < C; };
  auto above_lower = [&](std::size_t t) { return alpha[t] > 0.0; };

  constexpr double tau = 1e-12;
  std::size_t iter = 0;
  bool converged = false;
  for (;;) {
    // i maximises -y_t G_t over I_up, j minimises it over I_low.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (below_upper(t) && -grad[t] > gmax) gmax = -grad[t], i = t;
        if (above_lower(t) && grad[t] > gmax2) gmax2 = grad[t], j = t;
      } else {
        if (above_lower(t) && grad[t] > gmax) gmax = grad[t], i = t;
        if (below_upper(t) && -grad[t] > gmax2) gmax2 = -grad[t], j = t;
      }
    }
    if (i == n || j == n || gmax + gmax2 <= eps) {
      converged = true;
      break;
    }
    if (iter >= max_iter) break;
    ++iter;

    const auto ki = column(i, col_i_buf);
    if (problem.working_set == WorkingSet::second_order) {
      // Among violators paired with i, pick j with the largest decrease
      // (G_i-term + G_j-term)^2 / (K_ii + K_jj - 2 K_ij).
      double best = std::numeric_limits<double>::infinity();
      const double gi = y[i] == 1 ? -grad[i] : grad[i];
      for (std::size_t t = 0; t < n; ++t) {
        double grad_diff;
        if (y[t] == 1) {
          if (!above_lower(t)) continue;
          grad_diff = gi + grad[t];
        } else {
          if (!below_upper(t)) continue;
          grad_diff = gi - grad[t];
        }
        if (grad_diff <= 0.0) continue;
        double quad = qd[i] + qd[t] - 2.0 * ki[t];
        if (quad <= 0.0) quad = tau;
        const double obj = -(grad_diff * grad_diff) / quad;
        if (obj < best) best = obj, j = t;
      }
    }
    const auto kj = column(j, col_j_buf);
    const double old_ai = alpha[i], old_aj = alpha[j];

    if (y[i] != y[j]) {
      double quad = qd[i] + qd[j] - 2.0 * ki[j];
      if (quad <= 0.0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) alpha[j] = 0.0, alpha[i] = diff;
      } else {
        if (alpha[i] < 0.0) alpha[i] = 0.0, alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = C - diff;
      } else {
        if (alpha[j] > C) alpha[j] = C, alpha[i] = C + diff;
      }
    } else {
      double quad = qd[i] + qd[j] - 2.0 * ki[j];
      if (quad <= 0.0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = sum - C;
      } else {
        if (alpha[j] < 0.0) alpha[j] = 0.0, alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) alpha[j] = C, alpha[i] = sum - C;
      } else {
        if (alpha[i] < 0.0) alpha[i] = 0.0, alpha[j] = sum;
      }
    }

    const double dai = (alpha[i] - old_ai) * y[i];
    const double daj = (alpha[j] - old_aj) * y[j];
    for (std::size_t k = 0; k < n; ++k) grad[k] += y[k] * (ki[k] * dai + kj[k] * daj);
    const auto xi = problem.row(i), xj = problem.row(j);
    for (std::size_t k = 0; k < d; ++k) w[k] += dai * xi[k] + daj * xj[k];
  }

  // Rebuild w from the final alphas to shed incremental rounding.
  std::fill(w.begin(), w.end(), 0.0);
  double alpha_sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] == 0.0) continue;
    const auto xt = problem.row(t);
    for (std::size_t k = 0; k < d; ++k) w[k] += alpha[t] * y[t] * xt[k];
    alpha_sum += alpha[t];
  }

  // Bias from free support vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      free_sum += yg;
      ++free_count;
    }
  }
  const double rho = free_count ? free_sum / free_count : (ub + lb) / 2.0;

  Model model;
  double wnorm2 = 0.0;
  for (double v : w) wnorm2 += v * v;
  model.weights = std::move(w);
  model.bias = -rho;
  model.penalty = C;
  model.tolerance = eps;
  model.alphas = std::move(alpha);
  model.objective = 0.5 * wnorm2 - alpha_sum;
  model.iterations = iter;
  model.converged = converged;
  return model;
}

inline double decision(const Model& model, std::span<const float> v) {
  if (v.size() != model.weights.size())
    throw ValidationError("decision input has dimension " + std::to_string(v.size()) +
                          ", model expects " + std::to_string(model.weights.size()));
  return dot(model.weights, v) + model.bias;
}

inline nlohmann::json to_json(const Model& m) {
  return {{"weights", m.weights},       {"bias", m.bias},
          {"penalty", m.penalty},       {"tolerance", m.tolerance},
          {"iterations", m.iterations}, {"converged", m.converged}};
}

inline Model from_json(const nlohmann::json& j) {
  Model m;
  try {
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.penalty = j.at("penalty").get<double>();
    m.tolerance = j.at("tolerance").get<double>();
    m.iterations = j.at("iterations").get<std::size_t>();
    m.converged = j.at("converged").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad SVM model JSON: ") + e.what());
  }
  return m;
}

}  // namespace probe3d::svm
