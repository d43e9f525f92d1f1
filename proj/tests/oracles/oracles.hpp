#pragma once

// Slow reference implementations used to check the library. Each one is
// written from the definition only and shares no code with include/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

// AUC by counting every (positive, negative) pair; ties count one half.
// Returned as 2U / (2 n_pos n_neg) with an exact integer numerator.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::uint64_t twice_u = 0, np = 0, nn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? np : nn) += 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      if (s[i] > s[j]) twice_u += 2;
      else if (s[i] == s[j]) twice_u += 1;
    }
  }
  return static_cast<double>(twice_u) / (2.0 * double(np) * double(nn));
}

// 8-connected components by union-find over neighbouring foreground pixels.
// Returns, per component, its sorted pixel indices; components sorted by
// their smallest index.
inline std::vector<std::vector<std::uint64_t>> components(const std::vector<std::uint8_t>& px,
                                                          int h, int w) {
  std::vector<std::size_t> parent(px.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a), b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!px[r * w + c]) continue;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          if (px[rr * w + cc]) unite(r * w + c, rr * w + cc);
        }
    }
  std::map<std::size_t, std::vector<std::uint64_t>> groups;
  for (std::size_t i = 0; i < px.size(); ++i)
    if (px[i]) groups[find(i)].push_back(i);
  std::vector<std::vector<std::uint64_t>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end());
  return out;
}

// Bilinear sample of a [h, w] plane at output pixel (oy, ox) of an
// [H, W] target: src = (dst + 0.5) * in / out - 0.5, clamped per axis.
inline double bilinear_at(const float* plane, int h, int w, int H, int W, int oy, int ox) {
  auto axis = [](int dst, int in, int out, int& lo, int& hi, double& f) {
    double s = (dst + 0.5) * double(in) / double(out) - 0.5;
    s = std::clamp(s, 0.0, double(in - 1));
    lo = static_cast<int>(std::floor(s));
    hi = std::min(lo + 1, in - 1);
    f = s - lo;
  };
  int y0, y1, x0, x1;
  double fy, fx;
  axis(oy, h, H, y0, y1, fy);
  axis(ox, w, W, x0, x1, fx);
  const double top = plane[y0 * w + x0] * (1 - fx) + plane[y0 * w + x1] * fx;
  const double bot = plane[y1 * w + x0] * (1 - fx) + plane[y1 * w + x1] * fx;
  return top * (1 - fy) + bot * fy;
}

// Linear C-SVC dual solved by accelerated projected gradient:
//   min 1/2 a'Qa - e'a  s.t.  y'a = 0, 0 <= a <= C.
// Projection onto the feasible set is exact up to bisection on the
// multiplier of the equality constraint.
struct QpSolution {
  std::vector<double> alpha;
  std::vector<double> w;
  double b = 0.0;
  double objective = 0.0;
  double gap = 0.0;  // certified bound on objective - optimum
};

inline double dual_objective(const std::vector<std::vector<double>>& Q,
                             const std::vector<double>& a) {
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) row += Q[i][j] * a[j];
    quad += a[i] * row;
    lin += a[i];
  }
  return 0.5 * quad - lin;
}

inline std::vector<double> project(const std::vector<double>& v, const std::vector<int>& y,
                                   double C) {
  auto at = [&](double lambda, std::vector<double>* out) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double a = std::clamp(v[i] - lambda * y[i], 0.0, C);
      if (out) (*out)[i] = a;
      s += y[i] * a;
    }
    return s;
  };
  double span = C;
  for (double x : v) span = std::max(span, std::abs(x) + C);
  double lo = -span, hi = span;  // at(lo) >= 0 >= at(hi)
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (at(mid, nullptr) > 0.0) lo = mid;
    else hi = mid;
  }
  std::vector<double> out(v.size());
  at(0.5 * (lo + hi), &out);
  return out;
}

// Bias minimising the primal for fixed w: 1-D convex piecewise-linear in b,
// minimised over its breakpoints; a flat minimum returns its midpoint.
inline double best_bias(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                        const std::vector<double>& w, double C) {
  std::vector<double> margin(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * X[i][k];
    margin[i] = s;
  }
  auto loss = [&](double b) {
    double l = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) l += std::max(0.0, 1.0 - y[i] * (margin[i] + b));
    return C * l;
  };
  std::vector<double> cand;
  for (std::size_t i = 0; i < X.size(); ++i) cand.push_back(y[i] - margin[i]);
  std::sort(cand.begin(), cand.end());
  double best = std::numeric_limits<double>::infinity();
  for (double b : cand) best = std::min(best, loss(b));
  const double slack = 1e-12 * std::max(1.0, best);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double b : cand)
    if (loss(b) <= best + slack) lo = std::min(lo, b), hi = std::max(hi, b);
  return 0.5 * (lo + hi);
}

// Primal value for fixed w at its best bias: 1/2 |w|^2 + C sum hinge.
inline double primal_value(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                           const std::vector<double>& w, double C, double b) {
  double obj = 0.0;
  for (double v : w) obj += 0.5 * v * v;
  for (std::size_t i = 0; i < X.size(); ++i) {
    double s = b;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * X[i][k];
    obj += C * std::max(0.0, 1.0 - y[i] * s);
  }
  return obj;
}

// Iterates until the gradient-mapping bound certifies the dual objective to
// within `gap_tol` of the optimum, whatever the conditioning of Q.
inline QpSolution solve_dual(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                             double C, double gap_tol = 1e-10, int max_iter = 2000000) {
  const std::size_t n = X.size(), d = X[0].size();
  std::vector<std::vector<double>> Q(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double k = 0.0;
      for (std::size_t c = 0; c < d; ++c) k += X[i][c] * X[j][c];
      Q[i][j] = y[i] * y[j] * k;
    }
  // Lipschitz constant of the gradient: largest eigenvalue of Q.
  std::vector<double> v(n, 1.0);
  double L = 0.0;
  for (int it = 0; it < 500; ++it) {
    std::vector<double> u(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) u[i] += Q[i][j] * v[j];
    double norm = 0.0;
    for (double x : u) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    L = norm;
    for (std::size_t i = 0; i < n; ++i) v[i] = u[i] / norm;
  }
  L = std::max(L * 1.01, 1e-12);

  auto gradient = [&](const std::vector<double>& a) {
    std::vector<double> g(n, -1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i] += Q[i][j] * a[j];
    return g;
  };
  auto weights = [&](const std::vector<double>& a) {
    std::vector<double> w(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) w[c] += a[i] * y[i] * X[i][c];
    return w;
  };

  std::vector<double> a(n, 0.0), z = a;
  double t = 1.0, f_prev = dual_objective(Q, a);
  double bound = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    const auto g = gradient(z);
    std::vector<double> step(n);
    for (std::size_t i = 0; i < n; ++i) step[i] = z[i] - g[i] / L;
    auto next = project(step, y, C);
    const double f = dual_objective(Q, next);
    if (f > f_prev && t > 1.0) {
      // Adaptive restart: drop momentum when the objective goes up.
      t = 1.0;
      z = a;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t i = 0; i < n; ++i) z[i] = next[i] + (t - 1.0) / t_next * (next[i] - a[i]);
    a = std::move(next);
    t = t_next;
    f_prev = f;
    if (it % 16 == 0) {
      // Gradient mapping G = L (a - P(a - grad/L)) bounds the suboptimality
      // of the projected point by |G| * diam, diam <= C sqrt(n).
      const auto ga = gradient(a);
      std::vector<double> probe(n);
      for (std::size_t i = 0; i < n; ++i) probe[i] = a[i] - ga[i] / L;
      const auto pa = project(probe, y, C);
      double gm = 0.0;
      for (std::size_t i = 0; i < n; ++i) gm += (a[i] - pa[i]) * (a[i] - pa[i]);
      bound = L * std::sqrt(gm) * C * std::sqrt(double(n));
      if (bound <= gap_tol) {
        if (dual_objective(Q, pa) <= f) a = pa;
        break;
      }
    }
  }

  QpSolution s;
  s.alpha = a;
  s.w = weights(a);
  s.b = best_bias(X, y, s.w, C);
  s.objective = dual_objective(Q, a);
  s.gap = bound;
  return s;
}

}  // namespace oracle
