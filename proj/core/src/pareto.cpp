#include <limits>
#include "morlbench/pareto.hpp"

#include <algorithm>
#include <stdexcept>

namespace morlbench {

namespace {

bool dominates(const std::vector<double>& p, const std::vector<double>& q) {
  bool strict = false;
  for (size_t k = 0; k < p.size(); ++k) {
    if (p[k] < q[k]) return false;
    if (p[k] > q[k]) strict = true;
  }
  return strict;
}

std::vector<int> nondominated_2d(const std::vector<std::vector<double>>& points) {
  const int n = static_cast<int>(points.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (points[a][0] != points[b][0]) return points[a][0] > points[b][0];
    return points[a][1] > points[b][1];
  });

  // Sweep by strictly decreasing x. Within an x group only the max-y points
  // survive; across groups a point survives iff its y beats every y seen at
  // strictly larger x.
  std::vector<char> keep(n, 0);
  double best_y = -std::numeric_limits<double>::infinity();
  int i = 0;
  while (i < n) {
    int j = i;
    double group_max_y = points[order[i]][1];
    while (j < n && points[order[j]][0] == points[order[i]][0]) {
      group_max_y = std::max(group_max_y, points[order[j]][1]);
      ++j;
    }
    if (group_max_y > best_y) {
      for (int k = i; k < j; ++k) {
        if (points[order[k]][1] == group_max_y) keep[order[k]] = 1;
      }
      best_y = group_max_y;
    }
    i = j;
  }
  std::vector<int> out;
  for (int k = 0; k < n; ++k) {
    if (keep[k]) out.push_back(k);
  }
  return out;
}

}  // namespace

std::vector<int> nondominated_indices(const std::vector<std::vector<double>>& points) {
  if (points.empty()) return {};
  const size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw std::invalid_argument("nondominated: ragged point set");
  }
  if (dim == 2) return nondominated_2d(points);

  std::vector<int> out;
  for (size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (size_t j = 0; j < points.size() && !dominated; ++j) {
      if (j != i && dominates(points[j], points[i])) dominated = true;
    }
    if (!dominated) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<std::vector<double>> nondominated(const std::vector<std::vector<double>>& points) {
  std::vector<std::vector<double>> out;
  for (int i : nondominated_indices(points)) out.push_back(points[i]);
  return out;
}

}  // namespace morlbench
