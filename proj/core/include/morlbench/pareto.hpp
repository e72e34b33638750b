#pragma once

#include <vector>

namespace morlbench {

/// Indices of the points not Pareto-dominated (maximization: p dominates q
/// when p >= q component-wise with at least one strict inequality).
/// Input order is preserved. Sort-and-sweep for two objectives, pairwise
/// scan otherwise.
std::vector<int> nondominated_indices(const std::vector<std::vector<double>>& points);

/// Same filter, returning the surviving points in input order.
std::vector<std::vector<double>> nondominated(const std::vector<std::vector<double>>& points);

}  // namespace morlbench
