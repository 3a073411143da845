#include <algorithm>
#include <numeric>

#include "rflow/core/errors.hpp"
#include "rflow/learn/learn.hpp"

namespace rflow::learn {

int ClusterLabels::num_clusters() const {
  int m = -1;
  for (int l : labels) m = std::max(m, l);
  return m + 1;
}

std::vector<std::size_t> ClusterLabels::cluster_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(num_clusters()), 0);
  for (int l : labels)
    if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
  return sizes;
}

ClusterLabels canonicalize_labels(const std::vector<int>& raw, std::vector<int>& mapping) {
  int max_label = -1;
  for (int l : raw) max_label = std::max(max_label, l);
  const std::size_t n_labels = static_cast<std::size_t>(max_label + 1);
  std::vector<std::size_t> size(n_labels, 0), first(n_labels, raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] < 0) continue;
    const auto l = static_cast<std::size_t>(raw[i]);
    ++size[l];
    first[l] = std::min(first[l], i);
  }
  std::vector<int> order;
  for (std::size_t l = 0; l < n_labels; ++l)
    if (size[l] > 0) order.push_back(static_cast<int>(l));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (size[a] != size[b]) return size[a] > size[b];
    return first[a] < first[b];
  });
  mapping.assign(n_labels, -1);
  for (std::size_t i = 0; i < order.size(); ++i) mapping[order[i]] = static_cast<int>(i);
  ClusterLabels out;
  out.labels.reserve(raw.size());
  for (int l : raw) out.labels.push_back(l < 0 ? l : mapping[l]);
  return out;
}

ClusterLabels canonicalize_labels(const std::vector<int>& raw) {
  std::vector<int> mapping;
  return canonicalize_labels(raw, mapping);
}

}  // namespace rflow::learn
