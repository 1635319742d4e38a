#pragma once

// Exact k-nearest-neighbour majority vote over a labeled reference space,
// indexed by a median-split KD-tree. A linear scan with the same distance and
// tie-break rules is kept alongside as the reference path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "apsense/error.hpp"

namespace apsense {

struct Neighbor {
  std::size_t index = 0;  // position in the reference space
  double distance_sq = 0.0;
};

class ReferenceSpace {
 public:
  static constexpr std::size_t kMinSize = 5;
  static constexpr std::size_t kLeafSize = 16;

  /// `vectors` is row-major M x dim. `ids` (default 0..M-1) order equal
  /// distances; pass the original indices when building from a permutation.
  static ReferenceSpace build(std::vector<double> vectors, std::size_t dim, std::vector<int> labels,
                              std::vector<std::size_t> ids = {}) {
    if (dim == 0) throw ParameterError("reference dimension must be positive");
    if (vectors.size() % dim != 0) throw ParameterError("reference matrix size is not a multiple of dim");
    const std::size_t m = vectors.size() / dim;
    if (m != labels.size())
      throw ParameterError("reference has " + std::to_string(m) + " vectors but " + std::to_string(labels.size()) +
                           " labels");
    if (m < kMinSize) throw ParameterError("reference space needs at least 5 vectors");
    for (double v : vectors)
      if (!std::isfinite(v)) throw ParameterError("reference vectors contain non-finite values");
    for (int l : labels)
      if (l != 0 && l != 1) throw ParameterError("reference labels must be 0 or 1");
    if (ids.empty()) {
      ids.resize(m);
      std::iota(ids.begin(), ids.end(), 0);
    } else if (ids.size() != m) {
      throw ParameterError("ids must match the number of vectors");
    }

    ReferenceSpace s;
    s.dim_ = dim;
    s.vectors_ = std::move(vectors);
    s.labels_ = std::move(labels);
    s.ids_ = std::move(ids);
    s.order_.resize(m);
    std::iota(s.order_.begin(), s.order_.end(), 0);
    s.nodes_.reserve(2 * (m / kLeafSize + 1));
    s.build_node(0, m);
    return s;
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const double> vector(std::size_t i) const { return {vectors_.data() + i * dim_, dim_}; }
  std::span<const double> vectors() const { return vectors_; }
  std::span<const int> labels() const { return labels_; }
  int label(std::size_t i) const { return labels_[i]; }

  /// Exact k nearest under Euclidean distance, sorted by (distance, id).
  std::vector<Neighbor> nearest(std::span<const double> query, std::size_t k) const {
    check_query(query, k);
    Heap heap(Closer{this});
    search(0, query, k, heap);
    return drain(heap);
  }

  std::vector<Neighbor> nearest_brute_force(std::span<const double> query, std::size_t k) const {
    check_query(query, k);
    Heap heap(Closer{this});
    for (std::size_t i = 0; i < size(); ++i) offer(heap, k, {i, distance_sq(query, i)});
    return drain(heap);
  }

  /// Majority label of the k nearest; k must be odd.
  int predict(std::span<const double> query, std::size_t k = 5) const {
    if (k % 2 == 0) throw ParameterError("k must be odd");
    return vote(nearest(query, k));
  }

  int predict_brute_force(std::span<const double> query, std::size_t k = 5) const {
    if (k % 2 == 0) throw ParameterError("k must be odd");
    return vote(nearest_brute_force(query, k));
  }

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // range in order_
    std::size_t axis = 0;
    double split = 0.0;
    std::size_t left = 0, right = 0;  // child node indices, 0 for leaves
    bool leaf = true;
  };

  // Max-heap on (distance, id): top is the current worst neighbour.
  struct Closer {
    const ReferenceSpace* self;
    bool operator()(const Neighbor& a, const Neighbor& b) const {
      if (a.distance_sq != b.distance_sq) return a.distance_sq < b.distance_sq;
      return self->ids_[a.index] < self->ids_[b.index];
    }
  };
  using Heap = std::priority_queue<Neighbor, std::vector<Neighbor>, Closer>;

  std::size_t build_node(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    std::size_t axis = 0;
    double best_spread = -1.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      double lo = vectors_[order_[begin] * dim_ + d], hi = lo;
      for (std::size_t i = begin + 1; i < end; ++i) {
        const double v = vectors_[order_[i] * dim_ + d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        axis = d;
      }
    }
    if (best_spread <= 0.0) return id;  // all points coincide

    const std::size_t mid = begin + (end - begin) / 2;
    auto first = order_.begin() + static_cast<std::ptrdiff_t>(begin);
    std::nth_element(first, order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       return vectors_[a * dim_ + axis] < vectors_[b * dim_ + axis];
                     });
    const double split = vectors_[order_[mid] * dim_ + axis];
    const std::size_t left = build_node(begin, mid);
    const std::size_t right = build_node(mid, end);
    Node& n = nodes_[id];
    n.leaf = false;
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  double distance_sq(std::span<const double> q, std::size_t i) const {
    const double* p = vectors_.data() + i * dim_;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double diff = q[d] - p[d];
      acc += diff * diff;
    }
    return acc;
  }

  void offer(Heap& heap, std::size_t k, const Neighbor& cand) const {
    if (heap.size() < k) {
      heap.push(cand);
    } else if (Closer{this}(cand, heap.top())) {
      heap.pop();
      heap.push(cand);
    }
  }

  void search(std::size_t node_id, std::span<const double> q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[node_id];
    if (node.leaf) {
      for (std::size_t i = node.begin; i < node.end; ++i) offer(heap, k, {order_[i], distance_sq(q, order_[i])});
      return;
    }
    // Left holds coordinates <= split, right >= split.
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    // Equal bounds are still visited: an equidistant point may win the id tie-break.
    if (heap.size() < k || diff * diff <= heap.top().distance_sq) search(far, q, k, heap);
  }

  std::vector<Neighbor> drain(Heap& heap) const {
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(heap.top());
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  int vote(const std::vector<Neighbor>& nn) const {
    std::size_t ones = 0;
    for (const auto& n : nn) ones += static_cast<std::size_t>(labels_[n.index] == 1);
    return 2 * ones > nn.size() ? 1 : 0;
  }

  void check_query(std::span<const double> q, std::size_t k) const {
    if (q.size() != dim_)
      throw ParameterError("query dimension " + std::to_string(q.size()) + " does not match reference dimension " +
                           std::to_string(dim_));
    if (k < 1 || k > size()) throw ParameterError("k must be in [1, reference size]");
  }

  std::size_t dim_ = 0;
  std::vector<double> vectors_;
  std::vector<int> labels_;
  std::vector<std::size_t> ids_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

inline ReferenceSpace build_reference(std::vector<double> vectors, std::size_t dim, std::vector<int> labels) {
  return ReferenceSpace::build(std::move(vectors), dim, std::move(labels));
}

inline int predict(const ReferenceSpace& space, std::span<const double> query, std::size_t k = 5) {
  return space.predict(query, k);
}

}  // namespace apsense
