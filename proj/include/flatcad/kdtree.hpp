#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "flatcad/errors.hpp"
#include "flatcad/linalg.hpp"

namespace flatcad {

// Exact nearest-neighbor queries over a fixed point set. Median-split tree
// over an index array; queries prune on the squared splitting-plane distance,
// so results match brute force (up to ties in distance).
class KdTree {
public:
    KdTree() = default;

    explicit KdTree(std::vector<Vec3> points) : pts_(std::move(points)) {
        if (pts_.empty()) throw EmptySet("KdTree over empty point set");
        idx_.resize(pts_.size());
        for (std::size_t i = 0; i < idx_.size(); ++i) idx_[i] = static_cast<int>(i);
        nodes_.reserve(2 * pts_.size());
        root_ = build(0, static_cast<int>(pts_.size()));
    }

    std::size_t size() const { return pts_.size(); }
    const Vec3& point(int i) const { return pts_[static_cast<std::size_t>(i)]; }

    struct Hit {
        int index = -1;
        Real dist = 0;
    };

    Hit nearest(const Vec3& q) const {
        Hit best;
        Real best_d2 = std::numeric_limits<Real>::max();
        nearest_rec(root_, q, best.index, best_d2);
        best.dist = std::sqrt(best_d2);
        return best;
    }

    // k nearest neighbors sorted by ascending distance. exclude_index skips one
    // point (used for self-exclusion). Returns fewer than k when the set is small.
    std::vector<Hit> knn(const Vec3& q, int k, int exclude_index = -1) const {
        std::vector<std::pair<Real, int>> heap;  // max-heap on squared distance
        heap.reserve(static_cast<std::size_t>(k) + 1);
        knn_rec(root_, q, k, exclude_index, heap);
        std::sort_heap(heap.begin(), heap.end());
        std::vector<Hit> out;
        out.reserve(heap.size());
        for (const auto& [d2, i] : heap) out.push_back({i, std::sqrt(d2)});
        return out;
    }

private:
    struct Node {
        Vec3 p;
        int index = -1;
        int axis = 0;
        int left = -1, right = -1;
    };

    int build(int lo, int hi) {
        if (lo >= hi) return -1;
        Vec3 mn = pts_[static_cast<std::size_t>(idx_[lo])];
        Vec3 mx = mn;
        for (int i = lo + 1; i < hi; ++i) {
            const Vec3& p = pts_[static_cast<std::size_t>(idx_[i])];
            for (int a = 0; a < 3; ++a) {
                mn[a] = std::min(mn[a], p[a]);
                mx[a] = std::max(mx[a], p[a]);
            }
        }
        const Vec3 ext = mx - mn;
        int axis = 0;
        if (ext.y > ext[axis]) axis = 1;
        if (ext.z > ext[axis]) axis = 2;

        const int mid = (lo + hi) / 2;
        std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                         [&](int a, int b) { return pts_[static_cast<std::size_t>(a)][axis] <
                                                    pts_[static_cast<std::size_t>(b)][axis]; });
        Node node;
        node.index = idx_[mid];
        node.p = pts_[static_cast<std::size_t>(node.index)];
        node.axis = axis;
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        nodes_[static_cast<std::size_t>(self)].left = build(lo, mid);
        nodes_[static_cast<std::size_t>(self)].right = build(mid + 1, hi);
        return self;
    }

    void nearest_rec(int ni, const Vec3& q, int& best, Real& best_d2) const {
        if (ni < 0) return;
        const Node& n = nodes_[static_cast<std::size_t>(ni)];
        const Real d2 = norm_squared(n.p - q);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = n.index;
        }
        const Real delta = q[n.axis] - n.p[n.axis];
        const int near = delta < 0 ? n.left : n.right;
        const int far = delta < 0 ? n.right : n.left;
        nearest_rec(near, q, best, best_d2);
        if (delta * delta < best_d2) nearest_rec(far, q, best, best_d2);
    }

    void knn_rec(int ni, const Vec3& q, int k, int exclude,
                 std::vector<std::pair<Real, int>>& heap) const {
        if (ni < 0) return;
        const Node& n = nodes_[static_cast<std::size_t>(ni)];
        if (n.index != exclude) {
            const Real d2 = norm_squared(n.p - q);
            if (static_cast<int>(heap.size()) < k) {
                heap.emplace_back(d2, n.index);
                std::push_heap(heap.begin(), heap.end());
            } else if (d2 < heap.front().first) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = {d2, n.index};
                std::push_heap(heap.begin(), heap.end());
            }
        }
        const Real delta = q[n.axis] - n.p[n.axis];
        const int near = delta < 0 ? n.left : n.right;
        const int far = delta < 0 ? n.right : n.left;
        knn_rec(near, q, k, exclude, heap);
        if (static_cast<int>(heap.size()) < k || delta * delta < heap.front().first)
            knn_rec(far, q, k, exclude, heap);
    }

    std::vector<Vec3> pts_;
    std::vector<int> idx_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace flatcad
