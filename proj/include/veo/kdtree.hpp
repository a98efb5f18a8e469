#pragma once

#include "veo/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

namespace veo
{
    struct NeighborHit
    {
        int id;
        double distance;

        bool operator==(const NeighborHit &) const = default;
    };

    /**
     * Static kd-tree over a point set for exact k-nearest-neighbor queries.
     *
     * Results are ordered by (squared distance, id), which is the same total
     * order a brute-force scan produces, so ties resolve to the lower id.
     * Subtrees are pruned only when their splitting plane is strictly farther
     * than the current k-th candidate.
     */
    class KdTree
    {
    public:
        KdTree() = default;

        explicit KdTree(Points points) : points_(std::move(points))
        {
            order_.resize(points_.cols());
            std::iota(order_.begin(), order_.end(), 0);
            if (!order_.empty())
                build(0, static_cast<int>(order_.size()));
        }

        int size() const { return static_cast<int>(points_.cols()); }
        const Points &points() const { return points_; }

        std::vector<NeighborHit> query(const Vec3 &q, int k) const
        {
            require(k >= 0, "knn: k must be non-negative");
            require(k <= size(), "knn: k=" + std::to_string(k) + " exceeds point count " + std::to_string(size()));
            std::vector<NeighborHit> out;
            if (k == 0)
                return out;

            Heap heap;
            search(0, q, k, heap);

            out.resize(heap.size());
            for (auto i = static_cast<int>(heap.size()) - 1; i >= 0; --i)
            {
                out[i] = {heap.top().second, std::sqrt(heap.top().first)};
                heap.pop();
            }
            return out;
        }

    private:
        using Candidate = std::pair<double, int>; // (squared distance, id)
        using Heap = std::priority_queue<Candidate>;

        static constexpr int leaf_size = 8;

        struct Node
        {
            int begin, end;
            int axis = -1; // -1 marks a leaf
            double split = 0.0;
            int left = -1, right = -1;
        };

        int build(int begin, int end)
        {
            const int self = static_cast<int>(nodes_.size());
            nodes_.push_back({begin, end});
            if (end - begin <= leaf_size)
                return self;

            Vec3 lo = points_.col(order_[begin]), hi = lo;
            for (int i = begin + 1; i < end; ++i)
            {
                lo = lo.cwiseMin(points_.col(order_[i]));
                hi = hi.cwiseMax(points_.col(order_[i]));
            }
            int axis;
            (hi - lo).maxCoeff(&axis);

            const int mid = begin + (end - begin) / 2;
            std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                             [&](int a, int b) { return points_(axis, a) < points_(axis, b); });
            const double split = points_(axis, order_[mid]);
            const int left = build(begin, mid);
            const int right = build(mid, end);

            Node &node = nodes_[self];
            node.axis = axis;
            node.split = split;
            node.left = left;
            node.right = right;
            return self;
        }

        void search(int index, const Vec3 &q, int k, Heap &heap) const
        {
            const Node &node = nodes_[index];
            if (node.axis < 0)
            {
                for (int i = node.begin; i < node.end; ++i)
                    offer(order_[i], q, k, heap);
                return;
            }

            // left holds coordinates <= split, right holds coordinates >= split
            const double diff = q(node.axis) - node.split;
            const int near = diff <= 0.0 ? node.left : node.right;
            const int far = diff <= 0.0 ? node.right : node.left;
            search(near, q, k, heap);
            if (static_cast<int>(heap.size()) < k || diff * diff <= heap.top().first)
                search(far, q, k, heap);
        }

        void offer(int id, const Vec3 &q, int k, Heap &heap) const
        {
            const Candidate c{(points_.col(id) - q).squaredNorm(), id};
            if (static_cast<int>(heap.size()) < k)
                heap.push(c);
            else if (c < heap.top())
            {
                heap.pop();
                heap.push(c);
            }
        }

        Points points_;
        std::vector<int> order_;
        std::vector<Node> nodes_;
    };
} // namespace veo
