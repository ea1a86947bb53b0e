#include "smatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <queue>
#include <set>

namespace smatch {

namespace {

Eigen::VectorXd metric_point(const ScoreVector& sv, Metric metric) {
    if (metric == Metric::LogScore) return sv.log_values;
    return sv.log_values.array().exp();
}

struct Candidate {
    std::string id;
    Eigen::VectorXd point;
};

// Orders by (squared distance, id); the tie rule of the matching contract.
struct Neighbor {
    double dist2;
    const Candidate* cand;
    bool operator<(const Neighbor& o) const {
        if (dist2 != o.dist2) return dist2 < o.dist2;
        return cand->id < o.cand->id;
    }
};

// --- exhaustive scan ------------------------------------------------------

std::vector<Neighbor> scan_knn(const std::vector<const Candidate*>& pool,
                               const Eigen::VectorXd& query, int kn) {
    std::vector<Neighbor> all;
    all.reserve(pool.size());
    for (const Candidate* c : pool) all.push_back({(c->point - query).squaredNorm(), c});
    const auto take = std::min<std::size_t>(kn, all.size());
    std::partial_sort(all.begin(), all.begin() + take, all.end());
    all.resize(take);
    return all;
}

// --- k-d tree; results identical to the scan given the tie rule -----------

class KdTree {
public:
    explicit KdTree(std::vector<const Candidate*> pts) : pts_(std::move(pts)) {
        if (!pts_.empty()) {
            dim_ = static_cast<int>(pts_[0]->point.size());
            root_ = build(0, pts_.size(), 0);
        }
    }

    std::vector<Neighbor> knn(const Eigen::VectorXd& query, int kn) const {
        Heap heap;
        if (root_ >= 0) search(root_, query, kn, heap);
        std::vector<Neighbor> out(heap.begin(), heap.end());
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    struct Node {
        std::size_t point;
        int axis;
        int left = -1, right = -1;
    };
    // max-heap on (dist2, id) so the worst current neighbor is at the front
    using Heap = std::vector<Neighbor>;

    int build(std::size_t lo, std::size_t hi, int depth) {
        if (lo >= hi) return -1;
        const int axis = depth % dim_;
        const std::size_t mid = (lo + hi) / 2;
        std::nth_element(pts_.begin() + lo, pts_.begin() + mid, pts_.begin() + hi,
                         [axis](const Candidate* a, const Candidate* b) {
                             if (a->point[axis] != b->point[axis])
                                 return a->point[axis] < b->point[axis];
                             return a->id < b->id;
                         });
        Node node;
        node.point = mid;
        node.axis = axis;
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        nodes_[self].left = build(lo, mid, depth + 1);
        nodes_[self].right = build(mid + 1, hi, depth + 1);
        return self;
    }

    void consider(const Candidate* c, const Eigen::VectorXd& query, int kn, Heap& heap) const {
        Neighbor nb{(c->point - query).squaredNorm(), c};
        if (static_cast<int>(heap.size()) < kn) {
            heap.push_back(nb);
            std::push_heap(heap.begin(), heap.end());
        } else if (nb < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = nb;
            std::push_heap(heap.begin(), heap.end());
        }
    }

    void search(int idx, const Eigen::VectorXd& query, int kn, Heap& heap) const {
        const Node& node = nodes_[idx];
        const Candidate* c = pts_[node.point];
        consider(c, query, kn, heap);
        const double delta = query[node.axis] - c->point[node.axis];
        const int near = delta < 0 ? node.left : node.right;
        const int far = delta < 0 ? node.right : node.left;
        if (near >= 0) search(near, query, kn, heap);
        // equal plane distance must still be visited (id tie-break)
        if (far >= 0 &&
            (static_cast<int>(heap.size()) < kn || delta * delta <= heap.front().dist2))
            search(far, query, kn, heap);
    }

    std::vector<const Candidate*> pts_;
    std::vector<Node> nodes_;
    int dim_ = 0;
    int root_ = -1;
};

const ScoreVector& score_of(const ScoreMap& scores, const std::string& id) {
    auto it = scores.find(id);
    if (it == scores.end()) throw InputError("missing score for unit '" + id + "'");
    return it->second;
}

}  // namespace

MatchingResult match_units(const Dataset& d, const ScoreMap& scores, const MatchSpec& spec) {
    const int k = d.k();
    if (spec.pivot < 0 || spec.pivot >= k) throw InputError("match_units: invalid pivot");
    if (spec.neighbors_per_arm < 1) throw InputError("match_units: neighbors_per_arm must be >= 1");
    if (spec.caliper && *spec.caliper < 0) throw InputError("match_units: caliper must be > 0");
    const int anchor_arm = spec.anchor();
    if (anchor_arm < 0 || anchor_arm >= k) throw InputError("match_units: invalid anchor arm");
    if (d.arm(anchor_arm).empty()) throw InputError("match_units: anchor arm is empty");

    // metric-space embedding of every unit's score
    std::vector<Candidate> points(d.n());
    for (std::size_t i = 0; i < d.n(); ++i) {
        const Unit& u = d.units()[i];
        points[i] = {u.id, metric_point(score_of(scores, u.id), spec.metric)};
    }

    std::vector<std::vector<const Candidate*>> arm_pool(k);
    for (std::size_t i = 0; i < d.n(); ++i)
        arm_pool[d.units()[i].treatment].push_back(&points[i]);
    for (auto& pool : arm_pool)
        std::sort(pool.begin(), pool.end(),
                  [](const Candidate* a, const Candidate* b) { return a->id < b->id; });

    std::vector<std::unique_ptr<KdTree>> trees(k);
    if (spec.use_index && spec.with_replacement) {
        for (int t = 0; t < k; ++t)
            if (t != anchor_arm) trees[t] = std::make_unique<KdTree>(arm_pool[t]);
    }

    const double cal2 = spec.caliper ? (*spec.caliper) * (*spec.caliper)
                                     : std::numeric_limits<double>::infinity();
    const int kn = spec.neighbors_per_arm;

    MatchingResult result;
    result.spec = spec;

    // anchors in dataset order; the greedy path re-orders below
    std::vector<const Candidate*> anchors;
    for (std::size_t i = 0; i < d.n(); ++i)
        if (d.units()[i].treatment == anchor_arm) anchors.push_back(&points[i]);

    auto try_match = [&](const Candidate* anchor,
                         const std::vector<std::vector<const Candidate*>>& pools,
                         bool use_tree) -> std::optional<MatchedGroup> {
        MatchedGroup group;
        group.anchor_id = anchor->id;
        for (int t = 0; t < k; ++t) {
            if (t == anchor_arm) continue;
            std::vector<Neighbor> nn = (use_tree && trees[t])
                                           ? trees[t]->knn(anchor->point, kn)
                                           : scan_knn(pools[t], anchor->point, kn);
            if (static_cast<int>(nn.size()) < kn) return std::nullopt;  // pool exhausted
            if (nn.back().dist2 > cal2) return std::nullopt;            // caliper
            auto& lst = group.matches[t];
            for (const Neighbor& nb : nn) lst.push_back({nb.cand->id, std::sqrt(nb.dist2)});
        }
        return group;
    };

    auto failure_reason = [&](const Candidate* anchor,
                              const std::vector<std::vector<const Candidate*>>& pools) {
        for (int t = 0; t < k; ++t) {
            if (t == anchor_arm) continue;
            auto nn = scan_knn(pools[t], anchor->point, kn);
            if (static_cast<int>(nn.size()) < kn) return std::string("pool exhausted");
            if (nn.back().dist2 > cal2) return std::string("caliper");
        }
        return std::string("caliper");
    };

    if (spec.with_replacement) {
        for (const Candidate* anchor : anchors) {
            auto group = try_match(anchor, arm_pool, spec.use_index);
            if (group)
                result.groups.push_back(std::move(*group));
            else
                result.unmatched.push_back({anchor->id, failure_reason(anchor, arm_pool)});
        }
    } else {
        // greedy: ascending provisional distance, where the provisional
        // distance is the worst required match distance before any
        // consumption; ties by anchor id
        std::vector<std::pair<double, const Candidate*>> order;
        for (const Candidate* anchor : anchors) {
            double worst = 0.0;
            bool feasible = true;
            for (int t = 0; t < k && feasible; ++t) {
                if (t == anchor_arm) continue;
                auto nn = scan_knn(arm_pool[t], anchor->point, kn);
                if (static_cast<int>(nn.size()) < kn)
                    feasible = false;
                else
                    worst = std::max(worst, nn.back().dist2);
            }
            order.emplace_back(feasible ? worst : std::numeric_limits<double>::infinity(),
                               anchor);
        }
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& a, const auto& b) {
                             if (a.first != b.first) return a.first < b.first;
                             return a.second->id < b.second->id;
                         });

        auto pools = arm_pool;  // mutable copies, consumed as matches are taken
        for (const auto& [prov, anchor] : order) {
            (void)prov;
            auto group = try_match(anchor, pools, false);
            if (!group) {
                result.unmatched.push_back({anchor->id, failure_reason(anchor, pools)});
                continue;
            }
            for (const auto& [t, lst] : group->matches) {
                std::set<std::string> used;
                for (const Match& m : lst) used.insert(m.unit_id);
                auto& pool = pools[t];
                pool.erase(std::remove_if(pool.begin(), pool.end(),
                                          [&](const Candidate* c) { return used.count(c->id); }),
                           pool.end());
            }
            result.groups.push_back(std::move(*group));
        }
        // report groups in anchor dataset order for stable output
        std::sort(result.groups.begin(), result.groups.end(),
                  [&](const MatchedGroup& a, const MatchedGroup& b) {
                      return a.anchor_id < b.anchor_id;
                  });
        std::sort(result.unmatched.begin(), result.unmatched.end(),
                  [](const Unmatched& a, const Unmatched& b) {
                      return a.anchor_id < b.anchor_id;
                  });
    }

    for (const MatchedGroup& g : result.groups)
        for (const auto& [t, lst] : g.matches)
            for (const Match& m : lst) result.reuse_counts[m.unit_id] += 1;
    return result;
}

std::vector<std::pair<int, MatchingResult>> match_all_pivots(const Dataset& d,
                                                             const ScoreProvider& provider,
                                                             const MatchSpec& spec) {
    std::vector<std::pair<int, MatchingResult>> out;
    for (int j = 0; j < d.k(); ++j) {
        MatchSpec s = spec;
        s.pivot = j;
        s.anchor_arm = spec.anchor();  // anchor arm held fixed across pivots
        out.emplace_back(j, match_units(d, provider(j), s));
    }
    return out;
}

std::pair<int, MatchingResult> select_best_pivot(
    const std::vector<std::pair<int, MatchingResult>>& results, const Dataset& d, MeanNorm norm) {
    if (results.empty()) throw InputError("select_best_pivot: no results");
    bool any_groups = false;
    for (const auto& [pivot, r] : results) any_groups = any_groups || !r.groups.empty();
    if (!any_groups) throw InputError("select_best_pivot: nothing matched");

    double best = std::numeric_limits<double>::infinity();
    const std::pair<int, MatchingResult>* winner = nullptr;
    for (const auto& entry : results) {
        const MatchingResult& r = entry.second;
        if (r.groups.empty()) continue;
        Eigen::VectorXd anchor_mean = Eigen::VectorXd::Zero(d.p());
        Eigen::VectorXd matched_mean = Eigen::VectorXd::Zero(d.p());
        double n_matched = 0;
        for (const MatchedGroup& g : r.groups) {
            anchor_mean += d.unit_by_id(g.anchor_id).covariates;
            for (const auto& [t, lst] : g.matches)
                for (const Match& m : lst) {
                    matched_mean += d.unit_by_id(m.unit_id).covariates;
                    n_matched += 1;
                }
        }
        anchor_mean /= static_cast<double>(r.groups.size());
        matched_mean /= n_matched;
        Eigen::VectorXd diff = matched_mean - anchor_mean;
        const double val =
            norm == MeanNorm::Euclidean ? diff.norm() : diff.cwiseAbs().maxCoeff();
        if (val < best) {  // strict: ties go to the smaller pivot index
            best = val;
            winner = &entry;
        }
    }
    return *winner;
}

std::pair<PcaReduction, Eigen::MatrixXd> reduce_scores_pca(const Eigen::MatrixXd& scores,
                                                           const PcaTarget& target) {
    const auto n = scores.rows();
    const auto q = scores.cols();
    if (n < 2) throw InputError("reduce_scores_pca: need at least 2 rows");

    PcaReduction red;
    red.center = scores.colwise().mean().transpose();
    Eigen::MatrixXd centered = scores.rowwise() - red.center.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
    // ascending from Eigen; flip to descending
    Eigen::VectorXd evals = es.eigenvalues().reverse().cwiseMax(0.0);
    Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();

    // deterministic sign: largest-magnitude entry of each loading positive
    for (Eigen::Index c = 0; c < q; ++c) {
        Eigen::Index imax;
        evecs.col(c).cwiseAbs().maxCoeff(&imax);
        if (evecs(imax, c) < 0) evecs.col(c) = -evecs.col(c);
    }

    const double total = std::max(evals.sum(), 1e-300);
    Eigen::VectorXd fractions = evals / total;

    int dim;
    if (target.dimension) {
        dim = *target.dimension;
        if (dim < 1 || dim > q) throw InputError("reduce_scores_pca: invalid target dimension");
    } else if (target.variance_fraction) {
        const double v = *target.variance_fraction;
        if (!(v > 0.0 && v <= 1.0))
            throw InputError("reduce_scores_pca: variance fraction must be in (0, 1]");
        double cum = 0.0;
        dim = static_cast<int>(q);
        for (Eigen::Index c = 0; c < q; ++c) {
            cum += fractions[c];
            if (cum >= v - 1e-12) {
                dim = static_cast<int>(c) + 1;
                break;
            }
        }
    } else {
        throw InputError("reduce_scores_pca: no target given");
    }

    red.loadings = evecs.leftCols(dim).transpose();
    red.explained = fractions.head(dim);
    red.retained = dim;
    return {red, centered * red.loadings.transpose()};
}

}  // namespace smatch
