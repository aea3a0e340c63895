// Independent reference implementations used to check the library. These
// deliberately use the most direct (often brute-force) formulation and
// stay decoupled from the code under test.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "topicseg/eval.hpp"
#include "topicseg/segment.hpp"

namespace oracle {

// WindowDiff by naive window scanning: for each window position count
// boundaries inside (x, x+w] by linear search.
inline double window_diff(const topicseg::Segmentation& pred, const topicseg::Segmentation& gold,
                          int w) {
    auto count_in = [](const std::vector<int>& bs, int lo, int hi) {
        int c = 0;
        for (int b : bs) {
            if (b > lo && b <= hi) ++c;
        }
        return c;
    };
    int mism = 0;
    int windows = 0;
    for (int i = 1; i + w <= pred.n; ++i) {
        ++windows;
        if (count_in(pred.boundaries, i, i + w) != count_in(gold.boundaries, i, i + w)) ++mism;
    }
    return static_cast<double>(mism) / windows;
}

inline double seg_f1(const std::vector<topicseg::Segmentation>& preds,
                     const std::vector<topicseg::Segmentation>& golds) {
    long long tp = 0, np = 0, ng = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        np += static_cast<long long>(preds[i].boundaries.size());
        ng += static_cast<long long>(golds[i].boundaries.size());
        for (int b : preds[i].boundaries) {
            for (int g : golds[i].boundaries) {
                if (b == g) ++tp;
            }
        }
    }
    if (np == 0 && ng == 0) return 1.0;
    if (np == 0 || ng == 0) return 0.0;
    double p = double(tp) / np, r = double(tp) / ng;
    return p + r == 0.0 ? 0.0 : 2 * p * r / (p + r);
}

inline double seg_mae(const std::vector<topicseg::Segmentation>& preds,
                      const std::vector<topicseg::Segmentation>& golds) {
    double total = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        total += std::abs(static_cast<double>(preds[i].segments().size()) -
                          static_cast<double>(golds[i].segments().size()));
    }
    return total / preds.size();
}

// Exhaustive assignment search over all permutations.
inline double assignment_by_enumeration(const Eigen::MatrixXd& cost) {
    int n = static_cast<int>(cost.rows());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0;
        for (int i = 0; i < n; ++i) total += cost(i, perm[i]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Dominant eigenvector of the Gram matrix via a dense symmetric solver.
inline Eigen::VectorXd top_gram_direction(const Eigen::MatrixXd& rows) {
    Eigen::MatrixXd gram = rows.transpose() * rows;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    return solver.eigenvectors().col(gram.rows() - 1);  // ascending eigenvalues
}

// Ranking metrics straight from their definitions over an explicit ranked
// list (score descending, stable).
struct RankingOracle {
    double recall_at(const std::vector<int>& labels_ranked, int k) const {
        int rel = 0, hit = 0;
        for (size_t i = 0; i < labels_ranked.size(); ++i) {
            rel += labels_ranked[i];
            if (static_cast<int>(i) < k) hit += labels_ranked[i];
        }
        return static_cast<double>(hit) / rel;
    }
    double average_precision(const std::vector<int>& labels_ranked) const {
        int rel = 0;
        double ap = 0;
        for (size_t i = 0; i < labels_ranked.size(); ++i) {
            if (labels_ranked[i]) {
                ++rel;
                ap += static_cast<double>(rel) / static_cast<double>(i + 1);
            }
        }
        return ap / rel;
    }
    double reciprocal_rank(const std::vector<int>& labels_ranked) const {
        for (size_t i = 0; i < labels_ranked.size(); ++i) {
            if (labels_ranked[i]) return 1.0 / static_cast<double>(i + 1);
        }
        return 0.0;
    }
};

// Central finite difference of a scalar function at x along coordinate i.
template <typename F>
double central_difference(F&& f, double* x, double eps) {
    double saved = *x;
    *x = saved + eps;
    double hi = f();
    *x = saved - eps;
    double lo = f();
    *x = saved;
    return (hi - lo) / (2 * eps);
}

inline double rel_error(double analytic, double numeric) {
    double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

}  // namespace oracle
