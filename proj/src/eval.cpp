#include "topicseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace topicseg {

Assignment hungarian(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw std::invalid_argument("cost matrix must be square");
    if (!cost.allFinite()) throw std::invalid_argument("cost matrix has non-finite entries");
    if (n == 0) return {};

    const double inf = std::numeric_limits<double>::infinity();
    // potentials-based shortest augmenting path, 1-based with column 0 as
    // the virtual source
    std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
    std::vector<int> match(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
        std::vector<bool> used(static_cast<size_t>(n) + 1, false);
        do {
            used[static_cast<size_t>(j0)] = true;
            int i0 = match[static_cast<size_t>(j0)];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<size_t>(j0)];
            match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    Assignment result;
    result.col_of_row.assign(static_cast<size_t>(n), -1);
    for (int j = 1; j <= n; ++j) {
        result.col_of_row[static_cast<size_t>(match[static_cast<size_t>(j)] - 1)] = j - 1;
    }
    for (int i = 0; i < n; ++i) {
        result.total_cost += cost(i, result.col_of_row[static_cast<size_t>(i)]);
    }
    return result;
}

namespace {

// Hungarian map of nominal labels to reference labels maximizing the
// summed per-pair F1 (cost 1 - F1, padding held at cost 1). Returns
// per-cluster mapped reference index (-1 when padded) plus the pair F1.
struct LabelMapping {
    std::vector<int> topic_of_cluster;
    std::vector<double> f1_of_cluster;
};

LabelMapping map_labels(const std::vector<std::vector<long long>>& contingency,
                        const std::vector<long long>& cluster_size,
                        const std::vector<long long>& topic_size) {
    const int nc = static_cast<int>(cluster_size.size());
    const int nt = static_cast<int>(topic_size.size());
    const int k = std::max(nc, nt);
    Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(k, k);
    for (int c = 0; c < nc; ++c) {
        for (int t = 0; t < nt; ++t) {
            double f1 = contingency[static_cast<size_t>(c)][static_cast<size_t>(t)] == 0
                            ? 0.0
                            : 2.0 * static_cast<double>(contingency[static_cast<size_t>(c)][static_cast<size_t>(t)]) /
                                  static_cast<double>(cluster_size[static_cast<size_t>(c)] + topic_size[static_cast<size_t>(t)]);
            cost(c, t) = 1.0 - f1;
        }
    }
    Assignment assignment = hungarian(cost);
    LabelMapping mapping;
    mapping.topic_of_cluster.assign(static_cast<size_t>(nc), -1);
    mapping.f1_of_cluster.assign(static_cast<size_t>(nc), 0.0);
    for (int c = 0; c < nc; ++c) {
        int t = assignment.col_of_row[static_cast<size_t>(c)];
        if (t < nt) {
            mapping.topic_of_cluster[static_cast<size_t>(c)] = t;
            mapping.f1_of_cluster[static_cast<size_t>(c)] = 1.0 - cost(c, t);
        }
    }
    return mapping;
}

}  // namespace

ClusterEvalReport cluster_metrics(const std::vector<int>& pred_labels,
                                  const std::vector<std::string>& gold_topics,
                                  double f1_threshold) {
    if (pred_labels.empty()) throw std::invalid_argument("no segments to evaluate");
    if (pred_labels.size() != gold_topics.size()) {
        throw std::invalid_argument("pred/gold length mismatch");
    }
    const long long total = static_cast<long long>(pred_labels.size());

    std::vector<int> clusters(pred_labels);
    std::sort(clusters.begin(), clusters.end());
    clusters.erase(std::unique(clusters.begin(), clusters.end()), clusters.end());
    std::vector<std::string> topics(gold_topics);
    std::sort(topics.begin(), topics.end());
    topics.erase(std::unique(topics.begin(), topics.end()), topics.end());

    std::map<int, int> cluster_index;
    for (size_t i = 0; i < clusters.size(); ++i) cluster_index[clusters[i]] = static_cast<int>(i);
    std::map<std::string, int> topic_index;
    for (size_t i = 0; i < topics.size(); ++i) topic_index[topics[i]] = static_cast<int>(i);

    std::vector<std::vector<long long>> contingency(
        clusters.size(), std::vector<long long>(topics.size(), 0));
    std::vector<long long> cluster_size(clusters.size(), 0);
    std::vector<long long> topic_size(topics.size(), 0);
    std::vector<int> gold_ids(gold_topics.size());
    for (size_t i = 0; i < pred_labels.size(); ++i) {
        int c = cluster_index[pred_labels[i]];
        int t = topic_index[gold_topics[i]];
        gold_ids[i] = t;
        ++contingency[static_cast<size_t>(c)][static_cast<size_t>(t)];
        ++cluster_size[static_cast<size_t>(c)];
        ++topic_size[static_cast<size_t>(t)];
    }

    LabelMapping mapping = map_labels(contingency, cluster_size, topic_size);

    ClusterEvalReport report;
    report.total = total;
    long long covered = 0;
    long long correct = 0;
    for (size_t c = 0; c < clusters.size(); ++c) {
        PerClusterF1 row;
        row.cluster = clusters[c];
        row.f1 = mapping.f1_of_cluster[c];
        row.size = cluster_size[c];
        int t = mapping.topic_of_cluster[c];
        if (t >= 0) row.topic = topics[static_cast<size_t>(t)];
        row.retained = t >= 0 && row.f1 >= f1_threshold;
        if (row.retained) {
            ++report.retained_clusters;
            report.mapping[row.cluster] = row.topic;
            covered += cluster_size[c];
            correct += contingency[c][static_cast<size_t>(t)];
        }
        report.per_cluster.push_back(std::move(row));
    }
    report.coverage_rate = 100.0 * static_cast<double>(covered) / static_cast<double>(total);
    report.accurate_rate = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
    report.accurate_rate_covered =
        covered == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(covered);
    report.nmi_score = nmi(pred_labels, gold_ids);
    return report;
}

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("partition length mismatch");
    if (a.empty()) throw std::invalid_argument("empty partitions");
    const double n = static_cast<double>(a.size());

    std::map<int, long long> ca, cb;
    std::map<std::pair<int, int>, long long> joint;
    for (size_t i = 0; i < a.size(); ++i) {
        ++ca[a[i]];
        ++cb[b[i]];
        ++joint[{a[i], b[i]}];
    }

    double hx = 0.0, hy = 0.0, mi = 0.0;
    for (const auto& [label, count] : ca) {
        double p = static_cast<double>(count) / n;
        hx -= p * std::log(p);
    }
    for (const auto& [label, count] : cb) {
        double p = static_cast<double>(count) / n;
        hy -= p * std::log(p);
    }
    for (const auto& [labels, count] : joint) {
        double pij = static_cast<double>(count) / n;
        double pi = static_cast<double>(ca[labels.first]) / n;
        double pj = static_cast<double>(cb[labels.second]) / n;
        mi += pij * std::log(pij / (pi * pj));
    }

    if (hx + hy == 0.0) return 1.0;  // two single-cluster partitions coincide
    double value = 2.0 * mi / (hx + hy);
    return std::clamp(value, 0.0, 1.0);
}

double e2e_f1(const std::vector<TopicSegmentation>& preds,
              const std::vector<TopicSegmentation>& golds,
              double overlap_threshold) {
    if (preds.size() != golds.size()) throw std::invalid_argument("pred/gold count mismatch");

    std::vector<std::pair<std::string, std::string>> pairs;  // (pred label, gold topic)
    for (size_t d = 0; d < preds.size(); ++d) {
        const auto& pred = preds[d];
        const auto& gold = golds[d];
        if (pred.seg.n != gold.seg.n) {
            throw std::invalid_argument("dialogue length mismatch at index " + std::to_string(d));
        }
        auto pred_spans = pred.seg.segments();
        auto gold_spans = gold.seg.segments();
        if (pred.topics.size() != pred_spans.size() || gold.topics.size() != gold_spans.size()) {
            throw std::invalid_argument("topic list does not match segment count");
        }
        for (size_t p = 0; p < pred_spans.size(); ++p) {
            double best = -1.0;
            size_t best_g = 0;
            for (size_t g = 0; g < gold_spans.size(); ++g) {
                int lo = std::max(pred_spans[p].first, gold_spans[g].first);
                int hi = std::min(pred_spans[p].second, gold_spans[g].second);
                int inter = std::max(0, hi - lo + 1);
                int len_p = pred_spans[p].second - pred_spans[p].first + 1;
                int len_g = gold_spans[g].second - gold_spans[g].first + 1;
                double overlap = 2.0 * inter / static_cast<double>(len_p + len_g);
                if (overlap > best) {
                    best = overlap;
                    best_g = g;
                }
            }
            if (best >= overlap_threshold) {
                pairs.emplace_back(pred.topics[p], gold.topics[best_g]);
            }
        }
    }
    if (pairs.empty()) return 0.0;

    std::set<std::string> cluster_set, topic_set;
    for (const auto& [c, t] : pairs) {
        cluster_set.insert(c);
        topic_set.insert(t);
    }
    std::vector<std::string> clusters(cluster_set.begin(), cluster_set.end());
    std::vector<std::string> topics(topic_set.begin(), topic_set.end());
    std::map<std::string, int> ci, ti;
    for (size_t i = 0; i < clusters.size(); ++i) ci[clusters[i]] = static_cast<int>(i);
    for (size_t i = 0; i < topics.size(); ++i) ti[topics[i]] = static_cast<int>(i);

    std::vector<std::vector<long long>> contingency(
        clusters.size(), std::vector<long long>(topics.size(), 0));
    std::vector<long long> cluster_size(clusters.size(), 0);
    std::vector<long long> topic_size(topics.size(), 0);
    for (const auto& [c, t] : pairs) {
        ++contingency[static_cast<size_t>(ci[c])][static_cast<size_t>(ti[t])];
        ++cluster_size[static_cast<size_t>(ci[c])];
        ++topic_size[static_cast<size_t>(ti[t])];
    }

    LabelMapping mapping = map_labels(contingency, cluster_size, topic_size);
    double sum = std::accumulate(mapping.f1_of_cluster.begin(), mapping.f1_of_cluster.end(), 0.0);
    return sum / static_cast<double>(clusters.size());
}

RsMetrics rs_metrics(const std::vector<RankedContext>& data, int n,
                     const std::vector<int>& ks) {
    if (data.empty()) throw std::invalid_argument("no ranking contexts");
    RsMetrics out;
    for (int k : ks) out.recall_at[k] = 0.0;

    double sum_map = 0.0, sum_mrr = 0.0;
    long long top1_hits = 0;
    for (const auto& ctx : data) {
        if (static_cast<int>(ctx.candidates.size()) != n) {
            throw std::invalid_argument("context '" + ctx.context_id + "' has " +
                                        std::to_string(ctx.candidates.size()) +
                                        " candidates, expected " + std::to_string(n));
        }
        std::vector<size_t> order(ctx.candidates.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) {
            return ctx.candidates[x].score > ctx.candidates[y].score;
        });

        long long relevant = 0;
        for (const auto& c : ctx.candidates) relevant += c.label != 0 ? 1 : 0;
        if (ctx.candidates[order[0]].label != 0) ++top1_hits;
        if (relevant == 0) {
            ++out.contexts_without_relevant;
            continue;
        }
        ++out.contexts_scored;

        long long seen = 0;
        double ap = 0.0;
        double rr = 0.0;
        for (size_t rank = 0; rank < order.size(); ++rank) {
            if (ctx.candidates[order[rank]].label != 0) {
                ++seen;
                ap += static_cast<double>(seen) / static_cast<double>(rank + 1);
                if (rr == 0.0) rr = 1.0 / static_cast<double>(rank + 1);
            }
            for (int k : ks) {
                if (static_cast<int>(rank + 1) == k) {
                    out.recall_at[k] += static_cast<double>(seen) / static_cast<double>(relevant);
                }
            }
        }
        sum_map += ap / static_cast<double>(relevant);
        sum_mrr += rr;
    }

    if (out.contexts_scored > 0) {
        for (auto& [k, v] : out.recall_at) v /= static_cast<double>(out.contexts_scored);
        out.mean_average_precision = sum_map / static_cast<double>(out.contexts_scored);
        out.mean_reciprocal_rank = sum_mrr / static_cast<double>(out.contexts_scored);
    }
    out.precision_at_1 = static_cast<double>(top1_hits) / static_cast<double>(data.size());
    return out;
}

}  // namespace topicseg
