#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

#include "topicseg/segment.hpp"

namespace topicseg {

struct Assignment {
    std::vector<int> col_of_row;  // col_of_row[i] = column assigned to row i
    double total_cost = 0.0;
};

// Optimal solution of the square linear assignment problem (minimization).
// O(n^3); entries must be finite.
Assignment hungarian(const Eigen::MatrixXd& cost);

struct PerClusterF1 {
    int cluster = 0;
    std::string topic;  // mapped gold topic; empty when unmapped
    double f1 = 0.0;
    long long size = 0;
    bool retained = false;
};

struct ClusterEvalReport {
    std::map<int, std::string> mapping;      // retained cluster -> topic
    std::vector<PerClusterF1> per_cluster;   // every cluster, mapped or not
    int retained_clusters = 0;               // N_c
    double coverage_rate = 0.0;              // C_rate, percent of all segments
    double accurate_rate = 0.0;              // A_rate, percent of all segments
    double accurate_rate_covered = 0.0;      // accuracy within covered segments
    double nmi_score = 0.0;
    long long total = 0;
};

// Maps nominal cluster ids to gold topics with the Hungarian algorithm
// (maximizing summed per-pair F1), drops clusters whose mapped F1 falls
// below the threshold, and reports coverage/accuracy over ALL evaluated
// segments. Numbers are comparable across runs only under that
// all-segments denominator; accurate_rate_covered carries the
// covered-segments reading alongside.
ClusterEvalReport cluster_metrics(const std::vector<int>& pred_labels,
                                  const std::vector<std::string>& gold_topics,
                                  double f1_threshold = 0.25);

// Normalized mutual information 2*I(X;Y) / (H(X)+H(Y)) with natural logs.
// Two zero-entropy partitions are identical by construction -> 1.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

// A segmentation whose segments carry labels: nominal cluster ids on the
// predicted side, topic names on the gold side.
struct TopicSegmentation {
    Segmentation seg;
    std::vector<std::string> topics;  // one per segment
};

// End-to-end score of segmentation + clustering: predicted segments match
// the gold segment with the largest utterance-overlap F1, matches under
// the threshold are dropped, predicted labels are Hungarian-mapped to
// topics over the surviving pairs, and the mean per-cluster F1 on those
// pairs is returned.
double e2e_f1(const std::vector<TopicSegmentation>& preds,
              const std::vector<TopicSegmentation>& golds,
              double overlap_threshold = 0.5);

struct RankedCandidate {
    std::string id;
    double score = 0.0;
    int label = 0;  // 1 = relevant
};

struct RankedContext {
    std::string context_id;
    std::vector<RankedCandidate> candidates;
};

struct RsMetrics {
    std::map<int, double> recall_at;  // R_n@k per requested k
    double mean_average_precision = 0.0;
    double mean_reciprocal_rank = 0.0;
    double precision_at_1 = 0.0;
    int contexts_scored = 0;
    int contexts_without_relevant = 0;
};

// Ranking metrics over contexts of exactly n candidates each; ties in
// score keep the input candidate order. Contexts with no relevant
// candidate are excluded from recall/MAP/MRR and counted; precision@1 is
// over all contexts.
RsMetrics rs_metrics(const std::vector<RankedContext>& data, int n,
                     const std::vector<int>& ks);

}  // namespace topicseg
