#pragma once

#include <Eigen/Core>
#include <vector>

#include "topicseg/tadam.hpp"

namespace topicseg {

// One attentive-module application.
struct AttCache {
    Eigen::MatrixXd q, k, v;
    Eigen::MatrixXd probs;     // zero rows where keys are all masked
    bool sentinel = false;     // every key masked
    Eigen::MatrixXd v_att;
    Eigen::MatrixXd normed;    // per-row standardized v_att
    Eigen::VectorXd inv_std;
    Eigen::MatrixXd ffn_in;    // layer-norm output
    Eigen::MatrixXd ffn_pre;   // hidden pre-activation
    Eigen::MatrixXd ffn_hidden;
};

struct TadamCache {
    // word-level map
    std::vector<std::vector<Eigen::MatrixXd>> tanh_maps;  // [segment][feature]
    std::vector<Eigen::VectorXi> argmax_over_rows;  // per resp token: best ctx token (-1 none)
    std::vector<Eigen::VectorXi> argmax_over_cols;  // per ctx token: best resp token (-1 none)
    Eigen::VectorXd word_logits;  // finite entries for real slots only

    std::vector<AttCache> att_seg;   // Q = weighted segment, K = V = response
    std::vector<AttCache> att_resp;  // Q = response, K = V = weighted segment

    std::vector<int> ctx_valid_count;
    int resp_valid_count = 0;

    std::vector<int> gru_steps;  // slot order fed to the GRU
    std::vector<Eigen::VectorXd> gru_x, gru_h_prev, gru_r, gru_z, gru_n;

    Eigen::VectorXd concat;  // [context_state; last_match_proj]
    double logit = 0.0;
};

WordLevelOut word_level_weights_impl(const TadamModel& model, const TadamInput& input,
                                     TadamCache* cache);
Eigen::MatrixXd attentive_module_impl(const AttentiveParams& params, const Eigen::MatrixXd& q,
                                      const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                                      const std::vector<bool>& key_mask, AttCache* cache);
DualMatchOut dual_match_impl(const TadamModel& model,
                             const std::vector<Eigen::MatrixXd>& weighted_context,
                             const TadamInput& input, TadamCache* cache);
AggregateOut aggregate_score_impl(const TadamModel& model, const Eigen::MatrixXd& match_features,
                                  const Eigen::MatrixXd& attended_last_segment,
                                  const Eigen::MatrixXd& attended_last_response,
                                  const TadamInput& input, TadamCache* cache);

// Mean over masked-in rows; zero vector (or the plain mean when
// fallback_to_all) when nothing is masked in.
Eigen::VectorXd masked_mean(const Eigen::MatrixXd& rows, const std::vector<bool>& mask,
                            bool fallback_to_all);

constexpr double kLayerNormEps = 1e-5;

}  // namespace topicseg
