#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "topicseg/embed.hpp"

namespace topicseg {

struct TadamParams {
    int max_segments = 10;   // context slots (padded/truncated)
    int max_tokens = 16;     // tokens per segment and per response
    int hidden_dim = 32;     // token embedding width inside the network
    int map_features = 8;    // feature channels of the word-level match map
    double beta = 0.5;       // word-level vs segment-level weight mix
    int max_seq_len = 350;   // token budget for the joint encoder pass

    void validate() const;
};

struct AttentiveParams {
    Eigen::VectorXd ln_gain, ln_bias;          // layer norm over hidden_dim
    Eigen::MatrixXd ffn_w1, ffn_w2;            // hidden_dim x hidden_dim
    Eigen::VectorXd ffn_b1, ffn_b2;
};

struct GruParams {
    // update z, reset r, candidate n; input and hidden both 2*hidden_dim
    Eigen::MatrixXd wz, wr, wn;  // input weights
    Eigen::MatrixXd uz, ur, un;  // hidden weights
    Eigen::VectorXd bz, br, bn;
};

// All trainable tensors of the matching network.
struct TadamModel {
    TadamParams params;

    // Word-level match map: map_features slices of hidden x hidden. Only
    // the diagonal of each slice participates unless bilinear_full is set;
    // off-diagonal entries stay zero-initialized either way.
    std::vector<Eigen::MatrixXd> word_map_w;
    bool bilinear_full = false;
    Eigen::VectorXd word_map_v;  // map_features

    Eigen::VectorXd pool_w;  // 2*max_tokens
    Eigen::VectorXd pool_b;  // max_segments (per-slot bias)

    AttentiveParams att_seg;   // queries = weighted segments
    AttentiveParams att_resp;  // queries = response

    GruParams gru;

    Eigen::MatrixXd last_w;  // 2d x 2d
    Eigen::VectorXd last_b;  // 2d
    Eigen::VectorXd score_w;  // 4d
    double score_b = 0.0;

    std::uint64_t seed = 0;
};

TadamModel tadam_init(const TadamParams& params, std::uint64_t seed);

// Raw token sequences of one (context, response) pair.
struct MatchInstance {
    std::vector<std::vector<std::string>> segments;
    std::vector<std::string> response;
    int label = 0;  // 1 = correct response
};

// Embedded, padded and masked network input.
struct TadamInput {
    std::vector<Eigen::MatrixXd> context;      // max_segments of (max_tokens x d)
    Eigen::MatrixXd response;                  // max_tokens x d
    std::vector<std::vector<bool>> ctx_mask;   // per segment, per token
    std::vector<bool> seg_mask;                // real (non-pad) segment slots
    std::vector<bool> resp_mask;               // per response token
    int last_segment = 0;                      // index of last real slot
};

// Per-token embeddings for the network. Implementations must preserve
// order and return one vector per token.
class TokenEmbedder {
  public:
    virtual ~TokenEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<Eigen::VectorXd> embed(const std::vector<std::string>& tokens) const = 0;
};

// Table lookup; out-of-vocabulary tokens map to the zero vector.
class TableTokenEmbedder : public TokenEmbedder {
  public:
    explicit TableTokenEmbedder(std::shared_ptr<const VectorTable> table);
    int dim() const override;
    std::vector<Eigen::VectorXd> embed(const std::vector<std::string>& tokens) const override;

  private:
    std::shared_ptr<const VectorTable> table_;
};

// Remote service; one text per token, batched through the encoder client.
class RemoteTokenEmbedder : public TokenEmbedder {
  public:
    explicit RemoteTokenEmbedder(EncoderSpec spec);
    int dim() const override;
    std::vector<Eigen::VectorXd> embed(const std::vector<std::string>& tokens) const override;

  private:
    EncoderSpec spec_;
    mutable int dim_ = 0;
};

// Embeds all segments and the response in one provider pass (sequences
// joined with separator markers, split back by recorded positions), pads
// and truncates to (max_segments, max_tokens) dropping oldest segments
// first and tail tokens second. If the provider width differs from
// hidden_dim a fixed projection drawn from projection_seed is applied.
TadamInput build_input(const MatchInstance& instance, const TokenEmbedder& embedder,
                       const TadamParams& params, std::uint64_t projection_seed = 0);

struct TadamCache;  // backward-pass intermediates, defined in the implementation

// Every intermediate of one forward pass.
struct TadamTrace {
    std::vector<Eigen::MatrixXd> word_match;  // per segment, tokens x tokens
    Eigen::MatrixXd word_match_pool;          // T x 2L
    Eigen::VectorXd word_weights;             // softmax over real slots
    Eigen::MatrixXd seg_means;                // T x d
    Eigen::VectorXd seg_weights;              // cosine to the response mean
    Eigen::VectorXd combined_weights;
    std::vector<Eigen::MatrixXd> weighted_context;
    std::vector<Eigen::MatrixXd> attended_segments;   // per segment, L x d
    std::vector<Eigen::MatrixXd> attended_response;   // per segment, L x d
    Eigen::MatrixXd match_features;           // T x 2d
    Eigen::VectorXd context_state;            // 2d, GRU final state
    Eigen::VectorXd last_match;               // 2d
    Eigen::VectorXd last_match_proj;          // 2d
    double score = 0.0;
    std::vector<bool> pad_segment;            // sentinel slots, flagged

    std::shared_ptr<TadamCache> cache;
};

// --- forward stages -------------------------------------------------------

struct WordLevelOut {
    std::vector<Eigen::MatrixXd> match_map;  // raw map, masking applied in pooling
    Eigen::MatrixXd pooled;
    Eigen::VectorXd weights;
};
WordLevelOut word_level_weights(const TadamModel& model, const TadamInput& input);

struct SegmentLevelOut {
    Eigen::MatrixXd seg_means;
    Eigen::VectorXd weights;
};
SegmentLevelOut segment_level_weights(const TadamInput& input);

struct CombineOut {
    Eigen::VectorXd combined;
    std::vector<Eigen::MatrixXd> weighted_context;
};
CombineOut combine_and_weight(const Eigen::VectorXd& word_weights,
                              const Eigen::VectorXd& seg_weights, double beta,
                              const std::vector<Eigen::MatrixXd>& context);

// Scaled dot-product attention + layer norm + ReLU FFN. Masked keys are
// unreachable; if every key is masked the attended value collapses to a
// zero sentinel before normalization.
Eigen::MatrixXd attentive_module(const AttentiveParams& params, const Eigen::MatrixXd& queries,
                                 const Eigen::MatrixXd& keys, const Eigen::MatrixXd& values,
                                 const std::vector<bool>& key_mask);

struct DualMatchOut {
    std::vector<Eigen::MatrixXd> attended_segments;
    std::vector<Eigen::MatrixXd> attended_response;
    Eigen::MatrixXd match_features;  // T x 2d
};
DualMatchOut dual_match(const TadamModel& model,
                        const std::vector<Eigen::MatrixXd>& weighted_context,
                        const TadamInput& input);

struct AggregateOut {
    Eigen::VectorXd context_state;
    Eigen::VectorXd last_match;
    Eigen::VectorXd last_match_proj;
    double score = 0.0;
};
AggregateOut aggregate_score(const TadamModel& model, const Eigen::MatrixXd& match_features,
                             const Eigen::MatrixXd& attended_last_segment,
                             const Eigen::MatrixXd& attended_last_response,
                             const TadamInput& input);

// Full forward pass; fills the trace (with backward cache) when given.
double tadam_forward(const TadamModel& model, const TadamInput& input,
                     TadamTrace* trace = nullptr);

// -[y ln s + (1-y) ln(1-s)] with the score clamped to [1e-12, 1-1e-12].
double bce_loss(double score, int label);

// --- training -------------------------------------------------------------

struct TadamGradients {
    std::vector<Eigen::MatrixXd> word_map_w;
    Eigen::VectorXd word_map_v;
    Eigen::VectorXd pool_w, pool_b;
    AttentiveParams att_seg, att_resp;
    GruParams gru;
    Eigen::MatrixXd last_w;
    Eigen::VectorXd last_b;
    Eigen::VectorXd score_w;
    double score_b = 0.0;
};

// Analytic gradients of bce_loss for every model tensor. The returned
// trace (when requested) is the forward trace the gradients were computed
// from.
TadamGradients tadam_gradient(const TadamModel& model, const TadamInput& input, int label,
                              double* loss_out = nullptr, TadamTrace* trace_out = nullptr);

// Flat named views over every trainable scalar, in matching order for a
// model and its gradients; used by training loops and gradient checks.
struct TensorRef {
    std::string name;
    double* data;
    Eigen::Index size;
};
std::vector<TensorRef> tadam_tensor_refs(TadamModel& model);
std::vector<TensorRef> tadam_tensor_refs(TadamGradients& grads);

struct TrainCurve {
    std::vector<double> epoch_loss;
};

// Plain stochastic gradient descent over the dataset, shuffled with the
// given seed each epoch. On divergence it warns and returns the curve of
// the epochs completed so far.
TrainCurve demo_train(TadamModel& model, const std::vector<TadamInput>& inputs,
                      const std::vector<int>& labels, int epochs, double learning_rate,
                      std::uint64_t seed);

// JSON + checksum persistence, same scheme as the cluster model file.
void save_tadam(const TadamModel& model, const std::string& path);
TadamModel load_tadam(const std::string& path);

}  // namespace topicseg
