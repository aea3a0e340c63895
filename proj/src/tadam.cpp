#include "topicseg/tadam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "tadam_detail.hpp"

namespace topicseg {

void TadamParams::validate() const {
    if (max_segments < 1 || max_tokens < 1 || hidden_dim < 1 || map_features < 1 ||
        max_seq_len < 1) {
        throw std::invalid_argument("all dimensions must be positive");
    }
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must lie in [0,1]");
}

namespace {

Eigen::MatrixXd fan_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

Eigen::VectorXd fan_uniform_vec(Eigen::Index size, std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(size + 1));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = dist(rng);
    return v;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TadamModel tadam_init(const TadamParams& params, std::uint64_t seed) {
    params.validate();
    const int d = params.hidden_dim;
    const int h = params.map_features;
    const int T = params.max_segments;
    const int L = params.max_tokens;

    std::mt19937_64 rng(seed);
    TadamModel m;
    m.params = params;
    m.seed = seed;

    double slab_limit = std::sqrt(6.0 / static_cast<double>(d + h));
    std::uniform_real_distribution<double> slab(-slab_limit, slab_limit);
    for (int v = 0; v < h; ++v) {
        Eigen::MatrixXd slice = Eigen::MatrixXd::Zero(d, d);
        for (int k = 0; k < d; ++k) slice(k, k) = slab(rng);
        m.word_map_w.push_back(std::move(slice));
    }
    m.word_map_v = fan_uniform_vec(h, rng);
    m.pool_w = fan_uniform_vec(2 * L, rng);
    m.pool_b = Eigen::VectorXd::Zero(T);

    auto init_att = [&](AttentiveParams& a) {
        a.ln_gain = Eigen::VectorXd::Ones(d);
        a.ln_bias = Eigen::VectorXd::Zero(d);
        a.ffn_w1 = fan_uniform(d, d, rng);
        a.ffn_b1 = Eigen::VectorXd::Zero(d);
        a.ffn_w2 = fan_uniform(d, d, rng);
        a.ffn_b2 = Eigen::VectorXd::Zero(d);
    };
    init_att(m.att_seg);
    init_att(m.att_resp);

    const int g = 2 * d;
    m.gru.wz = fan_uniform(g, g, rng);
    m.gru.wr = fan_uniform(g, g, rng);
    m.gru.wn = fan_uniform(g, g, rng);
    m.gru.uz = fan_uniform(g, g, rng);
    m.gru.ur = fan_uniform(g, g, rng);
    m.gru.un = fan_uniform(g, g, rng);
    m.gru.bz = Eigen::VectorXd::Zero(g);
    m.gru.br = Eigen::VectorXd::Zero(g);
    m.gru.bn = Eigen::VectorXd::Zero(g);

    m.last_w = fan_uniform(g, g, rng);
    m.last_b = Eigen::VectorXd::Zero(g);
    m.score_w = fan_uniform_vec(2 * g, rng);
    m.score_b = 0.0;
    return m;
}

// --- token embedders --------------------------------------------------------

TableTokenEmbedder::TableTokenEmbedder(std::shared_ptr<const VectorTable> table)
    : table_(std::move(table)) {
    if (!table_) throw std::invalid_argument("null vector table");
}

int TableTokenEmbedder::dim() const { return table_->dim; }

std::vector<Eigen::VectorXd> TableTokenEmbedder::embed(
    const std::vector<std::string>& tokens) const {
    std::vector<Eigen::VectorXd> out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) {
        const auto* v = table_->find(tok);
        out.push_back(v ? *v : Eigen::VectorXd::Zero(table_->dim));
    }
    return out;
}

RemoteTokenEmbedder::RemoteTokenEmbedder(EncoderSpec spec) : spec_(std::move(spec)) {
    if (spec_.kind != EncoderKind::remote) {
        throw std::invalid_argument("remote embedder needs a remote encoder spec");
    }
}

int RemoteTokenEmbedder::dim() const {
    if (dim_ == 0) {
        auto probe = remote_encode_batch({"."}, spec_);
        dim_ = static_cast<int>(probe.at(0).size());
    }
    return dim_;
}

std::vector<Eigen::VectorXd> RemoteTokenEmbedder::embed(
    const std::vector<std::string>& tokens) const {
    if (tokens.empty()) return {};
    auto out = remote_encode_batch(tokens, spec_);
    dim_ = static_cast<int>(out.at(0).size());
    return out;
}

// --- input assembly ---------------------------------------------------------

TadamInput build_input(const MatchInstance& instance, const TokenEmbedder& embedder,
                       const TadamParams& params, std::uint64_t projection_seed) {
    params.validate();
    const int T = params.max_segments;
    const int L = params.max_tokens;
    const int d = params.hidden_dim;

    std::vector<std::vector<std::string>> segments;
    for (const auto& seg : instance.segments) {
        if (!seg.empty()) segments.push_back(seg);
    }
    if (segments.empty()) throw std::invalid_argument("empty context");
    if (instance.response.empty()) throw std::invalid_argument("empty response");

    // oldest segments go first under truncation
    if (static_cast<int>(segments.size()) > T) {
        segments.erase(segments.begin(),
                       segments.begin() + (static_cast<std::ptrdiff_t>(segments.size()) - T));
    }
    for (auto& seg : segments) {
        if (static_cast<int>(seg.size()) > L) seg.resize(static_cast<size_t>(L));
    }
    std::vector<std::string> response = instance.response;
    if (static_cast<int>(response.size()) > L) response.resize(static_cast<size_t>(L));

    auto total_tokens = [&]() {
        size_t t = response.size() + segments.size();  // separators
        for (const auto& s : segments) t += s.size();
        return t;
    };
    while (total_tokens() > static_cast<size_t>(params.max_seq_len) && segments.size() > 1) {
        segments.erase(segments.begin());
    }
    while (total_tokens() > static_cast<size_t>(params.max_seq_len) &&
           segments.front().size() > 1) {
        segments.front().pop_back();
    }
    while (total_tokens() > static_cast<size_t>(params.max_seq_len) && response.size() > 1) {
        response.pop_back();
    }

    // one provider pass over the joined sequence, split back afterwards
    static const std::string kSep = "[sep]";
    std::vector<std::string> stream;
    std::vector<std::pair<size_t, size_t>> ranges;  // [begin, end) per segment
    for (const auto& seg : segments) {
        size_t begin = stream.size();
        stream.insert(stream.end(), seg.begin(), seg.end());
        ranges.emplace_back(begin, stream.size());
        stream.push_back(kSep);
    }
    size_t resp_begin = stream.size();
    stream.insert(stream.end(), response.begin(), response.end());

    std::vector<Eigen::VectorXd> vecs = embedder.embed(stream);
    if (vecs.size() != stream.size()) {
        throw std::runtime_error("embedder returned " + std::to_string(vecs.size()) +
                                 " vectors for " + std::to_string(stream.size()) + " tokens");
    }

    Eigen::MatrixXd projection;
    const int provider_dim = vecs.empty() ? d : static_cast<int>(vecs[0].size());
    if (provider_dim != d) {
        std::mt19937_64 rng(projection_seed);
        projection = fan_uniform(d, provider_dim, rng);
    }
    auto to_hidden = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        if (static_cast<int>(v.size()) != provider_dim) {
            throw std::runtime_error("embedder returned inconsistent dimensions");
        }
        return projection.size() ? Eigen::VectorXd(projection * v) : v;
    };

    TadamInput input;
    input.context.assign(static_cast<size_t>(T), Eigen::MatrixXd::Zero(L, d));
    input.ctx_mask.assign(static_cast<size_t>(T), std::vector<bool>(static_cast<size_t>(L), false));
    input.seg_mask.assign(static_cast<size_t>(T), false);
    input.response = Eigen::MatrixXd::Zero(L, d);
    input.resp_mask.assign(static_cast<size_t>(L), false);

    for (size_t s = 0; s < segments.size(); ++s) {
        input.seg_mask[s] = true;
        auto [begin, end] = ranges[s];
        for (size_t t = begin; t < end; ++t) {
            Eigen::Index row = static_cast<Eigen::Index>(t - begin);
            input.context[s].row(row) = to_hidden(vecs[t]).transpose();
            input.ctx_mask[s][t - begin] = true;
        }
    }
    for (size_t t = 0; t < response.size(); ++t) {
        input.response.row(static_cast<Eigen::Index>(t)) = to_hidden(vecs[resp_begin + t]).transpose();
        input.resp_mask[t] = true;
    }
    input.last_segment = static_cast<int>(segments.size()) - 1;
    return input;
}

// --- forward stages ---------------------------------------------------------

Eigen::VectorXd masked_mean(const Eigen::MatrixXd& rows, const std::vector<bool>& mask,
                            bool fallback_to_all) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows.cols());
    int count = 0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        if (mask[static_cast<size_t>(i)]) {
            sum += rows.row(i).transpose();
            ++count;
        }
    }
    if (count > 0) return sum / count;
    if (fallback_to_all && rows.rows() > 0) {
        return rows.colwise().mean().transpose();
    }
    return sum;
}

WordLevelOut word_level_weights_impl(const TadamModel& model, const TadamInput& input,
                                     TadamCache* cache) {
    const auto& p = model.params;
    const int T = p.max_segments;
    const int L = p.max_tokens;
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.hidden_dim));
    const double neg_inf = -std::numeric_limits<double>::infinity();

    WordLevelOut out;
    out.match_map.assign(static_cast<size_t>(T), Eigen::MatrixXd::Zero(L, L));
    out.pooled = Eigen::MatrixXd::Zero(T, 2 * L);
    if (cache) {
        cache->tanh_maps.assign(static_cast<size_t>(T), {});
        cache->argmax_over_rows.assign(static_cast<size_t>(T), Eigen::VectorXi::Constant(L, -1));
        cache->argmax_over_cols.assign(static_cast<size_t>(T), Eigen::VectorXi::Constant(L, -1));
    }

    for (int x = 0; x < T; ++x) {
        auto& m = out.match_map[static_cast<size_t>(x)];
        if (!input.seg_mask[static_cast<size_t>(x)]) continue;
        const Eigen::MatrixXd& seg = input.context[static_cast<size_t>(x)];
        for (int v = 0; v < p.map_features; ++v) {
            Eigen::MatrixXd bilinear;
            if (model.bilinear_full) {
                bilinear = seg * model.word_map_w[static_cast<size_t>(v)] * input.response.transpose();
            } else {
                bilinear = seg * model.word_map_w[static_cast<size_t>(v)].diagonal().asDiagonal() *
                           input.response.transpose();
            }
            Eigen::MatrixXd activated = (bilinear * scale).array().tanh().matrix();
            m.noalias() += model.word_map_v[v] * activated;
            if (cache) cache->tanh_maps[static_cast<size_t>(x)].push_back(std::move(activated));
        }

        // max over context tokens (per response token), then over response
        // tokens (per context token); masked positions cannot win
        for (int u = 0; u < L; ++u) {
            double best = neg_inf;
            int arg = -1;
            if (input.resp_mask[static_cast<size_t>(u)]) {
                for (int y = 0; y < L; ++y) {
                    if (!input.ctx_mask[static_cast<size_t>(x)][static_cast<size_t>(y)]) continue;
                    if (m(y, u) > best) {
                        best = m(y, u);
                        arg = y;
                    }
                }
            }
            out.pooled(x, u) = arg >= 0 ? best : 0.0;
            if (cache) cache->argmax_over_rows[static_cast<size_t>(x)][u] = arg;
        }
        for (int y = 0; y < L; ++y) {
            double best = neg_inf;
            int arg = -1;
            if (input.ctx_mask[static_cast<size_t>(x)][static_cast<size_t>(y)]) {
                for (int u = 0; u < L; ++u) {
                    if (!input.resp_mask[static_cast<size_t>(u)]) continue;
                    if (m(y, u) > best) {
                        best = m(y, u);
                        arg = u;
                    }
                }
            }
            out.pooled(x, L + y) = arg >= 0 ? best : 0.0;
            if (cache) cache->argmax_over_cols[static_cast<size_t>(x)][y] = arg;
        }
    }

    // softmax over real slots
    Eigen::VectorXd logits(T);
    double max_logit = neg_inf;
    for (int x = 0; x < T; ++x) {
        if (input.seg_mask[static_cast<size_t>(x)]) {
            logits[x] = out.pooled.row(x).dot(model.pool_w) + model.pool_b[x];
            max_logit = std::max(max_logit, logits[x]);
        } else {
            logits[x] = neg_inf;
        }
    }
    out.weights = Eigen::VectorXd::Zero(T);
    double denom = 0.0;
    for (int x = 0; x < T; ++x) {
        if (input.seg_mask[static_cast<size_t>(x)]) {
            out.weights[x] = std::exp(logits[x] - max_logit);
            denom += out.weights[x];
        }
    }
    out.weights /= denom;
    if (cache) cache->word_logits = logits;
    return out;
}

WordLevelOut word_level_weights(const TadamModel& model, const TadamInput& input) {
    return word_level_weights_impl(model, input, nullptr);
}

SegmentLevelOut segment_level_weights(const TadamInput& input) {
    const int T = static_cast<int>(input.context.size());
    SegmentLevelOut out;
    out.seg_means = Eigen::MatrixXd::Zero(T, input.response.cols());
    out.weights = Eigen::VectorXd::Zero(T);
    Eigen::VectorXd resp_mean = masked_mean(input.response, input.resp_mask, false);
    for (int x = 0; x < T; ++x) {
        if (!input.seg_mask[static_cast<size_t>(x)]) continue;
        Eigen::VectorXd mean = masked_mean(input.context[static_cast<size_t>(x)],
                                           input.ctx_mask[static_cast<size_t>(x)], false);
        out.seg_means.row(x) = mean.transpose();
        out.weights[x] = cosine(mean, resp_mean);
    }
    return out;
}

CombineOut combine_and_weight(const Eigen::VectorXd& word_weights,
                              const Eigen::VectorXd& seg_weights, double beta,
                              const std::vector<Eigen::MatrixXd>& context) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must lie in [0,1]");
    if (word_weights.size() != seg_weights.size() ||
        static_cast<size_t>(word_weights.size()) != context.size()) {
        throw std::invalid_argument("weight/context size mismatch");
    }
    CombineOut out;
    out.combined = beta * word_weights + (1.0 - beta) * seg_weights;
    out.weighted_context.reserve(context.size());
    for (size_t x = 0; x < context.size(); ++x) {
        out.weighted_context.push_back(out.combined[static_cast<Eigen::Index>(x)] * context[x]);
    }
    return out;
}

Eigen::MatrixXd attentive_module_impl(const AttentiveParams& params, const Eigen::MatrixXd& q,
                                      const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                                      const std::vector<bool>& key_mask, AttCache* cache) {
    const Eigen::Index nq = q.rows();
    const Eigen::Index d = q.cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    bool any_key = false;
    for (bool b : key_mask) any_key = any_key || b;

    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(nq, k.rows());
    Eigen::MatrixXd v_att;
    if (!any_key) {
        // attention collapses onto a zero sentinel key
        v_att = Eigen::MatrixXd::Zero(nq, d);
    } else {
        Eigen::MatrixXd logits = q * k.transpose() * scale;
        for (Eigen::Index i = 0; i < nq; ++i) {
            double max_logit = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < k.rows(); ++j) {
                if (key_mask[static_cast<size_t>(j)]) max_logit = std::max(max_logit, logits(i, j));
            }
            double denom = 0.0;
            for (Eigen::Index j = 0; j < k.rows(); ++j) {
                if (key_mask[static_cast<size_t>(j)]) {
                    probs(i, j) = std::exp(logits(i, j) - max_logit);
                    denom += probs(i, j);
                }
            }
            probs.row(i) /= denom;
        }
        v_att = probs * v;
    }

    // layer norm per row, no residual
    Eigen::MatrixXd normed(nq, d);
    Eigen::VectorXd inv_std(nq);
    for (Eigen::Index i = 0; i < nq; ++i) {
        double mean = v_att.row(i).mean();
        double var = (v_att.row(i).array() - mean).square().mean();
        inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
        normed.row(i) = (v_att.row(i).array() - mean) * inv_std[i];
    }
    Eigen::MatrixXd ffn_in = (normed.array().rowwise() * params.ln_gain.transpose().array())
                                 .matrix();
    ffn_in.rowwise() += params.ln_bias.transpose();

    Eigen::MatrixXd ffn_pre = ffn_in * params.ffn_w1.transpose();
    ffn_pre.rowwise() += params.ffn_b1.transpose();
    Eigen::MatrixXd hidden = ffn_pre.cwiseMax(0.0);
    Eigen::MatrixXd out = hidden * params.ffn_w2.transpose();
    out.rowwise() += params.ffn_b2.transpose();

    if (cache) {
        cache->q = q;
        cache->k = k;
        cache->v = v;
        cache->probs = std::move(probs);
        cache->sentinel = !any_key;
        cache->v_att = std::move(v_att);
        cache->normed = std::move(normed);
        cache->inv_std = std::move(inv_std);
        cache->ffn_in = std::move(ffn_in);
        cache->ffn_pre = std::move(ffn_pre);
        cache->ffn_hidden = std::move(hidden);
    }
    return out;
}

Eigen::MatrixXd attentive_module(const AttentiveParams& params, const Eigen::MatrixXd& queries,
                                 const Eigen::MatrixXd& keys, const Eigen::MatrixXd& values,
                                 const std::vector<bool>& key_mask) {
    return attentive_module_impl(params, queries, keys, values, key_mask, nullptr);
}

DualMatchOut dual_match_impl(const TadamModel& model,
                             const std::vector<Eigen::MatrixXd>& weighted_context,
                             const TadamInput& input, TadamCache* cache) {
    const int T = model.params.max_segments;
    const int d = model.params.hidden_dim;
    DualMatchOut out;
    out.attended_segments.reserve(static_cast<size_t>(T));
    out.attended_response.reserve(static_cast<size_t>(T));
    out.match_features = Eigen::MatrixXd::Zero(T, 2 * d);
    if (cache) {
        cache->att_seg.resize(static_cast<size_t>(T));
        cache->att_resp.resize(static_cast<size_t>(T));
        cache->ctx_valid_count.assign(static_cast<size_t>(T), 0);
        cache->resp_valid_count = 0;
        for (bool b : input.resp_mask) cache->resp_valid_count += b ? 1 : 0;
    }

    for (int x = 0; x < T; ++x) {
        const auto& seg = weighted_context[static_cast<size_t>(x)];
        const auto& seg_mask = input.ctx_mask[static_cast<size_t>(x)];
        Eigen::MatrixXd s_att = attentive_module_impl(
            model.att_seg, seg, input.response, input.response, input.resp_mask,
            cache ? &cache->att_seg[static_cast<size_t>(x)] : nullptr);
        Eigen::MatrixXd r_att = attentive_module_impl(
            model.att_resp, input.response, seg, seg, seg_mask,
            cache ? &cache->att_resp[static_cast<size_t>(x)] : nullptr);

        if (cache) {
            int count = 0;
            for (bool b : seg_mask) count += b ? 1 : 0;
            cache->ctx_valid_count[static_cast<size_t>(x)] = count;
        }
        out.match_features.row(x).head(d) = masked_mean(s_att, seg_mask, true).transpose();
        out.match_features.row(x).tail(d) = masked_mean(r_att, input.resp_mask, true).transpose();
        out.attended_segments.push_back(std::move(s_att));
        out.attended_response.push_back(std::move(r_att));
    }
    return out;
}

DualMatchOut dual_match(const TadamModel& model,
                        const std::vector<Eigen::MatrixXd>& weighted_context,
                        const TadamInput& input) {
    return dual_match_impl(model, weighted_context, input, nullptr);
}

AggregateOut aggregate_score_impl(const TadamModel& model, const Eigen::MatrixXd& match_features,
                                  const Eigen::MatrixXd& attended_last_segment,
                                  const Eigen::MatrixXd& attended_last_response,
                                  const TadamInput& input, TadamCache* cache) {
    const int d = model.params.hidden_dim;
    const int g = 2 * d;

    Eigen::VectorXd h = Eigen::VectorXd::Zero(g);
    for (int x = 0; x < model.params.max_segments; ++x) {
        if (!input.seg_mask[static_cast<size_t>(x)]) continue;  // pad rows skipped
        Eigen::VectorXd xt = match_features.row(x).transpose();
        Eigen::VectorXd z =
            (model.gru.wz * xt + model.gru.uz * h + model.gru.bz).unaryExpr(&sigmoid);
        Eigen::VectorXd r =
            (model.gru.wr * xt + model.gru.ur * h + model.gru.br).unaryExpr(&sigmoid);
        Eigen::VectorXd n =
            (model.gru.wn * xt + r.cwiseProduct(model.gru.un * h) + model.gru.bn)
                .array()
                .tanh()
                .matrix();
        Eigen::VectorXd next = (Eigen::VectorXd::Ones(g) - z).cwiseProduct(n) + z.cwiseProduct(h);
        if (cache) {
            cache->gru_steps.push_back(x);
            cache->gru_x.push_back(xt);
            cache->gru_h_prev.push_back(h);
            cache->gru_z.push_back(z);
            cache->gru_r.push_back(r);
            cache->gru_n.push_back(n);
        }
        h = std::move(next);
    }

    AggregateOut out;
    out.context_state = h;
    const int last = input.last_segment;
    out.last_match = Eigen::VectorXd(g);
    out.last_match.head(d) =
        masked_mean(attended_last_segment, input.ctx_mask[static_cast<size_t>(last)], true);
    out.last_match.tail(d) = masked_mean(attended_last_response, input.resp_mask, true);
    out.last_match_proj = model.last_w * out.last_match + model.last_b;

    Eigen::VectorXd concat(2 * g);
    concat.head(g) = out.context_state;
    concat.tail(g) = out.last_match_proj;
    double logit = model.score_w.dot(concat) + model.score_b;
    out.score = sigmoid(logit);
    if (cache) {
        cache->concat = std::move(concat);
        cache->logit = logit;
    }
    return out;
}

AggregateOut aggregate_score(const TadamModel& model, const Eigen::MatrixXd& match_features,
                             const Eigen::MatrixXd& attended_last_segment,
                             const Eigen::MatrixXd& attended_last_response,
                             const TadamInput& input) {
    return aggregate_score_impl(model, match_features, attended_last_segment,
                                attended_last_response, input, nullptr);
}

double tadam_forward(const TadamModel& model, const TadamInput& input, TadamTrace* trace) {
    const auto& p = model.params;
    if (static_cast<int>(input.context.size()) != p.max_segments ||
        input.response.rows() != p.max_tokens || input.response.cols() != p.hidden_dim) {
        throw std::invalid_argument("input shape does not match model parameters");
    }
    bool any_segment = false;
    for (bool b : input.seg_mask) any_segment = any_segment || b;
    if (!any_segment) throw std::invalid_argument("input has no real segment");

    std::shared_ptr<TadamCache> cache;
    if (trace) cache = std::make_shared<TadamCache>();

    WordLevelOut wl = word_level_weights_impl(model, input, cache.get());
    SegmentLevelOut sl = segment_level_weights(input);
    CombineOut cb = combine_and_weight(wl.weights, sl.weights, p.beta, input.context);
    DualMatchOut dm = dual_match_impl(model, cb.weighted_context, input, cache.get());
    const size_t last = static_cast<size_t>(input.last_segment);
    AggregateOut ag = aggregate_score_impl(model, dm.match_features, dm.attended_segments[last],
                                           dm.attended_response[last], input, cache.get());

    if (trace) {
        trace->word_match = std::move(wl.match_map);
        trace->word_match_pool = std::move(wl.pooled);
        trace->word_weights = std::move(wl.weights);
        trace->seg_means = std::move(sl.seg_means);
        trace->seg_weights = std::move(sl.weights);
        trace->combined_weights = std::move(cb.combined);
        trace->weighted_context = std::move(cb.weighted_context);
        trace->attended_segments = std::move(dm.attended_segments);
        trace->attended_response = std::move(dm.attended_response);
        trace->match_features = std::move(dm.match_features);
        trace->context_state = ag.context_state;
        trace->last_match = ag.last_match;
        trace->last_match_proj = ag.last_match_proj;
        trace->score = ag.score;
        trace->pad_segment.clear();
        for (bool b : input.seg_mask) trace->pad_segment.push_back(!b);
        trace->cache = std::move(cache);
    }
    return ag.score;
}

double bce_loss(double score, int label) {
    double s = std::clamp(score, 1e-12, 1.0 - 1e-12);
    return label != 0 ? -std::log(s) : -std::log(1.0 - s);
}

}  // namespace topicseg
