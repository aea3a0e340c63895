#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "tadam_detail.hpp"
#include "topicseg/log.hpp"

namespace topicseg {

namespace {

TadamGradients zero_gradients(const TadamModel& m) {
    TadamGradients g;
    for (const auto& slice : m.word_map_w) {
        g.word_map_w.push_back(Eigen::MatrixXd::Zero(slice.rows(), slice.cols()));
    }
    g.word_map_v = Eigen::VectorXd::Zero(m.word_map_v.size());
    g.pool_w = Eigen::VectorXd::Zero(m.pool_w.size());
    g.pool_b = Eigen::VectorXd::Zero(m.pool_b.size());
    auto zero_att = [](const AttentiveParams& a) {
        AttentiveParams z;
        z.ln_gain = Eigen::VectorXd::Zero(a.ln_gain.size());
        z.ln_bias = Eigen::VectorXd::Zero(a.ln_bias.size());
        z.ffn_w1 = Eigen::MatrixXd::Zero(a.ffn_w1.rows(), a.ffn_w1.cols());
        z.ffn_b1 = Eigen::VectorXd::Zero(a.ffn_b1.size());
        z.ffn_w2 = Eigen::MatrixXd::Zero(a.ffn_w2.rows(), a.ffn_w2.cols());
        z.ffn_b2 = Eigen::VectorXd::Zero(a.ffn_b2.size());
        return z;
    };
    g.att_seg = zero_att(m.att_seg);
    g.att_resp = zero_att(m.att_resp);
    auto zmat = [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd::Zero(x.rows(), x.cols()); };
    auto zvec = [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Zero(x.size()); };
    g.gru.wz = zmat(m.gru.wz);
    g.gru.wr = zmat(m.gru.wr);
    g.gru.wn = zmat(m.gru.wn);
    g.gru.uz = zmat(m.gru.uz);
    g.gru.ur = zmat(m.gru.ur);
    g.gru.un = zmat(m.gru.un);
    g.gru.bz = zvec(m.gru.bz);
    g.gru.br = zvec(m.gru.br);
    g.gru.bn = zvec(m.gru.bn);
    g.last_w = zmat(m.last_w);
    g.last_b = zvec(m.last_b);
    g.score_w = zvec(m.score_w);
    g.score_b = 0.0;
    return g;
}

// Distributes a mean-vector gradient back over the rows that formed the
// mean (all rows for the sentinel fallback).
Eigen::MatrixXd mean_backward(const Eigen::VectorXd& dMean, Eigen::Index rows,
                              const std::vector<bool>& mask, int valid_count) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, dMean.size());
    if (valid_count > 0) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            if (mask[static_cast<size_t>(i)]) out.row(i) = dMean.transpose() / valid_count;
        }
    } else {
        for (Eigen::Index i = 0; i < rows; ++i) {
            out.row(i) = dMean.transpose() / static_cast<double>(rows);
        }
    }
    return out;
}

// Backward of one attentive-module application. Accumulates parameter
// gradients and returns input gradients through the out-parameters.
void attentive_backward(const AttentiveParams& p, const AttCache& c, const Eigen::MatrixXd& dOut,
                        AttentiveParams& g, Eigen::MatrixXd* dQ, Eigen::MatrixXd* dK,
                        Eigen::MatrixXd* dV) {
    g.ffn_w2 += dOut.transpose() * c.ffn_hidden;
    g.ffn_b2 += dOut.colwise().sum().transpose();
    Eigen::MatrixXd dHidden = dOut * p.ffn_w2;
    Eigen::MatrixXd dPre =
        dHidden.cwiseProduct((c.ffn_pre.array() > 0.0).cast<double>().matrix());
    g.ffn_w1 += dPre.transpose() * c.ffn_in;
    g.ffn_b1 += dPre.colwise().sum().transpose();
    Eigen::MatrixXd dLnOut = dPre * p.ffn_w1;

    g.ln_bias += dLnOut.colwise().sum().transpose();
    g.ln_gain += dLnOut.cwiseProduct(c.normed).colwise().sum().transpose();
    Eigen::MatrixXd dNormed =
        (dLnOut.array().rowwise() * p.ln_gain.transpose().array()).matrix();

    const Eigen::Index nq = dNormed.rows();
    Eigen::MatrixXd dVatt(nq, dNormed.cols());
    for (Eigen::Index i = 0; i < nq; ++i) {
        double m1 = dNormed.row(i).mean();
        double m2 = dNormed.row(i).cwiseProduct(c.normed.row(i)).mean();
        dVatt.row(i) =
            (c.inv_std[i] * (dNormed.row(i).array() - m1 - c.normed.row(i).array() * m2))
                .matrix();
    }

    if (dQ) dQ->setZero(c.q.rows(), c.q.cols());
    if (dK) dK->setZero(c.k.rows(), c.k.cols());
    if (dV) dV->setZero(c.v.rows(), c.v.cols());
    if (c.sentinel) return;  // zero key blocks any input gradient

    Eigen::MatrixXd dProbs = dVatt * c.v.transpose();
    if (dV) *dV = c.probs.transpose() * dVatt;
    Eigen::MatrixXd dLogits(c.probs.rows(), c.probs.cols());
    for (Eigen::Index i = 0; i < c.probs.rows(); ++i) {
        double dot = dProbs.row(i).cwiseProduct(c.probs.row(i)).sum();
        dLogits.row(i) =
            (c.probs.row(i).array() * (dProbs.row(i).array() - dot)).matrix();
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.q.cols()));
    if (dQ) *dQ = dLogits * c.k * scale;
    if (dK) *dK = dLogits.transpose() * c.q * scale;
}

}  // namespace

TadamGradients tadam_gradient(const TadamModel& model, const TadamInput& input, int label,
                              double* loss_out, TadamTrace* trace_out) {
    TadamTrace trace;
    double score = tadam_forward(model, input, &trace);
    if (loss_out) *loss_out = bce_loss(score, label);
    const TadamCache& c = *trace.cache;
    const auto& p = model.params;
    const int T = p.max_segments;
    const int L = p.max_tokens;
    const int d = p.hidden_dim;
    const int g2 = 2 * d;

    TadamGradients g = zero_gradients(model);

    // sigmoid + BCE; in the clamp region the loss is flat
    double dlogit = 0.0;
    if (score > 1e-12 && score < 1.0 - 1e-12) dlogit = score - static_cast<double>(label);

    g.score_b = dlogit;
    g.score_w = dlogit * c.concat;
    Eigen::VectorXd dConcat = dlogit * model.score_w;
    Eigen::VectorXd dState = dConcat.head(g2);
    Eigen::VectorXd dLastProj = dConcat.tail(g2);

    g.last_w = dLastProj * trace.last_match.transpose();
    g.last_b = dLastProj;
    Eigen::VectorXd dLastMatch = model.last_w.transpose() * dLastProj;

    // GRU backward, newest step first
    Eigen::MatrixXd dFeatures = Eigen::MatrixXd::Zero(T, g2);
    Eigen::VectorXd dh = dState;
    for (size_t t = c.gru_steps.size(); t-- > 0;) {
        const Eigen::VectorXd& x = c.gru_x[t];
        const Eigen::VectorXd& h_prev = c.gru_h_prev[t];
        const Eigen::VectorXd& z = c.gru_z[t];
        const Eigen::VectorXd& r = c.gru_r[t];
        const Eigen::VectorXd& n = c.gru_n[t];

        Eigen::VectorXd dz = dh.cwiseProduct(h_prev - n);
        Eigen::VectorXd dn = dh.cwiseProduct(Eigen::VectorXd::Ones(g2) - z);
        Eigen::VectorXd dh_prev = dh.cwiseProduct(z);

        Eigen::VectorXd dan = dn.cwiseProduct(
            (Eigen::VectorXd::Ones(g2) - n.cwiseProduct(n)));
        g.gru.wn += dan * x.transpose();
        g.gru.bn += dan;
        Eigen::VectorXd unh = model.gru.un * h_prev;
        Eigen::VectorXd dr = dan.cwiseProduct(unh);
        Eigen::VectorXd dUnh = dan.cwiseProduct(r);
        g.gru.un += dUnh * h_prev.transpose();
        dh_prev += model.gru.un.transpose() * dUnh;

        Eigen::VectorXd daz =
            dz.cwiseProduct(z).cwiseProduct(Eigen::VectorXd::Ones(g2) - z);
        g.gru.wz += daz * x.transpose();
        g.gru.uz += daz * h_prev.transpose();
        g.gru.bz += daz;
        dh_prev += model.gru.uz.transpose() * daz;

        Eigen::VectorXd dar =
            dr.cwiseProduct(r).cwiseProduct(Eigen::VectorXd::Ones(g2) - r);
        g.gru.wr += dar * x.transpose();
        g.gru.ur += dar * h_prev.transpose();
        g.gru.br += dar;
        dh_prev += model.gru.ur.transpose() * dar;

        Eigen::VectorXd dx = model.gru.wz.transpose() * daz + model.gru.wr.transpose() * dar +
                             model.gru.wn.transpose() * dan;
        dFeatures.row(c.gru_steps[t]) += dx.transpose();
        dh = std::move(dh_prev);
    }

    // match features are [masked mean of attended segment, masked mean of
    // attended response]; the last-match path shares those exact means
    const int last = input.last_segment;
    std::vector<Eigen::MatrixXd> dAttSeg(static_cast<size_t>(T)), dAttResp(static_cast<size_t>(T));
    for (int x = 0; x < T; ++x) {
        Eigen::VectorXd dMeanS = dFeatures.row(x).head(d).transpose();
        Eigen::VectorXd dMeanR = dFeatures.row(x).tail(d).transpose();
        if (x == last) {
            dMeanS += dLastMatch.head(d);
            dMeanR += dLastMatch.tail(d);
        }
        dAttSeg[static_cast<size_t>(x)] =
            mean_backward(dMeanS, L, input.ctx_mask[static_cast<size_t>(x)],
                          c.ctx_valid_count[static_cast<size_t>(x)]);
        dAttResp[static_cast<size_t>(x)] =
            mean_backward(dMeanR, L, input.resp_mask, c.resp_valid_count);
    }

    // dual attention backward; response-side input gradients have no
    // trainable tensor upstream and are dropped
    Eigen::VectorXd dCombined = Eigen::VectorXd::Zero(T);
    for (int x = 0; x < T; ++x) {
        Eigen::MatrixXd dWeighted = Eigen::MatrixXd::Zero(L, d);
        Eigen::MatrixXd dQ, dK, dV;
        attentive_backward(model.att_seg, c.att_seg[static_cast<size_t>(x)],
                           dAttSeg[static_cast<size_t>(x)], g.att_seg, &dQ, nullptr, nullptr);
        dWeighted += dQ;
        attentive_backward(model.att_resp, c.att_resp[static_cast<size_t>(x)],
                           dAttResp[static_cast<size_t>(x)], g.att_resp, nullptr, &dK, &dV);
        dWeighted += dK + dV;
        dCombined[x] = dWeighted.cwiseProduct(input.context[static_cast<size_t>(x)]).sum();
    }

    // s = beta * w_w + (1 - beta) * w_s; only the word-level branch reaches
    // trainable tensors
    Eigen::VectorXd dWordW = p.beta * dCombined;

    // softmax over real slots
    double dot = 0.0;
    for (int x = 0; x < T; ++x) {
        if (input.seg_mask[static_cast<size_t>(x)]) dot += dWordW[x] * trace.word_weights[x];
    }
    Eigen::MatrixXd dPooled = Eigen::MatrixXd::Zero(T, 2 * L);
    for (int x = 0; x < T; ++x) {
        if (!input.seg_mask[static_cast<size_t>(x)]) continue;
        double dlog = trace.word_weights[x] * (dWordW[x] - dot);
        g.pool_b[x] += dlog;
        g.pool_w += dlog * trace.word_match_pool.row(x).transpose();
        dPooled.row(x) = dlog * model.pool_w.transpose();
    }

    // max-pool backward via cached argmax positions
    std::vector<Eigen::MatrixXd> dMap(static_cast<size_t>(T));
    for (int x = 0; x < T; ++x) {
        dMap[static_cast<size_t>(x)] = Eigen::MatrixXd::Zero(L, L);
        if (!input.seg_mask[static_cast<size_t>(x)]) continue;
        for (int u = 0; u < L; ++u) {
            int arg = c.argmax_over_rows[static_cast<size_t>(x)][u];
            if (arg >= 0) dMap[static_cast<size_t>(x)](arg, u) += dPooled(x, u);
        }
        for (int y = 0; y < L; ++y) {
            int arg = c.argmax_over_cols[static_cast<size_t>(x)][y];
            if (arg >= 0) dMap[static_cast<size_t>(x)](y, arg) += dPooled(x, L + y);
        }
    }

    // word-level match map backward
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (int x = 0; x < T; ++x) {
        if (!input.seg_mask[static_cast<size_t>(x)]) continue;
        const Eigen::MatrixXd& seg = input.context[static_cast<size_t>(x)];
        for (int v = 0; v < p.map_features; ++v) {
            const Eigen::MatrixXd& tv = c.tanh_maps[static_cast<size_t>(x)][static_cast<size_t>(v)];
            g.word_map_v[v] += dMap[static_cast<size_t>(x)].cwiseProduct(tv).sum();
            Eigen::MatrixXd dBilinear =
                (model.word_map_v[v] * dMap[static_cast<size_t>(x)])
                    .cwiseProduct((1.0 - tv.array().square()).matrix()) *
                scale;
            if (model.bilinear_full) {
                g.word_map_w[static_cast<size_t>(v)] +=
                    seg.transpose() * dBilinear * input.response;
            } else {
                Eigen::MatrixXd left = seg.transpose() * dBilinear;  // d x L
                g.word_map_w[static_cast<size_t>(v)].diagonal() +=
                    left.cwiseProduct(input.response.transpose()).rowwise().sum();
            }
        }
    }

    auto refs = tadam_tensor_refs(g);
    for (const auto& ref : refs) {
        for (Eigen::Index i = 0; i < ref.size; ++i) {
            if (!std::isfinite(ref.data[i])) {
                throw std::runtime_error("non-finite gradient in tensor '" + ref.name + "'");
            }
        }
    }

    if (trace_out) *trace_out = std::move(trace);
    return g;
}

std::vector<TensorRef> tadam_tensor_refs(TadamModel& m) {
    std::vector<TensorRef> refs;
    for (size_t v = 0; v < m.word_map_w.size(); ++v) {
        refs.push_back({"word_map_w[" + std::to_string(v) + "]", m.word_map_w[v].data(),
                        m.word_map_w[v].size()});
    }
    refs.push_back({"word_map_v", m.word_map_v.data(), m.word_map_v.size()});
    refs.push_back({"pool_w", m.pool_w.data(), m.pool_w.size()});
    refs.push_back({"pool_b", m.pool_b.data(), m.pool_b.size()});
    auto att = [&](const std::string& prefix, AttentiveParams& a) {
        refs.push_back({prefix + ".ln_gain", a.ln_gain.data(), a.ln_gain.size()});
        refs.push_back({prefix + ".ln_bias", a.ln_bias.data(), a.ln_bias.size()});
        refs.push_back({prefix + ".ffn_w1", a.ffn_w1.data(), a.ffn_w1.size()});
        refs.push_back({prefix + ".ffn_b1", a.ffn_b1.data(), a.ffn_b1.size()});
        refs.push_back({prefix + ".ffn_w2", a.ffn_w2.data(), a.ffn_w2.size()});
        refs.push_back({prefix + ".ffn_b2", a.ffn_b2.data(), a.ffn_b2.size()});
    };
    att("att_seg", m.att_seg);
    att("att_resp", m.att_resp);
    refs.push_back({"gru.wz", m.gru.wz.data(), m.gru.wz.size()});
    refs.push_back({"gru.wr", m.gru.wr.data(), m.gru.wr.size()});
    refs.push_back({"gru.wn", m.gru.wn.data(), m.gru.wn.size()});
    refs.push_back({"gru.uz", m.gru.uz.data(), m.gru.uz.size()});
    refs.push_back({"gru.ur", m.gru.ur.data(), m.gru.ur.size()});
    refs.push_back({"gru.un", m.gru.un.data(), m.gru.un.size()});
    refs.push_back({"gru.bz", m.gru.bz.data(), m.gru.bz.size()});
    refs.push_back({"gru.br", m.gru.br.data(), m.gru.br.size()});
    refs.push_back({"gru.bn", m.gru.bn.data(), m.gru.bn.size()});
    refs.push_back({"last_w", m.last_w.data(), m.last_w.size()});
    refs.push_back({"last_b", m.last_b.data(), m.last_b.size()});
    refs.push_back({"score_w", m.score_w.data(), m.score_w.size()});
    refs.push_back({"score_b", &m.score_b, 1});
    return refs;
}

std::vector<TensorRef> tadam_tensor_refs(TadamGradients& g) {
    std::vector<TensorRef> refs;
    for (size_t v = 0; v < g.word_map_w.size(); ++v) {
        refs.push_back({"word_map_w[" + std::to_string(v) + "]", g.word_map_w[v].data(),
                        g.word_map_w[v].size()});
    }
    refs.push_back({"word_map_v", g.word_map_v.data(), g.word_map_v.size()});
    refs.push_back({"pool_w", g.pool_w.data(), g.pool_w.size()});
    refs.push_back({"pool_b", g.pool_b.data(), g.pool_b.size()});
    auto att = [&](const std::string& prefix, AttentiveParams& a) {
        refs.push_back({prefix + ".ln_gain", a.ln_gain.data(), a.ln_gain.size()});
        refs.push_back({prefix + ".ln_bias", a.ln_bias.data(), a.ln_bias.size()});
        refs.push_back({prefix + ".ffn_w1", a.ffn_w1.data(), a.ffn_w1.size()});
        refs.push_back({prefix + ".ffn_b1", a.ffn_b1.data(), a.ffn_b1.size()});
        refs.push_back({prefix + ".ffn_w2", a.ffn_w2.data(), a.ffn_w2.size()});
        refs.push_back({prefix + ".ffn_b2", a.ffn_b2.data(), a.ffn_b2.size()});
    };
    att("att_seg", g.att_seg);
    att("att_resp", g.att_resp);
    refs.push_back({"gru.wz", g.gru.wz.data(), g.gru.wz.size()});
    refs.push_back({"gru.wr", g.gru.wr.data(), g.gru.wr.size()});
    refs.push_back({"gru.wn", g.gru.wn.data(), g.gru.wn.size()});
    refs.push_back({"gru.uz", g.gru.uz.data(), g.gru.uz.size()});
    refs.push_back({"gru.ur", g.gru.ur.data(), g.gru.ur.size()});
    refs.push_back({"gru.un", g.gru.un.data(), g.gru.un.size()});
    refs.push_back({"gru.bz", g.gru.bz.data(), g.gru.bz.size()});
    refs.push_back({"gru.br", g.gru.br.data(), g.gru.br.size()});
    refs.push_back({"gru.bn", g.gru.bn.data(), g.gru.bn.size()});
    refs.push_back({"last_w", g.last_w.data(), g.last_w.size()});
    refs.push_back({"last_b", g.last_b.data(), g.last_b.size()});
    refs.push_back({"score_w", g.score_w.data(), g.score_w.size()});
    refs.push_back({"score_b", &g.score_b, 1});
    return refs;
}

TrainCurve demo_train(TadamModel& model, const std::vector<TadamInput>& inputs,
                      const std::vector<int>& labels, int epochs, double learning_rate,
                      std::uint64_t seed) {
    if (inputs.size() != labels.size()) throw std::invalid_argument("inputs/labels mismatch");
    if (inputs.empty()) throw std::invalid_argument("empty training set");

    TrainCurve curve;
    std::mt19937_64 rng(seed);
    std::vector<size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (size_t idx : order) {
            double loss = 0.0;
            TadamGradients grads;
            try {
                grads = tadam_gradient(model, inputs[idx], labels[idx], &loss);
            } catch (const std::runtime_error& e) {
                warn(std::string("training diverged at epoch ") + std::to_string(epoch) + ": " +
                     e.what() + "; stopping early");
                return curve;
            }
            if (!std::isfinite(loss)) {
                warn("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                     "; stopping early");
                return curve;
            }
            total += loss;
            auto prefs = tadam_tensor_refs(model);
            auto grefs = tadam_tensor_refs(grads);
            for (size_t t = 0; t < prefs.size(); ++t) {
                for (Eigen::Index i = 0; i < prefs[t].size; ++i) {
                    prefs[t].data[i] -= learning_rate * grefs[t].data[i];
                }
            }
        }
        curve.epoch_loss.push_back(total / static_cast<double>(inputs.size()));
    }
    return curve;
}

}  // namespace topicseg
