#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "tadam_detail.hpp"
#include "topicseg/tadam.hpp"

using namespace topicseg;
namespace fs = std::filesystem;

namespace {

TadamParams desk_params(int T = 3, int L = 4, int d = 6, int h = 4) {
    TadamParams p;
    p.max_segments = T;
    p.max_tokens = L;
    p.hidden_dim = d;
    p.map_features = h;
    return p;
}

std::shared_ptr<VectorTable> token_table(int dim, std::uint64_t seed) {
    auto table = std::make_shared<VectorTable>();
    table->dim = dim;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.8, 0.8);
    for (int t = 0; t < 12; ++t) {
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v[i] = dist(rng);
        table->entries["t" + std::to_string(t)] = std::move(v);
    }
    return table;
}

MatchInstance small_instance() {
    MatchInstance inst;
    inst.segments = {{"t0", "t1", "t2"}, {"t3", "t4"}};
    inst.response = {"t5", "t6", "t7"};
    inst.label = 1;
    return inst;
}

}  // namespace

TEST_CASE("build_input pads unused slots and truncates oldest segments") {
    TadamParams p = desk_params(10, 4, 6, 4);
    auto table = token_table(p.hidden_dim, 1);
    TableTokenEmbedder emb(table);

    TadamInput in = build_input(small_instance(), emb, p);
    CHECK(in.seg_mask[0]);
    CHECK(in.seg_mask[1]);
    for (int s = 2; s < 10; ++s) {
        CHECK_FALSE(in.seg_mask[static_cast<size_t>(s)]);
        CHECK(in.context[static_cast<size_t>(s)].norm() == 0.0);
    }
    CHECK(in.last_segment == 1);
    // rows equal direct table lookups
    CHECK((in.context[0].row(0).transpose() - *table->find("t0")).norm() == 0.0);
    CHECK((in.context[1].row(1).transpose() - *table->find("t4")).norm() == 0.0);
    CHECK((in.response.row(2).transpose() - *table->find("t7")).norm() == 0.0);
    CHECK_FALSE(in.ctx_mask[1][2]);  // segment 1 has only two tokens

    MatchInstance big;
    for (int s = 0; s < 12; ++s) {
        big.segments.push_back({"t" + std::to_string(s % 12)});
    }
    big.response = {"t0"};
    TadamInput truncated = build_input(big, emb, p);
    // the two oldest segments are dropped: slot 0 now holds segment #2
    CHECK((truncated.context[0].row(0).transpose() - *table->find("t2")).norm() == 0.0);

    MatchInstance empty;
    empty.response = {"t0"};
    CHECK_THROWS_WITH_AS(build_input(empty, emb, p), doctest::Contains("empty context"),
                         std::invalid_argument);
}

TEST_CASE("providers with a different width get a fixed seeded projection") {
    TadamParams p = desk_params(2, 3, 5, 2);
    auto wide = token_table(9, 2);
    TableTokenEmbedder emb(wide);
    TadamInput a = build_input(small_instance(), emb, p, 7);
    TadamInput b = build_input(small_instance(), emb, p, 7);
    CHECK((a.context[0] - b.context[0]).norm() == 0.0);
    CHECK(a.context[0].cols() == 5);
    TadamInput c = build_input(small_instance(), emb, p, 8);
    CHECK((a.context[0] - c.context[0]).norm() > 0.0);
}

TEST_CASE("word weights are a softmax over the real slots") {
    TadamParams p = desk_params(1, 4, 6, 4);
    auto table = token_table(p.hidden_dim, 3);
    TableTokenEmbedder emb(table);
    MatchInstance inst;
    inst.segments = {{"t0", "t1"}};
    inst.response = {"t2", "t3"};
    TadamModel model = tadam_init(p, 11);
    TadamInput in = build_input(inst, emb, p);
    WordLevelOut out = word_level_weights(model, in);
    CHECK(out.weights.size() == 1);
    CHECK(out.weights[0] == doctest::Approx(1.0));

    TadamParams p2 = desk_params(4, 4, 6, 4);
    TadamModel model2 = tadam_init(p2, 11);
    TadamInput in2 = build_input(small_instance(), TableTokenEmbedder(table), p2);
    WordLevelOut out2 = word_level_weights(model2, in2);
    CHECK(out2.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out2.weights[2] == 0.0);  // pad slot
    CHECK(out2.weights[3] == 0.0);
}

TEST_CASE("word match map equals an element-by-element oracle") {
    TadamParams p = desk_params(2, 3, 4, 2);
    auto table = token_table(p.hidden_dim, 5);
    TableTokenEmbedder emb(table);
    TadamModel model = tadam_init(p, 13);
    TadamInput in = build_input(small_instance(), emb, p);
    WordLevelOut out = word_level_weights(model, in);

    const double scale = 1.0 / std::sqrt(static_cast<double>(p.hidden_dim));
    for (int x = 0; x < 2; ++x) {
        for (int y = 0; y < 3; ++y) {
            for (int u = 0; u < 3; ++u) {
                double m = 0.0;
                for (int v = 0; v < p.map_features; ++v) {
                    double t = 0.0;
                    for (int k = 0; k < p.hidden_dim; ++k) {
                        t += in.context[static_cast<size_t>(x)](y, k) *
                             model.word_map_w[static_cast<size_t>(v)](k, k) *
                             in.response(u, k);
                    }
                    m += std::tanh(t * scale) * model.word_map_v[v];
                }
                CHECK(out.match_map[static_cast<size_t>(x)](y, u) ==
                      doctest::Approx(m).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("segment-level weights are cosine to the response mean") {
    TadamParams p = desk_params(2, 3, 6, 2);
    auto table = token_table(p.hidden_dim, 6);
    TableTokenEmbedder emb(table);

    MatchInstance same;
    same.segments = {{"t1", "t2"}};
    same.response = {"t1", "t2"};
    TadamInput in = build_input(same, emb, p);
    SegmentLevelOut out = segment_level_weights(in);
    CHECK(out.weights[0] == doctest::Approx(1.0));
    CHECK(out.weights[1] == 0.0);  // pad slot

    // orthogonal means -> 0
    auto ortho = std::make_shared<VectorTable>();
    ortho->dim = 2;
    ortho->entries["x"] = Eigen::Vector2d(1, 0);
    ortho->entries["y"] = Eigen::Vector2d(0, 1);
    TadamParams p2 = desk_params(1, 2, 2, 2);
    MatchInstance cross;
    cross.segments = {{"x"}};
    cross.response = {"y"};
    SegmentLevelOut out2 = segment_level_weights(build_input(cross, TableTokenEmbedder(ortho), p2));
    CHECK(out2.weights[0] == doctest::Approx(0.0));

    // random fixture against a mean+cosine oracle
    TadamInput rnd = build_input(small_instance(), emb, p);
    SegmentLevelOut out3 = segment_level_weights(rnd);
    Eigen::VectorXd rmean = (rnd.response.row(0) + rnd.response.row(1) + rnd.response.row(2)) / 3.0;
    Eigen::VectorXd smean = (rnd.context[1].row(0) + rnd.context[1].row(1)) / 2.0;
    CHECK(out3.weights[1] == doctest::Approx(cosine(smean, rmean)).epsilon(1e-9));
}

TEST_CASE("combining weights follows the beta mix exactly") {
    Eigen::VectorXd ww(2), ws(2);
    ww << 0.6, 0.4;
    ws << 0.2, 0.8;
    std::vector<Eigen::MatrixXd> ctx(2, Eigen::MatrixXd::Ones(2, 2));
    CombineOut half = combine_and_weight(ww, ws, 0.5, ctx);
    CHECK(half.combined[0] == doctest::Approx(0.4));
    CHECK(half.combined[1] == doctest::Approx(0.6));
    CHECK(half.weighted_context[1](0, 0) == doctest::Approx(0.6));

    CombineOut word_only = combine_and_weight(ww, ws, 1.0, ctx);
    CHECK((word_only.combined - ww).norm() == 0.0);
    CombineOut seg_only = combine_and_weight(ww, ws, 0.0, ctx);
    CHECK((seg_only.combined - ws).norm() == 0.0);
}

TEST_CASE("attention puts weight one on a single unmasked key") {
    TadamParams p = desk_params(1, 3, 4, 2);
    TadamModel model = tadam_init(p, 17);
    Eigen::MatrixXd q = Eigen::MatrixXd::Random(2, 4);
    Eigen::MatrixXd kv = Eigen::MatrixXd::Random(3, 4);
    AttCache cache;
    attentive_module_impl(model.att_seg, q, kv, kv, {false, true, false}, &cache);
    CHECK(cache.probs(0, 1) == doctest::Approx(1.0));
    CHECK(cache.probs(0, 0) == 0.0);
    CHECK((cache.v_att.row(0) - kv.row(1)).norm() == doctest::Approx(0.0));
}

TEST_CASE("attention rows sum to one over unmasked keys") {
    TadamParams p = desk_params(1, 3, 4, 2);
    TadamModel model = tadam_init(p, 18);
    Eigen::MatrixXd q = Eigen::MatrixXd::Random(3, 4);
    Eigen::MatrixXd kv = Eigen::MatrixXd::Random(3, 4);
    AttCache cache;
    attentive_module_impl(model.att_resp, q, kv, kv, {true, true, false}, &cache);
    for (Eigen::Index i = 0; i < 3; ++i) {
        CHECK(cache.probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(cache.probs(i, 2) == 0.0);
    }
}

TEST_CASE("attentive module matches a fully explicit oracle") {
    TadamParams p = desk_params(1, 3, 3, 2);
    TadamModel model = tadam_init(p, 19);
    const AttentiveParams& a = model.att_seg;
    Eigen::MatrixXd q(2, 3), kv(3, 3);
    q << 0.1, -0.4, 0.7, 0.3, 0.2, -0.5;
    kv << 0.5, 0.1, 0.0, -0.2, 0.4, 0.6, 0.9, -0.3, 0.2;
    Eigen::MatrixXd out = attentive_module(a, q, kv, kv, {true, true, true});

    const double scale = 1.0 / std::sqrt(3.0);
    for (int i = 0; i < 2; ++i) {
        // softmax row
        double logits[3], denom = 0.0, maxl = -1e30;
        for (int j = 0; j < 3; ++j) {
            logits[j] = q.row(i).dot(kv.row(j)) * scale;
            maxl = std::max(maxl, logits[j]);
        }
        for (int j = 0; j < 3; ++j) denom += std::exp(logits[j] - maxl);
        Eigen::Vector3d v_att = Eigen::Vector3d::Zero();
        for (int j = 0; j < 3; ++j) {
            double prob = std::exp(logits[j] - maxl) / denom;
            v_att += prob * kv.row(j).transpose();
        }
        // layer norm without residual
        double mean = v_att.mean();
        double var = (v_att.array() - mean).square().mean();
        Eigen::Vector3d normed = ((v_att.array() - mean) / std::sqrt(var + 1e-5)).matrix();
        Eigen::Vector3d ln = (normed.array() * a.ln_gain.array()).matrix() + a.ln_bias;
        // ffn with relu hidden
        Eigen::Vector3d hidden = (a.ffn_w1 * ln + a.ffn_b1).cwiseMax(0.0);
        Eigen::Vector3d expect = a.ffn_w2 * hidden + a.ffn_b2;
        CHECK((out.row(i).transpose() - expect).norm() < 1e-9);
    }
}

TEST_CASE("dual match shapes and the pad-segment sentinel") {
    TadamParams p = desk_params(4, 6, 8, 3);
    auto table = token_table(p.hidden_dim, 21);
    TableTokenEmbedder emb(table);
    TadamModel model = tadam_init(p, 22);
    TadamInput in = build_input(small_instance(), emb, p);
    TadamTrace trace;
    tadam_forward(model, in, &trace);
    CHECK(trace.match_features.rows() == 4);
    CHECK(trace.match_features.cols() == 16);
    CHECK(trace.pad_segment == std::vector<bool>{false, false, true, true});
    // pad slots share the same sentinel feature row
    CHECK((trace.match_features.row(2) - trace.match_features.row(3)).norm() ==
          doctest::Approx(0.0));
    CHECK(trace.cache->att_resp[2].sentinel);
    CHECK_FALSE(trace.cache->att_resp[0].sentinel);
}

TEST_CASE("swapping the attentive parameter sets swaps the attended streams") {
    // with a single segment whose tokens equal the response, both modules
    // see identical (Q, K, V) inputs
    TadamParams p = desk_params(1, 3, 6, 2);
    auto table = token_table(p.hidden_dim, 23);
    TableTokenEmbedder emb(table);
    MatchInstance inst;
    inst.segments = {{"t0", "t1", "t2"}};
    inst.response = {"t0", "t1", "t2"};
    TadamModel model = tadam_init(p, 24);
    TadamModel swapped = model;
    std::swap(swapped.att_seg, swapped.att_resp);

    TadamInput in = build_input(inst, emb, p);
    TadamTrace a, b;
    tadam_forward(model, in, &a);
    tadam_forward(swapped, in, &b);
    CHECK((a.attended_segments[0] - b.attended_response[0]).norm() == doctest::Approx(0.0));
    CHECK((a.attended_response[0] - b.attended_segments[0]).norm() == doctest::Approx(0.0));
}

TEST_CASE("aggregation: gru oracle and the single-step contract") {
    TadamParams p = desk_params(3, 4, 5, 2);
    auto table = token_table(p.hidden_dim, 25);
    TableTokenEmbedder emb(table);
    TadamModel model = tadam_init(p, 26);
    MatchInstance inst;
    inst.segments = {{"t0", "t1"}, {"t2"}, {"t3", "t4"}};
    inst.response = {"t5", "t6"};
    TadamInput in = build_input(inst, emb, p);
    TadamTrace trace;
    tadam_forward(model, in, &trace);
    CHECK(trace.score > 0.0);
    CHECK(trace.score < 1.0);

    // step-by-step gate equations over the match feature rows
    const int g = 2 * p.hidden_dim;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(g);
    for (int x = 0; x < 3; ++x) {
        Eigen::VectorXd xt = trace.match_features.row(x).transpose();
        Eigen::VectorXd z = model.gru.wz * xt + model.gru.uz * h + model.gru.bz;
        for (int i = 0; i < g; ++i) z[i] = 1.0 / (1.0 + std::exp(-z[i]));
        Eigen::VectorXd r = model.gru.wr * xt + model.gru.ur * h + model.gru.br;
        for (int i = 0; i < g; ++i) r[i] = 1.0 / (1.0 + std::exp(-r[i]));
        Eigen::VectorXd n = model.gru.wn * xt + r.cwiseProduct(model.gru.un * h) + model.gru.bn;
        for (int i = 0; i < g; ++i) n[i] = std::tanh(n[i]);
        h = (Eigen::VectorXd::Ones(g) - z).cwiseProduct(n) + z.cwiseProduct(h);
    }
    CHECK((trace.context_state - h).norm() < 1e-12);

    // one real segment -> one cell application from the zero state
    TadamParams p1 = desk_params(1, 4, 5, 2);
    TadamModel m1 = tadam_init(p1, 27);
    MatchInstance single;
    single.segments = {{"t0", "t1"}};
    single.response = {"t5"};
    TadamInput in1 = build_input(single, TableTokenEmbedder(table), p1);
    TadamTrace t1;
    tadam_forward(m1, in1, &t1);
    Eigen::VectorXd x0 = t1.match_features.row(0).transpose();
    Eigen::VectorXd z = m1.gru.wz * x0 + m1.gru.bz;
    Eigen::VectorXd r = m1.gru.wr * x0 + m1.gru.br;
    for (int i = 0; i < 2 * p1.hidden_dim; ++i) {
        z[i] = 1.0 / (1.0 + std::exp(-z[i]));
        r[i] = 1.0 / (1.0 + std::exp(-r[i]));
    }
    Eigen::VectorXd n = m1.gru.wn * x0 + m1.gru.bn;
    for (int i = 0; i < 2 * p1.hidden_dim; ++i) n[i] = std::tanh(n[i]);
    Eigen::VectorXd expect = (Eigen::VectorXd::Ones(2 * p1.hidden_dim) - z).cwiseProduct(n);
    CHECK((t1.context_state - expect).norm() < 1e-12);
}

TEST_CASE("the last-match path ignores permutations of earlier segments") {
    TadamParams p = desk_params(3, 4, 5, 2);
    auto table = token_table(p.hidden_dim, 29);
    TableTokenEmbedder emb(table);
    TadamModel model = tadam_init(p, 30);  // pool_b starts at zero

    MatchInstance a;
    a.segments = {{"t0", "t1"}, {"t2", "t3"}, {"t4", "t5"}};
    a.response = {"t6", "t7"};
    MatchInstance b = a;
    std::swap(b.segments[0], b.segments[1]);

    TadamTrace ta, tb;
    tadam_forward(model, build_input(a, emb, p), &ta);
    tadam_forward(model, build_input(b, emb, p), &tb);
    CHECK((ta.last_match_proj - tb.last_match_proj).norm() < 1e-12);
    CHECK((ta.context_state - tb.context_state).norm() > 1e-9);
}

TEST_CASE("beta extremes reproduce one weighting stream exactly") {
    auto table = token_table(6, 31);
    TableTokenEmbedder emb(table);
    for (double beta : {1.0, 0.0}) {
        TadamParams p = desk_params(3, 4, 6, 3);
        p.beta = beta;
        TadamModel model = tadam_init(p, 32);
        TadamTrace trace;
        tadam_forward(model, build_input(small_instance(), emb, p), &trace);
        const Eigen::VectorXd& expect = beta == 1.0 ? trace.word_weights : trace.seg_weights;
        CHECK((trace.combined_weights - expect).norm() == 0.0);
    }
}

TEST_CASE("bce loss worked examples") {
    CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(1.0 - 1e-13, 1) < 1e-11);
    CHECK(bce_loss(0.8, 0) == doctest::Approx(-std::log(0.2)).epsilon(1e-9));
}

TEST_CASE("score-layer bias gradient is exactly score minus label") {
    TadamParams p = desk_params(2, 3, 4, 2);
    auto table = token_table(p.hidden_dim, 33);
    TableTokenEmbedder emb(table);
    TadamModel model = tadam_init(p, 34);
    TadamInput in = build_input(small_instance(), emb, p);
    TadamTrace trace;
    TadamGradients g = tadam_gradient(model, in, 1, nullptr, &trace);
    CHECK(g.score_b == doctest::Approx(trace.score - 1.0).epsilon(1e-15));

    // saturated score: loss is flat, every gradient vanishes
    model.score_b = 60.0;
    TadamGradients flat = tadam_gradient(model, in, 1);
    auto refs = tadam_tensor_refs(flat);
    for (const auto& r : refs) {
        for (Eigen::Index i = 0; i < r.size; ++i) CHECK(r.data[i] == 0.0);
    }
}

namespace {

double full_fd_check(TadamModel& model, const TadamInput& in, int label) {
    TadamGradients g = tadam_gradient(model, in, label);
    auto prefs = tadam_tensor_refs(model);
    auto grefs = tadam_tensor_refs(g);
    auto loss = [&]() { return bce_loss(tadam_forward(model, in), label); };
    double worst = 0.0;
    for (size_t t = 0; t < prefs.size(); ++t) {
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (Eigen::Index i = 0; i < prefs[t].size; ++i) {
            // skip unused off-diagonal slab entries in diagonal mode
            double n = oracle::central_difference(loss, prefs[t].data + i, 1e-5);
            double a = grefs[t].data[i];
            diff += (a - n) * (a - n);
            na += a * a;
            nn += n * n;
        }
        double denom = std::max(1e-8, std::sqrt(na) + std::sqrt(nn));
        worst = std::max(worst, std::sqrt(diff) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences at desk dims") {
    TadamParams p = desk_params(3, 4, 6, 4);
    auto table = token_table(p.hidden_dim, 35);
    TableTokenEmbedder emb(table);
    MatchInstance inst;
    inst.segments = {{"t0", "t1", "t2"}, {"t3", "t4"}};
    inst.response = {"t5", "t6", "t7"};
    TadamInput in = build_input(inst, emb, p);

    TadamModel diag = tadam_init(p, 36);
    CHECK(full_fd_check(diag, in, 1) < 1e-3);
    CHECK(full_fd_check(diag, in, 0) < 1e-3);

    TadamModel full = tadam_init(p, 37);
    full.bilinear_full = true;
    std::mt19937_64 rng(38);
    std::uniform_real_distribution<double> dist(-0.3, 0.3);
    for (auto& slice : full.word_map_w) {
        for (Eigen::Index i = 0; i < slice.rows(); ++i) {
            for (Eigen::Index j = 0; j < slice.cols(); ++j) slice(i, j) = dist(rng);
        }
    }
    CHECK(full_fd_check(full, in, 1) < 1e-3);
}

TEST_CASE("non-finite gradients raise a diagnostic naming the tensor") {
    TadamParams p = desk_params(2, 3, 4, 2);
    auto table = token_table(p.hidden_dim, 45);
    TableTokenEmbedder emb(table);
    TadamModel model = tadam_init(p, 46);
    model.word_map_v[0] = std::numeric_limits<double>::quiet_NaN();
    TadamInput in = build_input(small_instance(), emb, p);
    CHECK_THROWS_WITH_AS(tadam_gradient(model, in, 1), doctest::Contains("non-finite gradient"),
                         std::runtime_error);
}

TEST_CASE("demo_train is inert at lr 0 and deterministic under a seed") {
    TadamParams p = desk_params(2, 3, 4, 2);
    auto table = token_table(p.hidden_dim, 41);
    TableTokenEmbedder emb(table);
    std::vector<TadamInput> data;
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) {
        MatchInstance inst;
        inst.segments = {{"t" + std::to_string(i % 4), "t1"}};
        inst.response = {"t" + std::to_string((i + 1) % 4)};
        data.push_back(build_input(inst, emb, p));
        labels.push_back(i % 2);
    }

    TadamModel frozen = tadam_init(p, 42);
    TadamModel reference = frozen;
    demo_train(frozen, data, labels, 3, 0.0, 7);
    auto fr = tadam_tensor_refs(frozen);
    auto rr = tadam_tensor_refs(reference);
    for (size_t t = 0; t < fr.size(); ++t) {
        for (Eigen::Index i = 0; i < fr[t].size; ++i) CHECK(fr[t].data[i] == rr[t].data[i]);
    }

    TadamModel a = tadam_init(p, 42);
    TadamModel b = tadam_init(p, 42);
    TrainCurve ca = demo_train(a, data, labels, 3, 0.05, 7);
    TrainCurve cb = demo_train(b, data, labels, 3, 0.05, 7);
    REQUIRE(ca.epoch_loss.size() == cb.epoch_loss.size());
    for (size_t i = 0; i < ca.epoch_loss.size(); ++i) {
        CHECK(ca.epoch_loss[i] == cb.epoch_loss[i]);
    }
}

TEST_CASE("tadam model files round-trip and reject corruption") {
    TadamParams p = desk_params(2, 3, 4, 2);
    TadamModel model = tadam_init(p, 50);
    std::string path = (fs::temp_directory_path() / "tadam_model.json").string();
    save_tadam(model, path);
    TadamModel loaded = load_tadam(path);
    CHECK((loaded.word_map_v - model.word_map_v).norm() == 0.0);
    CHECK((loaded.gru.un - model.gru.un).norm() == 0.0);
    CHECK(loaded.score_b == model.score_b);
    CHECK(loaded.params.hidden_dim == p.hidden_dim);

    std::ofstream(path, std::ios::app) << "garbage";
    CHECK_THROWS(load_tadam(path));
    std::remove(path.c_str());
}

TEST_CASE("trace invariants hold across seeded forward passes") {
    auto table = token_table(5, 61);
    TableTokenEmbedder emb(table);
    std::mt19937_64 rng(62);
    for (int trial = 0; trial < 25; ++trial) {
        TadamParams p = desk_params(3, 4, 5, 3);
        TadamModel model = tadam_init(p, rng());
        MatchInstance inst;
        int segs = 1 + static_cast<int>(rng() % 3);
        for (int s = 0; s < segs; ++s) {
            inst.segments.push_back({"t" + std::to_string(rng() % 12),
                                     "t" + std::to_string(rng() % 12)});
        }
        inst.response = {"t" + std::to_string(rng() % 12)};
        TadamInput in = build_input(inst, emb, p);
        TadamTrace trace;
        tadam_forward(model, in, &trace);
        CHECK(trace.word_weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(trace.word_weights.minCoeff() >= 0.0);
        CHECK(trace.score > 0.0);
        CHECK(trace.score < 1.0);
        for (int x = 0; x < segs; ++x) {
            const auto& att = trace.cache->att_seg[static_cast<size_t>(x)];
            for (Eigen::Index i = 0; i < att.probs.rows(); ++i) {
                CHECK(att.probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
}
