#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "topicseg/segment.hpp"

using namespace topicseg;

namespace {

// Dialogues whose utterances are single topic tokens; a term-frequency
// encoder over the topic vocabulary makes same-topic cosine 1 and
// cross-topic cosine 0.
Dialogue topic_run_dialogue(const std::vector<std::pair<std::string, int>>& runs) {
    Dialogue d;
    d.id = "synthetic";
    std::vector<int> boundaries;
    for (const auto& [topic, len] : runs) {
        if (!d.utterances.empty()) boundaries.push_back(d.size() + 1);
        for (int i = 0; i < len; ++i) d.utterances.push_back({"A", topic});
    }
    d.gold_boundaries = boundaries;
    return d;
}

EncoderSpec one_hot_encoder(const std::vector<std::string>& topics) {
    return EncoderSpec::term_frequency_over(topics);
}

}  // namespace

TEST_CASE("dialogues shorter than the step stay whole") {
    Dialogue d = topic_run_dialogue({{"a", 2}});
    SegParams p{8, 4, 2, 0.6};
    Segmentation s = segment_dialogue(d, one_hot_encoder({"a"}), p);
    CHECK(s.boundaries.empty());
    CHECK(s.segments().size() == 1);
}

TEST_CASE("two orthogonal topic runs split exactly at the shift") {
    Dialogue d = topic_run_dialogue({{"a", 4}, {"b", 4}});
    EncoderSpec enc = one_hot_encoder({"a", "b"});

    SegParams paper_defaults{8, 2, 2, 0.6};
    SegTrace trace;
    Segmentation s = segment_dialogue(d, enc, paper_defaults, &trace);
    CHECK(s.boundaries == std::vector<int>{5});
    // the chosen candidate attains the minimum cost of its iteration
    REQUIRE_FALSE(trace.iterations.empty());
    const auto& it0 = trace.iterations[0];
    REQUIRE(it0.chosen_length.has_value());
    double chosen_cost = 0;
    double min_cost = 1e9;
    for (const auto& c : it0.candidates) {
        CHECK(c.cost >= -1.0);
        CHECK(c.cost <= 1.0);
        min_cost = std::min(min_cost, c.cost);
        if (c.length == *it0.chosen_length) chosen_cost = c.cost;
    }
    CHECK(chosen_cost == doctest::Approx(min_cost));

    SegParams fine{8, 1, 2, 0.5};
    CHECK(segment_dialogue(d, enc, fine).boundaries == std::vector<int>{5});
}

TEST_CASE("theta = -1 force-closes every segment at the span cap") {
    Dialogue d = topic_run_dialogue({{"a", 11}});
    SegParams p{4, 2, 2, -1.0};
    Segmentation s = segment_dialogue(d, one_hot_encoder({"a"}), p);
    CHECK(s.boundaries == std::vector<int>{5, 9});
    auto spans = s.segments();
    for (size_t i = 0; i + 1 < spans.size(); ++i) {
        CHECK(spans[i].second - spans[i].first + 1 == 4);
    }
    CHECK(spans.back().second == 11);
}

TEST_CASE("segments always partition the dialogue") {
    std::mt19937_64 rng(17);
    std::vector<std::string> vocab = {"a", "b", "c"};
    for (int trial = 0; trial < 40; ++trial) {
        int n = 1 + static_cast<int>(rng() % 25);
        Dialogue d;
        d.id = "t";
        for (int i = 0; i < n; ++i) {
            d.utterances.push_back({"A", vocab[rng() % 3]});
        }
        SegParams p;
        p.max_span = 1 + static_cast<int>(rng() % 8);
        p.step = 1 + static_cast<int>(rng() % p.max_span);
        p.context = 1 + static_cast<int>(rng() % 3);
        p.theta = -1.0 + 2.2 * (static_cast<double>(rng() % 1000) / 1000.0);
        p.theta = std::min(p.theta, 1.0);
        Segmentation s = segment_dialogue(d, one_hot_encoder(vocab), p);
        auto spans = s.segments();
        int expect = 1;
        for (const auto& [lo, hi] : spans) {
            CHECK(lo == expect);
            CHECK(hi >= lo);
            expect = hi + 1;
        }
        CHECK(expect == n + 1);
    }
}

TEST_CASE("separable corpora are recovered exactly at k=1") {
    std::mt19937_64 rng(23);
    std::vector<std::string> vocab = {"w0", "w1", "w2", "w3", "w4"};
    EncoderSpec enc = one_hot_encoder(vocab);
    SegParams p{8, 1, 2, 0.5};
    std::vector<Segmentation> preds, golds;
    for (int trial = 0; trial < 25; ++trial) {
        int topics = 2 + static_cast<int>(rng() % 4);
        std::vector<std::pair<std::string, int>> runs;
        int prev = -1;
        for (int s = 0; s < topics; ++s) {
            int t;
            do {
                t = static_cast<int>(rng() % vocab.size());
            } while (t == prev);
            prev = t;
            runs.push_back({vocab[static_cast<size_t>(t)], 3 + static_cast<int>(rng() % 6)});
        }
        Dialogue d = topic_run_dialogue(runs);
        preds.push_back(segment_dialogue(d, enc, p));
        golds.push_back(Segmentation::from_boundaries(d.size(), *d.gold_boundaries));
    }
    CHECK(seg_f1(preds, golds) == doctest::Approx(1.0));
    CHECK(seg_mae(preds, golds) == doctest::Approx(0.0));
}

TEST_CASE("encoder failures carry the utterance range") {
    Dialogue d = topic_run_dialogue({{"a", 4}});
    EncoderSpec dead = EncoderSpec::remote_endpoint("http://127.0.0.1:1");  // nothing listens
    dead.retries = 0;
    dead.timeout_ms = 200;
    SegParams p{4, 2, 2, 0.6};
    CHECK_THROWS_WITH_AS(segment_dialogue(d, dead, p), doctest::Contains("utterances ["),
                         std::runtime_error);
}

// --- TextTiling --------------------------------------------------------------

namespace {

Dialogue tokens_dialogue(const std::vector<std::string>& utterances) {
    Dialogue d;
    d.id = "tiling";
    for (const auto& u : utterances) d.utterances.push_back({"A", u});
    return d;
}

}  // namespace

TEST_CASE("uniform vocabulary yields no tiling boundary") {
    std::vector<std::string> utts(12, "same old words again here");
    Dialogue d = tokens_dialogue(utts);
    EncoderSpec enc = one_hot_encoder({"same", "old", "words", "again", "here"});
    TilingParams tp{5, 1, 3};
    CHECK(texttiling(d, enc, tp).boundaries.empty());
}

TEST_CASE("disjoint vocabulary halves yield one boundary at the switch") {
    std::vector<std::string> utts;
    for (int i = 0; i < 8; ++i) utts.push_back("aa bb cc dd ee");
    for (int i = 0; i < 8; ++i) utts.push_back("vv ww xx yy zz");
    Dialogue d = tokens_dialogue(utts);
    EncoderSpec enc = one_hot_encoder({"aa", "bb", "cc", "dd", "ee", "vv", "ww", "xx", "yy", "zz"});
    TilingParams tp{5, 1, 3};  // one utterance per pseudo-sentence, no smoothing
    Segmentation s = texttiling(d, enc, tp);
    REQUIRE(s.boundaries.size() == 1);
    CHECK(s.boundaries[0] >= 8);
    CHECK(s.boundaries[0] <= 10);
}

TEST_CASE("dialogues shorter than a pseudo-sentence have no boundary") {
    Dialogue d = tokens_dialogue({"just three words"});
    EncoderSpec enc = one_hot_encoder({"just", "three", "words"});
    TilingParams tp{10, 6, 6};
    CHECK(texttiling(d, enc, tp).boundaries.empty());
}

// --- metrics -----------------------------------------------------------------

TEST_CASE("seg_mae counts segment-count differences") {
    Segmentation a = Segmentation::from_boundaries(10, {4});
    CHECK(seg_mae({a}, {a}) == 0.0);
    Segmentation pred = Segmentation::from_boundaries(10, {5});           // 2 segments
    Segmentation gold = Segmentation::from_boundaries(10, {3, 6, 9});     // 4 segments
    CHECK(seg_mae({pred}, {gold}) == doctest::Approx(2.0));
    // per-dialogue errors 1 and 3 average to 2
    Segmentation p1 = Segmentation::from_boundaries(10, {5});          // 2 segments
    Segmentation g1 = Segmentation::from_boundaries(10, {3, 6});       // 3 segments
    Segmentation p2 = Segmentation::from_boundaries(8, {2});           // 2 segments
    Segmentation g2 = Segmentation::from_boundaries(8, {2, 4, 6, 8});  // 5 segments
    CHECK(seg_mae({p1, p2}, {g1, g2}) == doctest::Approx(2.0));
}

TEST_CASE("window_diff worked example") {
    Segmentation gold = Segmentation::from_boundaries(10, {6});
    Segmentation pred = Segmentation::from_boundaries(10, {});
    CHECK(window_diff(pred, gold, 4) == doctest::Approx(4.0 / 6.0));
    CHECK(window_diff(gold, gold, 4) == 0.0);
    CHECK(window_diff(pred, gold, 4) == doctest::Approx(window_diff(gold, pred, 4)));
}

TEST_CASE("window_diff sees counts, not positions") {
    // single window (1,5]: both contain exactly one boundary
    Segmentation pred = Segmentation::from_boundaries(5, {3});
    Segmentation gold = Segmentation::from_boundaries(5, {4});
    CHECK(window_diff(pred, gold, 4) == 0.0);
}

TEST_CASE("window_diff rejects short dialogues") {
    Segmentation s = Segmentation::from_boundaries(4, {2});
    CHECK_THROWS_WITH_AS(window_diff(s, s, 4), doctest::Contains("shorter"),
                         std::invalid_argument);
}

TEST_CASE("segmentation metrics agree with brute-force enumeration") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 6 + static_cast<int>(rng() % 25);
        auto random_seg = [&]() {
            std::vector<int> bs;
            for (int b = 2; b <= n; ++b) {
                if (rng() % 4 == 0) bs.push_back(b);
            }
            return Segmentation::from_boundaries(n, bs);
        };
        Segmentation pred = random_seg(), gold = random_seg();
        int w = 1 + static_cast<int>(rng() % (n - 1));
        CHECK(window_diff(pred, gold, w) ==
              doctest::Approx(oracle::window_diff(pred, gold, w)).epsilon(1e-12));
        CHECK(seg_f1({pred}, {gold}) ==
              doctest::Approx(oracle::seg_f1({pred}, {gold})).epsilon(1e-12));
        CHECK(seg_mae({pred}, {gold}) ==
              doctest::Approx(oracle::seg_mae({pred}, {gold})).epsilon(1e-12));
    }
}

TEST_CASE("seg_f1 worked examples") {
    Segmentation a = Segmentation::from_boundaries(10, {3, 7});
    CHECK(seg_f1({a}, {a}) == 1.0);
    Segmentation disjoint = Segmentation::from_boundaries(10, {4, 8});
    CHECK(seg_f1({a}, {disjoint}) == 0.0);
    Segmentation pred = Segmentation::from_boundaries(10, {3, 5});
    Segmentation gold = Segmentation::from_boundaries(10, {3, 7});
    CHECK(seg_f1({pred}, {gold}) == doctest::Approx(0.5));
    Segmentation none = Segmentation::from_boundaries(10, {});
    CHECK(seg_f1({none}, {none}) == 1.0);
    CHECK(seg_f1({none}, {gold}) == 0.0);
}
