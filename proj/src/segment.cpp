#include "topicseg/segment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace topicseg {

void SegParams::validate() const {
    if (max_span < 1) throw std::invalid_argument("max_span must be >= 1");
    if (step < 1) throw std::invalid_argument("step must be >= 1");
    if (context < 1) throw std::invalid_argument("context must be >= 1");
    if (step > max_span) throw std::invalid_argument("step must not exceed max_span");
    if (theta < -1.0 || theta > 1.0 + 1e-9) {
        throw std::invalid_argument("theta must lie in [-1, 1]");
    }
}

std::vector<std::pair<int, int>> Segmentation::segments() const {
    std::vector<std::pair<int, int>> spans;
    int start = 1;
    for (int b : boundaries) {
        spans.emplace_back(start, b - 1);
        start = b;
    }
    spans.emplace_back(start, n);
    return spans;
}

Segmentation Segmentation::from_boundaries(int n, std::vector<int> boundaries) {
    if (n < 1) throw std::invalid_argument("segmentation needs n >= 1");
    int prev = 1;
    for (int b : boundaries) {
        if (b < 2 || b > n || b <= prev) {
            throw std::invalid_argument("boundary " + std::to_string(b) +
                                        " invalid for n=" + std::to_string(n));
        }
        prev = b;
    }
    return Segmentation{n, std::move(boundaries)};
}

namespace {

std::string join_utterances(const Dialogue& d, int lo, int hi) {
    std::string text;
    for (int i = lo; i <= hi; ++i) {
        if (!text.empty()) text += ' ';
        text += d.utterances[static_cast<size_t>(i - 1)].text;
    }
    return text;
}

// encoder failures surface with the utterance range they happened on
Eigen::VectorXd encode_range(const Dialogue& d, int lo, int hi, const EncoderSpec& enc) {
    try {
        return encode(join_utterances(d, lo, hi), enc);
    } catch (const std::exception& e) {
        throw std::runtime_error("dialogue '" + d.id + "', utterances [" + std::to_string(lo) +
                                 ", " + std::to_string(hi) + "]: " + e.what());
    }
}

}  // namespace

Segmentation segment_dialogue(const Dialogue& dialogue, const EncoderSpec& enc,
                              const SegParams& params, SegTrace* trace) {
    params.validate();
    const int n = dialogue.size();
    if (n < 1) throw std::invalid_argument("empty dialogue");

    std::vector<int> starts;
    int i = 1;
    while (i <= n) {
        starts.push_back(i);
        SegTrace::Iteration iter;
        iter.start = i;

        const bool has_left = i > 1;
        Eigen::VectorXd left_vec;
        if (has_left) {
            left_vec = encode_range(dialogue, std::max(1, i - params.context), i - 1, enc);
        }

        const double inf = std::numeric_limits<double>::infinity();
        double best_cost = inf;
        int best_len = 0;
        const int max_len = std::min(params.max_span, n - i + 1);
        for (int j = 1; j <= max_len; ++j) {
            const bool at_end = (i + j - 1 == n);
            if (j % params.step != 0 && !at_end) continue;

            const bool has_right = i + j <= n;
            if (!has_left && !has_right) continue;  // no context to compare against

            Eigen::VectorXd cand_vec = encode_range(dialogue, i, i + j - 1, enc);
            SegTrace::Candidate cand;
            cand.length = j;
            double cost = -inf;
            if (has_left) {
                double sim = cosine(cand_vec, left_vec);
                cand.left_sim = sim;
                cost = std::max(cost, sim);
            }
            if (has_right) {
                Eigen::VectorXd right_vec = encode_range(
                    dialogue, i + j, std::min(n, i + j + params.context - 1), enc);
                double sim = cosine(cand_vec, right_vec);
                cand.right_sim = sim;
                cost = std::max(cost, sim);
            }
            cand.cost = cost;
            if (trace) iter.candidates.push_back(cand);
            if (cost < best_cost) {
                best_cost = cost;
                best_len = j;
            }
        }

        int end;
        if (best_len > 0 && best_cost <= params.theta) {
            end = i + best_len - 1;
            iter.chosen_length = best_len;
        } else {
            end = std::min(i + params.max_span - 1, n);
            iter.forced = true;
        }
        if (trace) trace->iterations.push_back(std::move(iter));
        i = end + 1;
    }

    std::vector<int> boundaries(starts.begin() + 1, starts.end());
    return Segmentation{n, std::move(boundaries)};
}

void TilingParams::validate() const {
    if (pseudo_sentence_len < 1 || window < 1 || block < 1) {
        throw std::invalid_argument("tiling parameters must be positive");
    }
}

Segmentation texttiling(const Dialogue& dialogue, const EncoderSpec& enc,
                        const TilingParams& params) {
    params.validate();
    const int n = dialogue.size();

    // token stream tagged with source utterances
    std::vector<std::string> tokens;
    std::vector<int> token_utt;
    for (int u = 1; u <= n; ++u) {
        for (auto& t : tokenize(dialogue.utterances[static_cast<size_t>(u - 1)].text, enc.tokenizer)) {
            tokens.push_back(std::move(t));
            token_utt.push_back(u);
        }
    }

    const int psl = params.pseudo_sentence_len;
    const int num_ps = static_cast<int>((tokens.size() + static_cast<size_t>(psl) - 1) /
                                        static_cast<size_t>(psl));
    if (num_ps < 2) return Segmentation{n, {}};

    auto ps_text = [&](int lo, int hi) {  // pseudo-sentence range [lo, hi)
        std::string text;
        size_t begin = static_cast<size_t>(lo) * static_cast<size_t>(psl);
        size_t end = std::min(tokens.size(), static_cast<size_t>(hi) * static_cast<size_t>(psl));
        for (size_t t = begin; t < end; ++t) {
            if (!text.empty()) text += ' ';
            text += tokens[t];
        }
        return text;
    };

    // cosine of adjacent blocks at every gap
    std::vector<double> score(static_cast<size_t>(num_ps) - 1);
    for (int g = 1; g < num_ps; ++g) {
        Eigen::VectorXd left = encode(ps_text(std::max(0, g - params.block), g), enc);
        Eigen::VectorXd right = encode(ps_text(g, std::min(num_ps, g + params.block)), enc);
        score[static_cast<size_t>(g - 1)] = cosine(left, right);
    }

    // moving-average smoothing of width `window`
    std::vector<double> smooth(score.size());
    const int radius = params.window / 2;
    for (size_t g = 0; g < score.size(); ++g) {
        int lo = std::max(0, static_cast<int>(g) - radius);
        int hi = std::min(static_cast<int>(score.size()) - 1, static_cast<int>(g) + radius);
        double sum = 0.0;
        for (int t = lo; t <= hi; ++t) sum += score[static_cast<size_t>(t)];
        smooth[g] = sum / (hi - lo + 1);
    }

    // Hearst depth: climb to the nearest peaks on both sides
    std::vector<double> depth(smooth.size());
    for (size_t g = 0; g < smooth.size(); ++g) {
        double left_peak = smooth[g];
        for (size_t t = g; t-- > 0 && smooth[t] >= left_peak;) left_peak = smooth[t];
        double right_peak = smooth[g];
        for (size_t t = g + 1; t < smooth.size() && smooth[t] >= right_peak; ++t) {
            right_peak = smooth[t];
        }
        depth[g] = (left_peak - smooth[g]) + (right_peak - smooth[g]);
    }

    double mean = 0.0;
    for (double d : depth) mean += d;
    mean /= static_cast<double>(depth.size());
    double var = 0.0;
    for (double d : depth) var += (d - mean) * (d - mean);
    double cutoff = mean - std::sqrt(var / static_cast<double>(depth.size())) / 2.0;

    std::vector<int> boundaries;
    for (size_t g = 0; g < depth.size(); ++g) {
        if (!(depth[g] > cutoff) || !(depth[g] > 0.0)) continue;  // flat gaps never split
        // keep local maxima only, so one dip yields one boundary
        if (g > 0 && depth[g - 1] > depth[g]) continue;
        if (g + 1 < depth.size() && depth[g + 1] >= depth[g]) continue;

        // first token of the right pseudo-sentence, snapped to the nearest
        // utterance start
        size_t tok = (g + 1) * static_cast<size_t>(psl);
        if (tok >= tokens.size()) continue;
        int utt = token_utt[tok];
        int boundary = utt;
        if (tok > 0 && token_utt[tok - 1] == utt) {
            // mid-utterance gap: pick the closer utterance start
            size_t back = tok;
            while (back > 0 && token_utt[back - 1] == utt) --back;
            size_t fwd = tok;
            while (fwd < tokens.size() && token_utt[fwd] == utt) ++fwd;
            boundary = (tok - back <= fwd - tok) ? utt : utt + 1;
        }
        boundary = std::clamp(boundary, 2, n);
        if (boundaries.empty() || boundaries.back() < boundary) boundaries.push_back(boundary);
    }
    return Segmentation{n, std::move(boundaries)};
}

double seg_mae(const std::vector<Segmentation>& preds,
               const std::vector<Segmentation>& golds) {
    if (preds.size() != golds.size()) throw std::invalid_argument("pred/gold count mismatch");
    if (preds.empty()) throw std::invalid_argument("no dialogues");
    double total = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) {
        total += std::abs(preds[i].segment_count() - golds[i].segment_count());
    }
    return total / static_cast<double>(preds.size());
}

double window_diff(const Segmentation& pred, const Segmentation& gold, int w) {
    if (pred.n != gold.n) throw std::invalid_argument("dialogue length mismatch");
    const int n = pred.n;
    if (n <= w) throw std::invalid_argument("dialogue shorter than window");

    auto prefix = [n](const std::vector<int>& boundaries) {
        std::vector<int> pre(static_cast<size_t>(n) + 1, 0);
        for (int b : boundaries) ++pre[static_cast<size_t>(b)];
        for (int i = 1; i <= n; ++i) pre[static_cast<size_t>(i)] += pre[static_cast<size_t>(i - 1)];
        return pre;
    };
    std::vector<int> pp = prefix(pred.boundaries);
    std::vector<int> pg = prefix(gold.boundaries);

    int mismatches = 0;
    for (int i = 1; i + w <= n; ++i) {
        int cp = pp[static_cast<size_t>(i + w)] - pp[static_cast<size_t>(i)];
        int cg = pg[static_cast<size_t>(i + w)] - pg[static_cast<size_t>(i)];
        if (cp != cg) ++mismatches;
    }
    return static_cast<double>(mismatches) / static_cast<double>(n - w);
}

double seg_f1(const std::vector<Segmentation>& preds,
              const std::vector<Segmentation>& golds) {
    if (preds.size() != golds.size()) throw std::invalid_argument("pred/gold count mismatch");
    long long tp = 0, pred_total = 0, gold_total = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        pred_total += static_cast<long long>(preds[i].boundaries.size());
        gold_total += static_cast<long long>(golds[i].boundaries.size());
        const auto& g = golds[i].boundaries;
        for (int b : preds[i].boundaries) {
            if (std::binary_search(g.begin(), g.end(), b)) ++tp;
        }
    }
    if (pred_total == 0 && gold_total == 0) return 1.0;
    if (pred_total == 0 || gold_total == 0) return 0.0;
    double p = static_cast<double>(tp) / static_cast<double>(pred_total);
    double r = static_cast<double>(tp) / static_cast<double>(gold_total);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

}  // namespace topicseg
