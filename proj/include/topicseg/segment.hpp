#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "topicseg/corpus.hpp"
#include "topicseg/embed.hpp"

namespace topicseg {

struct SegParams {
    int max_span = 8;        // R: most utterances per segment
    int step = 2;            // k: candidate cuts are checked every k utterances
    int context = 2;         // d: context width, in utterances, on each side
    double theta = 0.6;      // similarity threshold that vetoes weak cuts

    void validate() const;
};

// Predicted segmentation of an n-utterance dialogue. Boundaries follow the
// Dialogue convention: 1-based index of the first utterance of a new
// segment, strictly increasing, in [2, n].
struct Segmentation {
    int n = 0;
    std::vector<int> boundaries;

    // Inclusive [start, end] spans covering 1..n.
    std::vector<std::pair<int, int>> segments() const;
    int segment_count() const { return static_cast<int>(boundaries.size()) + 1; }

    static Segmentation from_boundaries(int n, std::vector<int> boundaries);
};

// Per-candidate costs recorded while segmenting, for inspection and tests.
struct SegTrace {
    struct Candidate {
        int length = 0;  // utterances in the candidate piece
        double cost = 0.0;
        std::optional<double> left_sim;
        std::optional<double> right_sim;
    };
    struct Iteration {
        int start = 0;  // first utterance of the open segment
        std::vector<Candidate> candidates;
        std::optional<int> chosen_length;  // absent when the segment was force-closed
        bool forced = false;
    };
    std::vector<Iteration> iterations;
};

// Greedy segmentation. Starting a segment at utterance i, candidate pieces
// u_i..u_{i+j-1} are scored at every j divisible by `step` (and at the
// dialogue end) by the larger of their cosine similarities to the
// `context` utterances on each side; a missing side at a dialogue edge is
// dropped from the max. The lowest-cost candidate wins (shortest on ties).
// If even the lowest cost exceeds theta the segment is force-closed after
// `max_span` utterances.
Segmentation segment_dialogue(const Dialogue& dialogue, const EncoderSpec& enc,
                              const SegParams& params, SegTrace* trace = nullptr);

struct TilingParams {
    int pseudo_sentence_len = 10;  // tokens per pseudo-sentence
    int window = 6;                // smoothing width over gap scores
    int block = 6;                 // pseudo-sentences per comparison block

    void validate() const;
};

// TextTiling baseline: fixed-length pseudo-sentences, cosine gap scores of
// adjacent blocks, Hearst depth scoring with a mean - stddev/2 cutoff,
// boundaries snapped to the nearest utterance start.
Segmentation texttiling(const Dialogue& dialogue, const EncoderSpec& enc,
                        const TilingParams& params);

// Mean absolute difference in segment counts, paired by position.
double seg_mae(const std::vector<Segmentation>& preds,
               const std::vector<Segmentation>& golds);

// Fraction of length-w windows whose enclosed boundary counts differ.
double window_diff(const Segmentation& pred, const Segmentation& gold, int w = 4);

// Micro-averaged boundary F1 over the corpus; a prediction is correct only
// at the exact gold index. Both sides empty -> 1, exactly one empty -> 0.
double seg_f1(const std::vector<Segmentation>& preds,
              const std::vector<Segmentation>& golds);

}  // namespace topicseg
