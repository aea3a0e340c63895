#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace topicseg {

struct Utterance {
    std::string speaker;
    std::string text;  // raw, untokenized; non-empty after trimming
};

// A multi-turn dialogue. Boundaries use 1-based utterance indices: a
// boundary b means utterance b opens a new topic segment, so valid values
// lie in [2, n]. When topic labels are present there is one per segment,
// i.e. |gold_topics| == |gold_boundaries| + 1.
struct Dialogue {
    std::string id;
    std::vector<Utterance> utterances;
    std::optional<std::vector<int>> gold_boundaries;
    std::optional<std::vector<std::string>> gold_topics;

    int size() const { return static_cast<int>(utterances.size()); }

    // Throws std::runtime_error naming the dialogue id and offending field.
    void validate() const;
};

// Synthetic multi-topic dialogues built by concatenating single-topic ones.
struct SynthSpec {
    int min_segments = 1;
    int max_segments = 1;
    int num_dialogues = 1;
    std::map<std::string, std::vector<Dialogue>> pools;  // topic -> sources
    std::vector<std::string> stoplist;  // redundancy patterns, applied to sources
    std::uint64_t rng_seed = 0;
};

// One JSON object per line:
//   {"id": ..., "utterances": [{"speaker":..., "text":...}, ...],
//    "gold_boundaries": [...]?, "gold_topics": [...]?}
// Malformed lines raise errors naming the 1-based line number.
std::vector<Dialogue> load_dialogues(const std::string& path, bool require_gold = false);
void save_dialogues(const std::vector<Dialogue>& dialogues, const std::string& path);

std::string dialogue_to_json_line(const Dialogue& d);
Dialogue dialogue_from_json_line(const std::string& line, int line_number);

// Removes utterances whose trimmed text matches a stoplist pattern
// (case-insensitive; a trailing '*' makes the pattern a prefix matcher).
// Gold boundaries are re-indexed to the surviving utterances. Removal never
// empties a gold segment: if it would, the segment's last matching
// utterance is kept and a warning is emitted.
Dialogue strip_redundant(const Dialogue& d, const std::vector<std::string>& stoplist);

bool matches_stoplist(const std::string& text, const std::vector<std::string>& stoplist);

// Builds spec.num_dialogues dialogues, each the concatenation of s
// single-topic sources (s uniform in [min_segments, max_segments]) with
// distinct adjacent topics, boundaries at the join points and topics taken
// from the pool keys. Deterministic for a fixed seed.
std::vector<Dialogue> synth_concat(const SynthSpec& spec);

}  // namespace topicseg
