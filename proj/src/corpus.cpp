#include "topicseg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "topicseg/log.hpp"

using nlohmann::json;

namespace topicseg {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

[[noreturn]] void invalid(const std::string& id, const std::string& what) {
    throw std::runtime_error("dialogue '" + id + "': " + what);
}

}  // namespace

void Dialogue::validate() const {
    if (utterances.empty()) invalid(id, "no utterances");
    for (size_t i = 0; i < utterances.size(); ++i) {
        if (trim(utterances[i].text).empty()) {
            invalid(id, "utterance " + std::to_string(i + 1) + " empty after trimming");
        }
    }
    const int n = size();
    if (gold_boundaries) {
        const auto& b = *gold_boundaries;
        for (size_t i = 0; i < b.size(); ++i) {
            if (b[i] < 2 || b[i] > n) {
                invalid(id, "gold_boundaries value " + std::to_string(b[i]) +
                                " outside [2, " + std::to_string(n) + "]");
            }
            if (i > 0 && b[i] <= b[i - 1]) invalid(id, "gold_boundaries not sorted");
        }
    }
    if (gold_topics) {
        // absent boundaries mean a single-segment dialogue
        size_t want = (gold_boundaries ? gold_boundaries->size() : 0) + 1;
        if (gold_topics->size() != want) {
            invalid(id, "gold_topics length " + std::to_string(gold_topics->size()) +
                            " != segments " + std::to_string(want));
        }
    }
}

Dialogue dialogue_from_json_line(const std::string& line, int line_number) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw std::runtime_error("line " + std::to_string(line_number) +
                                 ": malformed JSON: " + e.what());
    }
    Dialogue d;
    try {
        d.id = j.at("id").get<std::string>();
        for (const auto& u : j.at("utterances")) {
            d.utterances.push_back({u.at("speaker").get<std::string>(),
                                    u.at("text").get<std::string>()});
        }
        if (j.contains("gold_boundaries")) {
            d.gold_boundaries = j["gold_boundaries"].get<std::vector<int>>();
        }
        if (j.contains("gold_topics")) {
            d.gold_topics = j["gold_topics"].get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("line " + std::to_string(line_number) +
                                 ": bad dialogue object: " + e.what());
    }
    d.validate();
    return d;
}

std::string dialogue_to_json_line(const Dialogue& d) {
    json j;
    j["id"] = d.id;
    json utts = json::array();
    for (const auto& u : d.utterances) {
        utts.push_back({{"speaker", u.speaker}, {"text", u.text}});
    }
    j["utterances"] = std::move(utts);
    if (d.gold_boundaries) j["gold_boundaries"] = *d.gold_boundaries;
    if (d.gold_topics) j["gold_topics"] = *d.gold_topics;
    return j.dump();
}

std::vector<Dialogue> load_dialogues(const std::string& path, bool require_gold) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<Dialogue> out;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) continue;
        Dialogue d = dialogue_from_json_line(line, line_number);
        if (require_gold && !d.gold_boundaries) {
            throw std::runtime_error("dialogue '" + d.id +
                                     "': gold_boundaries required but missing");
        }
        out.push_back(std::move(d));
    }
    return out;
}

void save_dialogues(const std::vector<Dialogue>& dialogues, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    for (const auto& d : dialogues) out << dialogue_to_json_line(d) << "\n";
}

bool matches_stoplist(const std::string& text, const std::vector<std::string>& stoplist) {
    std::string t = lower(trim(text));
    for (const auto& raw : stoplist) {
        std::string p = lower(trim(raw));
        if (p.empty()) continue;
        if (p.back() == '*') {
            p.pop_back();
            if (t.compare(0, p.size(), p) == 0) return true;
        } else if (t == p) {
            return true;
        }
    }
    return false;
}

Dialogue strip_redundant(const Dialogue& d, const std::vector<std::string>& stoplist) {
    const int n = d.size();
    std::vector<bool> remove(n, false);
    for (int i = 0; i < n; ++i) {
        remove[static_cast<size_t>(i)] = matches_stoplist(d.utterances[static_cast<size_t>(i)].text, stoplist);
    }

    // Segment starts, 1-based (the whole dialogue is one segment when
    // unlabeled).
    std::vector<int> starts = {1};
    if (d.gold_boundaries) {
        starts.insert(starts.end(), d.gold_boundaries->begin(), d.gold_boundaries->end());
    }
    starts.push_back(n + 1);
    for (size_t s = 0; s + 1 < starts.size(); ++s) {
        int lo = starts[s], hi = starts[s + 1] - 1;
        bool all_removed = true;
        for (int i = lo; i <= hi; ++i) {
            if (!remove[static_cast<size_t>(i - 1)]) { all_removed = false; break; }
        }
        if (all_removed) {
            // keep the segment's last matching utterance
            remove[static_cast<size_t>(hi - 1)] = false;
            warn("dialogue '" + d.id + "': segment starting at utterance " +
                 std::to_string(lo) + " would be emptied; keeping utterance " +
                 std::to_string(hi));
        }
    }

    Dialogue out;
    out.id = d.id;
    std::vector<int> removed_before(static_cast<size_t>(n) + 2, 0);
    for (int i = 1; i <= n; ++i) {
        removed_before[static_cast<size_t>(i)] =
            removed_before[static_cast<size_t>(i - 1)] + (remove[static_cast<size_t>(i - 1)] ? 1 : 0);
        if (!remove[static_cast<size_t>(i - 1)]) out.utterances.push_back(d.utterances[static_cast<size_t>(i - 1)]);
    }
    if (d.gold_boundaries) {
        std::vector<int> nb;
        for (int b : *d.gold_boundaries) {
            nb.push_back(b - removed_before[static_cast<size_t>(b - 1)]);
        }
        out.gold_boundaries = std::move(nb);
    }
    out.gold_topics = d.gold_topics;
    out.validate();
    return out;
}

std::vector<Dialogue> synth_concat(const SynthSpec& spec) {
    if (spec.min_segments < 1 || spec.max_segments < spec.min_segments) {
        throw std::invalid_argument("segments_per_dialogue range invalid");
    }
    if (spec.num_dialogues < 0) throw std::invalid_argument("num_dialogues negative");
    std::vector<std::string> topics;
    for (const auto& [topic, pool] : spec.pools) {
        if (pool.empty()) throw std::invalid_argument("empty pool for topic '" + topic + "'");
        topics.push_back(topic);
    }
    if (topics.empty()) throw std::invalid_argument("no source pools");
    if (spec.max_segments > 1 && topics.size() < 2) {
        throw std::invalid_argument("need at least 2 topics to join distinct adjacent segments");
    }

    std::mt19937_64 rng(spec.rng_seed);
    auto pick = [&rng](size_t count) {
        return static_cast<size_t>(std::uniform_int_distribution<size_t>(0, count - 1)(rng));
    };

    std::vector<Dialogue> out;
    out.reserve(static_cast<size_t>(spec.num_dialogues));
    for (int k = 0; k < spec.num_dialogues; ++k) {
        int s = spec.min_segments +
                static_cast<int>(std::uniform_int_distribution<int>(
                    0, spec.max_segments - spec.min_segments)(rng));
        Dialogue d;
        {
            std::ostringstream oss;
            oss << "synth-" << k;
            d.id = oss.str();
        }
        std::vector<int> boundaries;
        std::vector<std::string> seg_topics;
        int prev_topic = -1;
        for (int seg = 0; seg < s; ++seg) {
            int t;
            do {
                t = static_cast<int>(pick(topics.size()));
            } while (t == prev_topic);
            prev_topic = t;
            const auto& pool = spec.pools.at(topics[static_cast<size_t>(t)]);
            Dialogue source = strip_redundant(pool[pick(pool.size())], spec.stoplist);
            if (seg > 0) boundaries.push_back(d.size() + 1);
            for (const auto& u : source.utterances) d.utterances.push_back(u);
            seg_topics.push_back(topics[static_cast<size_t>(t)]);
        }
        d.gold_boundaries = std::move(boundaries);
        d.gold_topics = std::move(seg_topics);
        d.validate();
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace topicseg
