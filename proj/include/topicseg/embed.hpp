#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "topicseg/tokenize.hpp"

namespace topicseg {

struct VectorTable {
    int dim = 0;
    std::unordered_map<std::string, Eigen::VectorXd> entries;

    const Eigen::VectorXd* find(const std::string& token) const {
        auto it = entries.find(token);
        return it == entries.end() ? nullptr : &it->second;
    }
};

// Text file, one "token v1 ... vD" per line. D is inferred from the first
// line; a line with a different arity is rejected. More than
// `bad_line_tolerance` rejected lines is a hard error naming the first
// offending line. Duplicate tokens: last occurrence wins with a warning.
VectorTable load_word_vectors(const std::string& path, int bad_line_tolerance = 0);

struct FreqTable {
    std::unordered_map<std::string, long long> counts;
    long long total = 0;

    // Relative frequency in [0,1]; 0 for unseen tokens.
    double frequency(const std::string& token) const {
        auto it = counts.find(token);
        if (it == counts.end() || total == 0) return 0.0;
        return static_cast<double>(it->second) / static_cast<double>(total);
    }
};

FreqTable word_frequencies(const std::vector<std::string>& tokens);
FreqTable word_frequencies_from_file(const std::string& path, Tokenizer tok);

struct TermVocab {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> index;

    explicit TermVocab(std::vector<std::string> toks);
};

enum class EncoderKind { mean_word_vector, term_frequency, remote };

struct EncoderSpec {
    EncoderKind kind = EncoderKind::mean_word_vector;
    Tokenizer tokenizer = Tokenizer::whitespace_lower;

    std::shared_ptr<const VectorTable> vectors;  // mean_word_vector
    std::shared_ptr<const TermVocab> vocab;      // term_frequency
    std::string endpoint;                        // remote, e.g. http://host:port

    int timeout_ms = 5000;
    int retries = 3;
    int batch = 32;

    static EncoderSpec mean_vectors(std::shared_ptr<const VectorTable> table,
                                    Tokenizer tok = Tokenizer::whitespace_lower);
    static EncoderSpec term_frequency_over(std::vector<std::string> vocabulary,
                                           Tokenizer tok = Tokenizer::whitespace_lower);
    static EncoderSpec remote_endpoint(std::string url,
                                       Tokenizer tok = Tokenizer::whitespace_lower);
};

// Sentence encoding E(text):
//  - mean_word_vector: arithmetic mean over in-vocabulary tokens (OOV
//    skipped; no in-vocabulary token -> zero vector, with a warning)
//  - term_frequency: raw count vector over the fixed vocabulary
//  - remote: the server's vector, verbatim
Eigen::VectorXd encode(const std::string& text, const EncoderSpec& spec);

// POST {endpoint}/encode with {"texts": [...]}; expects
// {"vectors": [[...], ...], "dim": D}. Order preserved; retried with
// exponential backoff on transport errors and non-2xx statuses.
std::vector<Eigen::VectorXd> remote_encode_batch(const std::vector<std::string>& texts,
                                                 const EncoderSpec& spec);

// u.v / (|u||v|); 0 when either norm is zero so downstream comparisons stay
// total on empty or all-OOV text.
double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

}  // namespace topicseg
