#include "topicseg/embed.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "topicseg/log.hpp"

namespace topicseg {

VectorTable load_word_vectors(const std::string& path, int bad_line_tolerance) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    VectorTable table;
    std::string line;
    int line_number = 0;
    int bad_lines = 0;
    int first_bad_line = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        std::istringstream iss(line);
        std::string token;
        if (!(iss >> token)) continue;
        std::vector<double> values;
        double v;
        while (iss >> v) values.push_back(v);
        if (table.dim == 0) {
            if (values.empty()) {
                throw std::runtime_error(path + ":" + std::to_string(line_number) +
                                         ": no vector components");
            }
            table.dim = static_cast<int>(values.size());
        }
        if (static_cast<int>(values.size()) != table.dim) {
            ++bad_lines;
            if (first_bad_line == 0) first_bad_line = line_number;
            if (bad_lines > bad_line_tolerance) {
                throw std::runtime_error(
                    path + ":" + std::to_string(line_number) + ": expected " +
                    std::to_string(table.dim) + " components, got " +
                    std::to_string(values.size()));
            }
            continue;
        }
        if (table.entries.count(token)) {
            warn("duplicate token '" + token + "' at " + path + ":" +
                 std::to_string(line_number) + "; last occurrence wins");
        }
        table.entries[token] = Eigen::Map<Eigen::VectorXd>(values.data(),
                                                           static_cast<Eigen::Index>(values.size()));
    }
    if (table.entries.empty()) throw std::runtime_error("empty vector file: " + path);
    if (bad_lines > 0) {
        warn(path + ": rejected " + std::to_string(bad_lines) +
             " line(s) with wrong arity (first at line " +
             std::to_string(first_bad_line) + ")");
    }
    return table;
}

FreqTable word_frequencies(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw std::runtime_error("empty corpus");
    FreqTable f;
    for (const auto& t : tokens) ++f.counts[t];
    f.total = static_cast<long long>(tokens.size());
    return f;
}

FreqTable word_frequencies_from_file(const std::string& path, Tokenizer tok) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    FreqTable f;
    std::string line;
    while (std::getline(in, line)) {
        for (auto& t : tokenize(line, tok)) {
            ++f.counts[t];
            ++f.total;
        }
    }
    if (f.total == 0) throw std::runtime_error("empty corpus: " + path);
    return f;
}

TermVocab::TermVocab(std::vector<std::string> toks) : tokens(std::move(toks)) {
    for (size_t i = 0; i < tokens.size(); ++i) {
        index.emplace(tokens[i], static_cast<int>(i));
    }
}

EncoderSpec EncoderSpec::mean_vectors(std::shared_ptr<const VectorTable> table, Tokenizer tok) {
    EncoderSpec s;
    s.kind = EncoderKind::mean_word_vector;
    s.tokenizer = tok;
    s.vectors = std::move(table);
    return s;
}

EncoderSpec EncoderSpec::term_frequency_over(std::vector<std::string> vocabulary, Tokenizer tok) {
    EncoderSpec s;
    s.kind = EncoderKind::term_frequency;
    s.tokenizer = tok;
    s.vocab = std::make_shared<TermVocab>(std::move(vocabulary));
    return s;
}

EncoderSpec EncoderSpec::remote_endpoint(std::string url, Tokenizer tok) {
    EncoderSpec s;
    s.kind = EncoderKind::remote;
    s.tokenizer = tok;
    s.endpoint = std::move(url);
    return s;
}

Eigen::VectorXd encode(const std::string& text, const EncoderSpec& spec) {
    switch (spec.kind) {
        case EncoderKind::mean_word_vector: {
            if (!spec.vectors) throw std::runtime_error("encoder has no vector table");
            const auto& table = *spec.vectors;
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(table.dim);
            int hits = 0;
            for (const auto& tok : tokenize(text, spec.tokenizer)) {
                if (const auto* v = table.find(tok)) {
                    sum += *v;
                    ++hits;
                }
            }
            if (hits == 0) {
                warn("no in-vocabulary token in text; returning zero vector");
                return sum;
            }
            return sum / hits;
        }
        case EncoderKind::term_frequency: {
            if (!spec.vocab) throw std::runtime_error("encoder has no vocabulary");
            Eigen::VectorXd counts =
                Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.vocab->tokens.size()));
            for (const auto& tok : tokenize(text, spec.tokenizer)) {
                auto it = spec.vocab->index.find(tok);
                if (it != spec.vocab->index.end()) counts[it->second] += 1.0;
            }
            return counts;
        }
        case EncoderKind::remote: {
            auto vectors = remote_encode_batch({text}, spec);
            return vectors.at(0);
        }
    }
    throw std::logic_error("unreachable encoder kind");
}

double cosine(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("cosine: length mismatch (" + std::to_string(u.size()) +
                                    " vs " + std::to_string(v.size()) + ")");
    }
    double nu = u.norm();
    double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return u.dot(v) / (nu * nv);
}

}  // namespace topicseg
