#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "topicseg/sha256.hpp"
#include "topicseg/tadam.hpp"

using nlohmann::json;

namespace topicseg {

namespace {

constexpr int kTadamFormatVersion = 1;

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
    Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)].get<double>();
        }
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = arr[static_cast<size_t>(i)].get<double>();
    return v;
}

json att_to_json(const AttentiveParams& a) {
    return {{"ln_gain", vector_to_json(a.ln_gain)}, {"ln_bias", vector_to_json(a.ln_bias)},
            {"ffn_w1", matrix_to_json(a.ffn_w1)},   {"ffn_b1", vector_to_json(a.ffn_b1)},
            {"ffn_w2", matrix_to_json(a.ffn_w2)},   {"ffn_b2", vector_to_json(a.ffn_b2)}};
}

AttentiveParams att_from_json(const json& j) {
    AttentiveParams a;
    a.ln_gain = vector_from_json(j.at("ln_gain"));
    a.ln_bias = vector_from_json(j.at("ln_bias"));
    a.ffn_w1 = matrix_from_json(j.at("ffn_w1"));
    a.ffn_b1 = vector_from_json(j.at("ffn_b1"));
    a.ffn_w2 = matrix_from_json(j.at("ffn_w2"));
    a.ffn_b2 = vector_from_json(j.at("ffn_b2"));
    return a;
}

}  // namespace

void save_tadam(const TadamModel& m, const std::string& path) {
    json payload;
    payload["format_version"] = kTadamFormatVersion;
    payload["params"] = {{"max_segments", m.params.max_segments},
                         {"max_tokens", m.params.max_tokens},
                         {"hidden_dim", m.params.hidden_dim},
                         {"map_features", m.params.map_features},
                         {"beta", m.params.beta},
                         {"max_seq_len", m.params.max_seq_len}};
    payload["bilinear_full"] = m.bilinear_full;
    json slices = json::array();
    for (const auto& s : m.word_map_w) slices.push_back(matrix_to_json(s));
    payload["word_map_w"] = std::move(slices);
    payload["word_map_v"] = vector_to_json(m.word_map_v);
    payload["pool_w"] = vector_to_json(m.pool_w);
    payload["pool_b"] = vector_to_json(m.pool_b);
    payload["att_seg"] = att_to_json(m.att_seg);
    payload["att_resp"] = att_to_json(m.att_resp);
    payload["gru"] = {{"wz", matrix_to_json(m.gru.wz)}, {"wr", matrix_to_json(m.gru.wr)},
                      {"wn", matrix_to_json(m.gru.wn)}, {"uz", matrix_to_json(m.gru.uz)},
                      {"ur", matrix_to_json(m.gru.ur)}, {"un", matrix_to_json(m.gru.un)},
                      {"bz", vector_to_json(m.gru.bz)}, {"br", vector_to_json(m.gru.br)},
                      {"bn", vector_to_json(m.gru.bn)}};
    payload["last_w"] = matrix_to_json(m.last_w);
    payload["last_b"] = vector_to_json(m.last_b);
    payload["score_w"] = vector_to_json(m.score_w);
    payload["score_b"] = m.score_b;
    payload["seed"] = m.seed;
    payload["checksum"] = sha256_hex(payload.dump());

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << payload.dump() << "\n";
}

TadamModel load_tadam(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    json payload;
    try {
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        payload = json::parse(content);  // strict: trailing bytes are an error
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": unreadable model file: " + e.what());
    }
    if (!payload.contains("format_version") ||
        payload["format_version"].get<int>() != kTadamFormatVersion) {
        throw std::runtime_error(path + ": unsupported model format version");
    }
    std::string stored = payload.at("checksum").get<std::string>();
    payload.erase("checksum");
    if (sha256_hex(payload.dump()) != stored) {
        throw std::runtime_error(path + ": checksum mismatch (corrupt model file)");
    }

    TadamModel m;
    const auto& jp = payload.at("params");
    m.params.max_segments = jp.at("max_segments").get<int>();
    m.params.max_tokens = jp.at("max_tokens").get<int>();
    m.params.hidden_dim = jp.at("hidden_dim").get<int>();
    m.params.map_features = jp.at("map_features").get<int>();
    m.params.beta = jp.at("beta").get<double>();
    m.params.max_seq_len = jp.at("max_seq_len").get<int>();
    m.bilinear_full = payload.at("bilinear_full").get<bool>();
    for (const auto& s : payload.at("word_map_w")) m.word_map_w.push_back(matrix_from_json(s));
    m.word_map_v = vector_from_json(payload.at("word_map_v"));
    m.pool_w = vector_from_json(payload.at("pool_w"));
    m.pool_b = vector_from_json(payload.at("pool_b"));
    m.att_seg = att_from_json(payload.at("att_seg"));
    m.att_resp = att_from_json(payload.at("att_resp"));
    const auto& jg = payload.at("gru");
    m.gru.wz = matrix_from_json(jg.at("wz"));
    m.gru.wr = matrix_from_json(jg.at("wr"));
    m.gru.wn = matrix_from_json(jg.at("wn"));
    m.gru.uz = matrix_from_json(jg.at("uz"));
    m.gru.ur = matrix_from_json(jg.at("ur"));
    m.gru.un = matrix_from_json(jg.at("un"));
    m.gru.bz = vector_from_json(jg.at("bz"));
    m.gru.br = vector_from_json(jg.at("br"));
    m.gru.bn = vector_from_json(jg.at("bn"));
    m.last_w = matrix_from_json(payload.at("last_w"));
    m.last_b = vector_from_json(payload.at("last_b"));
    m.score_w = vector_from_json(payload.at("score_w"));
    m.score_b = payload.at("score_b").get<double>();
    m.seed = payload.at("seed").get<std::uint64_t>();
    return m;
}

}  // namespace topicseg
