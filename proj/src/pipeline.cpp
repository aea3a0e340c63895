#include "topicseg/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "topicseg/eval.hpp"
#include "topicseg/log.hpp"
#include "topicseg/matrix_io.hpp"
#include "topicseg/sha256.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace topicseg {

namespace {

// Topic label that marks a gold segment as excluded from clustering
// evaluation.
constexpr const char* kIgnoreTopic = "ignore";

void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& allowed) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) {
            throw std::runtime_error("unknown config key '" + where + key + "'");
        }
    }
}

}  // namespace

PipelineConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": bad JSON: " + e.what());
    }

    PipelineConfig c;
    check_keys(j, "", {"seed", "paths", "encoder", "segment", "sif", "cluster", "eval", "jobs"});
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        check_keys(p, "paths.", {"dialogues", "vectors", "workdir"});
        if (p.contains("dialogues")) c.dialogues_path = p["dialogues"].get<std::string>();
        if (p.contains("vectors")) c.vectors_path = p["vectors"].get<std::string>();
        if (p.contains("workdir")) c.workdir = p["workdir"].get<std::string>();
    }
    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        check_keys(e, "encoder.",
                   {"kind", "tokenizer", "endpoint", "timeout_ms", "retries", "batch",
                    "vocabulary"});
        if (e.contains("kind")) c.encoder_kind = e["kind"].get<std::string>();
        if (e.contains("tokenizer")) c.tokenizer = e["tokenizer"].get<std::string>();
        if (e.contains("endpoint")) c.endpoint = e["endpoint"].get<std::string>();
        if (e.contains("timeout_ms")) c.encoder_timeout_ms = e["timeout_ms"].get<int>();
        if (e.contains("retries")) c.encoder_retries = e["retries"].get<int>();
        if (e.contains("batch")) c.encoder_batch = e["batch"].get<int>();
        if (e.contains("vocabulary")) c.vocabulary = e["vocabulary"].get<std::vector<std::string>>();
    }
    if (j.contains("segment")) {
        const auto& s = j["segment"];
        check_keys(s, "segment.", {"R", "k", "d", "theta"});
        if (s.contains("R")) c.seg.max_span = s["R"].get<int>();
        if (s.contains("k")) c.seg.step = s["k"].get<int>();
        if (s.contains("d")) c.seg.context = s["d"].get<int>();
        if (s.contains("theta")) c.seg.theta = s["theta"].get<double>();
    }
    if (j.contains("sif")) {
        const auto& s = j["sif"];
        check_keys(s, "sif.", {"a", "power_iters", "power_tol"});
        if (s.contains("a")) c.sif.a = s["a"].get<double>();
        if (s.contains("power_iters")) c.sif.power_iters = s["power_iters"].get<int>();
        if (s.contains("power_tol")) c.sif.power_tol = s["power_tol"].get<double>();
    }
    if (j.contains("cluster")) {
        const auto& cl = j["cluster"];
        check_keys(cl, "cluster.", {"m", "alpha", "arch", "pretrain", "selftrain", "kmeans"});
        if (cl.contains("m")) c.cluster_m = cl["m"].get<int>();
        if (cl.contains("alpha")) c.alpha = cl["alpha"].get<double>();
        if (cl.contains("arch")) c.arch = cl["arch"].get<std::vector<int>>();
        if (cl.contains("pretrain")) {
            const auto& p = cl["pretrain"];
            check_keys(p, "cluster.pretrain.", {"epochs", "batch_size", "learning_rate", "momentum"});
            if (p.contains("epochs")) c.pretrain.epochs = p["epochs"].get<int>();
            if (p.contains("batch_size")) c.pretrain.batch_size = p["batch_size"].get<int>();
            if (p.contains("learning_rate")) c.pretrain.learning_rate = p["learning_rate"].get<double>();
            if (p.contains("momentum")) c.pretrain.momentum = p["momentum"].get<double>();
        }
        if (cl.contains("selftrain")) {
            const auto& s = cl["selftrain"];
            check_keys(s, "cluster.selftrain.",
                       {"learning_rate", "update_interval", "iter_max", "batch_size",
                        "freeze_centroids"});
            if (s.contains("learning_rate")) c.selftrain.learning_rate = s["learning_rate"].get<double>();
            if (s.contains("update_interval")) c.selftrain.update_interval = s["update_interval"].get<int>();
            if (s.contains("iter_max")) c.selftrain.iter_max = s["iter_max"].get<int>();
            if (s.contains("batch_size")) c.selftrain.batch_size = s["batch_size"].get<int>();
            if (s.contains("freeze_centroids")) c.selftrain.freeze_centroids = s["freeze_centroids"].get<bool>();
        }
        if (cl.contains("kmeans")) {
            const auto& k = cl["kmeans"];
            check_keys(k, "cluster.kmeans.", {"restarts", "max_iters", "tol"});
            if (k.contains("restarts")) c.kmeans_params.restarts = k["restarts"].get<int>();
            if (k.contains("max_iters")) c.kmeans_params.max_iters = k["max_iters"].get<int>();
            if (k.contains("tol")) c.kmeans_params.tol = k["tol"].get<double>();
        }
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        check_keys(e, "eval.", {"f1_threshold", "overlap_threshold", "windowdiff_w"});
        if (e.contains("f1_threshold")) c.f1_threshold = e["f1_threshold"].get<double>();
        if (e.contains("overlap_threshold")) c.overlap_threshold = e["overlap_threshold"].get<double>();
        if (e.contains("windowdiff_w")) c.windowdiff_w = e["windowdiff_w"].get<int>();
    }
    return c;
}

std::string config_to_json(const PipelineConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["paths"] = {{"dialogues", c.dialogues_path}, {"vectors", c.vectors_path},
                  {"workdir", c.workdir}};
    j["encoder"] = {{"kind", c.encoder_kind},       {"tokenizer", c.tokenizer},
                    {"endpoint", c.endpoint},       {"timeout_ms", c.encoder_timeout_ms},
                    {"retries", c.encoder_retries}, {"batch", c.encoder_batch},
                    {"vocabulary", c.vocabulary}};
    j["segment"] = {{"R", c.seg.max_span}, {"k", c.seg.step}, {"d", c.seg.context},
                    {"theta", c.seg.theta}};
    j["sif"] = {{"a", c.sif.a}, {"power_iters", c.sif.power_iters}, {"power_tol", c.sif.power_tol}};
    j["cluster"] = {
        {"m", c.cluster_m},
        {"alpha", c.alpha},
        {"arch", c.arch},
        {"pretrain",
         {{"epochs", c.pretrain.epochs},
          {"batch_size", c.pretrain.batch_size},
          {"learning_rate", c.pretrain.learning_rate},
          {"momentum", c.pretrain.momentum}}},
        {"selftrain",
         {{"learning_rate", c.selftrain.learning_rate},
          {"update_interval", c.selftrain.update_interval},
          {"iter_max", c.selftrain.iter_max},
          {"batch_size", c.selftrain.batch_size},
          {"freeze_centroids", c.selftrain.freeze_centroids}}},
        {"kmeans",
         {{"restarts", c.kmeans_params.restarts},
          {"max_iters", c.kmeans_params.max_iters},
          {"tol", c.kmeans_params.tol}}}};
    j["eval"] = {{"f1_threshold", c.f1_threshold},
                 {"overlap_threshold", c.overlap_threshold},
                 {"windowdiff_w", c.windowdiff_w}};
    return j.dump(2);
}

void validate_config(const PipelineConfig& c) {
    if (c.dialogues_path.empty()) throw std::runtime_error("paths.dialogues is required");
    if (!fs::exists(c.dialogues_path)) {
        throw std::runtime_error("dialogues file not found: " + c.dialogues_path);
    }
    if (!c.vectors_path.empty() && !fs::exists(c.vectors_path)) {
        throw std::runtime_error("vectors file not found: " + c.vectors_path);
    }
    c.seg.validate();
    tokenizer_from_name(c.tokenizer);
    if (c.encoder_kind != "mean_word_vector" && c.encoder_kind != "term_frequency" &&
        c.encoder_kind != "remote") {
        throw std::runtime_error("unknown encoder kind: " + c.encoder_kind);
    }
    if (c.encoder_kind == "mean_word_vector" && c.vectors_path.empty()) {
        throw std::runtime_error("encoder kind mean_word_vector needs paths.vectors");
    }
    if (c.encoder_kind == "remote" && c.endpoint.empty()) {
        throw std::runtime_error("encoder kind remote needs encoder.endpoint");
    }
}

EncoderSpec make_encoder(const PipelineConfig& c, const std::vector<Dialogue>& dialogues) {
    Tokenizer tok = tokenizer_from_name(c.tokenizer);
    if (c.encoder_kind == "mean_word_vector") {
        auto table = std::make_shared<VectorTable>(load_word_vectors(c.vectors_path));
        return EncoderSpec::mean_vectors(std::move(table), tok);
    }
    if (c.encoder_kind == "term_frequency") {
        std::vector<std::string> vocab = c.vocabulary;
        if (vocab.empty()) {
            std::set<std::string> seen;
            for (const auto& d : dialogues) {
                for (const auto& u : d.utterances) {
                    for (auto& t : tokenize(u.text, tok)) seen.insert(t);
                }
            }
            vocab.assign(seen.begin(), seen.end());
        }
        return EncoderSpec::term_frequency_over(std::move(vocab), tok);
    }
    EncoderSpec spec = EncoderSpec::remote_endpoint(c.endpoint, tok);
    spec.timeout_ms = c.encoder_timeout_ms;
    spec.retries = c.encoder_retries;
    spec.batch = c.encoder_batch;
    return spec;
}

std::vector<Segmentation> stage_segment(const PipelineConfig& c,
                                        const std::vector<Dialogue>& dialogues) {
    EncoderSpec enc = make_encoder(c, dialogues);
    std::vector<Segmentation> out(dialogues.size());
    unsigned jobs = c.jobs > 0 ? static_cast<unsigned>(c.jobs)
                               : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(dialogues.size()));
    if (jobs <= 1) {
        for (size_t i = 0; i < dialogues.size(); ++i) {
            out[i] = segment_dialogue(dialogues[i], enc, c.seg);
        }
        return out;
    }
    std::vector<std::thread> workers;
    std::vector<std::string> errors(jobs);
    for (unsigned w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w]() {
            try {
                for (size_t i = w; i < dialogues.size(); i += jobs) {
                    out[i] = segment_dialogue(dialogues[i], enc, c.seg);
                }
            } catch (const std::exception& e) {
                errors[w] = e.what();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors) {
        if (!e.empty()) throw std::runtime_error("segmentation worker failed: " + e);
    }
    return out;
}

std::vector<std::string> segment_texts(const Dialogue& d, const Segmentation& seg) {
    std::vector<std::string> texts;
    for (auto [lo, hi] : seg.segments()) {
        std::string text;
        for (int i = lo; i <= hi; ++i) {
            if (!text.empty()) text += ' ';
            text += d.utterances[static_cast<size_t>(i - 1)].text;
        }
        texts.push_back(std::move(text));
    }
    return texts;
}

namespace {

std::string file_sha256(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

struct Manifest {
    json data;

    static Manifest load_or_empty(const std::string& path) {
        Manifest m;
        std::ifstream in(path);
        if (in) {
            try {
                in >> m.data;
            } catch (const json::exception&) {
                m.data = json::object();  // unreadable manifest: rebuild everything
            }
        }
        if (!m.data.is_object()) m.data = json::object();
        if (!m.data.contains("stages")) m.data["stages"] = json::object();
        return m;
    }

    bool stage_current(const std::string& name, const std::string& input_hash,
                       const std::vector<std::string>& outputs) const {
        const auto& stages = data["stages"];
        if (!stages.contains(name)) return false;
        if (stages[name].value("input_hash", std::string()) != input_hash) return false;
        for (const auto& f : outputs) {
            if (!fs::exists(f)) return false;
        }
        return true;
    }

    void record(const std::string& name, const std::string& input_hash,
                const std::vector<std::string>& outputs) {
        data["stages"][name] = {{"input_hash", input_hash}, {"outputs", outputs}};
    }

    void save(const std::string& path) {
        std::ofstream out(path, std::ios::trunc);
        out << data.dump(2) << "\n";
    }
};

struct SegmentRecord {
    std::string dialogue_id;
    int start = 0;
    int end = 0;
};

}  // namespace

int run_pipeline(const PipelineConfig& config) {
    std::string current_stage = "setup";
    try {
        validate_config(config);
        fs::create_directories(config.workdir);
        const std::string config_json = config_to_json(config);
        const std::string config_hash = sha256_hex(config_json);
        std::cerr << "resolved config:\n" << config_json << "\n";

        const std::string manifest_path = config.workdir + "/manifest.json";
        const std::string segments_path = config.workdir + "/segments.jsonl";
        const std::string embeddings_path = config.workdir + "/embeddings.bin";
        const std::string model_path = config.workdir + "/model.json";
        const std::string assignments_path = config.workdir + "/assignments.jsonl";
        const std::string report_path = config.workdir + "/report.json";

        Manifest manifest = Manifest::load_or_empty(manifest_path);
        manifest.data["tool_version"] = "0.1.0";
        manifest.data["seed"] = config.seed;
        manifest.data["config_hash"] = config_hash;

        std::vector<Dialogue> dialogues = load_dialogues(config.dialogues_path);
        if (dialogues.empty()) throw std::runtime_error("no dialogues in input");

        // --- segment --------------------------------------------------------
        current_stage = "segment";
        std::string seg_hash = sha256_hex(config_hash + file_sha256(config.dialogues_path));
        std::vector<Segmentation> segs;
        if (manifest.stage_current("segment", seg_hash, {segments_path})) {
            std::cerr << "segment: up to date, skipping\n";
            std::ifstream in(segments_path);
            std::string line;
            int line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (line.empty()) continue;
                json j;
                try {
                    j = json::parse(line);
                } catch (const json::exception& e) {
                    throw std::runtime_error(segments_path + ":" + std::to_string(line_no) +
                                             ": corrupt artifact: " + e.what());
                }
                size_t idx = segs.size();
                if (idx >= dialogues.size()) throw std::runtime_error(segments_path + ": extra rows");
                if (j.at("id").get<std::string>() != dialogues[idx].id) {
                    throw std::runtime_error(segments_path + ":" + std::to_string(line_no) +
                                             ": dialogue id mismatch (corrupt artifact)");
                }
                segs.push_back(Segmentation::from_boundaries(
                    dialogues[idx].size(), j.at("boundaries").get<std::vector<int>>()));
            }
            if (segs.size() != dialogues.size()) {
                throw std::runtime_error(segments_path + ": row count mismatch");
            }
        } else {
            segs = stage_segment(config, dialogues);
            std::ofstream out(segments_path, std::ios::trunc);
            for (size_t i = 0; i < segs.size(); ++i) {
                json j;
                j["id"] = dialogues[i].id;
                j["boundaries"] = segs[i].boundaries;
                out << j.dump() << "\n";
            }
            manifest.record("segment", seg_hash, {segments_path});
            manifest.save(manifest_path);
        }

        // --- sif --------------------------------------------------------------
        current_stage = "sif";
        std::vector<SegmentRecord> records;
        std::vector<std::string> texts;
        for (size_t i = 0; i < segs.size(); ++i) {
            auto st = segment_texts(dialogues[i], segs[i]);
            auto spans = segs[i].segments();
            for (size_t s = 0; s < st.size(); ++s) {
                records.push_back({dialogues[i].id, spans[s].first, spans[s].second});
                texts.push_back(std::move(st[s]));
            }
        }

        std::string sif_hash = sha256_hex(config_hash + file_sha256(segments_path) +
                                          (config.vectors_path.empty()
                                               ? std::string("one-hot")
                                               : file_sha256(config.vectors_path)));
        Eigen::MatrixXd embeddings;
        if (manifest.stage_current("sif", sif_hash, {embeddings_path})) {
            std::cerr << "sif: up to date, skipping\n";
            embeddings = load_matrix(embeddings_path);
            if (embeddings.rows() != static_cast<Eigen::Index>(texts.size())) {
                throw std::runtime_error(embeddings_path + ": row count mismatch");
            }
        } else {
            Tokenizer tok = tokenizer_from_name(config.tokenizer);
            VectorTable table;
            if (!config.vectors_path.empty()) {
                table = load_word_vectors(config.vectors_path);
            } else {
                // one-hot vectors over the corpus vocabulary
                std::set<std::string> vocab;
                for (const auto& t : texts) {
                    for (auto& w : tokenize(t, tok)) vocab.insert(w);
                }
                table.dim = static_cast<int>(vocab.size());
                int idx = 0;
                for (const auto& w : vocab) {
                    Eigen::VectorXd v = Eigen::VectorXd::Zero(table.dim);
                    v[idx++] = 1.0;
                    table.entries[w] = std::move(v);
                }
            }
            std::vector<std::string> all_tokens;
            for (const auto& t : texts) {
                for (auto& w : tokenize(t, tok)) all_tokens.push_back(std::move(w));
            }
            FreqTable freq = word_frequencies(all_tokens);
            SifResult sif = sif_embed(texts, table, freq, config.sif, tok);
            embeddings = std::move(sif.embeddings);
            save_matrix(embeddings, embeddings_path);
            manifest.record("sif", sif_hash, {embeddings_path});
            manifest.save(manifest_path);
        }

        // --- cluster ----------------------------------------------------------
        current_stage = "cluster";
        int m = config.cluster_m;
        if (m <= 0) {
            std::set<std::string> topics;
            for (const auto& d : dialogues) {
                if (d.gold_topics) {
                    for (const auto& t : *d.gold_topics) {
                        if (t != kIgnoreTopic) topics.insert(t);
                    }
                }
            }
            m = std::max<int>(2, static_cast<int>(topics.size()));
        }

        std::string cluster_hash = sha256_hex(config_hash + file_sha256(embeddings_path) +
                                              std::to_string(m));
        std::vector<int> assignments;
        if (manifest.stage_current("cluster", cluster_hash, {model_path, assignments_path})) {
            std::cerr << "cluster: up to date, skipping\n";
            (void)load_model(model_path);  // checksum validation
            std::ifstream in(assignments_path);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                assignments.push_back(json::parse(line).at("cluster").get<int>());
            }
            if (assignments.size() != records.size()) {
                throw std::runtime_error(assignments_path + ": row count mismatch");
            }
        } else {
            std::vector<int> arch = {static_cast<int>(embeddings.cols())};
            arch.insert(arch.end(), config.arch.begin(), config.arch.end());
            SAEModel sae = sae_init(arch, config.seed);
            PretrainParams pre = config.pretrain;
            pre.batch_size = std::min<int>(pre.batch_size, static_cast<int>(embeddings.rows()));
            double loss = sae_pretrain(sae, embeddings, pre, config.seed);
            std::cerr << "cluster: pretrain reconstruction loss " << loss << "\n";

            Eigen::MatrixXd latent = encode_latent(sae, embeddings);
            KMeansResult km = kmeans(latent, m, config.kmeans_params, config.seed);
            ClusterModel model;
            model.sae = std::move(sae);
            model.centroids = std::move(km.centroids);
            model.alpha = config.alpha;
            model.seed = config.seed;
            SelfTrainHistory hist = self_train(model, embeddings, config.selftrain, assignments);
            std::cerr << "cluster: self-training ran " << hist.iterations << " iterations"
                      << (hist.converged ? " (converged)" : "") << "\n";

            save_model(model, model_path);
            std::ofstream out(assignments_path, std::ios::trunc);
            for (size_t i = 0; i < records.size(); ++i) {
                json j;
                j["dialogue_id"] = records[i].dialogue_id;
                j["start"] = records[i].start;
                j["end"] = records[i].end;
                j["cluster"] = assignments[i];
                out << j.dump() << "\n";
            }
            manifest.record("cluster", cluster_hash, {model_path, assignments_path});
            manifest.save(manifest_path);
        }

        // --- eval -------------------------------------------------------------
        current_stage = "eval";
        bool has_gold = true;
        for (const auto& d : dialogues) {
            has_gold = has_gold && d.gold_boundaries.has_value() && d.gold_topics.has_value();
        }
        if (!has_gold) {
            warn("eval skipped: dialogues lack gold boundaries/topics");
            return 0;
        }

        std::vector<Segmentation> golds;
        for (const auto& d : dialogues) {
            golds.push_back(Segmentation::from_boundaries(d.size(), *d.gold_boundaries));
        }
        double mae = seg_mae(segs, golds);
        double wd = 0.0;
        int wd_count = 0;
        for (size_t i = 0; i < segs.size(); ++i) {
            if (segs[i].n > config.windowdiff_w) {
                wd += window_diff(segs[i], golds[i], config.windowdiff_w);
                ++wd_count;
            }
        }
        if (wd_count > 0) wd /= wd_count;
        double f1 = seg_f1(segs, golds);

        // gold topic per predicted segment via best overlap
        std::vector<int> eval_labels;
        std::vector<std::string> eval_topics;
        int excluded = 0;
        {
            size_t row = 0;
            for (size_t i = 0; i < segs.size(); ++i) {
                auto pred_spans = segs[i].segments();
                auto gold_spans = golds[i].segments();
                const auto& topics = *dialogues[i].gold_topics;
                for (const auto& span : pred_spans) {
                    double best = -1.0;
                    size_t best_g = 0;
                    for (size_t gidx = 0; gidx < gold_spans.size(); ++gidx) {
                        int lo = std::max(span.first, gold_spans[gidx].first);
                        int hi = std::min(span.second, gold_spans[gidx].second);
                        int inter = std::max(0, hi - lo + 1);
                        int len_p = span.second - span.first + 1;
                        int len_g = gold_spans[gidx].second - gold_spans[gidx].first + 1;
                        double overlap = 2.0 * inter / static_cast<double>(len_p + len_g);
                        if (overlap > best) {
                            best = overlap;
                            best_g = gidx;
                        }
                    }
                    if (best >= config.overlap_threshold && topics[best_g] != kIgnoreTopic) {
                        eval_labels.push_back(assignments[row]);
                        eval_topics.push_back(topics[best_g]);
                    } else {
                        ++excluded;
                    }
                    ++row;
                }
            }
        }

        json report;
        report["segmentation"] = {{"MAE", mae}, {"WindowDiff", wd}, {"F1", f1}};
        if (!eval_labels.empty()) {
            ClusterEvalReport ce = cluster_metrics(eval_labels, eval_topics, config.f1_threshold);
            report["N_c"] = ce.retained_clusters;
            report["C_rate"] = ce.coverage_rate;
            report["A_rate"] = ce.accurate_rate;
            report["A_rate_covered"] = ce.accurate_rate_covered;
            report["NMI"] = ce.nmi_score;
            json per = json::array();
            for (const auto& row : ce.per_cluster) {
                per.push_back({{"cluster", row.cluster},
                               {"topic", row.topic},
                               {"f1", row.f1},
                               {"retained", row.retained}});
            }
            report["per_cluster"] = std::move(per);
        } else {
            warn("no predicted segment matched a gold segment; cluster metrics omitted");
        }
        report["excluded_segments"] = excluded;

        // end-to-end score over cluster-labeled predictions
        {
            std::vector<TopicSegmentation> preds, gold_ts;
            size_t row = 0;
            for (size_t i = 0; i < segs.size(); ++i) {
                TopicSegmentation p;
                p.seg = segs[i];
                for (size_t s = 0; s < segs[i].segments().size(); ++s) {
                    p.topics.push_back("c" + std::to_string(assignments[row++]));
                }
                preds.push_back(std::move(p));
                gold_ts.push_back({golds[i], *dialogues[i].gold_topics});
            }
            report["F1_all"] = e2e_f1(preds, gold_ts, config.overlap_threshold);
        }

        std::ofstream out(report_path, std::ios::trunc);
        out << report.dump(2) << "\n";
        std::string eval_hash = sha256_hex(config_hash + file_sha256(assignments_path));
        manifest.record("eval", eval_hash, {report_path});
        manifest.save(manifest_path);
        std::cout << report.dump(2) << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "pipeline failed at stage '" << current_stage << "': " << e.what() << "\n";
        return 1;
    }
}

}  // namespace topicseg
