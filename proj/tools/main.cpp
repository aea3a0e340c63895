#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>
#include <random>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "topicseg/cluster.hpp"
#include "topicseg/corpus.hpp"
#include "topicseg/eval.hpp"
#include "topicseg/matrix_io.hpp"
#include "topicseg/pipeline.hpp"
#include "topicseg/segment.hpp"
#include "topicseg/sif.hpp"
#include "topicseg/tadam.hpp"

using nlohmann::json;
using namespace topicseg;

namespace {

struct EncoderOptions {
    std::string kind = "mean_word_vector";
    std::string vectors_path;
    std::string vocab_path;
    std::string url;
    std::string tokenizer = "whitespace_lower";
    int timeout_ms = 5000;
    int retries = 3;
    int batch = 32;

    void attach(CLI::App* app) {
        app->add_option("--encoder", kind, "mean_word_vector | term_frequency | remote");
        app->add_option("--vectors", vectors_path, "word vector file (token v1 .. vD per line)");
        app->add_option("--vocab", vocab_path,
                        "vocabulary file for term_frequency (one token per line)");
        app->add_option("--encoder-url", url, "remote encoder base URL")
            ->envname("TSK_ENCODER_URL");
        app->add_option("--tokenizer", tokenizer, "whitespace_lower | char_level");
        app->add_option("--encoder-timeout-ms", timeout_ms);
        app->add_option("--encoder-retries", retries);
        app->add_option("--encoder-batch", batch);
    }

    EncoderSpec build(const std::vector<Dialogue>& dialogues) const {
        Tokenizer tok = tokenizer_from_name(tokenizer);
        if (kind == "mean_word_vector") {
            if (vectors_path.empty()) {
                throw std::runtime_error("--vectors required for mean_word_vector");
            }
            return EncoderSpec::mean_vectors(
                std::make_shared<VectorTable>(load_word_vectors(vectors_path)), tok);
        }
        if (kind == "term_frequency") {
            std::vector<std::string> vocab;
            if (!vocab_path.empty()) {
                std::ifstream in(vocab_path);
                if (!in) throw std::runtime_error("cannot open: " + vocab_path);
                std::string line;
                while (std::getline(in, line)) {
                    if (!line.empty()) vocab.push_back(line);
                }
            } else {
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
        if (kind == "remote") {
            if (url.empty()) throw std::runtime_error("--encoder-url required for remote");
            EncoderSpec spec = EncoderSpec::remote_endpoint(url, tok);
            spec.timeout_ms = timeout_ms;
            spec.retries = retries;
            spec.batch = batch;
            return spec;
        }
        throw std::runtime_error("unknown encoder kind: " + kind);
    }
};

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

std::vector<Segmentation> load_segments_for(const std::string& path,
                                            const std::vector<Dialogue>& dialogues) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::map<std::string, std::vector<int>> by_id;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        by_id[j.at("id").get<std::string>()] = j.at("boundaries").get<std::vector<int>>();
    }
    std::vector<Segmentation> segs;
    for (const auto& d : dialogues) {
        auto it = by_id.find(d.id);
        if (it == by_id.end()) {
            throw std::runtime_error("no prediction for dialogue id '" + d.id + "'");
        }
        segs.push_back(Segmentation::from_boundaries(d.size(), it->second));
    }
    return segs;
}

void emit(const json& payload, bool as_json) {
    if (as_json) {
        std::cout << payload.dump() << "\n";
        return;
    }
    for (const auto& [key, value] : payload.items()) {
        if (value.is_object() || value.is_array()) {
            std::cout << key << ": " << value.dump() << "\n";
        } else {
            std::cout << key << ": " << value << "\n";
        }
    }
}

// separable toy task for the demo trainer: the positive response copies a
// context segment, negatives draw from a disjoint vocabulary
struct DemoTask {
    std::vector<TadamInput> inputs;
    std::vector<int> labels;
    std::vector<std::vector<size_t>> groups;
};

DemoTask make_demo_task(int contexts, int negatives, const TadamParams& params,
                        std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.8, 0.8);
    auto table = std::make_shared<VectorTable>();
    table->dim = params.hidden_dim;
    const int pool = 20;
    for (int i = 0; i < 2 * pool; ++i) {
        Eigen::VectorXd v(params.hidden_dim);
        for (int k = 0; k < params.hidden_dim; ++k) v[k] = dist(rng);
        table->entries[(i < pool ? "a" : "b") + std::to_string(i % pool)] = std::move(v);
    }
    TableTokenEmbedder emb(table);

    DemoTask task;
    for (int c = 0; c < contexts; ++c) {
        MatchInstance base;
        int segs = 2 + static_cast<int>(rng() % 2);
        for (int s = 0; s < segs; ++s) {
            std::vector<std::string> tokens;
            int len = 2 + static_cast<int>(rng() % (params.max_tokens - 1));
            for (int t = 0; t < len; ++t) tokens.push_back("a" + std::to_string(rng() % pool));
            base.segments.push_back(std::move(tokens));
        }
        std::vector<size_t> group;

        MatchInstance positive = base;
        positive.response = base.segments[rng() % base.segments.size()];
        positive.label = 1;
        group.push_back(task.inputs.size());
        task.inputs.push_back(build_input(positive, emb, params));
        task.labels.push_back(1);

        for (int neg = 0; neg < negatives; ++neg) {
            MatchInstance negative = base;
            int len = 2 + static_cast<int>(rng() % (params.max_tokens - 1));
            for (int t = 0; t < len; ++t) {
                negative.response.push_back("b" + std::to_string(rng() % pool));
            }
            negative.label = 0;
            group.push_back(task.inputs.size());
            task.inputs.push_back(build_input(negative, emb, params));
            task.labels.push_back(0);
        }
        task.groups.push_back(std::move(group));
    }
    return task;
}

double demo_p_at_1(const TadamModel& model, const DemoTask& task) {
    int hits = 0;
    for (const auto& group : task.groups) {
        double best = -1.0;
        size_t best_idx = 0;
        for (size_t idx : group) {
            double s = tadam_forward(model, task.inputs[idx]);
            if (s > best) {
                best = s;
                best_idx = idx;
            }
        }
        if (task.labels[best_idx] == 1) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(task.groups.size());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"topic-aware dialogue toolkit: segmentation, clustering, matching"};
    app.require_subcommand(1);
    bool as_json = false;
    app.add_flag("--json", as_json, "machine-readable JSON on stdout");

    // ------------------------------------------------ synth
    auto* synth = app.add_subcommand("synth",
                                     "build multi-topic dialogues from single-topic pools");
    std::string synth_pools, synth_out = "-", synth_stoplist;
    int synth_min = 2, synth_max = 4, synth_count = 100;
    std::uint64_t synth_seed = 42;
    synth->add_option("--pools", synth_pools,
                      "JSONL of single-topic dialogues (one gold topic each)")
        ->required();
    synth->add_option("--out", synth_out, "output JSONL ('-' for stdout)");
    synth->add_option("--min-segments", synth_min);
    synth->add_option("--max-segments", synth_max);
    synth->add_option("--count", synth_count);
    synth->add_option("--seed", synth_seed);
    synth->add_option("--stoplist", synth_stoplist, "comma-separated redundancy patterns");
    synth->callback([&]() {
        SynthSpec spec;
        spec.min_segments = synth_min;
        spec.max_segments = synth_max;
        spec.num_dialogues = synth_count;
        spec.rng_seed = synth_seed;
        std::stringstream ss(synth_stoplist);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) spec.stoplist.push_back(item);
        }
        for (auto& d : load_dialogues(synth_pools)) {
            if (!d.gold_topics || d.gold_topics->size() != 1) {
                throw std::runtime_error("pool dialogue '" + d.id +
                                         "' needs exactly one gold topic");
            }
            std::string topic = (*d.gold_topics)[0];
            spec.pools[topic].push_back(std::move(d));
        }
        auto out = synth_concat(spec);
        if (synth_out == "-") {
            for (const auto& d : out) std::cout << dialogue_to_json_line(d) << "\n";
        } else {
            save_dialogues(out, synth_out);
        }
    });

    // ------------------------------------------------ segment
    auto* seg = app.add_subcommand("segment", "detect topic transition points");
    std::string seg_input, seg_out = "-", seg_trace, seg_method = "greedy";
    SegParams seg_params;
    TilingParams seg_tiling;
    EncoderOptions seg_enc;
    int seg_jobs = 0;
    seg->add_option("--input", seg_input, "dialogues JSONL")->required();
    seg->add_option("--out", seg_out);
    seg->add_option("--method", seg_method, "greedy | texttiling");
    seg->add_option("--R", seg_params.max_span, "max utterances per segment");
    seg->add_option("--k", seg_params.step, "piece size between candidate cuts");
    seg->add_option("--d", seg_params.context, "context utterances per side");
    seg->add_option("--theta", seg_params.theta, "similarity threshold");
    seg->add_option("--pseudo-sentence-len", seg_tiling.pseudo_sentence_len,
                    "texttiling tokens per pseudo-sentence");
    seg->add_option("--tiling-window", seg_tiling.window, "texttiling smoothing width");
    seg->add_option("--tiling-block", seg_tiling.block, "texttiling block size");
    seg->add_option("--trace", seg_trace, "write per-candidate costs to this JSONL");
    seg->add_option("--jobs", seg_jobs, "worker threads (0 = logical cores)");
    seg_enc.attach(seg);
    seg->callback([&]() {
        auto dialogues = load_dialogues(seg_input);
        EncoderSpec enc = seg_enc.build(dialogues);
        const bool tiling = seg_method == "texttiling";
        if (!tiling && seg_method != "greedy") {
            throw std::runtime_error("unknown segmentation method: " + seg_method);
        }
        const bool want_trace = !seg_trace.empty() && !tiling;

        // fan out across dialogues, then emit in input order
        std::vector<Segmentation> segs(dialogues.size());
        std::vector<SegTrace> traces(dialogues.size());
        unsigned jobs = seg_jobs > 0 ? static_cast<unsigned>(seg_jobs)
                                     : std::max(1u, std::thread::hardware_concurrency());
        jobs = std::min<unsigned>(jobs, static_cast<unsigned>(std::max<size_t>(1, dialogues.size())));
        std::vector<std::thread> workers;
        std::vector<std::string> errors(jobs);
        for (unsigned w = 0; w < jobs; ++w) {
            workers.emplace_back([&, w]() {
                try {
                    for (size_t i = w; i < dialogues.size(); i += jobs) {
                        segs[i] = tiling
                                      ? texttiling(dialogues[i], enc, seg_tiling)
                                      : segment_dialogue(dialogues[i], enc, seg_params,
                                                         want_trace ? &traces[i] : nullptr);
                    }
                } catch (const std::exception& e) {
                    errors[w] = e.what();
                }
            });
        }
        for (auto& t : workers) t.join();
        for (const auto& e : errors) {
            if (!e.empty()) throw std::runtime_error(e);
        }

        std::ofstream trace_out;
        if (want_trace) trace_out.open(seg_trace, std::ios::trunc);
        std::ostream* out = &std::cout;
        std::ofstream file_out;
        if (seg_out != "-") {
            file_out.open(seg_out, std::ios::trunc);
            out = &file_out;
        }
        for (size_t i = 0; i < dialogues.size(); ++i) {
            *out << json({{"id", dialogues[i].id}, {"boundaries", segs[i].boundaries}}).dump()
                 << "\n";
            if (trace_out.is_open()) {
                json iters = json::array();
                for (const auto& it : traces[i].iterations) {
                    json cands = json::array();
                    for (const auto& c : it.candidates) {
                        json jc = {{"length", c.length}, {"cost", c.cost}};
                        if (c.left_sim) jc["left_sim"] = *c.left_sim;
                        if (c.right_sim) jc["right_sim"] = *c.right_sim;
                        cands.push_back(std::move(jc));
                    }
                    json ji = {{"start", it.start},
                               {"forced", it.forced},
                               {"candidates", std::move(cands)}};
                    if (it.chosen_length) ji["chosen_length"] = *it.chosen_length;
                    iters.push_back(std::move(ji));
                }
                trace_out << json({{"id", dialogues[i].id}, {"iterations", std::move(iters)}}).dump()
                          << "\n";
            }
        }
    });

    // ------------------------------------------------ sif
    auto* sif_cmd = app.add_subcommand("sif", "embed predicted segments");
    std::string sif_input, sif_segments, sif_out, sif_vectors, sif_tok = "whitespace_lower";
    SifParams sif_params;
    sif_cmd->add_option("--input", sif_input, "dialogues JSONL")->required();
    sif_cmd->add_option("--segments", sif_segments, "segments JSONL from `segment`")->required();
    sif_cmd->add_option("--out", sif_out, "embedding matrix output")->required();
    sif_cmd->add_option("--sif-a", sif_params.a, "smoothing parameter");
    sif_cmd->add_option("--sif-power-iters", sif_params.power_iters);
    sif_cmd->add_option("--vectors", sif_vectors, "word vector file")->required();
    sif_cmd->add_option("--tokenizer", sif_tok);
    sif_cmd->callback([&]() {
        auto dialogues = load_dialogues(sif_input);
        auto segs = load_segments_for(sif_segments, dialogues);
        Tokenizer tok = tokenizer_from_name(sif_tok);
        VectorTable table = load_word_vectors(sif_vectors);
        std::vector<std::string> texts;
        for (size_t i = 0; i < dialogues.size(); ++i) {
            for (auto& t : segment_texts(dialogues[i], segs[i])) texts.push_back(std::move(t));
        }
        std::vector<std::string> tokens;
        for (const auto& t : texts) {
            for (auto& w : tokenize(t, tok)) tokens.push_back(std::move(w));
        }
        FreqTable freq = word_frequencies(tokens);
        SifResult result = sif_embed(texts, table, freq, sif_params, tok);
        save_matrix(result.embeddings, sif_out);
        std::cerr << "wrote " << result.embeddings.rows() << " x " << result.embeddings.cols()
                  << " embeddings to " << sif_out << "\n";
    });

    // ------------------------------------------------ cluster
    auto* cluster_cmd = app.add_subcommand("cluster", "autoencoder clustering");
    cluster_cmd->require_subcommand(1);

    auto* pre = cluster_cmd->add_subcommand("pretrain", "train the reconstruction autoencoder");
    std::string pre_emb, pre_out, pre_arch = "256,64,16";
    PretrainParams pre_params;
    std::uint64_t pre_seed = 42;
    pre->add_option("--embeddings", pre_emb)->required();
    pre->add_option("--out", pre_out)->required();
    pre->add_option("--arch", pre_arch, "hidden/latent dims, comma separated");
    pre->add_option("--epochs", pre_params.epochs);
    pre->add_option("--batch-size", pre_params.batch_size);
    pre->add_option("--lr", pre_params.learning_rate);
    pre->add_option("--momentum", pre_params.momentum);
    pre->add_option("--seed", pre_seed);
    pre->callback([&]() {
        Eigen::MatrixXd X = load_matrix(pre_emb);
        std::vector<int> arch = {static_cast<int>(X.cols())};
        for (int d : parse_int_list(pre_arch)) arch.push_back(d);
        SAEModel sae = sae_init(arch, pre_seed);
        PretrainParams p = pre_params;
        p.batch_size = std::min<int>(p.batch_size, static_cast<int>(X.rows()));
        double loss = sae_pretrain(sae, X, p, pre_seed);
        ClusterModel model;
        model.sae = std::move(sae);
        model.centroids = Eigen::MatrixXd(0, model.sae.latent_dim());
        model.seed = pre_seed;
        save_model(model, pre_out);
        emit({{"reconstruction_loss", loss}, {"model", pre_out}}, as_json);
    });

    auto* fit = cluster_cmd->add_subcommand("fit", "k-means init + self-training");
    std::string fit_emb, fit_model_in, fit_out, fit_assign;
    int fit_m = 0;
    double fit_alpha = 1.0;
    SelfTrainParams fit_params;
    KMeansParams fit_kmeans;
    std::uint64_t fit_seed = 42;
    fit->add_option("--embeddings", fit_emb)->required();
    fit->add_option("--model-in", fit_model_in, "pretrained model")->required();
    fit->add_option("--out", fit_out)->required();
    fit->add_option("--assignments", fit_assign);
    fit->add_option("--m", fit_m, "cluster count")->required();
    fit->add_option("--alpha", fit_alpha, "Student-t degrees of freedom");
    fit->add_option("--update-interval", fit_params.update_interval);
    fit->add_option("--iter-max", fit_params.iter_max);
    fit->add_option("--lr", fit_params.learning_rate);
    fit->add_option("--batch-size", fit_params.batch_size);
    fit->add_flag("--freeze-centroids", fit_params.freeze_centroids);
    fit->add_option("--kmeans-restarts", fit_kmeans.restarts);
    fit->add_option("--seed", fit_seed);
    fit->callback([&]() {
        Eigen::MatrixXd X = load_matrix(fit_emb);
        ClusterModel model = load_model(fit_model_in);
        model.alpha = fit_alpha;
        model.seed = fit_seed;
        Eigen::MatrixXd latent = encode_latent(model.sae, X);
        KMeansResult km = kmeans(latent, fit_m, fit_kmeans, fit_seed);
        model.centroids = std::move(km.centroids);
        std::vector<int> assignments;
        SelfTrainHistory hist = self_train(model, X, fit_params, assignments);
        save_model(model, fit_out);
        if (!fit_assign.empty()) {
            std::ofstream out(fit_assign, std::ios::trunc);
            for (size_t i = 0; i < assignments.size(); ++i) {
                out << json({{"index", i}, {"cluster", assignments[i]}}).dump() << "\n";
            }
        }
        emit({{"iterations", hist.iterations},
              {"converged", hist.converged},
              {"final_kl", hist.kl_per_step.empty() ? 0.0 : hist.kl_per_step.back()},
              {"model", fit_out}},
             as_json);
    });

    auto* predict = cluster_cmd->add_subcommand("predict", "assign embeddings to clusters");
    std::string pred_emb, pred_model, pred_out = "-";
    predict->add_option("--embeddings", pred_emb)->required();
    predict->add_option("--model", pred_model)->required();
    predict->add_option("--out", pred_out);
    predict->callback([&]() {
        Eigen::MatrixXd X = load_matrix(pred_emb);
        ClusterModel model = load_model(pred_model);
        if (model.centroids.rows() == 0) {
            throw std::runtime_error("model has no centroids; run `cluster fit` first");
        }
        Eigen::MatrixXd q =
            soft_assignments(encode_latent(model.sae, X), model.centroids, model.alpha);
        std::ostream* out = &std::cout;
        std::ofstream file_out;
        if (pred_out != "-") {
            file_out.open(pred_out, std::ios::trunc);
            out = &file_out;
        }
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            Eigen::Index best;
            q.row(i).maxCoeff(&best);
            *out << json({{"index", i},
                          {"cluster", static_cast<int>(best)},
                          {"confidence", q(i, best)}})
                        .dump()
                 << "\n";
        }
    });

    // ------------------------------------------------ eval
    auto* eval_cmd = app.add_subcommand("eval", "metrics");
    eval_cmd->require_subcommand(1);

    auto* eseg = eval_cmd->add_subcommand("seg", "segmentation metrics vs gold");
    std::string eseg_pred, eseg_gold;
    int eseg_w = 4;
    eseg->add_option("--pred", eseg_pred, "segments JSONL")->required();
    eseg->add_option("--gold", eseg_gold, "dialogues JSONL with gold_boundaries")->required();
    eseg->add_option("--w", eseg_w, "WindowDiff window");
    eseg->callback([&]() {
        auto dialogues = load_dialogues(eseg_gold, true);
        auto preds = load_segments_for(eseg_pred, dialogues);
        std::vector<Segmentation> golds;
        for (const auto& d : dialogues) {
            golds.push_back(Segmentation::from_boundaries(d.size(), *d.gold_boundaries));
        }
        double wd = 0;
        int count = 0;
        for (size_t i = 0; i < preds.size(); ++i) {
            if (preds[i].n > eseg_w) {
                wd += window_diff(preds[i], golds[i], eseg_w);
                ++count;
            }
        }
        emit({{"MAE", seg_mae(preds, golds)},
              {"WindowDiff", count ? wd / count : 0.0},
              {"F1", seg_f1(preds, golds)}},
             as_json);
    });

    auto* ecl = eval_cmd->add_subcommand("cluster", "cluster quality vs gold topics");
    std::string ecl_data;
    double ecl_threshold = 0.25;
    ecl->add_option("--data", ecl_data, "JSONL lines {\"cluster\": int, \"topic\": str}")
        ->required();
    ecl->add_option("--f1-threshold", ecl_threshold);
    ecl->callback([&]() {
        std::ifstream in(ecl_data);
        if (!in) throw std::runtime_error("cannot open: " + ecl_data);
        std::vector<int> pred;
        std::vector<std::string> gold;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            pred.push_back(j.at("cluster").get<int>());
            gold.push_back(j.at("topic").get<std::string>());
        }
        ClusterEvalReport r = cluster_metrics(pred, gold, ecl_threshold);
        json per = json::array();
        for (const auto& row : r.per_cluster) {
            per.push_back({{"cluster", row.cluster}, {"topic", row.topic}, {"f1", row.f1}});
        }
        emit({{"N_c", r.retained_clusters},
              {"C_rate", r.coverage_rate},
              {"A_rate", r.accurate_rate},
              {"NMI", r.nmi_score},
              {"A_rate_covered", r.accurate_rate_covered},
              {"per_cluster", std::move(per)}},
             as_json);
    });

    auto* ee2e = eval_cmd->add_subcommand("e2e", "end-to-end segmentation+clustering F1");
    std::string ee2e_pred, ee2e_gold;
    double ee2e_overlap = 0.5;
    ee2e->add_option("--pred", ee2e_pred, "JSONL lines {\"id\", \"boundaries\", \"clusters\"}")
        ->required();
    ee2e->add_option("--gold", ee2e_gold, "dialogues JSONL with gold labels")->required();
    ee2e->add_option("--overlap", ee2e_overlap);
    ee2e->callback([&]() {
        auto dialogues = load_dialogues(ee2e_gold, true);
        std::map<std::string, json> by_id;
        std::ifstream in(ee2e_pred);
        if (!in) throw std::runtime_error("cannot open: " + ee2e_pred);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            by_id[j.at("id").get<std::string>()] = j;
        }
        std::vector<TopicSegmentation> preds, golds;
        for (const auto& d : dialogues) {
            if (!d.gold_topics) {
                throw std::runtime_error("dialogue '" + d.id + "' lacks gold topics");
            }
            auto it = by_id.find(d.id);
            if (it == by_id.end()) throw std::runtime_error("no prediction for '" + d.id + "'");
            TopicSegmentation p;
            p.seg = Segmentation::from_boundaries(
                d.size(), it->second.at("boundaries").get<std::vector<int>>());
            for (int c : it->second.at("clusters").get<std::vector<int>>()) {
                p.topics.push_back("c" + std::to_string(c));
            }
            preds.push_back(std::move(p));
            golds.push_back(
                {Segmentation::from_boundaries(d.size(), *d.gold_boundaries), *d.gold_topics});
        }
        emit({{"F1_all", e2e_f1(preds, golds, ee2e_overlap)}}, as_json);
    });

    auto* ers = eval_cmd->add_subcommand("rs", "response-selection metrics");
    std::string ers_data, ers_ks = "1,2,5";
    int ers_n = 10;
    ers->add_option("--data", ers_data,
                    "JSONL {\"context_id\", \"candidates\": [{\"id\",\"score\",\"label\"}]}")
        ->required();
    ers->add_option("--n", ers_n, "candidates per context");
    ers->add_option("--ks", ers_ks, "comma-separated recall cutoffs");
    ers->callback([&]() {
        std::ifstream in(ers_data);
        if (!in) throw std::runtime_error("cannot open: " + ers_data);
        std::vector<RankedContext> data;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            RankedContext ctx;
            ctx.context_id = j.at("context_id").get<std::string>();
            for (const auto& c : j.at("candidates")) {
                ctx.candidates.push_back({c.at("id").get<std::string>(),
                                          c.at("score").get<double>(), c.at("label").get<int>()});
            }
            data.push_back(std::move(ctx));
        }
        RsMetrics m = rs_metrics(data, ers_n, parse_int_list(ers_ks));
        json payload;
        for (const auto& [k, v] : m.recall_at) {
            payload["R" + std::to_string(ers_n) + "@" + std::to_string(k)] = v;
        }
        payload["MAP"] = m.mean_average_precision;
        payload["MRR"] = m.mean_reciprocal_rank;
        payload["P@1"] = m.precision_at_1;
        payload["contexts_without_relevant"] = m.contexts_without_relevant;
        emit(payload, as_json);
    });

    // ------------------------------------------------ tadam
    auto* tadam_cmd = app.add_subcommand("tadam", "matching network");
    tadam_cmd->require_subcommand(1);

    auto* score = tadam_cmd->add_subcommand("score", "score response candidates");
    std::string score_model, score_data, score_out = "-";
    EncoderOptions score_enc;
    std::uint64_t score_proj_seed = 0;
    score->add_option("--model", score_model)->required();
    score->add_option("--data", score_data,
                      "JSONL {\"context_id\", \"segments\": [str], "
                      "\"candidates\": [{\"id\",\"text\"}]}")
        ->required();
    score->add_option("--out", score_out);
    score->add_option("--projection-seed", score_proj_seed);
    score_enc.attach(score);
    score->callback([&]() {
        TadamModel model = load_tadam(score_model);
        Tokenizer tok = tokenizer_from_name(score_enc.tokenizer);
        std::unique_ptr<TokenEmbedder> emb;
        if (!score_enc.vectors_path.empty()) {
            emb = std::make_unique<TableTokenEmbedder>(
                std::make_shared<VectorTable>(load_word_vectors(score_enc.vectors_path)));
        } else if (!score_enc.url.empty()) {
            EncoderSpec spec = EncoderSpec::remote_endpoint(score_enc.url, tok);
            spec.timeout_ms = score_enc.timeout_ms;
            spec.retries = score_enc.retries;
            spec.batch = score_enc.batch;
            emb = std::make_unique<RemoteTokenEmbedder>(spec);
        } else {
            throw std::runtime_error("tadam score needs --vectors or --encoder-url");
        }

        std::ostream* out = &std::cout;
        std::ofstream file_out;
        if (score_out != "-") {
            file_out.open(score_out, std::ios::trunc);
            out = &file_out;
        }
        std::ifstream in(score_data);
        if (!in) throw std::runtime_error("cannot open: " + score_data);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            MatchInstance inst;
            for (const auto& s : j.at("segments")) {
                inst.segments.push_back(tokenize(s.get<std::string>(), tok));
            }
            for (const auto& c : j.at("candidates")) {
                inst.response = tokenize(c.at("text").get<std::string>(), tok);
                TadamInput input = build_input(inst, *emb, model.params, score_proj_seed);
                *out << json({{"context_id", j.at("context_id")},
                              {"candidate_id", c.at("id")},
                              {"score", tadam_forward(model, input)}})
                            .dump()
                     << "\n";
            }
        }
    });

    auto* gradcheck =
        tadam_cmd->add_subcommand("grad-check", "finite-difference gradient verification");
    std::string gc_dims = "3,4,6,4";
    std::uint64_t gc_seed = 1;
    bool gc_bilinear = false;
    gradcheck->add_option("--dims", gc_dims, "T,L,d,h");
    gradcheck->add_option("--seed", gc_seed);
    gradcheck->add_flag("--bilinear-full", gc_bilinear);
    gradcheck->callback([&]() {
        auto dims = parse_int_list(gc_dims);
        if (dims.size() != 4) throw std::runtime_error("--dims wants T,L,d,h");
        TadamParams p;
        p.max_segments = dims[0];
        p.max_tokens = dims[1];
        p.hidden_dim = dims[2];
        p.map_features = dims[3];
        TadamModel model = tadam_init(p, gc_seed);
        model.bilinear_full = gc_bilinear;

        std::mt19937_64 rng(gc_seed + 1);
        std::uniform_real_distribution<double> dist(-0.8, 0.8);
        auto table = std::make_shared<VectorTable>();
        table->dim = p.hidden_dim;
        for (int t = 0; t < 10; ++t) {
            Eigen::VectorXd v(p.hidden_dim);
            for (int i = 0; i < p.hidden_dim; ++i) v[i] = dist(rng);
            table->entries["t" + std::to_string(t)] = std::move(v);
        }
        MatchInstance inst;
        int segs = std::min(2, p.max_segments);
        for (int s = 0; s < segs; ++s) {
            std::vector<std::string> tokens;
            for (int t = 0; t < std::min(3, p.max_tokens); ++t) {
                tokens.push_back("t" + std::to_string(rng() % 10));
            }
            inst.segments.push_back(std::move(tokens));
        }
        inst.response = {"t0", "t1"};
        TadamInput input = build_input(inst, TableTokenEmbedder(table), p);

        TadamGradients grads = tadam_gradient(model, input, 1);
        auto prefs = tadam_tensor_refs(model);
        auto grefs = tadam_tensor_refs(grads);
        double worst = 0.0;
        std::string worst_name;
        json per_tensor = json::object();
        for (size_t t = 0; t < prefs.size(); ++t) {
            double diff = 0, na = 0, nn = 0;
            for (Eigen::Index i = 0; i < prefs[t].size; ++i) {
                double saved = prefs[t].data[i];
                prefs[t].data[i] = saved + 1e-5;
                double hi = bce_loss(tadam_forward(model, input), 1);
                prefs[t].data[i] = saved - 1e-5;
                double lo = bce_loss(tadam_forward(model, input), 1);
                prefs[t].data[i] = saved;
                double numeric = (hi - lo) / 2e-5;
                double analytic = grefs[t].data[i];
                diff += (analytic - numeric) * (analytic - numeric);
                na += analytic * analytic;
                nn += numeric * numeric;
            }
            double err = std::sqrt(diff) / std::max(1e-8, std::sqrt(na) + std::sqrt(nn));
            per_tensor[prefs[t].name] = err;
            if (err > worst) {
                worst = err;
                worst_name = prefs[t].name;
            }
        }
        emit({{"max_rel_error", worst}, {"worst_tensor", worst_name}, {"per_tensor", per_tensor}},
             as_json);
        if (worst >= 1e-3) throw std::runtime_error("gradient check failed");
    });

    auto* demo = tadam_cmd->add_subcommand("demo-train", "train on the separable toy task");
    int demo_epochs = 50, demo_contexts = 40, demo_negs = 4;
    double demo_lr = 0.05;
    std::uint64_t demo_seed = 7;
    std::string demo_out, demo_dims = "4,6,8,4";
    demo->add_option("--epochs", demo_epochs);
    demo->add_option("--lr", demo_lr);
    demo->add_option("--seed", demo_seed);
    demo->add_option("--contexts", demo_contexts);
    demo->add_option("--negatives", demo_negs);
    demo->add_option("--dims", demo_dims, "T,L,d,h");
    demo->add_option("--out", demo_out, "save the trained model here");
    demo->callback([&]() {
        auto dims = parse_int_list(demo_dims);
        if (dims.size() != 4) throw std::runtime_error("--dims wants T,L,d,h");
        TadamParams p;
        p.max_segments = dims[0];
        p.max_tokens = dims[1];
        p.hidden_dim = dims[2];
        p.map_features = dims[3];
        DemoTask task = make_demo_task(demo_contexts, demo_negs, p, demo_seed);
        TadamModel model = tadam_init(p, demo_seed);
        TrainCurve curve =
            demo_train(model, task.inputs, task.labels, demo_epochs, demo_lr, demo_seed);
        double p1 = demo_p_at_1(model, task);
        if (!demo_out.empty()) save_tadam(model, demo_out);
        emit({{"epochs", curve.epoch_loss.size()},
              {"final_loss", curve.epoch_loss.empty() ? 0.0 : curve.epoch_loss.back()},
              {"training_p_at_1", p1}},
             as_json);
    });

    // ------------------------------------------------ pipeline
    auto* pipe = app.add_subcommand("pipeline", "segment -> sif -> cluster -> eval");
    std::string pipe_config;
    double ov_theta = 0;
    std::uint64_t ov_seed = 0;
    int ov_jobs = 0, ov_m = 0;
    std::string ov_workdir, ov_dialogues, ov_vectors;
    auto* opt_theta = pipe->add_option("--theta", ov_theta, "override segment.theta");
    auto* opt_seed = pipe->add_option("--seed", ov_seed, "override seed");
    auto* opt_jobs = pipe->add_option("--jobs", ov_jobs, "override worker count");
    auto* opt_m = pipe->add_option("--m", ov_m, "override cluster count");
    pipe->add_option("--config", pipe_config, "JSON config file");
    pipe->add_option("--workdir", ov_workdir);
    pipe->add_option("--dialogues", ov_dialogues);
    pipe->add_option("--vectors", ov_vectors);
    pipe->callback([&]() {
        PipelineConfig config =
            pipe_config.empty() ? PipelineConfig{} : parse_config(pipe_config);
        if (opt_theta->count()) config.seg.theta = ov_theta;
        if (opt_seed->count()) config.seed = ov_seed;
        if (opt_jobs->count()) config.jobs = ov_jobs;
        if (opt_m->count()) config.cluster_m = ov_m;
        if (!ov_workdir.empty()) config.workdir = ov_workdir;
        if (!ov_dialogues.empty()) config.dialogues_path = ov_dialogues;
        if (!ov_vectors.empty()) config.vectors_path = ov_vectors;
        int rc = run_pipeline(config);
        if (rc != 0) std::exit(rc);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
