#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "topicseg/cluster.hpp"
#include "topicseg/corpus.hpp"
#include "topicseg/embed.hpp"
#include "topicseg/eval.hpp"
#include "topicseg/pipeline.hpp"
#include "topicseg/segment.hpp"
#include "topicseg/sif.hpp"
#include "topicseg/tadam.hpp"

namespace py = pybind11;
using namespace topicseg;

PYBIND11_MODULE(_topicseg, m) {
    m.doc() = "Topic-aware dialogue toolkit: segmentation, SIF embedding, "
              "self-training clustering, evaluation metrics, and the matching network.";

    // --- corpus ---------------------------------------------------------
    py::class_<Utterance>(m, "Utterance")
        .def(py::init([](std::string speaker, std::string text) {
                 return Utterance{std::move(speaker), std::move(text)};
             }),
             py::arg("speaker"), py::arg("text"))
        .def_readwrite("speaker", &Utterance::speaker)
        .def_readwrite("text", &Utterance::text);

    py::class_<Dialogue>(m, "Dialogue")
        .def(py::init<>())
        .def_readwrite("id", &Dialogue::id)
        .def_readwrite("utterances", &Dialogue::utterances)
        .def_readwrite("gold_boundaries", &Dialogue::gold_boundaries)
        .def_readwrite("gold_topics", &Dialogue::gold_topics)
        .def("__len__", &Dialogue::size)
        .def("validate", &Dialogue::validate);

    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init<>())
        .def_readwrite("min_segments", &SynthSpec::min_segments)
        .def_readwrite("max_segments", &SynthSpec::max_segments)
        .def_readwrite("num_dialogues", &SynthSpec::num_dialogues)
        .def_readwrite("pools", &SynthSpec::pools)
        .def_readwrite("stoplist", &SynthSpec::stoplist)
        .def_readwrite("rng_seed", &SynthSpec::rng_seed);

    m.def("load_dialogues", &load_dialogues, py::arg("path"), py::arg("require_gold") = false);
    m.def("save_dialogues", &save_dialogues, py::arg("dialogues"), py::arg("path"));
    m.def("strip_redundant", &strip_redundant, py::arg("dialogue"), py::arg("stoplist"));
    m.def("synth_concat", &synth_concat, py::arg("spec"));

    // --- tokenization / encoders ----------------------------------------
    py::enum_<Tokenizer>(m, "Tokenizer")
        .value("whitespace_lower", Tokenizer::whitespace_lower)
        .value("char_level", Tokenizer::char_level);
    m.def("tokenize", &tokenize, py::arg("text"), py::arg("mode") = Tokenizer::whitespace_lower);

    py::class_<VectorTable, std::shared_ptr<VectorTable>>(m, "VectorTable")
        .def(py::init<>())
        .def_readwrite("dim", &VectorTable::dim)
        .def("__len__", [](const VectorTable& t) { return t.entries.size(); })
        .def("add", [](VectorTable& t, const std::string& token, Eigen::VectorXd v) {
            if (t.dim == 0) t.dim = static_cast<int>(v.size());
            t.entries[token] = std::move(v);
        })
        .def("get", [](const VectorTable& t, const std::string& token) -> py::object {
            const auto* v = t.find(token);
            return v ? py::cast(*v) : py::none();
        });
    m.def("load_word_vectors", &load_word_vectors, py::arg("path"),
          py::arg("bad_line_tolerance") = 0);

    py::class_<FreqTable>(m, "FreqTable")
        .def(py::init<>())
        .def_readonly("total", &FreqTable::total)
        .def("frequency", &FreqTable::frequency);
    m.def("word_frequencies",
          py::overload_cast<const std::vector<std::string>&>(&word_frequencies),
          py::arg("tokens"));

    py::class_<EncoderSpec>(m, "EncoderSpec")
        .def_static("mean_vectors",
                    [](std::shared_ptr<VectorTable> table, Tokenizer tok) {
                        return EncoderSpec::mean_vectors(std::move(table), tok);
                    },
                    py::arg("table"), py::arg("tokenizer") = Tokenizer::whitespace_lower)
        .def_static("term_frequency_over", &EncoderSpec::term_frequency_over,
                    py::arg("vocabulary"), py::arg("tokenizer") = Tokenizer::whitespace_lower)
        .def_static("remote_endpoint", &EncoderSpec::remote_endpoint, py::arg("url"),
                    py::arg("tokenizer") = Tokenizer::whitespace_lower);
    m.def("encode", &encode, py::arg("text"), py::arg("spec"));
    m.def("remote_encode_batch", &remote_encode_batch, py::arg("texts"), py::arg("spec"));
    m.def("cosine", &cosine, py::arg("u"), py::arg("v"));

    // --- sif --------------------------------------------------------------
    py::class_<SifParams>(m, "SifParams")
        .def(py::init<>())
        .def_readwrite("a", &SifParams::a)
        .def_readwrite("power_iters", &SifParams::power_iters)
        .def_readwrite("power_tol", &SifParams::power_tol);

    m.def("sif_weighted_average", &sif_weighted_average, py::arg("tokens"), py::arg("table"),
          py::arg("freq"), py::arg("a") = 1e-3);
    m.def(
        "remove_first_pc",
        [](const Eigen::MatrixXd& rows, const SifParams& params) {
            SifResult r = remove_first_pc(rows, params);
            return py::make_tuple(r.embeddings, r.first_singular_vector);
        },
        py::arg("rows"), py::arg("params") = SifParams{});
    m.def(
        "sif_embed",
        [](const std::vector<std::string>& texts, const VectorTable& table,
           const FreqTable& freq, const SifParams& params, Tokenizer tok) {
            SifResult r = sif_embed(texts, table, freq, params, tok);
            return py::make_tuple(r.embeddings, r.first_singular_vector);
        },
        py::arg("texts"), py::arg("table"), py::arg("freq"), py::arg("params") = SifParams{},
        py::arg("tokenizer") = Tokenizer::whitespace_lower);

    // --- segmentation ------------------------------------------------------
    py::class_<SegParams>(m, "SegParams")
        .def(py::init<>())
        .def_readwrite("max_span", &SegParams::max_span)
        .def_readwrite("step", &SegParams::step)
        .def_readwrite("context", &SegParams::context)
        .def_readwrite("theta", &SegParams::theta);

    py::class_<Segmentation>(m, "Segmentation")
        .def_static("from_boundaries", &Segmentation::from_boundaries, py::arg("n"),
                    py::arg("boundaries"))
        .def_readonly("n", &Segmentation::n)
        .def_readonly("boundaries", &Segmentation::boundaries)
        .def("segments", &Segmentation::segments)
        .def("segment_count", &Segmentation::segment_count);

    py::class_<TilingParams>(m, "TilingParams")
        .def(py::init<>())
        .def_readwrite("pseudo_sentence_len", &TilingParams::pseudo_sentence_len)
        .def_readwrite("window", &TilingParams::window)
        .def_readwrite("block", &TilingParams::block);

    m.def(
        "segment_dialogue",
        [](const Dialogue& d, const EncoderSpec& enc, const SegParams& p) {
            return segment_dialogue(d, enc, p);
        },
        py::arg("dialogue"), py::arg("encoder"), py::arg("params") = SegParams{});
    m.def("texttiling", &texttiling, py::arg("dialogue"), py::arg("encoder"),
          py::arg("params") = TilingParams{});
    m.def("seg_mae", &seg_mae, py::arg("preds"), py::arg("golds"));
    m.def("window_diff", &window_diff, py::arg("pred"), py::arg("gold"), py::arg("w") = 4);
    m.def("seg_f1", &seg_f1, py::arg("preds"), py::arg("golds"));

    // --- clustering ---------------------------------------------------------
    py::class_<SAEModel>(m, "SAEModel")
        .def_readonly("encoder_dims", &SAEModel::encoder_dims)
        .def_property_readonly("latent_dim", &SAEModel::latent_dim);
    py::class_<PretrainParams>(m, "PretrainParams")
        .def(py::init<>())
        .def_readwrite("epochs", &PretrainParams::epochs)
        .def_readwrite("batch_size", &PretrainParams::batch_size)
        .def_readwrite("learning_rate", &PretrainParams::learning_rate)
        .def_readwrite("momentum", &PretrainParams::momentum);
    py::class_<SelfTrainParams>(m, "SelfTrainParams")
        .def(py::init<>())
        .def_readwrite("learning_rate", &SelfTrainParams::learning_rate)
        .def_readwrite("update_interval", &SelfTrainParams::update_interval)
        .def_readwrite("iter_max", &SelfTrainParams::iter_max)
        .def_readwrite("batch_size", &SelfTrainParams::batch_size)
        .def_readwrite("freeze_centroids", &SelfTrainParams::freeze_centroids);
    py::class_<KMeansParams>(m, "KMeansParams")
        .def(py::init<>())
        .def_readwrite("restarts", &KMeansParams::restarts)
        .def_readwrite("max_iters", &KMeansParams::max_iters)
        .def_readwrite("tol", &KMeansParams::tol);
    py::class_<ClusterModel>(m, "ClusterModel")
        .def(py::init<>())
        .def_readwrite("sae", &ClusterModel::sae)
        .def_readwrite("centroids", &ClusterModel::centroids)
        .def_readwrite("alpha", &ClusterModel::alpha)
        .def_readwrite("seed", &ClusterModel::seed);
    py::class_<KMeansResult>(m, "KMeansResult")
        .def_readonly("centroids", &KMeansResult::centroids)
        .def_readonly("assignments", &KMeansResult::assignments)
        .def_readonly("inertia", &KMeansResult::inertia);
    py::class_<SelfTrainHistory>(m, "SelfTrainHistory")
        .def_readonly("kl_per_step", &SelfTrainHistory::kl_per_step)
        .def_readonly("refresh_steps", &SelfTrainHistory::refresh_steps)
        .def_readonly("iterations", &SelfTrainHistory::iterations)
        .def_readonly("converged", &SelfTrainHistory::converged);

    m.def("sae_init", &sae_init, py::arg("encoder_dims"), py::arg("seed"));
    m.def("sae_pretrain", &sae_pretrain, py::arg("model"), py::arg("data"), py::arg("params"),
          py::arg("seed"));
    m.def("encode_latent", &encode_latent, py::arg("model"), py::arg("data"));
    m.def("kmeans", &kmeans, py::arg("data"), py::arg("m"), py::arg("params") = KMeansParams{},
          py::arg("seed") = 0);
    m.def("soft_assignments", &soft_assignments, py::arg("latent"), py::arg("centroids"),
          py::arg("alpha") = 1.0);
    m.def("target_distribution", &target_distribution, py::arg("q"));
    m.def("kl_divergence", &kl_divergence, py::arg("p"), py::arg("q"));
    m.def(
        "self_train",
        [](ClusterModel& model, const Eigen::MatrixXd& data, const SelfTrainParams& params) {
            std::vector<int> assignments;
            SelfTrainHistory hist = self_train(model, data, params, assignments);
            return py::make_tuple(assignments, hist);
        },
        py::arg("model"), py::arg("data"), py::arg("params") = SelfTrainParams{});
    m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
    m.def("load_model", &load_model, py::arg("path"));

    // --- evaluation ----------------------------------------------------------
    m.def("hungarian", [](const Eigen::MatrixXd& cost) {
        Assignment a = hungarian(cost);
        return py::make_tuple(a.col_of_row, a.total_cost);
    });
    py::class_<PerClusterF1>(m, "PerClusterF1")
        .def_readonly("cluster", &PerClusterF1::cluster)
        .def_readonly("topic", &PerClusterF1::topic)
        .def_readonly("f1", &PerClusterF1::f1)
        .def_readonly("size", &PerClusterF1::size)
        .def_readonly("retained", &PerClusterF1::retained);
    py::class_<ClusterEvalReport>(m, "ClusterEvalReport")
        .def_readonly("mapping", &ClusterEvalReport::mapping)
        .def_readonly("per_cluster", &ClusterEvalReport::per_cluster)
        .def_readonly("retained_clusters", &ClusterEvalReport::retained_clusters)
        .def_readonly("coverage_rate", &ClusterEvalReport::coverage_rate)
        .def_readonly("accurate_rate", &ClusterEvalReport::accurate_rate)
        .def_readonly("accurate_rate_covered", &ClusterEvalReport::accurate_rate_covered)
        .def_readonly("nmi", &ClusterEvalReport::nmi_score)
        .def_readonly("total", &ClusterEvalReport::total);
    m.def("cluster_metrics", &cluster_metrics, py::arg("pred_labels"), py::arg("gold_topics"),
          py::arg("f1_threshold") = 0.25);
    m.def("nmi", &nmi, py::arg("a"), py::arg("b"));

    py::class_<TopicSegmentation>(m, "TopicSegmentation")
        .def(py::init([](Segmentation seg, std::vector<std::string> topics) {
                 return TopicSegmentation{std::move(seg), std::move(topics)};
             }),
             py::arg("seg"), py::arg("topics"))
        .def_readwrite("seg", &TopicSegmentation::seg)
        .def_readwrite("topics", &TopicSegmentation::topics);
    m.def("e2e_f1", &e2e_f1, py::arg("preds"), py::arg("golds"),
          py::arg("overlap_threshold") = 0.5);

    py::class_<RankedCandidate>(m, "RankedCandidate")
        .def(py::init([](std::string id, double score, int label) {
                 return RankedCandidate{std::move(id), score, label};
             }),
             py::arg("id"), py::arg("score"), py::arg("label"))
        .def_readwrite("id", &RankedCandidate::id)
        .def_readwrite("score", &RankedCandidate::score)
        .def_readwrite("label", &RankedCandidate::label);
    py::class_<RankedContext>(m, "RankedContext")
        .def(py::init<>())
        .def_readwrite("context_id", &RankedContext::context_id)
        .def_readwrite("candidates", &RankedContext::candidates);
    py::class_<RsMetrics>(m, "RsMetrics")
        .def_readonly("recall_at", &RsMetrics::recall_at)
        .def_readonly("map", &RsMetrics::mean_average_precision)
        .def_readonly("mrr", &RsMetrics::mean_reciprocal_rank)
        .def_readonly("p_at_1", &RsMetrics::precision_at_1)
        .def_readonly("contexts_scored", &RsMetrics::contexts_scored)
        .def_readonly("contexts_without_relevant", &RsMetrics::contexts_without_relevant);
    m.def("rs_metrics", &rs_metrics, py::arg("data"), py::arg("n"), py::arg("ks"));

    // --- matching network ------------------------------------------------------
    py::class_<TadamParams>(m, "TadamParams")
        .def(py::init<>())
        .def_readwrite("max_segments", &TadamParams::max_segments)
        .def_readwrite("max_tokens", &TadamParams::max_tokens)
        .def_readwrite("hidden_dim", &TadamParams::hidden_dim)
        .def_readwrite("map_features", &TadamParams::map_features)
        .def_readwrite("beta", &TadamParams::beta)
        .def_readwrite("max_seq_len", &TadamParams::max_seq_len);
    py::class_<TadamModel>(m, "TadamModel")
        .def_readonly("params", &TadamModel::params)
        .def_readwrite("bilinear_full", &TadamModel::bilinear_full)
        .def_readonly("seed", &TadamModel::seed);
    py::class_<MatchInstance>(m, "MatchInstance")
        .def(py::init<>())
        .def_readwrite("segments", &MatchInstance::segments)
        .def_readwrite("response", &MatchInstance::response)
        .def_readwrite("label", &MatchInstance::label);
    py::class_<TadamInput>(m, "TadamInput")
        .def_readonly("last_segment", &TadamInput::last_segment);
    py::class_<TadamTrace>(m, "TadamTrace")
        .def_readonly("word_weights", &TadamTrace::word_weights)
        .def_readonly("seg_weights", &TadamTrace::seg_weights)
        .def_readonly("combined_weights", &TadamTrace::combined_weights)
        .def_readonly("match_features", &TadamTrace::match_features)
        .def_readonly("context_state", &TadamTrace::context_state)
        .def_readonly("score", &TadamTrace::score)
        .def_readonly("pad_segment", &TadamTrace::pad_segment);
    py::class_<TrainCurve>(m, "TrainCurve")
        .def_readonly("epoch_loss", &TrainCurve::epoch_loss);

    m.def("tadam_init", &tadam_init, py::arg("params"), py::arg("seed"));
    m.def(
        "build_input",
        [](const MatchInstance& inst, std::shared_ptr<VectorTable> table,
           const TadamParams& params, std::uint64_t projection_seed) {
            TableTokenEmbedder emb(std::move(table));
            return build_input(inst, emb, params, projection_seed);
        },
        py::arg("instance"), py::arg("table"), py::arg("params"),
        py::arg("projection_seed") = 0);
    m.def(
        "tadam_forward",
        [](const TadamModel& model, const TadamInput& input, bool with_trace) -> py::tuple {
            if (!with_trace) {
                return py::make_tuple(tadam_forward(model, input), py::none());
            }
            TadamTrace trace;
            double score = tadam_forward(model, input, &trace);
            return py::make_tuple(score, py::cast(std::move(trace)));
        },
        py::arg("model"), py::arg("input"), py::arg("with_trace") = false);
    m.def("bce_loss", &bce_loss, py::arg("score"), py::arg("label"));
    m.def("demo_train", &demo_train, py::arg("model"), py::arg("inputs"), py::arg("labels"),
          py::arg("epochs"), py::arg("learning_rate"), py::arg("seed"));
    m.def("save_tadam", &save_tadam, py::arg("model"), py::arg("path"));
    m.def("load_tadam", &load_tadam, py::arg("path"));

    // --- pipeline ---------------------------------------------------------------
    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def(py::init<>())
        .def_readwrite("seed", &PipelineConfig::seed)
        .def_readwrite("dialogues_path", &PipelineConfig::dialogues_path)
        .def_readwrite("vectors_path", &PipelineConfig::vectors_path)
        .def_readwrite("workdir", &PipelineConfig::workdir)
        .def_readwrite("encoder_kind", &PipelineConfig::encoder_kind)
        .def_readwrite("seg", &PipelineConfig::seg)
        .def_readwrite("sif", &PipelineConfig::sif)
        .def_readwrite("cluster_m", &PipelineConfig::cluster_m)
        .def_readwrite("alpha", &PipelineConfig::alpha)
        .def_readwrite("arch", &PipelineConfig::arch)
        .def_readwrite("pretrain", &PipelineConfig::pretrain)
        .def_readwrite("selftrain", &PipelineConfig::selftrain)
        .def_readwrite("jobs", &PipelineConfig::jobs);
    m.def("parse_config", &parse_config, py::arg("path"));
    m.def("run_pipeline", &run_pipeline, py::arg("config"));
}
