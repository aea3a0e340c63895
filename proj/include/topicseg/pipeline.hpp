#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topicseg/cluster.hpp"
#include "topicseg/segment.hpp"
#include "topicseg/sif.hpp"

namespace topicseg {

// Resolved configuration for the staged pipeline
// (segment -> sif -> cluster -> eval). Defaults follow the reference
// settings: R=8, k=2, d=2, theta=0.6, alpha=1, F1 threshold 0.25, overlap
// 0.5, WindowDiff window 4.
struct PipelineConfig {
    std::uint64_t seed = 42;

    std::string dialogues_path;
    std::string vectors_path;  // word vectors for SIF; one-hot fallback if empty
    std::string workdir = "runs";

    std::string encoder_kind = "mean_word_vector";
    std::string tokenizer = "whitespace_lower";
    std::string endpoint;
    int encoder_timeout_ms = 5000;
    int encoder_retries = 3;
    int encoder_batch = 32;
    std::vector<std::string> vocabulary;  // term_frequency; corpus-derived if empty

    SegParams seg;
    SifParams sif;

    int cluster_m = 0;  // 0 = number of distinct gold topics
    double alpha = 1.0;
    std::vector<int> arch = {256, 64, 16};
    PretrainParams pretrain;
    SelfTrainParams selftrain;
    KMeansParams kmeans_params;

    double f1_threshold = 0.25;
    double overlap_threshold = 0.5;
    int windowdiff_w = 4;

    int jobs = 0;  // worker threads for per-dialogue stages; 0 = hardware
};

// Reads a JSON config file. Unknown keys are rejected by name; absent keys
// keep their defaults. Flag overrides are applied by the CLI after this.
PipelineConfig parse_config(const std::string& path);

// Resolved config as canonical JSON (used for echoing and hashing).
std::string config_to_json(const PipelineConfig& config);

// Validates referenced paths exist.
void validate_config(const PipelineConfig& config);

// Runs all stages, resuming from artifacts recorded in the manifest when
// inputs are unchanged. Returns 0 on success; a failing stage leaves prior
// artifacts intact and returns nonzero after reporting the failure.
int run_pipeline(const PipelineConfig& config);

// Individual stages, exposed for the CLI subcommands.
std::vector<Segmentation> stage_segment(const PipelineConfig& config,
                                        const std::vector<Dialogue>& dialogues);
EncoderSpec make_encoder(const PipelineConfig& config,
                         const std::vector<Dialogue>& dialogues);

// Texts of the segments induced by a segmentation, in dialogue order.
std::vector<std::string> segment_texts(const Dialogue& d, const Segmentation& seg);

}  // namespace topicseg
