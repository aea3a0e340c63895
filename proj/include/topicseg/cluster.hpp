#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace topicseg {

// Mirrored fully connected encoder/decoder. Hidden layers use ReLU; the
// latent layer and the reconstruction output are linear.
struct SAEModel {
    std::vector<int> encoder_dims;  // [D_in, h1, ..., latent]
    std::vector<Eigen::MatrixXd> enc_w;  // enc_w[l] is dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> enc_b;
    std::vector<Eigen::MatrixXd> dec_w;  // mirrored
    std::vector<Eigen::VectorXd> dec_b;

    int input_dim() const { return encoder_dims.front(); }
    int latent_dim() const { return encoder_dims.back(); }
};

struct PretrainParams {
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 0.01;
    double momentum = 0.9;
};

struct SelfTrainParams {
    double learning_rate = 0.01;
    int update_interval = 500;   // iterations between target refresh / stop checks
    int iter_max = 10000;
    int batch_size = 0;          // 0 = full batch
    bool freeze_centroids = false;
};

struct KMeansParams {
    int restarts = 10;
    int max_iters = 100;
    double tol = 1e-4;
};

struct TrainParams {
    std::uint64_t seed = 0;
    PretrainParams pretrain;
    SelfTrainParams selftrain;
    KMeansParams kmeans;
};

struct ClusterModel {
    SAEModel sae;
    Eigen::MatrixXd centroids;  // m x latent
    double alpha = 1.0;         // Student-t degrees of freedom
    std::uint64_t seed = 0;
};

SAEModel sae_init(const std::vector<int>& encoder_dims, std::uint64_t seed);

// Mini-batch gradient descent with momentum on the mean squared
// reconstruction error (mean over samples of the squared error norm).
// Returns the full-data loss after the final epoch. Aborts on non-finite
// loss with a hint to lower the learning rate.
double sae_pretrain(SAEModel& model, const Eigen::MatrixXd& X, const PretrainParams& params,
                    std::uint64_t seed);

double sae_reconstruction_loss(const SAEModel& model, const Eigen::MatrixXd& X);

// Gradients of the reconstruction loss for every encoder/decoder tensor,
// flattened in layer order (used by training and the gradient tests).
struct SAEGradients {
    std::vector<Eigen::MatrixXd> enc_w;
    std::vector<Eigen::VectorXd> enc_b;
    std::vector<Eigen::MatrixXd> dec_w;
    std::vector<Eigen::VectorXd> dec_b;
};
SAEGradients sae_reconstruction_gradients(const SAEModel& model, const Eigen::MatrixXd& X);

// Encoder half only.
Eigen::MatrixXd encode_latent(const SAEModel& model, const Eigen::MatrixXd& X);

struct KMeansResult {
    Eigen::MatrixXd centroids;
    std::vector<int> assignments;
    double inertia = 0.0;
};

// Lloyd iterations from k-means++ seeding, best of `restarts` runs; an
// emptied cluster is reseeded to the point farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& Z, int m, const KMeansParams& params,
                    std::uint64_t seed);

// Student-t similarity of each sample to each centroid, row-normalized.
Eigen::MatrixXd soft_assignments(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& centroids,
                                 double alpha);

// Sharpened target: squared assignments normalized by cluster frequency,
// then row-normalized. An empty column contributes zero.
Eigen::MatrixXd target_distribution(const Eigen::MatrixXd& Q);

double kl_divergence(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q);

// d KL(P||Q) / dZ and / d centroids with the target P held fixed.
Eigen::MatrixXd kl_grad_latent(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& centroids,
                               double alpha, const Eigen::MatrixXd& P);
Eigen::MatrixXd kl_grad_centroids(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& centroids,
                                  double alpha, const Eigen::MatrixXd& P);

// KL gradients pushed through the encoder (decoder untouched).
struct EncoderGradients {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
};
EncoderGradients kl_encoder_gradients(const SAEModel& model, const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& centroids, double alpha,
                                      const Eigen::MatrixXd& P);

struct SelfTrainHistory {
    std::vector<double> kl_per_step;
    std::vector<int> refresh_steps;
    int iterations = 0;
    bool converged = false;
};

// Target-refreshing fine-tuning: between refreshes the encoder (and, unless
// frozen, the centroids) take plain gradient steps on KL(P||Q); every
// update_interval steps the target is rebuilt and training stops once the
// argmax assignments survive a refresh unchanged.
SelfTrainHistory self_train(ClusterModel& model, const Eigen::MatrixXd& X,
                            const SelfTrainParams& params, std::vector<int>& assignments_out);

// Versioned JSON model file with a SHA-256 checksum over the canonical
// payload; loading verifies the checksum before constructing anything.
void save_model(const ClusterModel& model, const std::string& path);
ClusterModel load_model(const std::string& path);

}  // namespace topicseg
