#include "topicseg/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "topicseg/sha256.hpp"

using nlohmann::json;

namespace topicseg {

namespace {

Eigen::MatrixXd glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

// One linear layer per step: out = act(in * W^T + b^T); ReLU everywhere
// except the flagged linear layers.
struct StackCache {
    std::vector<Eigen::MatrixXd> activations;  // a_0 = input, ..., a_L
    std::vector<Eigen::MatrixXd> pre;          // z_1..z_L
};

Eigen::MatrixXd stack_forward(const std::vector<const Eigen::MatrixXd*>& w,
                              const std::vector<const Eigen::VectorXd*>& b,
                              const std::vector<bool>& relu, const Eigen::MatrixXd& X,
                              StackCache* cache) {
    Eigen::MatrixXd a = X;
    if (cache) cache->activations.push_back(a);
    for (size_t l = 0; l < w.size(); ++l) {
        Eigen::MatrixXd z = a * w[l]->transpose();
        z.rowwise() += b[l]->transpose();
        if (cache) cache->pre.push_back(z);
        a = relu[l] ? z.cwiseMax(0.0) : z;
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

struct StackGrads {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
};

// dOut is the loss gradient at the stack output; returns parameter
// gradients and (optionally) the gradient at the input.
StackGrads stack_backward(const std::vector<const Eigen::MatrixXd*>& w,
                          const std::vector<bool>& relu, const StackCache& cache,
                          Eigen::MatrixXd dOut, Eigen::MatrixXd* dInput = nullptr) {
    StackGrads grads;
    grads.w.resize(w.size());
    grads.b.resize(w.size());
    for (size_t l = w.size(); l-- > 0;) {
        if (relu[l]) {
            dOut = dOut.cwiseProduct(
                (cache.pre[l].array() > 0.0).cast<double>().matrix());
        }
        grads.w[l] = dOut.transpose() * cache.activations[l];
        grads.b[l] = dOut.colwise().sum().transpose();
        if (l > 0 || dInput) {
            Eigen::MatrixXd next = dOut * (*w[l]);
            if (l == 0) {
                if (dInput) *dInput = std::move(next);
            } else {
                dOut = std::move(next);
            }
        }
    }
    return grads;
}

void collect_autoencoder(const SAEModel& m, std::vector<const Eigen::MatrixXd*>& w,
                         std::vector<const Eigen::VectorXd*>& b, std::vector<bool>& relu) {
    for (size_t l = 0; l < m.enc_w.size(); ++l) {
        w.push_back(&m.enc_w[l]);
        b.push_back(&m.enc_b[l]);
        relu.push_back(l + 1 < m.enc_w.size());  // latent layer is linear
    }
    for (size_t l = 0; l < m.dec_w.size(); ++l) {
        w.push_back(&m.dec_w[l]);
        b.push_back(&m.dec_b[l]);
        relu.push_back(l + 1 < m.dec_w.size());  // reconstruction is linear
    }
}

void collect_encoder(const SAEModel& m, std::vector<const Eigen::MatrixXd*>& w,
                     std::vector<const Eigen::VectorXd*>& b, std::vector<bool>& relu) {
    for (size_t l = 0; l < m.enc_w.size(); ++l) {
        w.push_back(&m.enc_w[l]);
        b.push_back(&m.enc_b[l]);
        relu.push_back(l + 1 < m.enc_w.size());
    }
}

}  // namespace

SAEModel sae_init(const std::vector<int>& encoder_dims, std::uint64_t seed) {
    if (encoder_dims.size() < 2) throw std::invalid_argument("need at least input and latent dims");
    for (int d : encoder_dims) {
        if (d < 1) throw std::invalid_argument("non-positive layer dimension");
    }
    std::mt19937_64 rng(seed);
    SAEModel m;
    m.encoder_dims = encoder_dims;
    for (size_t l = 0; l + 1 < encoder_dims.size(); ++l) {
        m.enc_w.push_back(glorot_uniform(encoder_dims[l + 1], encoder_dims[l], rng));
        m.enc_b.push_back(Eigen::VectorXd::Zero(encoder_dims[l + 1]));
    }
    for (size_t l = encoder_dims.size() - 1; l > 0; --l) {
        m.dec_w.push_back(glorot_uniform(encoder_dims[l - 1], encoder_dims[l], rng));
        m.dec_b.push_back(Eigen::VectorXd::Zero(encoder_dims[l - 1]));
    }
    return m;
}

double sae_reconstruction_loss(const SAEModel& model, const Eigen::MatrixXd& X) {
    std::vector<const Eigen::MatrixXd*> w;
    std::vector<const Eigen::VectorXd*> b;
    std::vector<bool> relu;
    collect_autoencoder(model, w, b, relu);
    Eigen::MatrixXd out = stack_forward(w, b, relu, X, nullptr);
    return (out - X).squaredNorm() / static_cast<double>(X.rows());
}

SAEGradients sae_reconstruction_gradients(const SAEModel& model, const Eigen::MatrixXd& X) {
    std::vector<const Eigen::MatrixXd*> w;
    std::vector<const Eigen::VectorXd*> b;
    std::vector<bool> relu;
    collect_autoencoder(model, w, b, relu);
    StackCache cache;
    Eigen::MatrixXd out = stack_forward(w, b, relu, X, &cache);
    Eigen::MatrixXd dOut = 2.0 * (out - X) / static_cast<double>(X.rows());
    StackGrads grads = stack_backward(w, relu, cache, std::move(dOut));

    SAEGradients g;
    size_t ne = model.enc_w.size();
    g.enc_w.assign(grads.w.begin(), grads.w.begin() + static_cast<std::ptrdiff_t>(ne));
    g.enc_b.assign(grads.b.begin(), grads.b.begin() + static_cast<std::ptrdiff_t>(ne));
    g.dec_w.assign(grads.w.begin() + static_cast<std::ptrdiff_t>(ne), grads.w.end());
    g.dec_b.assign(grads.b.begin() + static_cast<std::ptrdiff_t>(ne), grads.b.end());
    return g;
}

double sae_pretrain(SAEModel& model, const Eigen::MatrixXd& X, const PretrainParams& params,
                    std::uint64_t seed) {
    if (X.cols() != model.input_dim()) throw std::invalid_argument("data/model dim mismatch");
    if (X.rows() < params.batch_size) {
        throw std::invalid_argument("fewer samples than batch_size");
    }
    const Eigen::Index n = X.rows();
    std::mt19937_64 rng(seed);

    SAEGradients velocity;
    for (const auto& m : model.enc_w) velocity.enc_w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    for (const auto& v : model.enc_b) velocity.enc_b.push_back(Eigen::VectorXd::Zero(v.size()));
    for (const auto& m : model.dec_w) velocity.dec_w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    for (const auto& v : model.dec_b) velocity.dec_b.push_back(Eigen::VectorXd::Zero(v.size()));

    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start + params.batch_size <= n;
             start += params.batch_size) {
            Eigen::MatrixXd batch(params.batch_size, X.cols());
            for (int r = 0; r < params.batch_size; ++r) {
                batch.row(r) = X.row(order[static_cast<size_t>(start + r)]);
            }
            SAEGradients g = sae_reconstruction_gradients(model, batch);
            auto step = [&](Eigen::MatrixXd& wm, Eigen::MatrixXd& vel, const Eigen::MatrixXd& grad) {
                vel = params.momentum * vel - params.learning_rate * grad;
                wm += vel;
            };
            auto step_b = [&](Eigen::VectorXd& bv, Eigen::VectorXd& vel, const Eigen::VectorXd& grad) {
                vel = params.momentum * vel - params.learning_rate * grad;
                bv += vel;
            };
            for (size_t l = 0; l < model.enc_w.size(); ++l) {
                step(model.enc_w[l], velocity.enc_w[l], g.enc_w[l]);
                step_b(model.enc_b[l], velocity.enc_b[l], g.enc_b[l]);
            }
            for (size_t l = 0; l < model.dec_w.size(); ++l) {
                step(model.dec_w[l], velocity.dec_w[l], g.dec_w[l]);
                step_b(model.dec_b[l], velocity.dec_b[l], g.dec_b[l]);
            }
        }
        double loss = sae_reconstruction_loss(model, X);
        if (!std::isfinite(loss)) {
            throw std::runtime_error(
                "pretraining diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                "; try a smaller learning rate");
        }
    }
    return sae_reconstruction_loss(model, X);
}

Eigen::MatrixXd encode_latent(const SAEModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.input_dim()) throw std::invalid_argument("data/model dim mismatch");
    std::vector<const Eigen::MatrixXd*> w;
    std::vector<const Eigen::VectorXd*> b;
    std::vector<bool> relu;
    collect_encoder(model, w, b, relu);
    return stack_forward(w, b, relu, X, nullptr);
}

namespace {

double squared_distance(const Eigen::MatrixXd& Z, Eigen::Index i, const Eigen::MatrixXd& c,
                        Eigen::Index j) {
    return (Z.row(i) - c.row(j)).squaredNorm();
}

KMeansResult kmeans_once(const Eigen::MatrixXd& Z, int m, const KMeansParams& params,
                         std::mt19937_64& rng) {
    const Eigen::Index n = Z.rows();
    Eigen::MatrixXd centroids(m, Z.cols());

    // k-means++ seeding
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centroids.row(0) = Z.row(first(rng));
    Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (int j = 1; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(Z, i, centroids, j - 1));
        }
        double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);  // all points coincide with chosen centroids
        }
        centroids.row(j) = Z.row(pick);
    }

    std::vector<int> assign(static_cast<size_t>(n), 0);
    for (int it = 0; it < params.max_iters; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int j = 0; j < m; ++j) {
                double d = squared_distance(Z, i, centroids, j);
                if (d < best) {
                    best = d;
                    arg = j;
                }
            }
            assign[static_cast<size_t>(i)] = arg;
        }

        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(m, Z.cols());
        Eigen::VectorXd count = Eigen::VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < n; ++i) {
            next.row(assign[static_cast<size_t>(i)]) += Z.row(i);
            count[assign[static_cast<size_t>(i)]] += 1.0;
        }
        for (int j = 0; j < m; ++j) {
            if (count[j] > 0.0) {
                next.row(j) /= count[j];
            } else {
                // reseed an emptied cluster to the farthest point
                double far = -1.0;
                Eigen::Index pick = 0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    double d = squared_distance(Z, i, centroids, assign[static_cast<size_t>(i)]);
                    if (d > far) {
                        far = d;
                        pick = i;
                    }
                }
                next.row(j) = Z.row(pick);
            }
        }
        double shift = (next - centroids).rowwise().norm().maxCoeff();
        centroids = std::move(next);
        if (shift < params.tol) break;
    }

    KMeansResult result;
    result.centroids = centroids;
    result.assignments.resize(static_cast<size_t>(n));
    result.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int j = 0; j < m; ++j) {
            double d = squared_distance(Z, i, centroids, j);
            if (d < best) {
                best = d;
                arg = j;
            }
        }
        result.assignments[static_cast<size_t>(i)] = arg;
        result.inertia += best;
    }
    return result;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& Z, int m, const KMeansParams& params,
                    std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("need m >= 1 clusters");
    if (Z.rows() < m) throw std::invalid_argument("more clusters than samples");
    std::mt19937_64 rng(seed);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    int restarts = std::max(1, params.restarts);
    for (int r = 0; r < restarts; ++r) {
        KMeansResult run = kmeans_once(Z, m, params, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

Eigen::MatrixXd soft_assignments(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& centroids,
                                 double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("alpha must be positive");
    if (Z.cols() != centroids.cols()) throw std::invalid_argument("latent dim mismatch");
    const Eigen::Index n = Z.rows();
    const Eigen::Index m = centroids.rows();
    Eigen::MatrixXd q(n, m);
    const double exponent = -(alpha + 1.0) / 2.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            double d2 = (Z.row(i) - centroids.row(j)).squaredNorm();
            q(i, j) = std::pow(1.0 + d2 / alpha, exponent);
        }
        q.row(i) /= q.row(i).sum();
    }
    return q;
}

Eigen::MatrixXd target_distribution(const Eigen::MatrixXd& Q) {
    Eigen::VectorXd freq = Q.colwise().sum();
    Eigen::MatrixXd p(Q.rows(), Q.cols());
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
        double row_sum = 0.0;
        for (Eigen::Index j = 0; j < Q.cols(); ++j) {
            double v = freq[j] > 0.0 ? Q(i, j) * Q(i, j) / freq[j] : 0.0;
            p(i, j) = v;
            row_sum += v;
        }
        if (row_sum > 0.0) p.row(i) /= row_sum;
    }
    return p;
}

double kl_divergence(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q) {
    if (P.rows() != Q.rows() || P.cols() != Q.cols()) {
        throw std::invalid_argument("distribution shape mismatch");
    }
    if (!P.allFinite() || !Q.allFinite()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double kl = 0.0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        for (Eigen::Index j = 0; j < P.cols(); ++j) {
            if (P(i, j) > 0.0) kl += P(i, j) * std::log(P(i, j) / Q(i, j));
        }
    }
    return kl;
}

namespace {

// Shared kernel for the two KL gradients: weight w_ij = (alpha+1)/alpha *
// (1 + |z_i - mu_j|^2 / alpha)^-1 * (p_ij - q_ij).
Eigen::MatrixXd kl_pair_weights(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& centroids,
                                double alpha, const Eigen::MatrixXd& P) {
    Eigen::MatrixXd Q = soft_assignments(Z, centroids, alpha);
    Eigen::MatrixXd w(Z.rows(), centroids.rows());
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
            double d2 = (Z.row(i) - centroids.row(j)).squaredNorm();
            w(i, j) = (alpha + 1.0) / alpha / (1.0 + d2 / alpha) * (P(i, j) - Q(i, j));
        }
    }
    return w;
}

}  // namespace

Eigen::MatrixXd kl_grad_latent(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& centroids,
                               double alpha, const Eigen::MatrixXd& P) {
    Eigen::MatrixXd w = kl_pair_weights(Z, centroids, alpha, P);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(Z.rows(), Z.cols());
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
            grad.row(i) += w(i, j) * (Z.row(i) - centroids.row(j));
        }
    }
    return grad;
}

Eigen::MatrixXd kl_grad_centroids(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& centroids,
                                  double alpha, const Eigen::MatrixXd& P) {
    Eigen::MatrixXd w = kl_pair_weights(Z, centroids, alpha, P);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(centroids.rows(), centroids.cols());
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
            grad.row(j) -= w(i, j) * (Z.row(i) - centroids.row(j));
        }
    }
    return grad;
}

EncoderGradients kl_encoder_gradients(const SAEModel& model, const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& centroids, double alpha,
                                      const Eigen::MatrixXd& P) {
    std::vector<const Eigen::MatrixXd*> w;
    std::vector<const Eigen::VectorXd*> b;
    std::vector<bool> relu;
    collect_encoder(model, w, b, relu);
    StackCache cache;
    Eigen::MatrixXd Z = stack_forward(w, b, relu, X, &cache);
    Eigen::MatrixXd dZ = kl_grad_latent(Z, centroids, alpha, P);
    StackGrads grads = stack_backward(w, relu, cache, std::move(dZ));
    return {std::move(grads.w), std::move(grads.b)};
}

SelfTrainHistory self_train(ClusterModel& model, const Eigen::MatrixXd& X,
                            const SelfTrainParams& params, std::vector<int>& assignments_out) {
    SelfTrainHistory history;
    const Eigen::Index n = X.rows();

    auto argmax_rows = [](const Eigen::MatrixXd& Q) {
        std::vector<int> ids(static_cast<size_t>(Q.rows()));
        for (Eigen::Index i = 0; i < Q.rows(); ++i) {
            Eigen::Index best;
            Q.row(i).maxCoeff(&best);
            ids[static_cast<size_t>(i)] = static_cast<int>(best);
        }
        return ids;
    };

    Eigen::MatrixXd Z = encode_latent(model.sae, X);
    Eigen::MatrixXd Q = soft_assignments(Z, model.centroids, model.alpha);
    Eigen::MatrixXd P = target_distribution(Q);
    std::vector<int> prev_ids = argmax_rows(Q);
    assignments_out = prev_ids;

    std::vector<const Eigen::MatrixXd*> w;
    std::vector<const Eigen::VectorXd*> b;
    std::vector<bool> relu;
    collect_encoder(model.sae, w, b, relu);

    const bool full_batch = params.batch_size <= 0 || params.batch_size >= n;
    std::mt19937_64 batch_rng(model.seed);

    // last stable state, restored if training diverges
    auto checkpoint = [&]() {
        return std::pair{model.sae, model.centroids};
    };
    auto stable = checkpoint();

    for (int iter = 1; iter <= params.iter_max; ++iter) {
        Eigen::MatrixXd Xb, Pb;
        if (full_batch) {
            Xb = X;
            Pb = P;
        } else {
            Xb.resize(params.batch_size, X.cols());
            Pb.resize(params.batch_size, P.cols());
            std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
            for (int r = 0; r < params.batch_size; ++r) {
                Eigen::Index i = pick(batch_rng);
                Xb.row(r) = X.row(i);
                Pb.row(r) = P.row(i);
            }
        }

        StackCache cache;
        Eigen::MatrixXd Zb = stack_forward(w, b, relu, Xb, &cache);
        Eigen::MatrixXd Qb = soft_assignments(Zb, model.centroids, model.alpha);
        double kl = kl_divergence(Pb, Qb);
        if (!std::isfinite(kl)) {
            model.sae = std::move(stable.first);
            model.centroids = std::move(stable.second);
            throw std::runtime_error("self-training diverged (non-finite KL) at iteration " +
                                     std::to_string(iter) +
                                     "; model restored to the last stable checkpoint");
        }
        history.kl_per_step.push_back(kl);

        // steps follow the batch-mean objective so the rate is independent
        // of the batch size; the recorded KL stays the plain sum
        const double step = params.learning_rate / static_cast<double>(Xb.rows());
        Eigen::MatrixXd dZ = kl_grad_latent(Zb, model.centroids, model.alpha, Pb);
        StackGrads grads = stack_backward(w, relu, cache, std::move(dZ));
        for (size_t l = 0; l < model.sae.enc_w.size(); ++l) {
            model.sae.enc_w[l] -= step * grads.w[l];
            model.sae.enc_b[l] -= step * grads.b[l];
        }
        if (!params.freeze_centroids) {
            Eigen::MatrixXd dMu = kl_grad_centroids(Zb, model.centroids, model.alpha, Pb);
            model.centroids -= step * dMu;
        }
        history.iterations = iter;

        if (iter % params.update_interval == 0) {
            Z = encode_latent(model.sae, X);
            Q = soft_assignments(Z, model.centroids, model.alpha);
            P = target_distribution(Q);
            history.refresh_steps.push_back(iter);
            stable = checkpoint();
            std::vector<int> ids = argmax_rows(Q);
            assignments_out = ids;
            if (ids == prev_ids) {
                history.converged = true;
                break;
            }
            prev_ids = std::move(ids);
        }
    }

    Z = encode_latent(model.sae, X);
    Q = soft_assignments(Z, model.centroids, model.alpha);
    assignments_out = argmax_rows(Q);
    return history;
}

namespace {

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
    if (!rows.is_array() || rows.empty()) throw std::runtime_error("bad matrix payload");
    Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    Eigen::Index c = static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<size_t>(i)].size()) != c) {
            throw std::runtime_error("ragged matrix payload");
        }
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

constexpr int kModelFormatVersion = 1;

}  // namespace

void save_model(const ClusterModel& model, const std::string& path) {
    json payload;
    payload["format_version"] = kModelFormatVersion;
    payload["dims"] = model.sae.encoder_dims;
    json weights = json::array();
    json biases = json::array();
    for (const auto& m : model.sae.enc_w) weights.push_back(matrix_to_json(m));
    for (const auto& m : model.sae.dec_w) weights.push_back(matrix_to_json(m));
    for (const auto& v : model.sae.enc_b) biases.push_back(vector_to_json(v));
    for (const auto& v : model.sae.dec_b) biases.push_back(vector_to_json(v));
    payload["weights"] = std::move(weights);
    payload["biases"] = std::move(biases);
    payload["centroids"] = matrix_to_json(model.centroids);
    payload["alpha"] = model.alpha;
    payload["seed"] = model.seed;
    payload["checksum"] = sha256_hex(payload.dump());

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << payload.dump() << "\n";
}

ClusterModel load_model(const std::string& path) {
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
        payload["format_version"].get<int>() != kModelFormatVersion) {
        throw std::runtime_error(path + ": unsupported model format version");
    }
    std::string stored = payload.at("checksum").get<std::string>();
    payload.erase("checksum");
    payload["checksum"] = sha256_hex(payload.dump());
    if (payload["checksum"].get<std::string>() != stored) {
        throw std::runtime_error(path + ": checksum mismatch (corrupt model file)");
    }

    ClusterModel model;
    model.sae.encoder_dims = payload.at("dims").get<std::vector<int>>();
    size_t layers = model.sae.encoder_dims.size() - 1;
    const auto& weights = payload.at("weights");
    const auto& biases = payload.at("biases");
    if (weights.size() != 2 * layers || biases.size() != 2 * layers) {
        throw std::runtime_error(path + ": layer count mismatch");
    }
    for (size_t l = 0; l < layers; ++l) {
        model.sae.enc_w.push_back(matrix_from_json(weights[l]));
        model.sae.enc_b.push_back(vector_from_json(biases[l]));
    }
    for (size_t l = layers; l < 2 * layers; ++l) {
        model.sae.dec_w.push_back(matrix_from_json(weights[l]));
        model.sae.dec_b.push_back(vector_from_json(biases[l]));
    }
    // a pretrain-only model has no centroids yet
    if (payload.at("centroids").empty()) {
        model.centroids = Eigen::MatrixXd(0, model.sae.latent_dim());
    } else {
        model.centroids = matrix_from_json(payload.at("centroids"));
    }
    model.alpha = payload.at("alpha").get<double>();
    model.seed = payload.at("seed").get<std::uint64_t>();
    return model;
}

}  // namespace topicseg
