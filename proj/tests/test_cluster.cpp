#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "topicseg/cluster.hpp"

using namespace topicseg;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1, 1);
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = dist(rng);
    }
    return m;
}

struct Blobs {
    Eigen::MatrixXd points;
    std::vector<int> labels;
};

Blobs make_blobs(int per_cluster, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    std::vector<Eigen::Vector2d> centers = {{0, 0}, {6, 0}, {0, 6}};
    Blobs b;
    b.points.resize(3 * per_cluster, 2);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < per_cluster; ++i) {
            Eigen::Index row = c * per_cluster + i;
            b.points(row, 0) = centers[static_cast<size_t>(c)][0] + noise(rng);
            b.points(row, 1) = centers[static_cast<size_t>(c)][1] + noise(rng);
            b.labels.push_back(c);
        }
    }
    return b;
}

// identity-weight single-layer autoencoder used to make latent == input
SAEModel identity_sae(int dim) {
    SAEModel m = sae_init({dim, dim}, 0);
    m.enc_w[0] = Eigen::MatrixXd::Identity(dim, dim);
    m.enc_b[0].setZero();
    m.dec_w[0] = Eigen::MatrixXd::Identity(dim, dim);
    m.dec_b[0].setZero();
    return m;
}

template <typename GradFn, typename LossFn>
double max_tensor_rel_error(std::vector<double*> params, std::vector<Eigen::Index> sizes,
                            GradFn&& analytic, LossFn&& loss, double eps) {
    double worst = 0.0;
    for (size_t t = 0; t < params.size(); ++t) {
        double num_norm = 0.0, diff_norm = 0.0, ana_norm = 0.0;
        for (Eigen::Index i = 0; i < sizes[t]; ++i) {
            double a = analytic(t, i);
            double n = oracle::central_difference(loss, params[t] + i, eps);
            num_norm += n * n;
            ana_norm += a * a;
            diff_norm += (a - n) * (a - n);
        }
        double denom = std::max(1e-8, std::sqrt(num_norm) + std::sqrt(ana_norm));
        worst = std::max(worst, std::sqrt(diff_norm) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("identity-capable autoencoder drives reconstruction loss below 1e-3") {
    SAEModel m = sae_init({3, 3}, 12);
    Eigen::MatrixXd X = Eigen::MatrixXd::Identity(3, 3);
    PretrainParams p;
    p.epochs = 600;
    p.batch_size = 3;
    p.learning_rate = 0.05;
    double loss = sae_pretrain(m, X, p, 12);
    CHECK(loss < 1e-3);
}

TEST_CASE("pretraining is deterministic for a fixed seed") {
    Eigen::MatrixXd X = uniform_matrix(16, 4, 3);
    PretrainParams p;
    p.epochs = 1;
    p.batch_size = 4;
    SAEModel a = sae_init({4, 3, 2}, 7);
    SAEModel b = sae_init({4, 3, 2}, 7);
    sae_pretrain(a, X, p, 99);
    sae_pretrain(b, X, p, 99);
    for (size_t l = 0; l < a.enc_w.size(); ++l) {
        CHECK((a.enc_w[l] - b.enc_w[l]).norm() == 0.0);
        CHECK((a.dec_w[l] - b.dec_w[l]).norm() == 0.0);
    }
}

TEST_CASE("reconstruction gradients match finite differences") {
    SAEModel m = sae_init({3, 4, 3}, 21);
    // nonzero biases keep every pre-activation away from the relu kink,
    // where central differences straddle the non-smooth point
    std::mt19937_64 brng(23);
    std::uniform_real_distribution<double> bdist(0.05, 0.3);
    for (auto& b : m.enc_b) {
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = bdist(brng);
    }
    for (auto& b : m.dec_b) {
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = bdist(brng);
    }
    Eigen::MatrixXd X = uniform_matrix(5, 3, 22);

    std::vector<double*> params;
    std::vector<Eigen::Index> sizes;
    for (auto& w : m.enc_w) { params.push_back(w.data()); sizes.push_back(w.size()); }
    for (auto& b : m.enc_b) { params.push_back(b.data()); sizes.push_back(b.size()); }
    for (auto& w : m.dec_w) { params.push_back(w.data()); sizes.push_back(w.size()); }
    for (auto& b : m.dec_b) { params.push_back(b.data()); sizes.push_back(b.size()); }

    SAEGradients g = sae_reconstruction_gradients(m, X);
    std::vector<const double*> grads;
    for (auto& w : g.enc_w) grads.push_back(w.data());
    for (auto& b : g.enc_b) grads.push_back(b.data());
    for (auto& w : g.dec_w) grads.push_back(w.data());
    for (auto& b : g.dec_b) grads.push_back(b.data());

    double worst = max_tensor_rel_error(
        params, sizes, [&](size_t t, Eigen::Index i) { return grads[t][i]; },
        [&]() { return sae_reconstruction_loss(m, X); }, 1e-5);
    CHECK(worst < 1e-4);
}

TEST_CASE("encode_latent is the plain encoder forward pass") {
    SAEModel zero = sae_init({3, 2}, 0);
    zero.enc_w[0].setZero();
    zero.enc_b[0].setZero();
    CHECK(encode_latent(zero, uniform_matrix(4, 3, 1)).norm() == 0.0);

    SAEModel ident = identity_sae(3);
    Eigen::MatrixXd X = uniform_matrix(4, 3, 2);
    CHECK((encode_latent(ident, X) - X).norm() == 0.0);

    // two-layer hand computation with explicit loops
    SAEModel m = sae_init({3, 4, 2}, 5);
    Eigen::MatrixXd Z = encode_latent(m, X);
    for (int i = 0; i < 4; ++i) {
        Eigen::VectorXd h = Eigen::VectorXd::Zero(4);
        for (int o = 0; o < 4; ++o) {
            double acc = m.enc_b[0][o];
            for (int k = 0; k < 3; ++k) acc += m.enc_w[0](o, k) * X(i, k);
            h[o] = std::max(0.0, acc);
        }
        for (int o = 0; o < 2; ++o) {
            double acc = m.enc_b[1][o];
            for (int k = 0; k < 4; ++k) acc += m.enc_w[1](o, k) * h[k];
            CHECK(Z(i, o) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("kmeans trivial configurations") {
    Eigen::MatrixXd pts(3, 2);
    pts << 0, 0, 5, 0, 0, 5;
    KMeansResult r = kmeans(pts, 3, {}, 1);
    CHECK(r.inertia == doctest::Approx(0.0));

    KMeansResult one = kmeans(pts, 1, {}, 1);
    CHECK((one.centroids.row(0) - pts.colwise().mean()).norm() == doctest::Approx(0.0));

    CHECK_THROWS(kmeans(pts, 4, {}, 1));
}

TEST_CASE("kmeans recovers well-separated blobs") {
    Blobs b = make_blobs(30, 0.05, 77);
    KMeansResult r = kmeans(b.points, 3, {}, 3);
    // purity: every cluster maps to one true label
    std::map<int, std::map<int, int>> counts;
    for (size_t i = 0; i < b.labels.size(); ++i) {
        ++counts[r.assignments[i]][b.labels[i]];
    }
    for (const auto& [cluster, histogram] : counts) {
        CHECK(histogram.size() == 1);
    }
}

TEST_CASE("soft assignments: symmetry and the alpha=1 worked case") {
    Eigen::MatrixXd centroids(2, 2);
    centroids << 1, 0, -1, 0;
    Eigen::MatrixXd z(1, 2);
    z << 0, 3;  // equidistant
    Eigen::MatrixXd q = soft_assignments(z, centroids, 1.0);
    CHECK(q(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

    Eigen::MatrixXd c2(2, 2);
    c2 << 0, 0, 1, 0;  // |z - mu2|^2 = 1 with z = mu1
    Eigen::MatrixXd z2(1, 2);
    z2 << 0, 0;
    Eigen::MatrixXd q2 = soft_assignments(z2, c2, 1.0);
    CHECK(q2(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(q2(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("soft assignment rows sum to one") {
    Eigen::MatrixXd z = uniform_matrix(20, 3, 31);
    Eigen::MatrixXd centroids = uniform_matrix(5, 3, 32);
    Eigen::MatrixXd q = soft_assignments(z, centroids, 1.0);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        CHECK(q.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(q.row(i).minCoeff() >= 0.0);
    }
}

TEST_CASE("target distribution basics") {
    Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(4, 2, 0.5);
    Eigen::MatrixXd p = target_distribution(uniform);
    CHECK((p - uniform).norm() == doctest::Approx(0.0).epsilon(1e-12));

    // single sample: quadratic normalization cancels and P == Q
    Eigen::MatrixXd q1(1, 3);
    q1 << 0.2, 0.5, 0.3;
    CHECK((target_distribution(q1) - q1).norm() < 1e-12);

    // two-row case against the direct formula
    Eigen::MatrixXd q2(2, 2);
    q2 << 0.9, 0.1, 0.5, 0.5;
    Eigen::MatrixXd p2 = target_distribution(q2);
    double f0 = 1.4, f1 = 0.6;
    auto direct = [&](double qa, double qb) {
        double a = qa * qa / f0, b = qb * qb / f1;
        return std::pair{a / (a + b), b / (a + b)};
    };
    auto [p00, p01] = direct(0.9, 0.1);
    auto [p10, p11] = direct(0.5, 0.5);
    CHECK(p2(0, 0) == doctest::Approx(p00).epsilon(1e-12));
    CHECK(p2(0, 1) == doctest::Approx(p01).epsilon(1e-12));
    CHECK(p2(1, 0) == doctest::Approx(p10).epsilon(1e-12));
    CHECK(p2(1, 1) == doctest::Approx(p11).epsilon(1e-12));

    for (Eigen::Index i = 0; i < p2.rows(); ++i) {
        CHECK(p2.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("kl divergence is nonnegative and zero only at equality") {
    Eigen::MatrixXd q = soft_assignments(uniform_matrix(6, 2, 41), uniform_matrix(3, 2, 42), 1.0);
    Eigen::MatrixXd p = target_distribution(q);
    CHECK(kl_divergence(p, q) >= 0.0);
    CHECK(kl_divergence(q, q) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl_divergence(p, q) > 1e-6);  // sharpening moved the distribution
}

TEST_CASE("kl gradients match finite differences") {
    Eigen::MatrixXd Z = uniform_matrix(5, 3, 51);
    Eigen::MatrixXd centroids = uniform_matrix(2, 3, 52);
    const double alpha = 1.0;
    Eigen::MatrixXd P = target_distribution(soft_assignments(Z, centroids, alpha));

    Eigen::MatrixXd gz = kl_grad_latent(Z, centroids, alpha, P);
    Eigen::MatrixXd gc = kl_grad_centroids(Z, centroids, alpha, P);
    auto loss = [&]() { return kl_divergence(P, soft_assignments(Z, centroids, alpha)); };

    double worst = 0.0;
    for (Eigen::Index i = 0; i < Z.size(); ++i) {
        double n = oracle::central_difference(loss, Z.data() + i, 1e-5);
        worst = std::max(worst, oracle::rel_error(gz.data()[i], n));
    }
    for (Eigen::Index i = 0; i < centroids.size(); ++i) {
        double n = oracle::central_difference(loss, centroids.data() + i, 1e-5);
        worst = std::max(worst, oracle::rel_error(gc.data()[i], n));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("kl encoder gradients match finite differences") {
    SAEModel m = sae_init({4, 3, 2}, 61);
    Eigen::MatrixXd X = uniform_matrix(6, 4, 62);
    Eigen::MatrixXd centroids = uniform_matrix(2, 2, 63);
    Eigen::MatrixXd P = target_distribution(
        soft_assignments(encode_latent(m, X), centroids, 1.0));

    EncoderGradients g = kl_encoder_gradients(m, X, centroids, 1.0, P);
    auto loss = [&]() {
        return kl_divergence(P, soft_assignments(encode_latent(m, X), centroids, 1.0));
    };

    std::vector<double*> params;
    std::vector<Eigen::Index> sizes;
    std::vector<const double*> grads;
    for (size_t l = 0; l < m.enc_w.size(); ++l) {
        params.push_back(m.enc_w[l].data());
        sizes.push_back(m.enc_w[l].size());
        grads.push_back(g.w[l].data());
    }
    for (size_t l = 0; l < m.enc_b.size(); ++l) {
        params.push_back(m.enc_b[l].data());
        sizes.push_back(m.enc_b[l].size());
        grads.push_back(g.b[l].data());
    }
    double worst = max_tensor_rel_error(
        params, sizes, [&](size_t t, Eigen::Index i) { return grads[t][i]; }, loss, 1e-5);
    CHECK(worst < 1e-4);
}

TEST_CASE("self-training stops at the first check when assignments are stable") {
    Blobs b = make_blobs(20, 0.05, 71);
    ClusterModel model;
    model.sae = identity_sae(2);
    KMeansResult km = kmeans(b.points, 3, {}, 5);
    model.centroids = km.centroids;
    model.alpha = 1.0;

    SelfTrainParams p;
    p.update_interval = 5;
    p.iter_max = 200;
    p.learning_rate = 0.001;
    std::vector<int> assignments;
    SelfTrainHistory hist = self_train(model, b.points, p, assignments);
    CHECK(hist.converged);
    CHECK(hist.iterations == 5);
    CHECK(assignments == km.assignments);
}

TEST_CASE("frozen centroids stay put during self-training") {
    Blobs b = make_blobs(15, 0.3, 83);
    ClusterModel model;
    model.sae = identity_sae(2);
    model.centroids = kmeans(b.points, 3, {}, 5).centroids;
    Eigen::MatrixXd before = model.centroids;
    SelfTrainParams p;
    p.freeze_centroids = true;
    p.update_interval = 10;
    p.iter_max = 30;
    std::vector<int> assignments;
    self_train(model, b.points, p, assignments);
    CHECK((model.centroids - before).norm() == 0.0);
}

TEST_CASE("iter_max zero returns the initial assignments unchanged") {
    Blobs b = make_blobs(10, 0.05, 81);
    ClusterModel model;
    model.sae = identity_sae(2);
    model.centroids = kmeans(b.points, 3, {}, 5).centroids;
    SelfTrainParams p;
    p.iter_max = 0;
    std::vector<int> assignments;
    SelfTrainHistory hist = self_train(model, b.points, p, assignments);
    CHECK(hist.iterations == 0);
    CHECK(hist.kl_per_step.empty());
    Eigen::MatrixXd q = soft_assignments(b.points, model.centroids, 1.0);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        Eigen::Index best;
        q.row(i).maxCoeff(&best);
        CHECK(assignments[static_cast<size_t>(i)] == static_cast<int>(best));
    }
}

TEST_CASE("kl is non-increasing between target refreshes at the default rate") {
    Blobs b = make_blobs(20, 0.3, 91);  // looser blobs so training has work to do
    ClusterModel model;
    model.sae = identity_sae(2);
    model.centroids = kmeans(b.points, 3, {}, 5).centroids;
    SelfTrainParams p;  // default learning rate
    p.update_interval = 10;
    p.iter_max = 50;
    std::vector<int> assignments;
    SelfTrainHistory hist = self_train(model, b.points, p, assignments);
    size_t next_refresh = 0;
    for (size_t i = 1; i < hist.kl_per_step.size(); ++i) {
        bool crosses_refresh = false;
        while (next_refresh < hist.refresh_steps.size() &&
               static_cast<size_t>(hist.refresh_steps[next_refresh]) <= i) {
            crosses_refresh = static_cast<size_t>(hist.refresh_steps[next_refresh]) == i;
            ++next_refresh;
        }
        if (!crosses_refresh) {
            CHECK(hist.kl_per_step[i] <= hist.kl_per_step[i - 1] + 1e-12);
        }
    }
}

TEST_CASE("divergent self-training restores the last stable parameters") {
    Blobs b = make_blobs(15, 0.3, 95);
    ClusterModel model;
    model.sae = identity_sae(2);
    model.centroids = kmeans(b.points, 3, {}, 5).centroids;
    Eigen::MatrixXd before_w = model.sae.enc_w[0];
    Eigen::MatrixXd before_c = model.centroids;

    Eigen::MatrixXd poisoned = b.points;
    poisoned(0, 0) = std::numeric_limits<double>::infinity();
    SelfTrainParams p;
    p.update_interval = 10;
    p.iter_max = 100;
    std::vector<int> assignments;
    CHECK_THROWS_WITH_AS(self_train(model, poisoned, p, assignments),
                         doctest::Contains("stable checkpoint"), std::runtime_error);
    // parameters rolled back to the pre-divergence checkpoint
    CHECK((model.sae.enc_w[0] - before_w).norm() == 0.0);
    CHECK((model.centroids - before_c).norm() == 0.0);
}

TEST_CASE("model files round-trip bit-for-bit and reject corruption") {
    ClusterModel model;
    model.sae = sae_init({4, 3, 2}, 17);
    model.centroids = uniform_matrix(3, 2, 18);
    model.alpha = 1.0;
    model.seed = 17;

    std::string path = (fs::temp_directory_path() / "cluster_model.json").string();
    save_model(model, path);
    ClusterModel loaded = load_model(path);
    CHECK(loaded.sae.encoder_dims == model.sae.encoder_dims);
    for (size_t l = 0; l < model.sae.enc_w.size(); ++l) {
        CHECK((loaded.sae.enc_w[l] - model.sae.enc_w[l]).norm() == 0.0);
        CHECK((loaded.sae.dec_w[l] - model.sae.dec_w[l]).norm() == 0.0);
    }
    CHECK((loaded.centroids - model.centroids).norm() == 0.0);
    CHECK(loaded.seed == model.seed);

    // truncate -> checksum/parse failure, nothing constructed
    std::ifstream in(path);
    std::string full((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(path, std::ios::trunc);
    out << full.substr(0, full.size() / 2);
    out.close();
    CHECK_THROWS(load_model(path));
    std::remove(path.c_str());
}

TEST_CASE("different seeds produce different model files") {
    ClusterModel a, b;
    a.sae = sae_init({3, 2}, 1);
    b.sae = sae_init({3, 2}, 2);
    a.centroids = b.centroids = uniform_matrix(2, 2, 5);
    a.seed = 1;
    b.seed = 2;
    std::string pa = (fs::temp_directory_path() / "model_seed1.json").string();
    std::string pb = (fs::temp_directory_path() / "model_seed2.json").string();
    save_model(a, pa);
    save_model(b, pb);
    std::ifstream fa(pa), fb(pb);
    std::string sa((std::istreambuf_iterator<char>(fa)), {});
    std::string sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa != sb);
    std::remove(pa.c_str());
    std::remove(pb.c_str());
}
