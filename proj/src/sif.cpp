#include "topicseg/sif.hpp"

#include <cmath>
#include <stdexcept>

namespace topicseg {

Eigen::VectorXd sif_weighted_average(const std::vector<std::string>& tokens,
                                     const VectorTable& table, const FreqTable& freq,
                                     double a) {
    if (a <= 0.0) throw std::invalid_argument("smooth parameter must be positive");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(table.dim);
    int hits = 0;
    for (const auto& tok : tokens) {
        const auto* v = table.find(tok);
        if (!v) continue;
        sum += (a / (a + freq.frequency(tok))) * (*v);
        ++hits;
    }
    if (hits == 0) return sum;
    return sum / hits;
}

SifResult remove_first_pc(const Eigen::MatrixXd& rows, const SifParams& params) {
    const Eigen::Index n = rows.rows();
    const Eigen::Index dim = rows.cols();
    if (n < 1 || dim < 1) throw std::invalid_argument("empty embedding matrix");
    if (rows.norm() == 0.0) throw std::runtime_error("degenerate embedding matrix");

    Eigen::MatrixXd gram = rows.transpose() * rows;  // D x D

    Eigen::VectorXd v = Eigen::VectorXd::Ones(dim) / std::sqrt(static_cast<double>(dim));
    for (int it = 0; it < params.power_iters; ++it) {
        // the Gram matrix is PSD, so applying it twice per step squares the
        // eigenvalue ratio without sign issues
        Eigen::VectorXd next = gram * (gram * v);
        double norm = next.norm();
        if (norm == 0.0) {
            // start vector landed in the null space; restart from a basis axis
            v = Eigen::VectorXd::Zero(dim);
            v[it % dim] = 1.0;
            continue;
        }
        next /= norm;
        double delta = std::min((next - v).norm(), (next + v).norm());
        v = next;
        if (delta < params.power_tol) break;
    }

    SifResult result;
    result.first_singular_vector = v;
    result.embeddings = rows - (rows * v) * v.transpose();
    return result;
}

SifResult sif_embed(const std::vector<std::string>& texts, const VectorTable& table,
                    const FreqTable& freq, const SifParams& params, Tokenizer tok) {
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(texts.size()), table.dim);
    for (size_t i = 0; i < texts.size(); ++i) {
        rows.row(static_cast<Eigen::Index>(i)) =
            sif_weighted_average(tokenize(texts[i], tok), table, freq, params.a).transpose();
    }
    return remove_first_pc(rows, params);
}

}  // namespace topicseg
