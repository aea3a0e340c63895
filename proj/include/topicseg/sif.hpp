#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "topicseg/embed.hpp"

namespace topicseg {

struct SifParams {
    double a = 1e-3;        // smooth parameter, > 0
    int power_iters = 200;  // power-iteration cap
    double power_tol = 1e-8;
};

struct SifResult {
    // One embedding per input row; each row orthogonal to the removed
    // direction (this is what makes topic segments differ more).
    Eigen::MatrixXd embeddings;
    Eigen::VectorXd first_singular_vector;  // unit norm
};

// Frequency-smoothed average of the token vectors:
// (1/|t|) * sum_w [a / (a + f(w))] * v_w over in-vocabulary tokens,
// |t| counting in-vocabulary tokens only. Empty or all-OOV text gives the
// zero vector.
Eigen::VectorXd sif_weighted_average(const std::vector<std::string>& tokens,
                                     const VectorTable& table, const FreqTable& freq,
                                     double a);

// Removes from every row its projection onto the dominant direction of the
// row collection. The direction is the top eigenvector of the D x D Gram
// matrix, found by power iteration from the normalized all-ones start
// vector, so results are deterministic. All-zero input is rejected.
SifResult remove_first_pc(const Eigen::MatrixXd& rows, const SifParams& params = {});

// Convenience: weighted averages for each text, then projection removal.
SifResult sif_embed(const std::vector<std::string>& texts, const VectorTable& table,
                    const FreqTable& freq, const SifParams& params, Tokenizer tok);

}  // namespace topicseg
