#pragma once

#include <Eigen/Dense>

#include <vector>

#include "effpipe/panel_data.hpp"

namespace oracle {

/// Closed-form CRS score for one input and one output:
/// (y/x) / max(y/x).
inline std::vector<double> ratio_scores(const effpipe::CrossSection& cs) {
    const Eigen::VectorXd ratio = cs.outputs.col(0).cwiseQuotient(cs.inputs.col(0));
    const double best = ratio.maxCoeff();
    std::vector<double> out;
    for (Eigen::Index j = 0; j < ratio.size(); ++j) out.push_back(ratio(j) / best);
    return out;
}

}  // namespace oracle
