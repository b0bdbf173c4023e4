// Scores five hospitals (two inputs, one output) under CCR and BCC and
// prints each one's peers.
#include <cstdio>

#include "effpipe/dea.hpp"

using namespace effpipe;

int main() {
    CrossSection cs;
    cs.period = "2024";
    cs.dmus = {"A", "B", "C", "D", "E"};
    cs.input_names = {"doctors", "beds"};
    cs.output_names = {"patients"};
    cs.inputs.resize(5, 2);
    cs.inputs << 20, 150,
                 30, 200,
                 40, 100,
                 20, 200,
                 50, 300;
    cs.outputs.resize(5, 1);
    cs.outputs << 100, 150, 160, 80, 200;

    std::printf("%-4s %8s %8s  peers (CCR)\n", "dmu", "CCR", "BCC");
    const auto ccr = solve_cross_section(cs, ReturnsToScale::crs, Orientation::input);
    const auto bcc = solve_cross_section(cs, ReturnsToScale::vrs, Orientation::input);
    for (std::size_t d = 0; d < cs.size(); ++d) {
        std::printf("%-4s %8.4f %8.4f ", cs.dmus[d].c_str(), ccr[d].score, bcc[d].score);
        for (std::size_t j = 0; j < cs.size(); ++j)
            if (ccr[d].envelopment.lambdas[j] > 1e-9)
                std::printf(" %s=%.3f", cs.dmus[j].c_str(), ccr[d].envelopment.lambdas[j]);
        std::printf("%s\n", ccr[d].weakly_efficient ? "  (weak)" : "");
    }
}
