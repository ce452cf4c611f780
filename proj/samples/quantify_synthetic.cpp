// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
// Generates a layered synthetic scene, quantifies every Gaussian's removal
// error, prunes half of them and reports the post-prune quality.
//
#include <gspop/gspop.hpp>

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    gspop::SynthSpec spec;
    spec.seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
    spec.count = 200;
    spec.width = spec.height = 96;
    const auto synth = gspop::generate(spec);

    const auto buffer = gspop::quantify_scene<float>(synth.scene, synth.views);
    std::cout << "quantified " << buffer.size() << " gaussians over " << buffer.view_count << " views, total error "
              << buffer.total() << "\n";
    gspop::write_histogram_csv(gspop::histogram(buffer, 8), std::cout);

    const auto pruned = gspop::prune_ratio(synth.scene, buffer, 0.5);
    const auto report = gspop::eval_views(synth.scene, pruned.scene, synth.views);
    std::cout << "\nkept " << pruned.scene.size() << " of " << synth.scene.size() << "\n";
    gspop::print_table(report, std::cout);
    return 0;
}
