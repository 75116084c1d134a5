// Small end-to-end run on an in-memory scene: synthesize, transform,
// train for a few epochs and score the unmixing against the ground truth.
//
//   swan_demo [epochs] [seed]

#include <cstdio>
#include <iostream>
#include <string>

#include "swan/swan.hpp"

int main(int argc, char** argv) {
    const std::size_t epochs = argc > 1 ? std::stoul(argv[1]) : 20;
    const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 1;

    const swan::Scenario scenario{"demo", 30, 30, 120, 3, swan::FieldKind::Blocks};
    const auto scene = swan::synthesize(scenario, 30.0, seed);
    const auto norm = swan::normalize_pixelwise(swan::dwt_cube(scene.cube));

    swan::TrainConfig config;
    config.epochs = epochs;
    config.seed = seed;
    auto model = swan::build(norm.cube.coefficients(), scenario.endmembers, std::nullopt, seed);
    const auto split = swan::split_pixels(norm.cube.pixel_count(), config.train_fraction, seed);
    swan::seed_decoder_from_pixels(model, norm.cube, split.first, seed);
    swan::train(model, norm.cube, config, [](const swan::EpochRecord& r) {
        std::printf("epoch %3zu  train %.4f  heldout %.4f\n", r.epoch, r.train.total, r.heldout.total);
    });

    const auto a = swan::extract_abundances(model, norm.cube);
    const auto m = swan::extract_endmembers(model, swan::bior33(), scenario.bands);
    const auto al = swan::align_to_ground_truth(m.values, scene.truth.endmembers.values);
    auto report = swan::score_unmixing(swan::permute_columns(m.values, al.permutation),
                                       swan::permute_rows(a.values, al.permutation),
                                       scene.truth.endmembers.values, scene.truth.abundances.values);
    report.dataset = scenario.name;
    report.snr = "30";
    report.seed = std::to_string(seed);
    swan::write_score_report(std::cout, report);
}
