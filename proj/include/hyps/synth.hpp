#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic 3D segmentation tasks. Task A (pretraining): large bright
// ellipsoidal blobs anywhere in the volume. Task B (transfer target):
// smaller, dimmer blobs confined to one octant-ish region, standing in
// for a distribution shift between source and target anatomy. Labels
// are the exact blob supports; generation is deterministic per seed
// with an independent stream per sample index.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hyps/rng.hpp"
#include "hyps/train.hpp"
#include "hyps/volume.hpp"

namespace hyps {

enum class TaskId { A, B };

struct SynthTask {
    TaskId id = TaskId::A;
    std::size_t side = 16;
    std::size_t blobs_min = 1, blobs_max = 2;
    double semi_min = 3.0, semi_max = 5.0;  // ellipsoid semi-axes, voxels
    double intensity = 1.0;
    double noise_sigma = 0.15;
    // blob centers are drawn from [center_lo, center_hi] * side per axis
    double center_lo = 0.25, center_hi = 0.75;
    std::uint64_t seed = 42;

    static SynthTask pretrain(std::uint64_t seed, std::size_t side = 16) {
        SynthTask t;
        t.id = TaskId::A;
        t.side = side;
        t.blobs_min = 1;
        t.blobs_max = 2;
        t.semi_min = 3.0;
        t.semi_max = 5.0;
        t.intensity = 1.0;
        t.noise_sigma = 0.15;
        t.center_lo = 0.25;
        t.center_hi = 0.75;
        t.seed = seed;
        return t;
    }

    static SynthTask shifted(std::uint64_t seed, std::size_t side = 16) {
        SynthTask t;
        t.id = TaskId::B;
        t.side = side;
        t.blobs_min = 1;
        t.blobs_max = 2;
        t.semi_min = 2.5;
        t.semi_max = 4.0;
        t.intensity = 0.25;
        t.noise_sigma = 0.15;
        t.center_lo = 0.55;
        t.center_hi = 0.85;
        t.seed = seed;
        return t;
    }
};

inline Sample generate_sample(const SynthTask& task, std::size_t index) {
    Rng rng = Rng(task.seed).fork(index);
    const std::size_t n = task.side;
    Sample s{Volume(n, n, n), BinaryMask(n, n, n)};
    for (std::size_t i = 0; i < s.image.size(); ++i)
        s.image.data()[i] = rng.normal(0.0, task.noise_sigma);

    const std::size_t blobs =
        task.blobs_min + rng.below(task.blobs_max - task.blobs_min + 1);
    const double side = static_cast<double>(n);
    for (std::size_t b = 0; b < blobs; ++b) {
        const double cx = rng.uniform(task.center_lo, task.center_hi) * side;
        const double cy = rng.uniform(task.center_lo, task.center_hi) * side;
        const double cz = rng.uniform(task.center_lo, task.center_hi) * side;
        const double ax = rng.uniform(task.semi_min, task.semi_max);
        const double ay = rng.uniform(task.semi_min, task.semi_max);
        const double az = rng.uniform(task.semi_min, task.semi_max);
        const double bright = task.intensity * rng.uniform(0.9, 1.1);
        for (std::size_t z = 0; z < n; ++z)
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) {
                    const double dx = (static_cast<double>(x) - cx) / ax;
                    const double dy = (static_cast<double>(y) - cy) / ay;
                    const double dz = (static_cast<double>(z) - cz) / az;
                    if (dx * dx + dy * dy + dz * dz <= 1.0) {
                        s.image.at(x, y, z) += bright;
                        s.label.at(x, y, z) = 1;
                    }
                }
    }
    return s;
}

inline std::vector<Sample> generate_dataset(const SynthTask& task, std::size_t count) {
    if (count < 1) throw UsageError("generate_dataset: count must be >= 1");
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(generate_sample(task, i));
    return out;
}

} // namespace hyps
