#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// Overlap and surface-distance metrics on binary masks, plus connected
// component utilities. Conventions:
//
//   * Dice is reported in percent; two empty masks score 100.
//   * HD95 uses 6-connectivity surfaces, spacing-scaled center-to-center
//     Euclidean distances and the nearest-rank 95th percentile, and is
//     the max over both directed distances. Undefined when a mask is
//     empty.
//   * Components use 26-connectivity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hyps/errors.hpp"
#include "hyps/volume.hpp"

namespace hyps {

namespace detail {
inline void require_same_grid(const BinaryMask& a, const BinaryMask& b, const char* op) {
    if (a.nx() != b.nx() || a.ny() != b.ny() || a.nz() != b.nz())
        throw ShapeError(std::string(op) + ": grid mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    if (!(a.spacing() == b.spacing()))
        throw ShapeError(std::string(op) + ": spacing mismatch");
}
} // namespace detail

// 2|A n B| / (|A| + |B|) * 100; both-empty scores 100.
inline double dice_score(const BinaryMask& a, const BinaryMask& b) {
    detail::require_same_grid(a, b, "dice_score");
    std::size_t inter = 0, ca = 0, cb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool va = a.data()[i] != 0, vb = b.data()[i] != 0;
        ca += va;
        cb += vb;
        inter += (va && vb);
    }
    if (ca + cb == 0) return 100.0;
    return 200.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

struct Voxel {
    std::size_t x, y, z;
};

// Foreground voxels with at least one of their 6 face neighbors outside
// the mask; the volume border counts as outside.
inline std::vector<Voxel> surface_voxels(const BinaryMask& m) {
    std::vector<Voxel> out;
    const std::size_t nx = m.nx(), ny = m.ny(), nz = m.nz();
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) {
                if (!m.at(x, y, z)) continue;
                const bool exposed =
                    x == 0 || !m.at(x - 1, y, z) || x + 1 == nx || !m.at(x + 1, y, z) ||
                    y == 0 || !m.at(x, y - 1, z) || y + 1 == ny || !m.at(x, y + 1, z) ||
                    z == 0 || !m.at(x, y, z - 1) || z + 1 == nz || !m.at(x, y, z + 1);
                if (exposed) out.push_back({x, y, z});
            }
    return out;
}

namespace detail {

inline double directed_hd95(const std::vector<Voxel>& from, const std::vector<Voxel>& to,
                            const Spacing& sp) {
    std::vector<double> dists;
    dists.reserve(from.size());
    for (const Voxel& a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const Voxel& b : to) {
            const double dx = (static_cast<double>(a.x) - static_cast<double>(b.x)) * sp.x;
            const double dy = (static_cast<double>(a.y) - static_cast<double>(b.y)) * sp.y;
            const double dz = (static_cast<double>(a.z) - static_cast<double>(b.z)) * sp.z;
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        dists.push_back(std::sqrt(best));
    }
    std::sort(dists.begin(), dists.end());
    // nearest-rank percentile: 1-based index ceil(0.95 * N)
    const std::size_t n = dists.size();
    std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
    if (rank < 1) rank = 1;
    return dists[rank - 1];
}

} // namespace detail

inline double hd95(const BinaryMask& a, const BinaryMask& b) {
    detail::require_same_grid(a, b, "hd95");
    const std::vector<Voxel> sa = surface_voxels(a);
    const std::vector<Voxel> sb = surface_voxels(b);
    if (sa.empty() || sb.empty())
        throw UsageError("hd95: undefined for an empty mask");
    return std::max(detail::directed_hd95(sa, sb, a.spacing()),
                    detail::directed_hd95(sb, sa, a.spacing()));
}

struct ComponentLabeling {
    std::vector<std::int32_t> label;   // 0 background, 1..k components
    std::vector<std::size_t> counts;   // counts[i] = voxels in component i+1
};

inline ComponentLabeling label_components(const BinaryMask& m) {
    const std::size_t nx = m.nx(), ny = m.ny(), nz = m.nz();
    ComponentLabeling out;
    out.label.assign(m.size(), 0);
    std::vector<std::size_t> stack;
    std::int32_t next = 0;
    for (std::size_t start = 0; start < m.size(); ++start) {
        if (!m.data()[start] || out.label[start] != 0) continue;
        ++next;
        std::size_t count = 0;
        out.label[start] = next;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            ++count;
            const std::size_t x = cur % nx;
            const std::size_t y = (cur / nx) % ny;
            const std::size_t z = cur / (nx * ny);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0 && dz == 0) continue;
                        const long long xx = static_cast<long long>(x) + dx;
                        const long long yy = static_cast<long long>(y) + dy;
                        const long long zz = static_cast<long long>(z) + dz;
                        if (xx < 0 || yy < 0 || zz < 0 || xx >= static_cast<long long>(nx) ||
                            yy >= static_cast<long long>(ny) || zz >= static_cast<long long>(nz))
                            continue;
                        const std::size_t ni = detail::vol_index(
                            static_cast<std::size_t>(xx), static_cast<std::size_t>(yy),
                            static_cast<std::size_t>(zz), nx, ny);
                        if (m.data()[ni] && out.label[ni] == 0) {
                            out.label[ni] = next;
                            stack.push_back(ni);
                        }
                    }
        }
        out.counts.push_back(count);
    }
    return out;
}

// Drops 26-connected components smaller than min_voxels. Idempotent.
inline BinaryMask filter_small_components(const BinaryMask& m, std::size_t min_voxels = 1000) {
    const ComponentLabeling cl = label_components(m);
    BinaryMask out(m.nx(), m.ny(), m.nz(), m.spacing());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const std::int32_t l = cl.label[i];
        out.data()[i] = (l > 0 && cl.counts[static_cast<std::size_t>(l) - 1] >= min_voxels) ? 1 : 0;
    }
    return out;
}

// Foreground volume in cm^3 (spacing is in mm).
inline double measure_volume_cm3(const BinaryMask& m) {
    const Spacing& s = m.spacing();
    return static_cast<double>(m.count()) * s.x * s.y * s.z / 1000.0;
}

// Splits along the x axis: voxels with x < nx/2 go to the first (left)
// mask, the rest to the second.
inline std::pair<BinaryMask, BinaryMask> split_left_right(const BinaryMask& m) {
    BinaryMask left(m.nx(), m.ny(), m.nz(), m.spacing());
    BinaryMask right(m.nx(), m.ny(), m.nz(), m.spacing());
    const std::size_t half = m.nx() / 2;
    for (std::size_t z = 0; z < m.nz(); ++z)
        for (std::size_t y = 0; y < m.ny(); ++y)
            for (std::size_t x = 0; x < m.nx(); ++x) {
                if (!m.at(x, y, z)) continue;
                (x < half ? left : right).at(x, y, z) = 1;
            }
    return {std::move(left), std::move(right)};
}

} // namespace hyps
