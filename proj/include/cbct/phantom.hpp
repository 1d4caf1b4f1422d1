#pragma once

#include <cstdint>
#include <vector>

#include "cbct/volume.hpp"

namespace cbct {

// Analytic phantom pieces. Shapes are painted in declaration order with
// alpha-composited partial-volume coverage, so later shapes overwrite earlier
// ones where they overlap. All attenuations live in [0, 1].
struct Ellipsoid {
    double cx = 0, cy = 0, cz = 0;   // center, mm from isocenter
    double ax = 1, ay = 1, az = 1;   // semi-axes, mm
    double yaw = 0;                  // in-plane rotation about z, radians
    double value = 1.0;
};

struct SphereBlob {  // compact high-contrast "lesion"
    double cx = 0, cy = 0, cz = 0;
    double radius = 1.0;
    double value = 1.0;
};

struct Tube {  // thin high-contrast "vessel" segment
    double x0 = 0, y0 = 0, z0 = 0;
    double x1 = 0, y1 = 0, z1 = 0;
    double radius = 0.5;
    double value = 1.0;
};

struct PhantomSpec {
    uint64_t seed = 0;
    std::vector<Ellipsoid> ellipsoids;
    std::vector<SphereBlob> lesions;
    std::vector<Tube> vessels;

    // Random thorax-like phantom: one soft background ellipsoid, a few
    // interior ellipsoids, lesion blobs and vessel tubes, all inside a sphere
    // of the given radius. Deterministic per seed.
    static PhantomSpec random(uint64_t seed, double max_radius_mm);

    // Largest center-to-surface reach over all shapes; construction-time
    // field-of-view guard compares this against the grid.
    double max_reach() const;
};

struct PhantomMasks {
    std::vector<uint8_t> lesion;  // 1 where a lesion shape dominates the voxel
    std::vector<uint8_t> vessel;
};

// Voxelizes with 2x2x2 supersampled coverage per voxel. The grid is centered
// on the isocenter. Throws if any shape reaches outside the grid sphere.
Volume generate_phantom(const PhantomSpec& spec, int64_t d, int64_t h, int64_t w, double spacing,
                        PhantomMasks* masks = nullptr);

}  // namespace cbct
