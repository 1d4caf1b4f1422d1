#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbct/config.hpp"

namespace cbct {

// Circular-trajectory cone-beam acquisition. All lengths in millimeters;
// angles in radians, strictly increasing within [0, 2*pi). Immutable after
// construction and freely shareable across threads.
struct ConeBeamGeometry {
    double source_to_isocenter = 0.0;  // SID
    double source_to_detector = 0.0;   // SDD
    int64_t detector_rows = 0;
    int64_t detector_cols = 0;
    double pixel_pitch_u = 0.0;  // along the in-plane detector axis
    double pixel_pitch_v = 0.0;  // along the rotation axis
    std::vector<double> angles;
    int64_t vol_d = 0, vol_h = 0, vol_w = 0;
    double voxel_spacing = 0.0;

    int64_t n_views() const { return int64_t(angles.size()); }

    // Radius of the in-plane field of view admitted by the detector fan.
    double fan_fov_radius() const;
    // Largest in-plane voxel-center radius of the (centered) volume grid.
    double grid_radius_xy() const;

    double magnification() const { return source_to_detector / source_to_isocenter; }
    // Detector pitch rescaled to the virtual detector through the isocenter.
    double virtual_pitch_u() const { return pixel_pitch_u / magnification(); }
    double virtual_pitch_v() const { return pixel_pitch_v / magnification(); }

    std::string content_hash() const;
};

struct GeometryConfig {
    double source_to_isocenter = 500.0;
    double source_to_detector = 1000.0;
    int64_t detector_rows = 128;
    int64_t detector_cols = 128;
    double pixel_pitch_u = 1.0;
    double pixel_pitch_v = 1.0;
    int64_t n_views = 360;
    int64_t vol_d = 64, vol_h = 64, vol_w = 64;
    double voxel_spacing = 1.0;

    // Reads keys under the `geometry.` prefix; missing keys keep defaults.
    static GeometryConfig from_config(const Config& cfg);
};

// Validates the config and the fan field-of-view, uniformly spacing n_views
// angles over [0, 2*pi).
ConeBeamGeometry make_geometry(const GeometryConfig& config);

// Deterministic every-r-th view selection starting at index 0.
struct ViewSubset {
    ConeBeamGeometry parent;
    int64_t keep_ratio_denominator = 1;
    std::vector<int64_t> indices;

    std::vector<double> angles() const {
        std::vector<double> a;
        a.reserve(indices.size());
        for (int64_t i : indices) a.push_back(parent.angles[i]);
        return a;
    }
};

ViewSubset subsample_views(const ConeBeamGeometry& geom, int64_t ratio_denominator);

}  // namespace cbct
