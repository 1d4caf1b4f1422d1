#pragma once

#include <cstdint>
#include <vector>

#include "cbct/geometry.hpp"
#include "cbct/volume.hpp"

namespace cbct {

// Stack of 2D detector measurements, view-major [n_views][rows][cols].
struct ProjectionSet {
    ConeBeamGeometry geometry;         // base acquisition description
    std::vector<int64_t> view_indices; // into geometry.angles
    std::vector<double> view_angles;   // angles actually used, radians
    std::vector<float> data;

    int64_t n_views() const { return int64_t(view_angles.size()); }
    int64_t rows() const { return geometry.detector_rows; }
    int64_t cols() const { return geometry.detector_cols; }
    float* view(int64_t v) { return data.data() + v * rows() * cols(); }
    const float* view(int64_t v) const { return data.data() + v * rows() * cols(); }

    // Keeps the stored views whose indices match the subset selection.
    ProjectionSet select(const ViewSubset& subset) const;
};

// Ray-driven forward projection: per detector pixel, uniform sampling with
// trilinear interpolation at step 0.5 * voxel_spacing, scaled by the step
// length. Views are computed concurrently; output is independent of the
// thread count. `parallel=false` runs the serial path kept for testing.
ProjectionSet forward_project(const Volume& vol, const ConeBeamGeometry& geom,
                              bool parallel = true);
ProjectionSet forward_project(const Volume& vol, const ViewSubset& subset, bool parallel = true);

// Transmission Poisson noise: p' = -ln(Poisson(I0*exp(-p))/I0), clamped at 0.
// Zero transmitted counts are clamped to one photon and counted in the
// returned tally. Deterministic per seed.
struct NoiseReport {
    int64_t clamped_pixels = 0;
};
ProjectionSet add_poisson_noise(const ProjectionSet& proj, double incident_photons, uint64_t seed,
                                NoiseReport* report = nullptr);

}  // namespace cbct
