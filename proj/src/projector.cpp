#include "cbct/projector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "cbct/errors.hpp"

namespace cbct {

namespace {

struct Aabb {
    double lo[3], hi[3];  // x, y, z
};

Aabb volume_bounds(const Volume& v) {
    Aabb b;
    b.lo[0] = v.origin_x - 0.5 * v.spacing;
    b.lo[1] = v.origin_y - 0.5 * v.spacing;
    b.lo[2] = v.origin_z - 0.5 * v.spacing;
    b.hi[0] = v.origin_x + (double(v.w) - 0.5) * v.spacing;
    b.hi[1] = v.origin_y + (double(v.h) - 0.5) * v.spacing;
    b.hi[2] = v.origin_z + (double(v.d) - 0.5) * v.spacing;
    return b;
}

// Slab intersection of ray p + t*dir with the box; false if it misses.
bool clip_ray(const Aabb& b, const double p[3], const double dir[3], double& t0, double& t1) {
    t0 = 0.0;
    t1 = 1e300;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-12) {
            if (p[a] < b.lo[a] || p[a] > b.hi[a]) return false;
            continue;
        }
        double ta = (b.lo[a] - p[a]) / dir[a];
        double tb = (b.hi[a] - p[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t1 > t0;
}

inline double sample_trilinear(const Volume& v, double x, double y, double z) {
    const double fx = (x - v.origin_x) / v.spacing;
    const double fy = (y - v.origin_y) / v.spacing;
    const double fz = (z - v.origin_z) / v.spacing;
    const int64_t ix = int64_t(std::floor(fx));
    const int64_t iy = int64_t(std::floor(fy));
    const int64_t iz = int64_t(std::floor(fz));
    const double tx = fx - double(ix), ty = fy - double(iy), tz = fz - double(iz);
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        const int64_t z_i = iz + dz;
        if (z_i < 0 || z_i >= v.d) continue;
        const double wz = dz ? tz : 1.0 - tz;
        for (int dy = 0; dy < 2; ++dy) {
            const int64_t y_i = iy + dy;
            if (y_i < 0 || y_i >= v.h) continue;
            const double wy = dy ? ty : 1.0 - ty;
            for (int dx = 0; dx < 2; ++dx) {
                const int64_t x_i = ix + dx;
                if (x_i < 0 || x_i >= v.w) continue;
                const double wx = dx ? tx : 1.0 - tx;
                acc += wz * wy * wx * double(v.at(z_i, y_i, x_i));
            }
        }
    }
    return acc;
}

ProjectionSet project_impl(const Volume& vol, const ConeBeamGeometry& geom,
                           std::vector<int64_t> indices, std::vector<double> angles,
                           bool parallel) {
    if (vol.spacing <= 0) throw ParamError("volume spacing must be positive");
    ProjectionSet out;
    out.geometry = geom;
    out.view_indices = std::move(indices);
    out.view_angles = std::move(angles);
    const int64_t nv = out.n_views();
    const int64_t rows = geom.detector_rows, cols = geom.detector_cols;
    out.data.assign(nv * rows * cols, 0.0f);

    const Aabb box = volume_bounds(vol);
    const double step = 0.5 * vol.spacing;
    const double sid = geom.source_to_isocenter;
    const double sdd = geom.source_to_detector;
    const double cu = 0.5 * double(cols - 1);
    const double cv = 0.5 * double(rows - 1);

    const int64_t tasks = nv * rows;
#pragma omp parallel for schedule(static) if (parallel)
    for (int64_t t = 0; t < tasks; ++t) {
        const int64_t view = t / rows;
        const int64_t r = t % rows;
        const double beta = out.view_angles[view];
        const double cb = std::cos(beta), sb = std::sin(beta);
        const double src[3] = {sid * cb, sid * sb, 0.0};
        // detector center on the far side, u along (-sin, cos), v along +z
        const double det_c[3] = {-(sdd - sid) * cb, -(sdd - sid) * sb, 0.0};
        float* row_out = out.data.data() + (view * rows + r) * cols;
        const double v_mm = (double(r) - cv) * geom.pixel_pitch_v;
        for (int64_t c = 0; c < cols; ++c) {
            const double u_mm = (double(c) - cu) * geom.pixel_pitch_u;
            const double px = det_c[0] - u_mm * sb;
            const double py = det_c[1] + u_mm * cb;
            const double pz = v_mm;
            double dir[3] = {px - src[0], py - src[1], pz - src[2]};
            const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
            dir[0] /= len;
            dir[1] /= len;
            dir[2] /= len;
            double t0, t1;
            if (!clip_ray(box, src, dir, t0, t1)) {
                row_out[c] = 0.0f;
                continue;
            }
            const int64_t n_steps = std::max<int64_t>(1, int64_t(std::llround((t1 - t0) / step)));
            double acc = 0.0;
            for (int64_t i = 0; i < n_steps; ++i) {
                const double tt = t0 + (double(i) + 0.5) * step;
                if (tt > t1) break;
                acc += sample_trilinear(vol, src[0] + tt * dir[0], src[1] + tt * dir[1],
                                        src[2] + tt * dir[2]);
            }
            row_out[c] = float(acc * step);
        }
    }
    return out;
}

}  // namespace

ProjectionSet ProjectionSet::select(const ViewSubset& subset) const {
    if (subset.parent.content_hash() != geometry.content_hash())
        throw GeometryError("view subset comes from a different geometry");
    if (int64_t(view_indices.size()) != geometry.n_views())
        throw GeometryError("select() requires a full-view projection set");
    ProjectionSet out;
    out.geometry = geometry;
    out.view_indices = subset.indices;
    out.view_angles = subset.angles();
    const int64_t slab = rows() * cols();
    out.data.resize(int64_t(subset.indices.size()) * slab);
    for (size_t i = 0; i < subset.indices.size(); ++i)
        std::copy_n(view(subset.indices[i]), slab, out.data.data() + int64_t(i) * slab);
    return out;
}

ProjectionSet forward_project(const Volume& vol, const ConeBeamGeometry& geom, bool parallel) {
    std::vector<int64_t> idx(geom.n_views());
    for (int64_t i = 0; i < geom.n_views(); ++i) idx[i] = i;
    return project_impl(vol, geom, std::move(idx), geom.angles, parallel);
}

ProjectionSet forward_project(const Volume& vol, const ViewSubset& subset, bool parallel) {
    return project_impl(vol, subset.parent, subset.indices, subset.angles(), parallel);
}

ProjectionSet add_poisson_noise(const ProjectionSet& proj, double incident_photons, uint64_t seed,
                                NoiseReport* report) {
    if (incident_photons <= 0) throw ParamError("incident_photons must be positive");
    ProjectionSet out = proj;
    std::mt19937_64 gen(seed);
    int64_t clamped = 0;
    for (auto& p : out.data) {
        const double transmitted = incident_photons * std::exp(-double(p));
        std::poisson_distribution<long long> pois(transmitted);
        long long count = pois(gen);
        if (count < 1) {
            count = 1;
            ++clamped;
        }
        const double noisy = -std::log(double(count) / incident_photons);
        p = float(std::max(0.0, noisy));
    }
    if (report) report->clamped_pixels = clamped;
    if (clamped > 0)
        std::fprintf(stderr, "add_poisson_noise: clamped %lld zero-count pixels to 1 photon\n",
                     static_cast<long long>(clamped));
    return out;
}

}  // namespace cbct
