#include "cbct/geometry.hpp"

#include <cmath>
#include <sstream>

#include "cbct/errors.hpp"
#include "cbct/sha256.hpp"

namespace cbct {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double ConeBeamGeometry::fan_fov_radius() const {
    const double half_width = 0.5 * double(detector_cols) * pixel_pitch_u;
    const double fan_half_angle = std::atan2(half_width, source_to_detector);
    return source_to_isocenter * std::sin(fan_half_angle);
}

double ConeBeamGeometry::grid_radius_xy() const {
    const double rx = 0.5 * double(vol_w - 1) * voxel_spacing;
    const double ry = 0.5 * double(vol_h - 1) * voxel_spacing;
    return std::max(rx, ry);
}

std::string ConeBeamGeometry::content_hash() const {
    std::ostringstream os;
    os.precision(17);
    os << source_to_isocenter << '|' << source_to_detector << '|' << detector_rows << '|'
       << detector_cols << '|' << pixel_pitch_u << '|' << pixel_pitch_v << '|' << vol_d << '|'
       << vol_h << '|' << vol_w << '|' << voxel_spacing << '|' << angles.size();
    for (double a : angles) os << '|' << a;
    return Sha256::of_string(os.str());
}

GeometryConfig GeometryConfig::from_config(const Config& cfg) {
    GeometryConfig g;
    g.source_to_isocenter = cfg.get_double("geometry.source_to_isocenter_mm", g.source_to_isocenter);
    g.source_to_detector = cfg.get_double("geometry.source_to_detector_mm", g.source_to_detector);
    g.detector_rows = cfg.get_int("geometry.detector_rows", g.detector_rows);
    g.detector_cols = cfg.get_int("geometry.detector_cols", g.detector_cols);
    g.pixel_pitch_u = cfg.get_double("geometry.pixel_pitch_u_mm", g.pixel_pitch_u);
    g.pixel_pitch_v = cfg.get_double("geometry.pixel_pitch_v_mm", g.pixel_pitch_v);
    g.n_views = cfg.get_int("geometry.n_views", g.n_views);
    g.vol_d = cfg.get_int("geometry.volume_d", g.vol_d);
    g.vol_h = cfg.get_int("geometry.volume_h", g.vol_h);
    g.vol_w = cfg.get_int("geometry.volume_w", g.vol_w);
    g.voxel_spacing = cfg.get_double("geometry.voxel_spacing_mm", g.voxel_spacing);
    return g;
}

ConeBeamGeometry make_geometry(const GeometryConfig& c) {
    if (c.source_to_isocenter <= 0 || c.source_to_detector <= 0)
        throw ParamError("geometry distances must be positive");
    if (c.source_to_detector <= c.source_to_isocenter)
        throw GeometryError("source_to_detector must exceed source_to_isocenter");
    if (c.detector_rows < 1 || c.detector_cols < 1)
        throw ParamError("detector must have positive extents");
    if (c.pixel_pitch_u <= 0 || c.pixel_pitch_v <= 0)
        throw ParamError("pixel pitch must be positive");
    if (c.n_views < 1) throw ParamError("n_views must be >= 1");
    if (c.vol_d < 1 || c.vol_h < 1 || c.vol_w < 1)
        throw ParamError("volume extents must be positive");
    if (c.voxel_spacing <= 0) throw ParamError("voxel_spacing must be positive");

    ConeBeamGeometry g;
    g.source_to_isocenter = c.source_to_isocenter;
    g.source_to_detector = c.source_to_detector;
    g.detector_rows = c.detector_rows;
    g.detector_cols = c.detector_cols;
    g.pixel_pitch_u = c.pixel_pitch_u;
    g.pixel_pitch_v = c.pixel_pitch_v;
    g.vol_d = c.vol_d;
    g.vol_h = c.vol_h;
    g.vol_w = c.vol_w;
    g.voxel_spacing = c.voxel_spacing;
    g.angles.resize(c.n_views);
    for (int64_t i = 0; i < c.n_views; ++i) g.angles[i] = kTwoPi * double(i) / double(c.n_views);

    const double fov = g.fan_fov_radius();
    const double need = g.grid_radius_xy();
    if (need > fov) {
        const double max_extent = 2.0 * fov / g.voxel_spacing + 1.0;
        std::ostringstream os;
        os << "volume exceeds the detector fan: in-plane radius " << need << " mm > fov " << fov
           << " mm (max admissible in-plane extent ~" << int64_t(max_extent) << " voxels at "
           << g.voxel_spacing << " mm)";
        throw GeometryError(os.str());
    }
    return g;
}

ViewSubset subsample_views(const ConeBeamGeometry& geom, int64_t r) {
    if (r != 1 && r != 2 && r != 4 && r != 6 && r != 8)
        throw ParamError("view ratio denominator must be one of {1,2,4,6,8}, got " +
                         std::to_string(r));
    ViewSubset s;
    s.parent = geom;
    s.keep_ratio_denominator = r;
    for (int64_t i = 0; i < geom.n_views(); i += r) s.indices.push_back(i);
    return s;
}

}  // namespace cbct
