#pragma once

#include <string>

#include "cbct/projector.hpp"
#include "cbct/volume.hpp"

namespace cbct {

// Volume file: text header (magic, dims, spacing, origin, dtype, byte order)
// followed by raw little-endian floats, slice-major.
void save_volume(const Volume& vol, const std::string& path);
Volume load_volume(const std::string& path);

// Projection file: text header (dims, geometry hash, view indices/angles,
// dtype) followed by raw little-endian float32, view-major. The full geometry
// is not stored; loaders pass the geometry it must hash-match.
void save_projections(const ProjectionSet& proj, const std::string& path);
ProjectionSet load_projections(const std::string& path, const ConeBeamGeometry& geom);

}  // namespace cbct
