#include "cbct/volume_io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "cbct/errors.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace cbct {

namespace {
std::string read_header_line(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("truncated header in " + path);
    return line;
}
}  // namespace

void save_volume(const Volume& vol, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write volume: " + path);
    out << "CBCTVOL1\n";
    out << "dims " << vol.d << " " << vol.h << " " << vol.w << "\n";
    out.precision(17);
    out << "spacing " << vol.spacing << "\n";
    out << "origin " << vol.origin_x << " " << vol.origin_y << " " << vol.origin_z << "\n";
    out << "dtype float32\n";
    out << "byteorder little\n";
    out << "data\n";
    out.write(reinterpret_cast<const char*>(vol.data.data()),
              std::streamsize(vol.data.size() * sizeof(float)));
    if (!out) throw IoError("short write on volume: " + path);
}

Volume load_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open volume: " + path);
    if (read_header_line(in, path) != "CBCTVOL1") throw IoError("bad volume magic in " + path);
    Volume vol;
    std::string dtype;
    while (true) {
        const std::string line = read_header_line(in, path);
        if (line == "data") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "dims")
            ls >> vol.d >> vol.h >> vol.w;
        else if (key == "spacing")
            ls >> vol.spacing;
        else if (key == "origin")
            ls >> vol.origin_x >> vol.origin_y >> vol.origin_z;
        else if (key == "dtype")
            ls >> dtype;
        else if (key == "byteorder") {
            std::string order;
            ls >> order;
            if (order != "little") throw IoError("unsupported byte order in " + path);
        } else
            throw IoError("unknown volume header key '" + key + "' in " + path);
        if (!ls) throw IoError("malformed volume header line in " + path);
    }
    if (dtype != "float32") throw IoError("unsupported volume dtype in " + path);
    if (vol.d < 1 || vol.h < 1 || vol.w < 1) throw IoError("bad volume dims in " + path);
    vol.data.resize(vol.size());
    in.read(reinterpret_cast<char*>(vol.data.data()),
            std::streamsize(vol.data.size() * sizeof(float)));
    if (!in) throw IoError("truncated volume payload in " + path);
    return vol;
}

void save_projections(const ProjectionSet& proj, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write projections: " + path);
    out << "CBCTPROJ1\n";
    out << "dims " << proj.n_views() << " " << proj.rows() << " " << proj.cols() << "\n";
    out << "geometry_hash " << proj.geometry.content_hash() << "\n";
    out << "views";
    for (int64_t i : proj.view_indices) out << " " << i;
    out << "\n";
    out << "dtype float32\n";
    out << "data\n";
    out.write(reinterpret_cast<const char*>(proj.data.data()),
              std::streamsize(proj.data.size() * sizeof(float)));
    if (!out) throw IoError("short write on projections: " + path);
}

ProjectionSet load_projections(const std::string& path, const ConeBeamGeometry& geom) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open projections: " + path);
    if (read_header_line(in, path) != "CBCTPROJ1")
        throw IoError("bad projection magic in " + path);
    int64_t nv = 0, rows = 0, cols = 0;
    std::string hash;
    std::vector<int64_t> indices;
    while (true) {
        const std::string line = read_header_line(in, path);
        if (line == "data") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "dims")
            ls >> nv >> rows >> cols;
        else if (key == "geometry_hash")
            ls >> hash;
        else if (key == "views") {
            int64_t v;
            while (ls >> v) indices.push_back(v);
        } else if (key == "dtype") {
            std::string dt;
            ls >> dt;
            if (dt != "float32") throw IoError("unsupported projection dtype in " + path);
        } else
            throw IoError("unknown projection header key '" + key + "' in " + path);
    }
    if (hash != geom.content_hash())
        throw GeometryError("projection file " + path + " was acquired with a different geometry");
    if (rows != geom.detector_rows || cols != geom.detector_cols)
        throw GeometryError("projection dims do not match geometry");
    if (int64_t(indices.size()) != nv) throw IoError("view index count mismatch in " + path);
    ProjectionSet proj;
    proj.geometry = geom;
    proj.view_indices = indices;
    proj.view_angles.reserve(indices.size());
    for (int64_t i : indices) {
        if (i < 0 || i >= geom.n_views()) throw IoError("view index out of range in " + path);
        proj.view_angles.push_back(geom.angles[i]);
    }
    proj.data.resize(nv * rows * cols);
    in.read(reinterpret_cast<char*>(proj.data.data()),
            std::streamsize(proj.data.size() * sizeof(float)));
    if (!in) throw IoError("truncated projection payload in " + path);
    return proj;
}

}  // namespace cbct
