#pragma once

#include <filesystem>

#include "gsavatar/geometry/mesh.hpp"

namespace gsavatar::io {

/// Format chosen by extension: .obj (text) or .ply (binary little-endian).
/// Vertices are stored as 32-bit floats.
geometry::TriangleMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const geometry::TriangleMesh& mesh, const std::filesystem::path& path);

geometry::TriangleMesh load_obj(const std::filesystem::path& path);
void save_obj(const geometry::TriangleMesh& mesh, const std::filesystem::path& path);
geometry::TriangleMesh load_ply(const std::filesystem::path& path);
void save_ply(const geometry::TriangleMesh& mesh, const std::filesystem::path& path);

}  // namespace gsavatar::io
