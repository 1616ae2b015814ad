#include "gsavatar/io/mesh_io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gsavatar/common/error.hpp"

namespace gsavatar::io {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
  auto e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

[[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

geometry::TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  geometry::TriangleMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) fail_line(path, lineno, "vertex needs three coordinates");
      mesh.vertices.emplace_back(static_cast<float>(x), static_cast<float>(y), static_cast<float>(z));
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        const auto slash = tok.find('/');
        const std::string head = tok.substr(0, slash);
        long v = 0;
        const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), v);
        if (ec != std::errc() || ptr != head.data() + head.size()) fail_line(path, lineno, "bad face index '" + tok + "'");
        if (v == 0) fail_line(path, lineno, "face index 0 (indices are 1-based)");
        const long n = static_cast<long>(mesh.vertices.size());
        const long resolved = v > 0 ? v - 1 : n + v;
        if (resolved < 0 || resolved >= n) fail_line(path, lineno, "face index " + head + " out of range");
        idx.push_back(static_cast<std::uint32_t>(resolved));
      }
      if (idx.size() < 3) fail_line(path, lineno, "face needs at least three vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return mesh;
}

void save_obj(const geometry::TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  char buf[128];
  for (const auto& v : mesh.vertices) {
    // %.9g round-trips any float32 exactly.
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", static_cast<double>(static_cast<float>(v.x())),
                  static_cast<double>(static_cast<float>(v.y())), static_cast<double>(static_cast<float>(v.z())));
    os << buf;
  }
  for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!os) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

geometry::TriangleMesh load_ply(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0, n_vert = 0, n_face = 0;
  bool binary_le = false;
  std::vector<std::string> vprops;
  std::string current;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (lineno == 1) {
      if (tag != "ply") fail_line(path, lineno, "missing 'ply' magic");
      continue;
    }
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") fail_line(path, lineno, "only binary_little_endian PLY is supported");
      binary_le = true;
    } else if (tag == "element") {
      std::size_t count = 0;
      ls >> current >> count;
      if (current == "vertex") n_vert = count;
      else if (current == "face") n_face = count;
      else fail_line(path, lineno, "unsupported element '" + current + "'");
    } else if (tag == "property") {
      std::string type;
      ls >> type;
      if (current == "vertex") {
        std::string name;
        ls >> name;
        if (type != "float") fail_line(path, lineno, "vertex properties must be float");
        vprops.push_back(name);
      } else if (current == "face") {
        std::string count_t, index_t;
        ls >> count_t >> index_t;
        if (type != "list" || count_t != "uchar" || (index_t != "int" && index_t != "uint"))
          fail_line(path, lineno, "face property must be 'list uchar int'");
      }
    } else if (tag == "end_header") {
      break;
    } else if (tag != "comment" && tag != "obj_info") {
      fail_line(path, lineno, "unexpected header line");
    }
  }
  if (!binary_le) throw Error(ErrorCode::Parse, path.string() + ": missing format line");
  if (vprops.size() < 3 || vprops[0] != "x" || vprops[1] != "y" || vprops[2] != "z")
    throw Error(ErrorCode::Parse, path.string() + ": vertex properties must start with x y z");

  std::size_t offset = static_cast<std::size_t>(is.tellg());
  auto read_bytes = [&](void* dst, std::size_t n) {
    if (!is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n)))
      throw Error(ErrorCode::Parse, path.string() + ": truncated body at byte offset " + std::to_string(offset));
    offset += n;
  };
  auto u32 = [&]() {
    unsigned char b[4];
    read_bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  };
  geometry::TriangleMesh mesh;
  mesh.vertices.resize(n_vert);
  for (auto& v : mesh.vertices)
    for (std::size_t p = 0; p < vprops.size(); ++p) {
      const float f = std::bit_cast<float>(u32());
      if (p < 3) v[static_cast<Eigen::Index>(p)] = f;
    }
  for (std::size_t f = 0; f < n_face; ++f) {
    unsigned char count = 0;
    read_bytes(&count, 1);
    if (count < 3)
      throw Error(ErrorCode::Parse, path.string() + ": face " + std::to_string(f) + " has fewer than 3 vertices");
    std::vector<std::uint32_t> idx(count);
    for (auto& i : idx) {
      i = u32();
      if (i >= n_vert)
        throw Error(ErrorCode::Parse, path.string() + ": face " + std::to_string(f) + " index out of range");
    }
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
  }
  return mesh;
}

void save_ply(const geometry::TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os << "ply\nformat binary_little_endian 1.0\nelement vertex " << mesh.vertices.size()
     << "\nproperty float x\nproperty float y\nproperty float z\nelement face " << mesh.triangles.size()
     << "\nproperty list uchar int vertex_indices\nend_header\n";
  auto put = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  for (const auto& v : mesh.vertices)
    for (int c = 0; c < 3; ++c) put(std::bit_cast<std::uint32_t>(static_cast<float>(v[c])));
  for (const auto& t : mesh.triangles) {
    os.put(3);
    for (auto i : t) put(i);
  }
  if (!os) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

geometry::TriangleMesh load_mesh(const std::filesystem::path& path) {
  const auto e = lower_ext(path);
  if (e == ".obj") return load_obj(path);
  if (e == ".ply") return load_ply(path);
  throw Error(ErrorCode::InvalidArgument, "unsupported mesh extension: " + path.string());
}

void save_mesh(const geometry::TriangleMesh& mesh, const std::filesystem::path& path) {
  const auto e = lower_ext(path);
  if (e == ".obj") return save_obj(mesh, path);
  if (e == ".ply") return save_ply(mesh, path);
  throw Error(ErrorCode::InvalidArgument, "unsupported mesh extension: " + path.string());
}

}  // namespace gsavatar::io
