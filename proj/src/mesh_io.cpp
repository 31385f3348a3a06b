#include "gessa/mesh_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gessa {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

void fan_triangulate(const std::vector<int>& polygon, std::vector<Face>& out) {
  if (polygon.size() < 3) throw Error("face with fewer than three vertices cannot be triangulated");
  for (size_t k = 1; k + 1 < polygon.size(); ++k) out.push_back({polygon[0], polygon[k], polygon[k + 1]});
}

// --- OBJ -------------------------------------------------------------------

int parse_obj_index(const std::string& token, int vertex_count) {
  const std::string head = token.substr(0, token.find('/'));
  if (head.empty()) throw Error("malformed OBJ face token '" + token + "'");
  long value = 0;
  try {
    size_t used = 0;
    value = std::stol(head, &used);
    if (used != head.size()) throw Error("malformed OBJ face token '" + token + "'");
  } catch (const std::logic_error&) {
    throw Error("malformed OBJ face token '" + token + "'");
  }
  if (value == 0) throw Error("index out of range");
  const long index = value > 0 ? value - 1 : vertex_count + value;
  if (index < 0) throw Error("index out of range");
  return static_cast<int>(index);
}

// --- PLY -------------------------------------------------------------------

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_ply_type(const std::string& name) {
  static const std::pair<const char*, PlyType> table[] = {
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  for (const auto& [key, type] : table)
    if (name == key) return type;
  throw Error("unknown PLY property type '" + name + "'");
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> properties;
};

template <typename T>
T read_raw(std::istream& in) {
  static_assert(std::endian::native == std::endian::little, "binary PLY reader assumes a little-endian host");
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("unexpected end of binary PLY data");
  return value;
}

double read_binary_value(std::istream& in, PlyType t) {
  switch (t) {
    case PlyType::Int8: return read_raw<std::int8_t>(in);
    case PlyType::UInt8: return read_raw<std::uint8_t>(in);
    case PlyType::Int16: return read_raw<std::int16_t>(in);
    case PlyType::UInt16: return read_raw<std::uint16_t>(in);
    case PlyType::Int32: return read_raw<std::int32_t>(in);
    case PlyType::UInt32: return read_raw<std::uint32_t>(in);
    case PlyType::Float32: return read_raw<float>(in);
    case PlyType::Float64: return read_raw<double>(in);
  }
  return 0.0;
}

double read_ascii_value(std::istream& in) {
  double v;
  if (!(in >> v)) throw Error("malformed ASCII PLY data");
  return v;
}

bool is_index_list(const PlyProperty& p) {
  return p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index");
}

}  // namespace

MeshFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::Ply;
  throw Error("cannot infer mesh format from '" + path.string() + "'");
}

MeshFileContents read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  MeshFileContents out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z()))
        throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
      out.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> polygon;
      std::string token;
      while (ls >> token) polygon.push_back(parse_obj_index(token, static_cast<int>(out.vertices.size())));
      fan_triangulate(polygon, out.faces);
    }
  }
  return out;
}

MeshFileContents read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw Error("not a PLY file: '" + path.string() + "'");

  bool binary = false;
  std::vector<PlyElement> elements;
  while (true) {
    if (!std::getline(in, line)) throw Error("truncated PLY header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else throw Error("unsupported PLY format '" + fmt + "'");
    } else if (key == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) throw Error("PLY property before element");
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = parse_ply_type(count_type);
        p.type = parse_ply_type(item_type);
      } else {
        p.type = parse_ply_type(type);
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (key == "end_header") {
      break;
    }
  }

  MeshFileContents out;
  for (const PlyElement& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    int ix = -1, iy = -1, iz = -1, iq = -1;
    for (size_t k = 0; k < e.properties.size(); ++k) {
      const auto& n = e.properties[k].name;
      if (n == "x") ix = static_cast<int>(k);
      if (n == "y") iy = static_cast<int>(k);
      if (n == "z") iz = static_cast<int>(k);
      if (n == "quality") iq = static_cast<int>(k);
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) throw Error("PLY vertex element lacks x/y/z");

    std::vector<double> scalars(e.properties.size());
    for (long r = 0; r < e.count; ++r) {
      std::istringstream ascii_row;
      if (!binary) {
        if (!std::getline(in, line)) throw Error("truncated ASCII PLY body");
        ascii_row.str(line);
      }
      std::istream& src = binary ? static_cast<std::istream&>(in) : ascii_row;
      std::vector<int> polygon;
      for (size_t k = 0; k < e.properties.size(); ++k) {
        const PlyProperty& p = e.properties[k];
        if (p.is_list) {
          const double count_value = binary ? read_binary_value(src, p.count_type) : read_ascii_value(src);
          const long count = static_cast<long>(count_value);
          for (long c = 0; c < count; ++c) {
            const double item = binary ? read_binary_value(src, p.type) : read_ascii_value(src);
            if (is_face && is_index_list(p)) polygon.push_back(static_cast<int>(item));
          }
        } else {
          scalars[k] = binary ? read_binary_value(src, p.type) : read_ascii_value(src);
        }
      }
      if (is_vertex) {
        out.vertices.emplace_back(scalars[ix], scalars[iy], scalars[iz]);
        if (iq >= 0) out.quality.push_back(scalars[iq]);
      } else if (is_face) {
        fan_triangulate(polygon, out.faces);
      }
    }
  }
  return out;
}

TriangleMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format) {
  const MeshFormat fmt = format.value_or(format_from_path(path));
  MeshFileContents raw = fmt == MeshFormat::Obj ? read_obj(path) : read_ply(path);
  if (raw.faces.empty()) throw Error("empty mesh: '" + path.string() + "'");
  TriangleMesh parsed(std::move(raw.vertices), std::move(raw.faces));
  TriangleMesh cleaned = remove_degenerate_faces(parsed);
  if (cleaned.empty()) throw Error("empty mesh after removing degenerate faces: '" + path.string() + "'");
  return cleaned;
}

void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh, std::optional<MeshFormat> format,
               const MeshWriteOptions& options) {
  const MeshFormat fmt = format.value_or(format_from_path(path));
  const bool with_quality = !options.vertex_quality.empty();
  if (with_quality && static_cast<int>(options.vertex_quality.size()) != mesh.num_vertices())
    throw Error("vertex quality count does not match vertex count");

  if (fmt == MeshFormat::Obj) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << std::setprecision(17);
    for (const Vec3& p : mesh.vertices()) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const Face& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    return;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "ply\nformat " << (options.binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  for (const auto& c : options.comments) out << "comment " << c << '\n';
  out << "element vertex " << mesh.num_vertices() << '\n'
      << "property double x\nproperty double y\nproperty double z\n";
  if (with_quality) out << "property double quality\n";
  out << "element face " << mesh.num_faces() << '\n'
      << "property list uchar int vertex_indices\nend_header\n";

  if (options.binary) {
    auto put = [&out](auto value) { out.write(reinterpret_cast<const char*>(&value), sizeof(value)); };
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      const Vec3& p = mesh.vertex(v);
      put(p.x());
      put(p.y());
      put(p.z());
      if (with_quality) put(options.vertex_quality[v]);
    }
    for (const Face& f : mesh.faces()) {
      put(static_cast<std::uint8_t>(3));
      for (int v : f) put(static_cast<std::int32_t>(v));
    }
  } else {
    out << std::setprecision(17);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      const Vec3& p = mesh.vertex(v);
      out << p.x() << ' ' << p.y() << ' ' << p.z();
      if (with_quality) out << ' ' << options.vertex_quality[v];
      out << '\n';
    }
    for (const Face& f : mesh.faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  }
}

}  // namespace gessa
