#include "rmvs/ply.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rmvs {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary PLY IO assumes a little-endian host");

enum class Format { kAscii, kBinaryLittleEndian, kBinaryBigEndian };

struct Property {
  std::string name;
  int size = 0;
  char kind = 'f';  // 'i' signed, 'u' unsigned, 'f' floating point
};

Property ParseProperty(const std::string& type, const std::string& name,
                       const std::string& path) {
  if (type == "char" || type == "int8") return {name, 1, 'i'};
  if (type == "uchar" || type == "uint8") return {name, 1, 'u'};
  if (type == "short" || type == "int16") return {name, 2, 'i'};
  if (type == "ushort" || type == "uint16") return {name, 2, 'u'};
  if (type == "int" || type == "int32") return {name, 4, 'i'};
  if (type == "uint" || type == "uint32") return {name, 4, 'u'};
  if (type == "float" || type == "float32") return {name, 4, 'f'};
  if (type == "double" || type == "float64") return {name, 8, 'f'};
  throw std::runtime_error(path + ": unsupported PLY property type '" + type + "'");
}

double DecodeBinary(const Property& p, const char* bytes, bool swap) {
  char buf[8];
  std::memcpy(buf, bytes, p.size);
  if (swap) {
    for (int i = 0; i < p.size / 2; ++i) std::swap(buf[i], buf[p.size - 1 - i]);
  }
  switch (p.size) {
    case 1:
      return p.kind == 'i' ? static_cast<double>(static_cast<int8_t>(buf[0]))
                           : static_cast<double>(static_cast<uint8_t>(buf[0]));
    case 2: {
      uint16_t v;
      std::memcpy(&v, buf, 2);
      return p.kind == 'i' ? static_cast<double>(static_cast<int16_t>(v)) : v;
    }
    case 4: {
      if (p.kind == 'f') {
        float f;
        std::memcpy(&f, buf, 4);
        return f;
      }
      uint32_t v;
      std::memcpy(&v, buf, 4);
      return p.kind == 'i' ? static_cast<double>(static_cast<int32_t>(v)) : v;
    }
    default: {
      double d;
      std::memcpy(&d, buf, 8);
      return d;
    }
  }
}

uint8_t ToByte(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<uint8_t>(std::lround(v));
}

}  // namespace

void WritePly(const std::string& path, const PointCloud& cloud, bool ascii) {
  if (cloud.colors.size() != cloud.size() || cloud.support.size() != cloud.size()) {
    throw std::invalid_argument("write_ply: attribute arrays differ in length");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "ply\n"
      << (ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property uchar support\nend_header\n";
  if (ascii) {
    out.precision(9);
    for (size_t i = 0; i < cloud.size(); ++i) {
      const Eigen::Vector3f p = cloud.points[i].cast<float>();
      out << p.x() << ' ' << p.y() << ' ' << p.z() << ' '
          << int(cloud.colors[i][0]) << ' ' << int(cloud.colors[i][1]) << ' '
          << int(cloud.colors[i][2]) << ' ' << int(cloud.support[i]) << '\n';
    }
  } else {
    std::vector<char> record(16);
    for (size_t i = 0; i < cloud.size(); ++i) {
      const Eigen::Vector3f p = cloud.points[i].cast<float>();
      std::memcpy(record.data(), p.data(), 12);
      std::memcpy(record.data() + 12, cloud.colors[i].data(), 3);
      record[15] = static_cast<char>(cloud.support[i]);
      out.write(record.data(), record.size());
    }
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

PointCloud ReadPly(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open PLY file");
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw std::runtime_error(path + ": not a PLY file");
  }
  Format format = Format::kAscii;
  long long num_vertices = -1;
  bool in_vertex = false;
  bool vertex_done = false;
  std::vector<Property> props;
  while (true) {
    if (!std::getline(in, line)) {
      throw std::runtime_error(path + ": truncated PLY header");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "end_header") break;
    if (key == "format") {
      std::string f;
      ss >> f;
      if (f == "ascii") format = Format::kAscii;
      else if (f == "binary_little_endian") format = Format::kBinaryLittleEndian;
      else if (f == "binary_big_endian") format = Format::kBinaryBigEndian;
      else throw std::runtime_error(path + ": unknown PLY format '" + f + "'");
    } else if (key == "element") {
      std::string name;
      long long count = 0;
      ss >> name >> count;
      if (in_vertex) vertex_done = true;
      in_vertex = name == "vertex" && !vertex_done;
      if (in_vertex) {
        if (num_vertices >= 0) throw std::runtime_error(path + ": duplicate vertex element");
        num_vertices = count;
      } else if (num_vertices < 0) {
        throw std::runtime_error(path + ": elements before the vertex element are not supported");
      }
    } else if (key == "property" && in_vertex) {
      std::string type, name;
      ss >> type >> name;
      if (type == "list") {
        throw std::runtime_error(path + ": list properties on vertices are not supported");
      }
      props.push_back(ParseProperty(type, name, path));
    }
  }
  if (num_vertices < 0) throw std::runtime_error(path + ": PLY has no vertex element");

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, is = -1;
  size_t record_size = 0;
  for (size_t i = 0; i < props.size(); ++i) {
    const std::string& n = props[i].name;
    const int idx = static_cast<int>(i);
    if (n == "x") ix = idx;
    else if (n == "y") iy = idx;
    else if (n == "z") iz = idx;
    else if (n == "red") ir = idx;
    else if (n == "green") ig = idx;
    else if (n == "blue") ib = idx;
    else if (n == "support") is = idx;
    record_size += props[i].size;
  }
  if (ix < 0 || iy < 0 || iz < 0) {
    throw std::runtime_error(path + ": PLY vertices lack x/y/z");
  }

  PointCloud cloud;
  cloud.points.reserve(num_vertices);
  std::vector<double> values(props.size());
  std::vector<char> record(record_size);
  const bool swap = format == Format::kBinaryBigEndian;
  for (long long v = 0; v < num_vertices; ++v) {
    if (format == Format::kAscii) {
      for (size_t i = 0; i < props.size(); ++i) {
        if (!(in >> values[i])) {
          throw std::runtime_error(path + ": truncated PLY vertex data at vertex " +
                                   std::to_string(v));
        }
        // Match the binary decoding of a declared 32-bit float.
        if (props[i].kind == 'f' && props[i].size == 4) {
          values[i] = static_cast<float>(values[i]);
        }
      }
    } else {
      if (!in.read(record.data(), record_size)) {
        throw std::runtime_error(path + ": truncated PLY vertex data at vertex " +
                                 std::to_string(v));
      }
      size_t offset = 0;
      for (size_t i = 0; i < props.size(); ++i) {
        values[i] = DecodeBinary(props[i], record.data() + offset, swap);
        offset += props[i].size;
      }
    }
    const Eigen::Vector3d p(values[ix], values[iy], values[iz]);
    if (!p.allFinite()) {
      throw std::runtime_error(path + ": non-finite vertex " + std::to_string(v));
    }
    cloud.Add(p,
              {ir >= 0 ? ToByte(values[ir]) : uint8_t{0},
               ig >= 0 ? ToByte(values[ig]) : uint8_t{0},
               ib >= 0 ? ToByte(values[ib]) : uint8_t{0}},
              is >= 0 ? ToByte(values[is]) : uint8_t{0});
  }
  return cloud;
}

}  // namespace rmvs
