#include "semfoam/scene_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "semfoam/error.hpp"

namespace semfoam {

namespace {

static_assert(std::endian::native == std::endian::little, "scene files are written in native little-endian order");

void put_doubles(std::string& out, const double* v, size_t n) {
  if (n == 0) return;
  out.append(reinterpret_cast<const char*>(v), n * sizeof(double));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::string line() {
    const size_t end = bytes_.find('\n', pos_);
    if (end == std::string::npos) throw FoamError(ErrorCode::Truncated, "header ended early");
    std::string l = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return l;
  }

  template <typename T>
  T keyed(const std::string& key) {
    std::istringstream is(line());
    std::string k;
    T v{};
    is >> k >> v;
    if (k != key || !is) throw FoamError(ErrorCode::Io, "expected header field '" + key + "'");
    return v;
  }

  void doubles(double* out, size_t n) {
    const size_t bytes = n * sizeof(double);
    if (n == 0) return;
    if (bytes_.size() - pos_ < bytes) throw FoamError(ErrorCode::Truncated, "data section truncated");
    std::memcpy(out, bytes_.data() + pos_, bytes);
    pos_ += bytes;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FoamError(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FoamError(ErrorCode::Io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FoamError(ErrorCode::Io, "write failed: " + path);
}

void check_magic(const std::string& bytes, const char* magic) {
  const size_t n = std::strlen(magic);
  const size_t stem = n - 1;  // magic minus its version digit
  if (bytes.size() < n + 1 || bytes.compare(0, stem, magic, stem) != 0)
    throw FoamError(ErrorCode::BadMagic, "not a " + std::string(magic, stem) + " file");
  if (bytes[n - 1] != magic[n - 1] || bytes[n] != '\n')
    throw FoamError(ErrorCode::VersionMismatch, "unsupported version '" + std::string(1, bytes[n - 1]) + "'");
}

}  // namespace

std::string serialize_scene(const FoamScene& s) {
  s.validate();
  std::string out = "FOAM1\n";
  char buf[512];
  std::snprintf(buf, sizeof(buf), "sites %d\nsh_degree %d\nid_dim %d\nclasses %d\n", s.num_sites(), s.sh_degree,
                s.id_dim, s.num_classes());
  out += buf;
  std::snprintf(buf, sizeof(buf), "bbox %.17g %.17g %.17g %.17g %.17g %.17g\ndata\n", s.box.min_corner.x,
                s.box.min_corner.y, s.box.min_corner.z, s.box.max_corner.x, s.box.max_corner.y, s.box.max_corner.z);
  out += buf;
  put_doubles(out, reinterpret_cast<const double*>(s.positions.data()), 3 * s.positions.size());
  put_doubles(out, s.density_raw.data(), s.density_raw.size());
  put_doubles(out, s.sh.data(), s.sh.size());
  put_doubles(out, s.identity.data(), s.identity.size());
  put_doubles(out, s.head.weights.data(), s.head.weights.size());
  put_doubles(out, s.head.bias.data(), s.head.bias.size());
  return out;
}

FoamScene deserialize_scene(const std::string& bytes) {
  check_magic(bytes, "FOAM1");
  Reader r(bytes);
  r.line();
  FoamScene s;
  const int n = r.keyed<int>("sites");
  s.sh_degree = r.keyed<int>("sh_degree");
  s.id_dim = r.keyed<int>("id_dim");
  const int k = r.keyed<int>("classes");
  {
    std::istringstream is(r.line());
    std::string key;
    is >> key >> s.box.min_corner.x >> s.box.min_corner.y >> s.box.min_corner.z >> s.box.max_corner.x >>
        s.box.max_corner.y >> s.box.max_corner.z;
    if (key != "bbox" || !is) throw FoamError(ErrorCode::Io, "expected header field 'bbox'");
  }
  if (r.line() != "data") throw FoamError(ErrorCode::Io, "expected 'data'");
  if (n < 0 || k < 0 || s.id_dim <= 0 || s.sh_degree < 0 || s.sh_degree > kMaxShDegree)
    throw FoamError(ErrorCode::Io, "invalid header values");
  // Reject sizes the data section cannot possibly hold before allocating.
  const size_t per_site = 4 + static_cast<size_t>(3 * sh_basis_count(s.sh_degree) + s.id_dim);
  if (static_cast<size_t>(n) * per_site * sizeof(double) > bytes.size())
    throw FoamError(ErrorCode::Truncated, "data section truncated");
  s.resize(n);
  s.head = ClassifierHead::zeros(k, s.id_dim);
  r.doubles(reinterpret_cast<double*>(s.positions.data()), 3 * static_cast<size_t>(n));
  r.doubles(s.density_raw.data(), s.density_raw.size());
  r.doubles(s.sh.data(), s.sh.size());
  r.doubles(s.identity.data(), s.identity.size());
  r.doubles(s.head.weights.data(), s.head.weights.size());
  r.doubles(s.head.bias.data(), s.head.bias.size());
  if (!r.at_end()) throw FoamError(ErrorCode::Io, "trailing bytes after data section");
  return s;
}

void save_scene(const std::string& path, const FoamScene& scene) { write_file(path, serialize_scene(scene)); }

FoamScene load_scene(const std::string& path) { return deserialize_scene(read_file(path)); }

void save_array_file(const std::string& path, long step, const std::vector<double>& values) {
  std::string out = "FOAMOPT1\n";
  out += "count " + std::to_string(values.size()) + "\nstep " + std::to_string(step) + "\ndata\n";
  put_doubles(out, values.data(), values.size());
  write_file(path, out);
}

std::vector<double> load_array_file(const std::string& path, long* step) {
  const std::string bytes = read_file(path);
  check_magic(bytes, "FOAMOPT1");
  Reader r(bytes);
  r.line();
  const auto count = r.keyed<size_t>("count");
  const long t = r.keyed<long>("step");
  if (r.line() != "data") throw FoamError(ErrorCode::Io, "expected 'data'");
  if (count * sizeof(double) > bytes.size()) throw FoamError(ErrorCode::Truncated, "data section truncated");
  std::vector<double> v(count);
  r.doubles(v.data(), count);
  if (step) *step = t;
  return v;
}

}  // namespace semfoam
