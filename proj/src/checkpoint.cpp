#include "sofia/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sofia/errors.hpp"

namespace sofia {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u64(std::uint64_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void vector(const Vector& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint64_t u64() {
    std::uint64_t v = 0;
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw ConfigError("checkpoint truncated");
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count() {
    const std::uint64_t n = u64();
    if (n > (std::uint64_t{1} << 32)) throw ConfigError("checkpoint size field out of range");
    return static_cast<std::size_t>(n);
  }
  Vector vector() {
    Vector v(static_cast<Eigen::Index>(count()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = f64();
    return v;
  }
  Matrix matrix() {
    const auto rows = static_cast<Eigen::Index>(count());
    const auto cols = static_cast<Eigen::Index>(count());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = f64();
    return m;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_state(const StreamState& state, std::ostream& out) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  Writer w(out);

  const OnlineConfig& c = state.config;
  w.f64(c.mu);
  w.f64(c.lambda1);
  w.f64(c.lambda2);
  w.f64(c.lambda3);
  w.f64(c.robust.huber_k);
  w.f64(c.robust.biweight_c);
  w.f64(c.robust.phi);
  w.f64(c.sigma_floor);
  w.u64(c.preclean ? 1 : 0);

  w.u64(state.nontemporal.size());
  for (const auto& u : state.nontemporal) w.matrix(u);
  w.matrix(state.temporal_history);
  w.u64(state.temporal_head);

  w.vector(state.hw.level);
  w.vector(state.hw.trend);
  w.matrix(state.hw.seasonal);
  w.u64(state.hw.head);
  w.vector(state.hw.params.alpha);
  w.vector(state.hw.params.beta);
  w.vector(state.hw.params.gamma);

  w.u64(state.error_scale.order());
  for (std::size_t len : state.error_scale.shape()) w.u64(len);
  for (double v : state.error_scale.values()) w.f64(v);

  w.u64(state.time);
  if (!out) throw std::runtime_error("checkpoint write failed");
}

void save_state(const StreamState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_state(state, out);
}

StreamState load_state(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw ConfigError("not a stream checkpoint");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in) throw ConfigError("checkpoint truncated");
  if (version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  Reader r(in);

  StreamState s;
  OnlineConfig& c = s.config;
  c.mu = r.f64();
  c.lambda1 = r.f64();
  c.lambda2 = r.f64();
  c.lambda3 = r.f64();
  c.robust.huber_k = r.f64();
  c.robust.biweight_c = r.f64();
  c.robust.phi = r.f64();
  c.sigma_floor = r.f64();
  c.preclean = r.u64() != 0;

  const std::size_t modes = r.count();
  for (std::size_t n = 0; n < modes; ++n) s.nontemporal.push_back(r.matrix());
  s.temporal_history = r.matrix();
  s.temporal_head = r.count();

  s.hw.level = r.vector();
  s.hw.trend = r.vector();
  s.hw.seasonal = r.matrix();
  s.hw.head = r.count();
  s.hw.params.alpha = r.vector();
  s.hw.params.beta = r.vector();
  s.hw.params.gamma = r.vector();

  Shape shape(r.count());
  for (auto& len : shape) len = r.count();
  std::vector<double> scale(shape_size(shape));
  for (auto& v : scale) v = r.f64();
  s.error_scale = DenseTensor(shape, std::move(scale));

  s.time = r.count();
  s.validate();
  return s;
}

StreamState load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_state(in);
}

}  // namespace sofia
