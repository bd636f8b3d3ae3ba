#include "latad/checkpoint.hpp"

#include <cstring>

#include <fmt/format.h>

#include "latad/io.hpp"

namespace latad {

namespace {

constexpr char kMagic[8] = {'L', 'A', 'T', 'A', 'D', 'C', 'K', '\0'};

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_ += s;
  }
  void matrix(const Matrix& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) pod(m(i, j));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = in_.substr(at_, n);
    at_ += n;
    return s;
  }
  Matrix matrix() {
    const auto r = pod<std::int64_t>();
    const auto c = pod<std::int64_t>();
    if (r < 0 || c < 0) throw DataError("checkpoint: negative matrix shape");
    need(static_cast<std::size_t>(r * c) * sizeof(double));
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = pod<double>();
    return m;
  }
  void expect(const char* p, std::size_t n) {
    need(n);
    if (std::memcmp(in_.data() + at_, p, n) != 0) throw DataError("checkpoint: bad magic");
    at_ += n;
  }
  bool done() const { return at_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (at_ + n > in_.size()) throw DataError("checkpoint: truncated file");
  }
  const std::string& in_;
  std::size_t at_ = 0;
};

void write_extractor(Writer& w, const ExtractorConfig& c) {
  for (int v : {c.window, c.features, c.d_model, c.conv_kernel, c.transformer_layers, c.transformer_heads,
                c.ffn_width, c.tcn_levels, c.tcn_kernel}) {
    w.pod<std::int32_t>(v);
  }
  w.pod(c.leaky_slope);
  w.pod(c.seed);
  for (bool b : {c.use_gat, c.use_transformer, c.use_tcn}) w.pod<std::uint8_t>(b ? 1 : 0);
}

ExtractorConfig read_extractor(Reader& r) {
  ExtractorConfig c;
  for (int* v : {&c.window, &c.features, &c.d_model, &c.conv_kernel, &c.transformer_layers, &c.transformer_heads,
                 &c.ffn_width, &c.tcn_levels, &c.tcn_kernel}) {
    *v = r.pod<std::int32_t>();
  }
  c.leaky_slope = r.pod<double>();
  c.seed = r.pod<std::uint64_t>();
  for (bool* b : {&c.use_gat, &c.use_transformer, &c.use_tcn}) *b = r.pod<std::uint8_t>() != 0;
  return c;
}

void write_generators(Writer& w, const GeneratorConfig& c) {
  for (int v : {c.count, c.window, c.features, c.hidden}) w.pod<std::int32_t>(v);
  w.pod(c.leaky_slope);
  w.pod(c.seed);
}

GeneratorConfig read_generators(Reader& r) {
  GeneratorConfig c;
  for (int* v : {&c.count, &c.window, &c.features, &c.hidden}) *v = r.pod<std::int32_t>();
  c.leaky_slope = r.pod<double>();
  c.seed = r.pod<std::uint64_t>();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod(kCheckpointVersion);
  w.str(ckpt.config_text);
  w.str(ckpt.config_hash);
  write_extractor(w, ckpt.model.extractor_config);
  write_generators(w, ckpt.model.generator_config);
  const ParameterSet& p = ckpt.model.params;
  w.pod<std::uint64_t>(p.size());
  for (std::size_t s = 0; s < p.size(); ++s) {
    w.str(p.name(s));
    w.matrix(p.value(s));
  }
  w.pod<std::uint64_t>(ckpt.model.margins.size());
  for (double m : ckpt.model.margins) w.pod(m);
  w.pod<std::uint8_t>(ckpt.reference ? 1 : 0);
  if (ckpt.reference) {
    w.matrix(ckpt.reference->centers);
    w.pod(ckpt.reference->coreset_fraction);
  }
  w.pod<std::uint8_t>(ckpt.stats ? 1 : 0);
  if (ckpt.stats) {
    w.matrix(ckpt.stats->train_min);
    w.matrix(ckpt.stats->train_max);
  }
  w.pod<std::uint64_t>(ckpt.metadata.size());
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect(kMagic, sizeof(kMagic));
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError(fmt::format("checkpoint version {} is not supported (expected {})", version, kCheckpointVersion));
  }
  Checkpoint c;
  c.config_text = r.str();
  c.config_hash = r.str();
  c.model.extractor_config = read_extractor(r);
  c.model.generator_config = read_generators(r);
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t s = 0; s < n; ++s) {
    std::string name = r.str();
    c.model.params.add(std::move(name), r.matrix());
  }
  const auto nm = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < nm; ++i) c.model.margins.push_back(r.pod<double>());
  if (r.pod<std::uint8_t>()) {
    ReferenceModel ref;
    ref.centers = r.matrix();
    ref.coreset_fraction = r.pod<double>();
    c.reference = std::move(ref);
  }
  if (r.pod<std::uint8_t>()) {
    NormalizationStats st;
    st.train_min = r.matrix();
    st.train_max = r.matrix();
    c.stats = std::move(st);
  }
  const auto nmeta = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    c.metadata[k] = r.str();
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  // Fails loudly if the stored tensors do not match the stored architecture.
  (void)c.model.extractor();
  (void)c.model.generators();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_text_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(io::read_text_file(path));
}

}  // namespace latad
