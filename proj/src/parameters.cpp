#include "ost3d/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ost3d/errors.hpp"

namespace ost3d {

std::size_t ParameterSet::add(std::string name, Matrix init) {
  if (lookup_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  lookup_.emplace(name, values_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::size_t ParameterSet::index(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second;
}

bool ParameterSet::contains(std::string_view name) const {
  return lookup_.contains(std::string(name));
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const Matrix& m : values_) n += m.size();
  return n;
}

std::vector<std::size_t> ParameterSet::with_prefix(std::string_view prefix) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (std::string_view(names_[i]).starts_with(prefix)) out.push_back(i);
  return out;
}

BoundParameters::BoundParameters(const ParameterSet& params, ad::Tape& tape, Predicate trainable)
    : tape_(&tape) {
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool train = !trainable || trainable(i);
    vars_.push_back(train ? tape.variable(params.value(i)) : tape.constant(params.value(i)));
  }
}

BoundParameters BoundParameters::frozen(const ParameterSet& params, ad::Tape& tape) {
  return BoundParameters(params, tape, [](std::size_t) { return false; });
}

Linear Linear::create(ParameterSet& params, const std::string& name, std::size_t in,
                      std::size_t out, std::mt19937_64& rng, double gain) {
  Linear l;
  l.in = in;
  l.out = out;
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(in + out));
  l.weight = params.add(name + ".weight", Matrix::random_normal(in, out, rng, stddev));
  l.bias = params.add(name + ".bias", Matrix(1, out));
  return l;
}

ad::Var Linear::operator()(const BoundParameters& p, ad::Var x) const {
  return ad::linear(x, p[weight], p[bias]);
}

// ---- checkpoint -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'O', 'S', 'T', '3', 'D', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("checkpoint truncated while reading " + what);
  return v;
}

std::string read_string(std::istream& is, std::uint64_t len, const std::string& what) {
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw ParseError("checkpoint truncated while reading " + what);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const std::string& config_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint64_t>(os, config_json.size());
  os.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  write_pod<std::uint64_t>(os, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    const Matrix& m = params.value(i);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint64_t>(os, m.rows());
    write_pod<std::uint64_t>(os, m.cols());
    os.write(reinterpret_cast<const char*>(m.values().data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not an ost3d checkpoint: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointData data;
  data.config_json = read_string(is, read_pod<std::uint64_t>(is, "config length"), "config");
  const auto count = read_pod<std::uint64_t>(is, "block count");
  for (std::uint64_t b = 0; b < count; ++b) {
    const auto name_len = read_pod<std::uint32_t>(is, "block name length");
    std::string name = read_string(is, name_len, "block name");
    const auto rows = read_pod<std::uint64_t>(is, "rows of " + name);
    const auto cols = read_pod<std::uint64_t>(is, "cols of " + name);
    std::vector<double> values(rows * cols);
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw ParseError("checkpoint truncated in block " + name);
    data.blocks.emplace_back(std::move(name), Matrix(rows, cols, std::move(values)));
  }
  return data;
}

void apply_checkpoint(const CheckpointData& data, ParameterSet& params) {
  std::vector<bool> seen(params.size(), false);
  for (const auto& [name, m] : data.blocks) {
    if (!params.contains(name)) throw ConfigError("checkpoint block not in model: " + name);
    const std::size_t i = params.index(name);
    if (!params.value(i).same_shape(m)) {
      throw ShapeError("checkpoint block " + name + " has shape " + std::to_string(m.rows()) +
                       "x" + std::to_string(m.cols()));
    }
    params.value(i) = m;
    seen[i] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw ConfigError("checkpoint lacks parameter " + params.name(i));
}

}  // namespace ost3d
