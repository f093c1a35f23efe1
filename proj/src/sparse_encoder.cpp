#include "ost3d/sparse_encoder.hpp"

#include <cmath>

#include "ost3d/errors.hpp"

namespace ost3d {

namespace {

std::int64_t floor_half(std::int64_t v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }

}  // namespace

SparseLevel make_level(std::vector<VoxelKey> keys) {
  SparseLevel level;
  level.keys = std::move(keys);
  for (std::size_t i = 0; i < level.keys.size(); ++i) level.index.emplace(level.keys[i], i);
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz) {
        auto& rules = level.rules[tap_index(dx, dy, dz)];
        for (std::size_t out = 0; out < level.keys.size(); ++out) {
          const VoxelKey& k = level.keys[out];
          auto it = level.index.find({k.x + dx, k.y + dy, k.z + dz});
          if (it != level.index.end()) {
            rules.emplace_back(static_cast<std::uint32_t>(it->second),
                               static_cast<std::uint32_t>(out));
          }
        }
      }
  return level;
}

SparseLevel coarsen(SparseLevel& fine) {
  std::vector<VoxelKey> coarse_keys;
  VoxelIndex seen;
  fine.parent.resize(fine.size());
  for (std::size_t i = 0; i < fine.size(); ++i) {
    const VoxelKey& k = fine.keys[i];
    const VoxelKey ck{floor_half(k.x), floor_half(k.y), floor_half(k.z)};
    auto [it, inserted] = seen.try_emplace(ck, coarse_keys.size());
    if (inserted) coarse_keys.push_back(ck);
    fine.parent[i] = it->second;
  }
  return make_level(std::move(coarse_keys));
}

VoxelHierarchy build_hierarchy(const VoxelGrid& grid, std::size_t levels) {
  if (levels == 0) throw ConfigError("build_hierarchy: levels must be >= 1");
  VoxelHierarchy h;
  h.levels.reserve(levels);
  h.levels.push_back(make_level(grid.keys));
  for (std::size_t l = 1; l < levels; ++l) h.levels.push_back(coarsen(h.levels.back()));
  return h;
}

ad::Var sparse_conv(ad::Var features, ad::Var weight, ad::Var bias, const SparseLevel& level) {
  const Matrix& x = features.value();
  const Matrix& w = weight.value();
  const std::size_t c_in = x.cols();
  if (x.rows() != level.size()) throw ShapeError("sparse_conv: feature rows != sites");
  if (w.rows() != kKernelTaps * c_in) {
    throw ShapeError("sparse_conv: weight has " + std::to_string(w.rows()) + " rows, expected " +
                     std::to_string(kKernelTaps * c_in));
  }
  const std::size_t c_out = w.cols();
  if (bias.rows() != 1 || bias.cols() != c_out) throw ShapeError("sparse_conv: bias shape");

  Matrix out(level.size(), c_out);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < c_out; ++j) out(i, j) = bias.value()(0, j);
  for (std::size_t t = 0; t < kKernelTaps; ++t) {
    const double* wt = w.row(t * c_in).data();
    for (const auto& [in, o] : level.rules[t]) {
      const double* xi = x.row(in).data();
      double* yo = out.row(o).data();
      for (std::size_t a = 0; a < c_in; ++a) {
        const double xa = xi[a];
        if (xa == 0.0) continue;
        const double* wr = wt + a * c_out;
        for (std::size_t b = 0; b < c_out; ++b) yo[b] += xa * wr[b];
      }
    }
  }

  ad::Tape& tape = *features.tape();
  const std::size_t ix = features.id(), iw = weight.id(), ib = bias.id();
  const SparseLevel* lv = &level;
  return tape.record(std::move(out), {features, weight, bias},
                     [ix, iw, ib, lv, c_in, c_out](ad::Tape& t, std::size_t self) {
                       const Matrix& g = t.grad(self);
                       const Matrix& x = t.value(ix);
                       const Matrix& w = t.value(iw);
                       Matrix* gx = t.grad_buffer(ix);
                       Matrix* gw = t.grad_buffer(iw);
                       for (std::size_t tap = 0; tap < kKernelTaps; ++tap) {
                         const double* wt = w.row(tap * c_in).data();
                         for (const auto& [in, o] : lv->rules[tap]) {
                           const double* go = g.row(o).data();
                           if (gx) {
                             double* gi = gx->row(in).data();
                             for (std::size_t a = 0; a < c_in; ++a) {
                               const double* wr = wt + a * c_out;
                               double s = 0.0;
                               for (std::size_t b = 0; b < c_out; ++b) s += go[b] * wr[b];
                               gi[a] += s;
                             }
                           }
                           if (gw) {
                             const double* xi = x.row(in).data();
                             double* gwt = gw->row(tap * c_in).data();
                             for (std::size_t a = 0; a < c_in; ++a) {
                               const double xa = xi[a];
                               if (xa == 0.0) continue;
                               double* gr = gwt + a * c_out;
                               for (std::size_t b = 0; b < c_out; ++b) gr[b] += xa * go[b];
                             }
                           }
                         }
                       }
                       if (Matrix* gb = t.grad_buffer(ib)) {
                         for (std::size_t i = 0; i < g.rows(); ++i)
                           for (std::size_t b = 0; b < c_out; ++b) (*gb)(0, b) += g(i, b);
                       }
                     });
}

ad::Var downsample(ad::Var fine, const SparseLevel& fine_level, std::size_t coarse_size) {
  if (fine_level.parent.size() != fine.rows()) {
    throw ShapeError("downsample: level has no parent map for these rows");
  }
  return ad::segment_mean(fine, fine_level.parent, coarse_size);
}

ad::Var upsample(ad::Var coarse, const SparseLevel& fine_level) {
  return ad::gather_rows(coarse, fine_level.parent);
}

void UNetConfig::validate() const {
  if (levels < 1) throw ConfigError("encoder: levels must be >= 1");
  if (channels.size() != levels) {
    throw ConfigError("encoder: expected " + std::to_string(levels) + " channel entries, got " +
                      std::to_string(channels.size()));
  }
  for (std::size_t c : channels)
    if (c == 0) throw ConfigError("encoder: channels must be positive");
  if (out_channels == 0) throw ConfigError("encoder: out_channels must be positive");
  if (!(voxel_size > 0.0)) throw ConfigError("encoder: voxel_size must be positive");
}

SparseConvLayer SparseConvLayer::create(ParameterSet& params, const std::string& name,
                                        std::size_t c_in, std::size_t c_out,
                                        std::mt19937_64& rng) {
  SparseConvLayer l;
  l.c_in = c_in;
  l.c_out = c_out;
  // Surface sites see roughly nine occupied taps.
  const double stddev = std::sqrt(2.0 / (9.0 * static_cast<double>(c_in)));
  l.weight = params.add(name + ".weight", Matrix::random_normal(kKernelTaps * c_in, c_out, rng, stddev));
  l.bias = params.add(name + ".bias", Matrix(1, c_out));
  return l;
}

ad::Var SparseConvLayer::operator()(const BoundParameters& p, ad::Var x,
                                    const SparseLevel& level) const {
  return sparse_conv(x, p[weight], p[bias], level);
}

SparseUNet::SparseUNet(const UNetConfig& config, ParameterSet& params, std::mt19937_64& rng,
                       const std::string& prefix)
    : config_(config) {
  config_.validate();
  const auto& ch = config_.channels;
  for (std::size_t l = 0; l < config_.levels; ++l) {
    const std::size_t in = l == 0 ? 6 : ch[l - 1];
    const std::string name = prefix + ".down" + std::to_string(l);
    down_.push_back({SparseConvLayer::create(params, name + ".a", in, ch[l], rng),
                     SparseConvLayer::create(params, name + ".b", ch[l], ch[l], rng)});
  }
  up_.resize(config_.levels);
  for (std::size_t l = config_.levels - 1; l-- > 0;) {
    const std::string name = prefix + ".up" + std::to_string(l);
    up_[l].merge = Linear::create(params, name + ".merge", ch[l + 1] + ch[l], ch[l], rng,
                                  std::sqrt(2.0));
    up_[l].conv = SparseConvLayer::create(params, name + ".conv", ch[l], ch[l], rng);
  }
  head_ = Linear::create(params, prefix + ".head", ch[0], config_.out_channels, rng);
}

Matrix SparseUNet::input_features(const VoxelGrid& grid, const Vec3& center) {
  Matrix in = grid.features;
  for (std::size_t i = 0; i < in.rows(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      in(i, k) -= center[k];
      in(i, 3 + k) -= 0.5;
    }
  }
  return in;
}

ad::Var SparseUNet::forward_voxels(const BoundParameters& p, const VoxelHierarchy& hierarchy,
                                   const Matrix& inputs) const {
  if (hierarchy.levels.size() != config_.levels) {
    throw ShapeError("SparseUNet: hierarchy depth does not match the config");
  }
  ad::Tape& tape = p.tape();
  std::vector<ad::Var> skips;
  ad::Var x = tape.constant(inputs);
  for (std::size_t l = 0; l < config_.levels; ++l) {
    const SparseLevel& level = hierarchy.levels[l];
    if (l > 0) x = downsample(x, hierarchy.levels[l - 1], level.size());
    x = ad::relu(down_[l].a(p, x, level));
    x = ad::relu(down_[l].b(p, x, level));
    skips.push_back(x);
  }
  for (std::size_t l = config_.levels - 1; l-- > 0;) {
    const SparseLevel& level = hierarchy.levels[l];
    ad::Var up = upsample(x, level);
    x = ad::relu(up_[l].merge(p, ad::concat_cols(up, skips[l])));
    x = ad::relu(up_[l].conv(p, x, level));
  }
  return head_(p, x);
}

ad::Var SparseUNet::encode(const BoundParameters& p, const PointCloud& cloud,
                           const VoxelGrid& grid, const VoxelHierarchy& hierarchy) const {
  ad::Var voxels = forward_voxels(p, hierarchy, input_features(grid, cloud.centroid()));
  return ad::gather_rows(voxels, grid.point_to_voxel);
}

Matrix encode_scene(const PointCloud& cloud, const SparseUNet& net, const ParameterSet& params) {
  const VoxelGrid grid = voxelize(cloud, net.config().voxel_size);
  const VoxelHierarchy h = build_hierarchy(grid, net.config().levels);
  ad::Tape tape;
  const auto p = BoundParameters::frozen(params, tape);
  return net.encode(p, cloud, grid, h).value();
}

}  // namespace ost3d
