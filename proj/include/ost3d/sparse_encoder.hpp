#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ost3d/autodiff.hpp"
#include "ost3d/parameters.hpp"
#include "ost3d/scene.hpp"

namespace ost3d {

inline constexpr std::size_t kKernelTaps = 27;

// Tap index of a neighbor offset in {-1,0,1}^3; the center tap is 13.
constexpr std::size_t tap_index(int dx, int dy, int dz) {
  return static_cast<std::size_t>((dx + 1) * 9 + (dy + 1) * 3 + (dz + 1));
}

// Occupied sites of one resolution plus the submanifold rulebook over them.
struct SparseLevel {
  std::vector<VoxelKey> keys;
  VoxelIndex index;
  // rules[t] lists (input site, output site) with key(input) = key(output) + offset(t).
  std::array<std::vector<std::pair<std::uint32_t, std::uint32_t>>, kKernelTaps> rules;
  // Site in the next coarser level; empty on the coarsest level.
  std::vector<std::size_t> parent;

  std::size_t size() const noexcept { return keys.size(); }
};

SparseLevel make_level(std::vector<VoxelKey> keys);
// Stride-2 key halving (floor division); coarse sites in order of first appearance.
SparseLevel coarsen(SparseLevel& fine);

struct VoxelHierarchy {
  std::vector<SparseLevel> levels;
};

VoxelHierarchy build_hierarchy(const VoxelGrid& grid, std::size_t levels);

// out(v) = bias + sum over occupied taps u of feat(u) * W[tap(u - v)].
// weight is (27 * C_in) x C_out with tap t occupying rows [t*C_in, (t+1)*C_in).
ad::Var sparse_conv(ad::Var features, ad::Var weight, ad::Var bias, const SparseLevel& level);
// Mean of the children of each coarse site.
ad::Var downsample(ad::Var fine, const SparseLevel& fine_level, std::size_t coarse_size);
// Each fine site copies its parent's row.
ad::Var upsample(ad::Var coarse, const SparseLevel& fine_level);

struct UNetConfig {
  std::size_t levels = 2;
  std::vector<std::size_t> channels{32, 64};
  std::size_t out_channels = 64;
  double voxel_size = 0.02;

  void validate() const;
};

struct SparseConvLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t c_in = 0;
  std::size_t c_out = 0;

  static SparseConvLayer create(ParameterSet& params, const std::string& name, std::size_t c_in,
                                std::size_t c_out, std::mt19937_64& rng);
  ad::Var operator()(const BoundParameters& p, ad::Var x, const SparseLevel& level) const;
};

// Two-level-or-deeper sparse U-Net with concatenation skips and a linear head.
class SparseUNet {
 public:
  SparseUNet() = default;
  SparseUNet(const UNetConfig& config, ParameterSet& params, std::mt19937_64& rng,
             const std::string& prefix = "encoder");

  const UNetConfig& config() const noexcept { return config_; }

  // Voxel inputs: [mean xyz - center, mean rgb - 0.5].
  static Matrix input_features(const VoxelGrid& grid, const Vec3& center);

  ad::Var forward_voxels(const BoundParameters& p, const VoxelHierarchy& hierarchy,
                         const Matrix& inputs) const;
  // Per-point features by voxel lookup, centered on the cloud centroid.
  ad::Var encode(const BoundParameters& p, const PointCloud& cloud, const VoxelGrid& grid,
                 const VoxelHierarchy& hierarchy) const;

 private:
  struct Stage {
    SparseConvLayer a, b;
  };
  struct UpStage {
    Linear merge;
    SparseConvLayer conv;
  };

  UNetConfig config_;
  std::vector<Stage> down_;
  std::vector<UpStage> up_;  // up_[l] decodes into level l
  Linear head_;
};

// Convenience wrapper: voxelize, build the hierarchy and run the encoder without gradients.
Matrix encode_scene(const PointCloud& cloud, const SparseUNet& net, const ParameterSet& params);

}  // namespace ost3d
