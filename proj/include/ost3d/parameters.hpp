#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ost3d/autodiff.hpp"
#include "ost3d/matrix.hpp"

namespace ost3d {

// Named, ordered collection of trainable matrices.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix init);
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;

  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t scalar_count() const noexcept;

  // Indices whose name starts with the prefix.
  std::vector<std::size_t> with_prefix(std::string_view prefix) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

// Parameters placed on a tape for one forward pass.
class BoundParameters {
 public:
  using Predicate = std::function<bool(std::size_t)>;

  // Every parameter is trainable when the predicate is empty.
  BoundParameters(const ParameterSet& params, ad::Tape& tape, Predicate trainable = {});
  static BoundParameters frozen(const ParameterSet& params, ad::Tape& tape);

  ad::Var operator[](std::size_t i) const { return vars_[i]; }
  ad::Tape& tape() const { return *tape_; }
  bool trainable(std::size_t i) const { return vars_[i].requires_grad(); }

 private:
  ad::Tape* tape_;
  std::vector<ad::Var> vars_;
};

// Dense layer y = x W + b with W stored in x out.
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  static Linear create(ParameterSet& params, const std::string& name, std::size_t in,
                       std::size_t out, std::mt19937_64& rng, double gain = 1.0);
  ad::Var operator()(const BoundParameters& p, ad::Var x) const;
};

// Versioned binary checkpoint: header, config text, then named blocks with shapes.
struct CheckpointData {
  std::string config_json;
  std::vector<std::pair<std::string, Matrix>> blocks;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const std::string& config_json);
CheckpointData load_checkpoint(const std::filesystem::path& path);
// Overwrites every parameter from the blocks; missing names or shape changes throw.
void apply_checkpoint(const CheckpointData& data, ParameterSet& params);

}  // namespace ost3d
