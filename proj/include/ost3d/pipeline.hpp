#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ost3d/autodiff.hpp"
#include "ost3d/matrix.hpp"
#include "ost3d/ost.hpp"
#include "ost3d/parameters.hpp"
#include "ost3d/scene.hpp"
#include "ost3d/superpoint.hpp"

namespace ost3d {

inline constexpr std::string_view kPcToken = "<PC>";
inline constexpr std::string_view kPromptToken = "<Visual Prompt>";
inline constexpr std::string_view kSegToken = "[SEG]";
inline constexpr std::string_view kObjToken = "<obj>";
inline constexpr std::string_view kUnkToken = "<unk>";

// Two-layer MLP: linear -> GELU -> linear.
struct Mlp {
  Linear l1, l2;

  static Mlp create(ParameterSet& params, const std::string& name, std::size_t in,
                    std::size_t hidden, std::size_t out, std::mt19937_64& rng);
  ad::Var operator()(const BoundParameters& p, ad::Var x) const;
};

// Whitespace tokenization that keeps "<Visual Prompt>" as one token.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  // Special tokens first, then the base words, then `extra_words` not already present.
  explicit Vocabulary(std::span<const std::string> extra_words = {});

  std::size_t id(std::string_view word) const;  // <unk> for unknown words
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::size_t size() const noexcept { return words_.size(); }
  bool contains(std::string_view word) const;

  std::size_t pc_id() const { return id(kPcToken); }
  std::size_t prompt_id() const { return id(kPromptToken); }
  std::size_t seg_id() const { return id(kSegToken); }
  std::size_t obj_id() const { return id(kObjToken); }

  std::vector<std::size_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::size_t> ids) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

inline constexpr std::size_t kSplicedRow = static_cast<std::size_t>(-1);

struct InstructionSequence {
  ad::Var embeddings;                  // rows x d_lm
  std::vector<std::size_t> token_ids;  // kSplicedRow for visual rows
  std::size_t pc_begin = 0;
  std::size_t pc_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> prompt_spans;  // (begin, count)

  std::size_t size() const noexcept { return token_ids.size(); }
};

// Replaces the single <PC> with H_V and each <Visual Prompt> with the next H_P
// entry, in template order. Text rows come from `token_embeddings`.
InstructionSequence assemble_instruction(std::string_view templ, ad::Var visual_tokens,
                                         std::span<const ad::Var> prompt_tokens,
                                         const Vocabulary& vocab, const Matrix& token_embeddings);

struct LmOutput {
  std::vector<std::size_t> tokens;
  ad::Var hidden;  // tokens.size() x d_lm
  std::string text;
};

// Scripted stand-in for the language model. It answers "sure , it is [SEG] ."
// when the target-present flag <obj> is in the instruction and "sorry , i cannot
// find this object ." otherwise. hidden_t = emb(out_t) + mean(text rows)
// + mean(<PC> rows) + mean(prompt rows, if any).
class StubLM {
 public:
  StubLM(const Vocabulary& vocab, const Matrix& token_embeddings)
      : vocab_(&vocab), embeddings_(&token_embeddings) {}

  LmOutput generate(const InstructionSequence& seq) const;

 private:
  const Vocabulary* vocab_;
  const Matrix* embeddings_;
};

// W_S applied to the hidden state before the first [SEG] (or to the [SEG] state
// itself when use_seg_state is set). nullopt when no [SEG] was produced;
// ProtocolError when [SEG] is the first token.
std::optional<ad::Var> extract_seg_query(ad::Var hidden, std::span<const std::size_t> tokens,
                                         std::size_t seg_id, const Mlp& w_s,
                                         const BoundParameters& p, bool use_seg_state = false);

// Superpoint mask logits (1 x M) of the seg query appended to the frozen OST
// with a zero bias row.
ad::Var decode_logits(const Ost& ost, const BoundParameters& p, ad::Var superpoint_feats,
                      const Matrix& centroids, ad::Var seg_query);
// Strict sigmoid > 0.5 per superpoint, broadcast to member points.
PointMask decode_mask(const Ost& ost, const ParameterSet& params, const Matrix& superpoint_feats,
                      const Matrix& centroids, const Matrix& seg_query,
                      const SuperpointPartition& part);
PointMask superpoint_mask_to_points(std::span<const std::uint8_t> sp_mask,
                                    const SuperpointPartition& part);

}  // namespace ost3d
