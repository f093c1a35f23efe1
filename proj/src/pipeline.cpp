#include "ost3d/pipeline.hpp"

#include <algorithm>
#include <cctype>

#include "ost3d/errors.hpp"

namespace ost3d {

namespace {

const std::vector<std::string>& base_words() {
  static const std::vector<std::string> words = {
      "sure", ",", "it", "is", ".", "sorry", "i", "cannot", "find", "this", "object",
      "please", "segment", "the", "what", "where", "in", "scene", "a", "an", "of"};
  return words;
}

}  // namespace

Mlp Mlp::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t hidden,
                std::size_t out, std::mt19937_64& rng) {
  return {Linear::create(params, name + ".l1", in, hidden, rng),
          Linear::create(params, name + ".l2", hidden, out, rng)};
}

ad::Var Mlp::operator()(const BoundParameters& p, ad::Var x) const {
  return l2(p, ad::gelu(l1(p, x)));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    if (text.substr(i).starts_with(kPromptToken)) {
      out.emplace_back(kPromptToken);
      i += kPromptToken.size();
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Vocabulary::Vocabulary(std::span<const std::string> extra_words) {
  auto add = [&](std::string w) {
    if (lookup_.try_emplace(w, words_.size()).second) words_.push_back(std::move(w));
  };
  for (std::string_view s : {kUnkToken, kPcToken, kPromptToken, kSegToken, kObjToken}) add(std::string(s));
  for (const std::string& w : base_words()) add(w);
  for (const std::string& w : extra_words) add(w);
}

std::size_t Vocabulary::id(std::string_view word) const {
  auto it = lookup_.find(std::string(word));
  return it == lookup_.end() ? 0 : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return lookup_.contains(std::string(word));
}

std::vector<std::size_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  for (const std::string& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(std::span<const std::size_t> ids) const {
  std::string out;
  for (std::size_t id : ids) {
    if (!out.empty()) out += ' ';
    out += word(id);
  }
  return out;
}

InstructionSequence assemble_instruction(std::string_view templ, ad::Var visual_tokens,
                                         std::span<const ad::Var> prompt_tokens,
                                         const Vocabulary& vocab, const Matrix& token_embeddings) {
  if (token_embeddings.rows() != vocab.size()) {
    throw ShapeError("assemble_instruction: embedding table does not match the vocabulary");
  }
  const std::size_t d = token_embeddings.cols();
  if (visual_tokens.cols() != d) throw ShapeError("assemble_instruction: H_V width differs from d_lm");
  for (const ad::Var& h : prompt_tokens)
    if (h.cols() != d) throw ShapeError("assemble_instruction: H_P width differs from d_lm");

  const std::vector<std::size_t> ids = vocab.encode(templ);
  const std::size_t pcs = std::count(ids.begin(), ids.end(), vocab.pc_id());
  if (pcs != 1) {
    throw TemplateError("template must contain exactly one " + std::string(kPcToken) + ", found " +
                        std::to_string(pcs));
  }
  const std::size_t prompts = std::count(ids.begin(), ids.end(), vocab.prompt_id());
  if (prompts != prompt_tokens.size()) {
    throw TemplateError("template has " + std::to_string(prompts) + " prompt placeholders but " +
                        std::to_string(prompt_tokens.size()) + " prompts were given");
  }

  ad::Tape& tape = *visual_tokens.tape();
  InstructionSequence seq;
  std::vector<ad::Var> parts;
  std::vector<std::size_t> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    parts.push_back(tape.constant(gather_rows(token_embeddings, pending)));
    pending.clear();
  };
  std::size_t next_prompt = 0;
  for (std::size_t id : ids) {
    if (id == vocab.pc_id()) {
      flush();
      seq.pc_begin = seq.token_ids.size();
      seq.pc_count = visual_tokens.rows();
      parts.push_back(visual_tokens);
      seq.token_ids.insert(seq.token_ids.end(), visual_tokens.rows(), kSplicedRow);
    } else if (id == vocab.prompt_id()) {
      flush();
      const ad::Var& h = prompt_tokens[next_prompt++];
      seq.prompt_spans.emplace_back(seq.token_ids.size(), h.rows());
      parts.push_back(h);
      seq.token_ids.insert(seq.token_ids.end(), h.rows(), kSplicedRow);
    } else {
      pending.push_back(id);
      seq.token_ids.push_back(id);
    }
  }
  flush();
  seq.embeddings = parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
  return seq;
}

LmOutput StubLM::generate(const InstructionSequence& seq) const {
  const Vocabulary& v = *vocab_;
  const bool present = std::find(seq.token_ids.begin(), seq.token_ids.end(), v.obj_id()) !=
                       seq.token_ids.end();
  LmOutput out;
  out.text = present ? "sure , it is [SEG] ." : "sorry , i cannot find this object .";
  out.tokens = v.encode(out.text);

  ad::Tape& tape = *seq.embeddings.tape();
  std::vector<std::size_t> text_rows;
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq.token_ids[i] != kSplicedRow) text_rows.push_back(i);

  ad::Var context = ad::col_mean(ad::slice_rows(seq.embeddings, seq.pc_begin, seq.pc_count));
  if (!text_rows.empty()) {
    context = ad::add(context, ad::col_mean(ad::gather_rows(seq.embeddings, text_rows)));
  }
  if (!seq.prompt_spans.empty()) {
    std::vector<ad::Var> rows;
    for (const auto& [b, n] : seq.prompt_spans) rows.push_back(ad::slice_rows(seq.embeddings, b, n));
    context = ad::add(context, ad::col_mean(rows.size() == 1 ? rows.front() : ad::concat_rows(rows)));
  }
  out.hidden = ad::add_row(tape.constant(gather_rows(*embeddings_, out.tokens)), context);
  return out;
}

std::optional<ad::Var> extract_seg_query(ad::Var hidden, std::span<const std::size_t> tokens,
                                         std::size_t seg_id, const Mlp& w_s,
                                         const BoundParameters& p, bool use_seg_state) {
  if (hidden.rows() != tokens.size()) {
    throw ShapeError("extract_seg_query: hidden states and tokens are not aligned");
  }
  auto it = std::find(tokens.begin(), tokens.end(), seg_id);
  if (it == tokens.end()) return std::nullopt;
  const std::size_t t = static_cast<std::size_t>(it - tokens.begin());
  if (t == 0 && !use_seg_state) throw ProtocolError("[SEG] is the first output token");
  return w_s(p, ad::slice_rows(hidden, use_seg_state ? t : t - 1, 1));
}

ad::Var decode_logits(const Ost& ost, const BoundParameters& p, ad::Var superpoint_feats,
                      const Matrix& centroids, ad::Var seg_query) {
  const ExtraQuery q{seg_query, BiasPolicy::Zero, {0, 0, 0}};
  const OstVars out = ost.forward(p, superpoint_feats, centroids, std::span(&q, 1));
  ad::Var kernel = ad::slice_rows(out.mask_kernels, out.num_superpoints, 1);
  return apply_mask_head(kernel, superpoint_feats);
}

PointMask superpoint_mask_to_points(std::span<const std::uint8_t> sp_mask,
                                    const SuperpointPartition& part) {
  if (sp_mask.size() != part.size()) throw ShapeError("superpoint mask size differs from partition");
  PointMask mask(part.num_points());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = sp_mask[part.assignment[i]];
  return mask;
}

PointMask decode_mask(const Ost& ost, const ParameterSet& params, const Matrix& superpoint_feats,
                      const Matrix& centroids, const Matrix& seg_query,
                      const SuperpointPartition& part) {
  ad::Tape tape;
  const auto p = BoundParameters::frozen(params, tape);
  const Matrix logits =
      decode_logits(ost, p, tape.constant(superpoint_feats), centroids, tape.constant(seg_query))
          .value();
  return superpoint_mask_to_points(binarize_logits(logits.row(0)), part);
}

}  // namespace ost3d
