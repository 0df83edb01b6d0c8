#include "wenet/model.hpp"

#include <array>

#include "wenet/error.hpp"
#include "wenet/rng.hpp"
#include "wenet/token_ids.hpp"

namespace wenet {

namespace {

Tensor init_weight(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t = zeros({rows, cols});
  for (double& v : t.values) v = rng.uniform(-0.08, 0.08);
  return t;
}

GruParams init_gru(Rng& rng, std::size_t in, std::size_t hidden) {
  GruParams p;
  p.w_update = init_weight(rng, in, hidden);
  p.u_update = init_weight(rng, hidden, hidden);
  p.b_update = zeros({1, hidden});
  p.w_reset = init_weight(rng, in, hidden);
  p.u_reset = init_weight(rng, hidden, hidden);
  p.b_reset = zeros({1, hidden});
  p.w_cand = init_weight(rng, in, hidden);
  p.u_cand = init_weight(rng, hidden, hidden);
  p.b_cand = zeros({1, hidden});
  return p;
}

AttentionParams init_attention(Rng& rng, std::size_t dec_hidden, std::size_t state, std::size_t attn) {
  AttentionParams p;
  p.query_proj = init_weight(rng, dec_hidden, attn);
  p.key_proj = init_weight(rng, state, attn);
  p.bias = zeros({1, attn});
  p.score_vec = init_weight(rng, attn, 1);
  return p;
}

RevisionGateParams init_gate(Rng& rng, std::size_t ctx) {
  RevisionGateParams p;
  p.keep_draft = init_weight(rng, ctx, ctx);
  p.keep_title = init_weight(rng, ctx, ctx);
  p.keep_bias = zeros({1, ctx});
  p.update_draft = init_weight(rng, ctx, ctx);
  p.update_title = init_weight(rng, ctx, ctx);
  p.update_bias = zeros({1, ctx});
  p.cand_draft = init_weight(rng, ctx, ctx);
  p.cand_title = init_weight(rng, ctx, ctx);
  p.cand_bias = zeros({1, ctx});
  return p;
}

void visit_gru(const std::string& prefix, GruParams& p,
               const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".w_update", p.w_update);
  fn(prefix + ".u_update", p.u_update);
  fn(prefix + ".b_update", p.b_update);
  fn(prefix + ".w_reset", p.w_reset);
  fn(prefix + ".u_reset", p.u_reset);
  fn(prefix + ".b_reset", p.b_reset);
  fn(prefix + ".w_cand", p.w_cand);
  fn(prefix + ".u_cand", p.u_cand);
  fn(prefix + ".b_cand", p.b_cand);
}

void visit_attention(const std::string& prefix, AttentionParams& p,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".query_proj", p.query_proj);
  fn(prefix + ".key_proj", p.key_proj);
  fn(prefix + ".bias", p.bias);
  fn(prefix + ".score_vec", p.score_vec);
}

}  // namespace

ModelParams ModelParams::init(const ModelDims& dims, std::uint64_t seed) {
  if (dims.vocab < 5) throw ArgumentError("model: vocab size must be at least 5");
  if (dims.embedding == 0 || dims.enc_hidden == 0) throw ArgumentError("model: dimensions must be positive");

  Rng rng(seed);
  ModelParams m;
  m.dims = dims;
  m.embedding = init_weight(rng, dims.vocab, dims.embedding);
  m.title_fwd = init_gru(rng, dims.embedding, dims.enc_hidden);
  m.title_bwd = init_gru(rng, dims.embedding, dims.enc_hidden);
  m.draft_fwd = init_gru(rng, dims.embedding, dims.enc_hidden);
  m.draft_bwd = init_gru(rng, dims.embedding, dims.enc_hidden);
  m.decoder = init_gru(rng, dims.embedding + dims.context(), dims.dec_hidden());
  m.write_attn = init_attention(rng, dims.dec_hidden(), dims.state(), dims.attn());
  m.edit_title_attn = init_attention(rng, dims.dec_hidden(), dims.state(), dims.attn());
  m.edit_draft_attn = init_attention(rng, dims.dec_hidden(), dims.state(), dims.attn());
  m.gate = init_gate(rng, dims.context());
  m.out_proj = init_weight(rng, dims.embedding + dims.dec_hidden() + dims.context(), dims.vocab);
  m.out_bias = zeros({1, dims.vocab});
  return m;
}

void ModelParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("embedding", embedding);
  visit_gru("title_enc.fwd", title_fwd, fn);
  visit_gru("title_enc.bwd", title_bwd, fn);
  visit_gru("draft_enc.fwd", draft_fwd, fn);
  visit_gru("draft_enc.bwd", draft_bwd, fn);
  visit_gru("decoder", decoder, fn);
  visit_attention("write_attn", write_attn, fn);
  visit_attention("edit_title_attn", edit_title_attn, fn);
  visit_attention("edit_draft_attn", edit_draft_attn, fn);
  fn("gate.keep_draft", gate.keep_draft);
  fn("gate.keep_title", gate.keep_title);
  fn("gate.keep_bias", gate.keep_bias);
  fn("gate.update_draft", gate.update_draft);
  fn("gate.update_title", gate.update_title);
  fn("gate.update_bias", gate.update_bias);
  fn("gate.cand_draft", gate.cand_draft);
  fn("gate.cand_title", gate.cand_title);
  fn("gate.cand_bias", gate.cand_bias);
  fn("out_proj", out_proj);
  fn("out_bias", out_bias);
}

void ModelParams::visit(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->visit(
      [&fn](const std::string& name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
}

ModelParams lift(Tape& tape, const ModelParams& params) {
  ModelParams taped = params;
  taped.visit([&tape](const std::string&, Tensor& t) {
    // Tensors already registered on this tape keep their node, so callers
    // that pre-track parameters read gradients from the same leaves.
    if (t.node < 0 || t.tape_id != tape.id()) t = tape.track(t);
  });
  return taped;
}

Tensor gru_cell_step(Tape& tape, const Tensor& x, const Tensor& h_prev, const GruParams& p) {
  const Tensor z = tape.sigmoid(
      tape.add(tape.add(tape.matmul(x, p.w_update), tape.matmul(h_prev, p.u_update)), p.b_update));
  const Tensor r = tape.sigmoid(
      tape.add(tape.add(tape.matmul(x, p.w_reset), tape.matmul(h_prev, p.u_reset)), p.b_reset));
  const Tensor cand = tape.tanh(
      tape.add(tape.add(tape.matmul(x, p.w_cand), tape.matmul(tape.mul(r, h_prev), p.u_cand)), p.b_cand));
  return tape.add(tape.mul(z, h_prev), tape.mul(tape.sub_from(1.0, z), cand));
}

Encoded bigru_encode(Tape& tape, std::span<const int> ids, const Tensor& embedding, const GruParams& fwd,
                     const GruParams& bwd) {
  if (ids.empty()) throw ArgumentError("bigru_encode: empty token sequence");
  const std::size_t len = ids.size();
  const std::size_t hidden = fwd.u_update.rows();

  std::vector<Tensor> embs;
  embs.reserve(len);
  for (std::size_t k = 0; k < len; ++k) {
    const std::array<int, 1> one = {ids[k]};
    embs.push_back(tape.lookup(embedding, one));
  }

  std::vector<Tensor> fwd_states(len), bwd_states(len);
  Tensor h = zeros({1, hidden});
  for (std::size_t k = 0; k < len; ++k) {
    h = gru_cell_step(tape, embs[k], h, fwd);
    fwd_states[k] = h;
  }
  h = zeros({1, hidden});
  for (std::size_t k = len; k-- > 0;) {
    h = gru_cell_step(tape, embs[k], h, bwd);
    bwd_states[k] = h;
  }

  std::vector<Tensor> rows;
  rows.reserve(len);
  for (std::size_t k = 0; k < len; ++k) {
    const std::array<Tensor, 2> parts = {fwd_states[k], bwd_states[k]};
    rows.push_back(tape.concat(parts, 1));
  }

  Encoded enc;
  enc.final_state = rows.back();
  enc.states = len == 1 ? rows[0] : tape.concat(rows, 0);
  return enc;
}

Attended attend_with_keys(Tape& tape, const Tensor& dec_state, const Tensor& states, const Tensor& keys,
                          const AttentionParams& p) {
  const Tensor query = tape.add(tape.matmul(dec_state, p.query_proj), p.bias);  // [1 x attn]
  const Tensor scored = tape.tanh(tape.add(keys, query));                       // row-broadcast
  const Tensor scores = tape.matmul(scored, p.score_vec);                       // [len x 1]
  Attended out;
  out.weights = tape.softmax(scores);
  const Tensor wrow = tape.reshape(out.weights, {1, states.rows()});
  out.context = tape.matmul(wrow, states);
  return out;
}

Attended attend(Tape& tape, const Tensor& dec_state, const Tensor& states, const AttentionParams& p) {
  if (states.numel() == 0 || states.rank() != 2) {
    throw ArgumentError("attend: needs a non-empty [len x state] matrix");
  }
  return attend_with_keys(tape, dec_state, states, tape.matmul(states, p.key_proj), p);
}

Tensor revision_gate(Tape& tape, const Tensor& draft_ctx, const Tensor& title_ctx, const RevisionGateParams& p) {
  const Tensor keep = tape.sigmoid(tape.add(
      tape.add(tape.matmul(draft_ctx, p.keep_draft), tape.matmul(title_ctx, p.keep_title)), p.keep_bias));
  const Tensor adjust = tape.sigmoid(tape.add(
      tape.add(tape.matmul(draft_ctx, p.update_draft), tape.matmul(title_ctx, p.update_title)), p.update_bias));
  const Tensor cand = tape.tanh(tape.add(
      tape.matmul(draft_ctx, p.cand_draft),
      tape.mul(adjust, tape.add(tape.matmul(title_ctx, p.cand_title), p.cand_bias))));
  return tape.add(tape.mul(keep, draft_ctx), tape.mul(tape.sub_from(1.0, keep), cand));
}

DecoderOut decoder_step(Tape& tape, int prev_id, const Tensor& dec_state, const Tensor& ctx,
                        const ModelParams& params) {
  const std::array<int, 1> one = {prev_id};
  const Tensor emb = tape.lookup(params.embedding, one);
  const std::array<Tensor, 2> in_parts = {emb, ctx};
  const Tensor gru_in = tape.concat(in_parts, 1);
  DecoderOut out;
  out.state = gru_cell_step(tape, gru_in, dec_state, params.decoder);
  const std::array<Tensor, 3> feat_parts = {emb, out.state, ctx};
  const Tensor feat = tape.concat(feat_parts, 1);
  out.logits = tape.add(tape.matmul(feat, params.out_proj), params.out_bias);
  return out;
}

std::size_t argmax_token(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

Draft write_draft(std::span<const int> title_ids, const ModelParams& params, std::size_t max_len) {
  if (title_ids.empty()) throw ArgumentError("write_draft: empty title");
  if (max_len < 1) throw ArgumentError("write_draft: max_len must be at least 1");

  Tape tape;
  const ModelParams taped = lift(tape, params);
  const Encoded title = bigru_encode(tape, title_ids, taped.embedding, taped.title_fwd, taped.title_bwd);
  const Tensor title_keys = tape.matmul(title.states, taped.write_attn.key_proj);

  Draft draft;
  draft.iteration = 0;
  Tensor state = title.final_state;
  int prev = kSosId;
  while (draft.tokens.size() < max_len) {
    const Attended att = attend_with_keys(tape, state, title.states, title_keys, taped.write_attn);
    const DecoderOut step = decoder_step(tape, prev, state, att.context, taped);
    state = step.state;
    const int tok = static_cast<int>(argmax_token(step.logits.values));
    draft.tokens.push_back(tok);
    draft.title_attention.push_back(att.weights.values);
    prev = tok;
    if (tok == kEosId) break;
  }
  return draft;
}

Draft edit_draft(std::span<const int> title_ids, const Draft& prev, const ModelParams& params,
                 std::size_t max_len) {
  if (prev.tokens.empty()) throw ArgumentError("edit_draft: previous draft is empty");
  if (title_ids.empty()) throw ArgumentError("edit_draft: empty title");
  if (max_len < 1) throw ArgumentError("edit_draft: max_len must be at least 1");

  Tape tape;
  const ModelParams taped = lift(tape, params);
  const Encoded title = bigru_encode(tape, title_ids, taped.embedding, taped.title_fwd, taped.title_bwd);
  const Encoded prev_enc = bigru_encode(tape, prev.tokens, taped.embedding, taped.draft_fwd, taped.draft_bwd);
  const Tensor title_keys = tape.matmul(title.states, taped.edit_title_attn.key_proj);
  const Tensor draft_keys = tape.matmul(prev_enc.states, taped.edit_draft_attn.key_proj);

  Draft draft;
  draft.iteration = prev.iteration + 1;
  Tensor state = title.final_state;
  int prev_tok = kSosId;
  while (draft.tokens.size() < max_len) {
    const Attended draft_att = attend_with_keys(tape, state, prev_enc.states, draft_keys, taped.edit_draft_attn);
    const Attended title_att = attend_with_keys(tape, state, title.states, title_keys, taped.edit_title_attn);
    const Tensor ctx = revision_gate(tape, draft_att.context, title_att.context, taped.gate);
    const DecoderOut step = decoder_step(tape, prev_tok, state, ctx, taped);
    state = step.state;
    const int tok = static_cast<int>(argmax_token(step.logits.values));
    draft.tokens.push_back(tok);
    draft.title_attention.push_back(title_att.weights.values);
    draft.draft_attention.push_back(draft_att.weights.values);
    prev_tok = tok;
    if (tok == kEosId) break;
  }
  return draft;
}

std::vector<Draft> generate(std::span<const int> title_ids, const ModelParams& params, std::size_t iterations,
                            std::size_t max_len) {
  std::vector<Draft> drafts;
  drafts.reserve(iterations + 1);
  drafts.push_back(write_draft(title_ids, params, max_len));
  for (std::size_t i = 0; i < iterations; ++i) {
    drafts.push_back(edit_draft(title_ids, drafts.back(), params, max_len));
  }
  return drafts;
}

std::vector<int> decoder_inputs(std::span<const int> gold_ids) {
  std::vector<int> inputs;
  inputs.reserve(gold_ids.size() + 1);
  inputs.push_back(kSosId);
  inputs.insert(inputs.end(), gold_ids.begin(), gold_ids.end());
  return inputs;
}

std::vector<int> decoder_targets(std::span<const int> gold_ids) {
  std::vector<int> targets(gold_ids.begin(), gold_ids.end());
  targets.push_back(kEosId);
  return targets;
}

namespace {

// Teacher-forced decoder sweep shared by the writing and editing passes.
// ctx_fn supplies the per-step context from the current decoder state; the
// output projection runs once over all steps.
Tensor teacher_pass(Tape& tape, const ModelParams& taped, const Encoded& title,
                    std::span<const int> inputs,
                    const std::function<Tensor(const Tensor& state)>& ctx_fn) {
  Tensor state = title.final_state;
  std::vector<Tensor> feat_rows;
  feat_rows.reserve(inputs.size());
  for (int prev : inputs) {
    const Tensor ctx = ctx_fn(state);
    const std::array<int, 1> one = {prev};
    const Tensor emb = tape.lookup(taped.embedding, one);
    const std::array<Tensor, 2> in_parts = {emb, ctx};
    const Tensor next = gru_cell_step(tape, tape.concat(in_parts, 1), state, taped.decoder);
    const std::array<Tensor, 3> feat_parts = {emb, next, ctx};
    feat_rows.push_back(tape.concat(feat_parts, 1));
    state = next;
  }
  const Tensor feats = feat_rows.size() == 1 ? feat_rows[0] : tape.concat(feat_rows, 0);
  return tape.add(tape.matmul(feats, taped.out_proj), taped.out_bias);
}

}  // namespace

TeacherForced forward_teacher_forced(Tape& tape, std::span<const int> title_ids, std::span<const int> gold_ids,
                                     const ModelParams& params, std::size_t iterations, std::size_t max_len) {
  if (gold_ids.empty()) throw ArgumentError("forward_teacher_forced: empty gold sequence");

  TeacherForced out;
  out.taped = lift(tape, params);
  const Encoded title = bigru_encode(tape, title_ids, out.taped.embedding, out.taped.title_fwd,
                                     out.taped.title_bwd);
  const std::vector<int> inputs = decoder_inputs(gold_ids);

  // Writing pass.
  {
    const Tensor keys = tape.matmul(title.states, out.taped.write_attn.key_proj);
    out.logits.push_back(teacher_pass(tape, out.taped, title, inputs, [&](const Tensor& state) {
      return attend_with_keys(tape, state, title.states, keys, out.taped.write_attn).context;
    }));
  }

  if (iterations == 0) return out;

  // Greedy drafts under the current parameters. They enter the editing
  // passes as plain token ids, so no gradient reaches the passes that
  // produced them.
  out.drafts = generate(title_ids, params, iterations - 1, max_len);

  const Tensor title_keys = tape.matmul(title.states, out.taped.edit_title_attn.key_proj);
  for (std::size_t i = 1; i <= iterations; ++i) {
    const Encoded draft_enc = bigru_encode(tape, out.drafts[i - 1].tokens, out.taped.embedding,
                                           out.taped.draft_fwd, out.taped.draft_bwd);
    const Tensor draft_keys = tape.matmul(draft_enc.states, out.taped.edit_draft_attn.key_proj);
    out.logits.push_back(teacher_pass(tape, out.taped, title, inputs, [&](const Tensor& state) {
      const Attended draft_att = attend_with_keys(tape, state, draft_enc.states, draft_keys,
                                                  out.taped.edit_draft_attn);
      const Attended title_att = attend_with_keys(tape, state, title.states, title_keys,
                                                  out.taped.edit_title_attn);
      return revision_gate(tape, draft_att.context, title_att.context, out.taped.gate);
    }));
  }
  return out;
}

}  // namespace wenet
