#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wenet/tensor.hpp"

namespace wenet {

// One GRU cell's weights. w_* act on the input, u_* on the previous hidden
// state; rows are input coordinates, columns hidden coordinates.
struct GruParams {
  Tensor w_update, u_update, b_update;
  Tensor w_reset, u_reset, b_reset;
  Tensor w_cand, u_cand, b_cand;
};

// Additive attention scorer: score_k = v . tanh(s W_q + h_k W_k + b).
struct AttentionParams {
  Tensor query_proj;  // [dec_hidden x attn]
  Tensor key_proj;    // [state x attn]
  Tensor bias;        // [1 x attn]
  Tensor score_vec;   // [attn x 1]
};

// Blends the draft context c and title context t into the editing context:
//   keep   = sigmoid(c K_c + t K_t + k_b)
//   adjust = sigmoid(c U_c + t U_t + u_b)
//   cand   = tanh(c C_c + adjust * (t C_t + c_b))
//   out    = keep * c + (1 - keep) * cand
struct RevisionGateParams {
  Tensor keep_draft, keep_title, keep_bias;
  Tensor update_draft, update_title, update_bias;
  Tensor cand_draft, cand_title, cand_bias;
};

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t embedding = 0;
  std::size_t enc_hidden = 0;  // per direction

  std::size_t state() const { return 2 * enc_hidden; }      // bi-encoder output
  std::size_t dec_hidden() const { return 2 * enc_hidden; }
  std::size_t attn() const { return dec_hidden(); }
  std::size_t context() const { return state(); }
};

// All learned parameters. There is exactly one decoder GRU; the writing and
// editing passes share it, along with the embedding table and output
// projection.
struct ModelParams {
  ModelDims dims;
  Tensor embedding;  // [vocab x embedding]
  GruParams title_fwd, title_bwd;
  GruParams draft_fwd, draft_bwd;
  GruParams decoder;
  AttentionParams write_attn;       // writing pass, over title states
  AttentionParams edit_title_attn;  // editing pass, over title states
  AttentionParams edit_draft_attn;  // editing pass, over draft states
  RevisionGateParams gate;
  Tensor out_proj;  // [(embedding + dec_hidden + context) x vocab]
  Tensor out_bias;  // [1 x vocab]

  // Uniform(-0.08, 0.08) weights, zero biases, from a pinned seeded stream.
  static ModelParams init(const ModelDims& dims, std::uint64_t seed);

  // Enumerates every named parameter in a fixed order shared by the
  // optimizer, checkpoints, and gradient plumbing.
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

// Parameters re-registered as leaves of a tape so gradients can be read back.
ModelParams lift(Tape& tape, const ModelParams& params);

// h' = z*h_prev + (1-z)*cand, with update z, reset r inside the candidate.
Tensor gru_cell_step(Tape& tape, const Tensor& x, const Tensor& h_prev, const GruParams& p);

struct Encoded {
  Tensor states;       // [len x 2*enc_hidden], row k = [fwd after 1..k ; bwd after len..k]
  Tensor final_state;  // [1 x 2*enc_hidden], the last row
};
Encoded bigru_encode(Tape& tape, std::span<const int> ids, const Tensor& embedding, const GruParams& fwd,
                     const GruParams& bwd);

struct Attended {
  Tensor context;  // [1 x state]
  Tensor weights;  // [len x 1], sums to 1
};
Attended attend(Tape& tape, const Tensor& dec_state, const Tensor& states, const AttentionParams& p);
// Same scorer with states * key_proj precomputed (hot path for long decodes).
Attended attend_with_keys(Tape& tape, const Tensor& dec_state, const Tensor& states, const Tensor& keys,
                          const AttentionParams& p);

Tensor revision_gate(Tape& tape, const Tensor& draft_ctx, const Tensor& title_ctx, const RevisionGateParams& p);

struct DecoderOut {
  Tensor state;   // [1 x dec_hidden]
  Tensor logits;  // [1 x vocab]
};
// One decode step: GRU over [embedding(prev); ctx], then the output
// projection over [embedding(prev); new state; ctx].
DecoderOut decoder_step(Tape& tape, int prev_id, const Tensor& dec_state, const Tensor& ctx,
                        const ModelParams& params);

// One generated draft plus its attention trace.
struct Draft {
  int iteration = 0;
  std::vector<int> tokens;  // ends with EOS or at max_len
  std::vector<std::vector<double>> title_attention;
  std::vector<std::vector<double>> draft_attention;  // editing passes only
};

// Greedy argmax over logits; ties break toward the lowest id.
std::size_t argmax_token(std::span<const double> logits);

Draft write_draft(std::span<const int> title_ids, const ModelParams& params, std::size_t max_len);
Draft edit_draft(std::span<const int> title_ids, const Draft& prev, const ModelParams& params, std::size_t max_len);

// write_draft followed by `iterations` edit_draft passes.
std::vector<Draft> generate(std::span<const int> title_ids, const ModelParams& params, std::size_t iterations,
                            std::size_t max_len);

struct TeacherForced {
  ModelParams taped;           // leaf-tracked parameters for gradient lookup
  std::vector<Tensor> logits;  // one [T x vocab] block per draft 0..d
  std::vector<Draft> drafts;   // greedy drafts 0..d-1 fed to the editing passes
};

// Teacher-forced logits for drafts 0..d. Editing pass i encodes the greedy
// decode of pass i-1 under the current parameters; no gradient crosses that
// token boundary.
TeacherForced forward_teacher_forced(Tape& tape, std::span<const int> title_ids, std::span<const int> gold_ids,
                                     const ModelParams& params, std::size_t iterations, std::size_t max_len);

// Teacher-forcing target/input layout: inputs = SOS + gold, targets = gold + EOS.
std::vector<int> decoder_inputs(std::span<const int> gold_ids);
std::vector<int> decoder_targets(std::span<const int> gold_ids);

}  // namespace wenet
