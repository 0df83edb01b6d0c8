#pragma once

namespace wenet {

// Reserved token ids, shared by the vocabulary and the decoder.
inline constexpr int kPadId = 0;
inline constexpr int kSosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

}  // namespace wenet
