#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dime/types.hpp"

namespace dime {

using Embedding = Vector;
using BitVector = std::vector<bool>;

/// Bit-packed binary code. Bit i lives in bytes[i / 8] under mask 1 << (i % 8);
/// bits at positions >= dim in the last byte are zero.
struct PackedCode {
    std::vector<std::uint8_t> bytes;
    std::uint32_t dim = 0;

    bool operator==(const PackedCode&) const = default;
};

constexpr std::size_t packed_stride(std::size_t dim) noexcept { return (dim + 7) / 8; }

constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = kFnvOffsetBasis;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

/// Lowercased tokens split on runs of non-alphanumeric ASCII. Bytes >= 0x80
/// are kept inside tokens so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

/// Feature-hashed bag of words: slot fnv1a64(token) % dim counts occurrences,
/// then the vector is L2-normalized. Text without tokens maps to zeros.
Embedding text_hash_embed(std::string_view text, std::uint32_t dim);

/// bit_i = e_i > 0.
BitVector binarize(std::span<const float> e);

PackedCode pack_bits(const BitVector& bits);
/// Throws MalformedCode when padding bits are set or the byte count is off.
BitVector unpack_bits(const PackedCode& code);

/// binarize + pack in one pass.
PackedCode binarize_packed(std::span<const float> e);

/// Throws MalformedCode unless bytes.size() == packed_stride(dim) and padding is clear.
void check_packed(std::span<const std::uint8_t> bytes, std::uint32_t dim);

/// Runs a builtin model (identity or text hash) on a payload.
/// Throws PayloadRejected for payloads the model does not accept.
Embedding embed_builtin(const ModelDescriptor& model, const ItemPayload& payload);

/// Checks that a payload may be handed to a model: kind accepted and, for
/// vectors, matching input_dim. Throws PayloadRejected.
void check_payload(const ModelDescriptor& model, const ItemPayload& payload);

}  // namespace dime
