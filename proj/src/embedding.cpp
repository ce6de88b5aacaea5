#include "dime/embedding.hpp"

#include <cmath>

#include "dime/error.hpp"

namespace dime {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (alnum) {
            current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Embedding text_hash_embed(std::string_view text, std::uint32_t dim) {
    if (dim == 0) throw Error(ErrorCode::InvalidRequest, "text hash dimension must be >= 1");
    std::vector<double> counts(dim, 0.0);
    bool any = false;
    for (const auto& tok : tokenize(text)) {
        counts[fnv1a64(tok) % dim] += 1.0;
        any = true;
    }
    Embedding out(dim, 0.0f);
    if (!any) return out;
    double norm2 = 0.0;
    for (double c : counts) norm2 += c * c;
    double inv = 1.0 / std::sqrt(norm2);
    for (std::uint32_t i = 0; i < dim; ++i) out[i] = static_cast<float>(counts[i] * inv);
    return out;
}

BitVector binarize(std::span<const float> e) {
    BitVector bits(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) bits[i] = e[i] > 0.0f;
    return bits;
}

PackedCode pack_bits(const BitVector& bits) {
    PackedCode code;
    code.dim = static_cast<std::uint32_t>(bits.size());
    code.bytes.assign(packed_stride(bits.size()), 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) code.bytes[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
    }
    return code;
}

void check_packed(std::span<const std::uint8_t> bytes, std::uint32_t dim) {
    if (bytes.size() != packed_stride(dim)) {
        throw Error(ErrorCode::MalformedCode, "expected " + std::to_string(packed_stride(dim)) + " bytes for dim " +
                                                  std::to_string(dim) + ", got " + std::to_string(bytes.size()));
    }
    if (dim % 8 != 0) {
        auto pad_mask = static_cast<std::uint8_t>(0xFFu << (dim % 8));
        if (bytes.back() & pad_mask) throw Error(ErrorCode::MalformedCode, "nonzero padding bits");
    }
}

BitVector unpack_bits(const PackedCode& code) {
    check_packed(code.bytes, code.dim);
    BitVector bits(code.dim);
    for (std::size_t i = 0; i < code.dim; ++i) bits[i] = (code.bytes[i >> 3] >> (i & 7)) & 1u;
    return bits;
}

PackedCode binarize_packed(std::span<const float> e) {
    PackedCode code;
    code.dim = static_cast<std::uint32_t>(e.size());
    code.bytes.assign(packed_stride(e.size()), 0);
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (e[i] > 0.0f) code.bytes[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
    }
    return code;
}

void check_payload(const ModelDescriptor& model, const ItemPayload& payload) {
    if (!model.accepts_kind(payload.kind())) {
        throw Error(ErrorCode::PayloadRejected, "model '" + model.name + "' does not accept " +
                                                    std::string(to_string(payload.kind())) + " payloads");
    }
    if (const Vector* v = payload.as_vector()) {
        if (!model.input_dim || v->size() != *model.input_dim) {
            throw Error(ErrorCode::PayloadRejected, "vector length " + std::to_string(v->size()) +
                                                        " does not match model input_dim " +
                                                        std::to_string(model.input_dim.value_or(0)));
        }
        for (float x : *v) {
            if (!std::isfinite(x)) throw Error(ErrorCode::PayloadRejected, "vector payload is not finite");
        }
    }
}

Embedding embed_builtin(const ModelDescriptor& model, const ItemPayload& payload) {
    check_payload(model, payload);
    switch (model.kind) {
        case ModelKind::BuiltinIdentity:
            return *payload.as_vector();
        case ModelKind::BuiltinTextHash:
            return text_hash_embed(payload.as_text()->value, model.output_dim);
        default:
            throw Error(ErrorCode::InvalidRequest, "model '" + model.name + "' is not a builtin model");
    }
}

}  // namespace dime
