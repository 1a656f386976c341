#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "posesdf/checkpoint.hpp"
#include "posesdf/geom.hpp"
#include "posesdf/linear.hpp"
#include "posesdf/tape.hpp"
#include "posesdf/tensor.hpp"

namespace posesdf {

// Signed-distance decoder over 256 image features + 6 point features
// [x, x_canonical]: 262 -> 512 relu -> 250, skip-concat with the 262 input
// (250 + 262 = 512) -> 512 relu -> 512 relu -> 1, then tanh scaled to
// +-output_scale. Negative inside.
struct SdfDecoder {
  Linear l1, l2, l3, l4, l5;
  double output_scale = 1.0;
};

// Deterministic uniform fan-in initialization from the seed.
SdfDecoder build_decoder(uint64_t seed, double output_scale);

struct SdfDecoderNodes {
  LinearNodes l1, l2, l3, l4, l5;
  double output_scale = 1.0;
};

SdfDecoderNodes decoder_params(ad::Tape& tape, const SdfDecoder& dec);
SdfDecoderNodes decoder_constants(ad::Tape& tape, const SdfDecoder& dec);

// Batched decode on the tape. img256 is a [256] node; x3 and xc3 are [3,p]
// nodes (same p). Returns the [1,p] node of signed distances.
int32_t decode_on_tape(ad::Tape& tape, const SdfDecoderNodes& dec, int32_t img256, int32_t x3,
                       int32_t xc3);

// Pure convenience wrappers building a throwaway tape of constants.
double decode(const SdfDecoder& dec, const Tensor& img256, const Vec3& x, const Vec3& xc);
std::vector<double> decode_batch(const SdfDecoder& dec, const Tensor& img256,
                                 const std::vector<Vec3>& xs, const std::vector<Vec3>& xcs);

// Checkpoint layout: params <prefix>.l{1..5}.{w,b} plus <prefix>.out_scale.
void save_decoder(Checkpoint& ckpt, const std::string& prefix, const SdfDecoder& dec);
SdfDecoder load_decoder(const Checkpoint& ckpt, const std::string& prefix);

}  // namespace posesdf
