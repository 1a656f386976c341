#include "posesdf/sdfnet.hpp"

#include <cmath>

#include "posesdf/errors.hpp"
#include "posesdf/geom.hpp"
#include "posesdf/rng.hpp"

namespace posesdf {

SdfDecoder build_decoder(uint64_t seed, double output_scale) {
  require(output_scale > 0.0, "decoder: output_scale must be positive");
  Rng rng(seed);
  SdfDecoder d;
  d.l1 = make_linear(512, 262, rng);
  d.l2 = make_linear(250, 512, rng);
  d.l3 = make_linear(512, 512, rng);
  d.l4 = make_linear(512, 512, rng);
  d.l5 = make_linear(1, 512, rng);
  d.output_scale = output_scale;
  return d;
}

SdfDecoderNodes decoder_params(ad::Tape& tape, const SdfDecoder& dec) {
  return {linear_params(tape, dec.l1), linear_params(tape, dec.l2), linear_params(tape, dec.l3),
          linear_params(tape, dec.l4), linear_params(tape, dec.l5), dec.output_scale};
}

SdfDecoderNodes decoder_constants(ad::Tape& tape, const SdfDecoder& dec) {
  return {linear_constants(tape, dec.l1), linear_constants(tape, dec.l2),
          linear_constants(tape, dec.l3), linear_constants(tape, dec.l4),
          linear_constants(tape, dec.l5), dec.output_scale};
}

int32_t decode_on_tape(ad::Tape& tape, const SdfDecoderNodes& dec, int32_t img256, int32_t x3,
                       int32_t xc3) {
  const Tensor& xv = tape.value(x3);
  require(tape.value(img256).numel() == 256, "decode: image features must be [256]");
  require(xv.rank() == 2 && xv.rows() == 3, "decode: x must be [3,p]");
  require(tape.value(xc3).rank() == 2 && tape.value(xc3).rows() == 3 &&
              tape.value(xc3).cols() == xv.cols(),
          "decode: x_canonical must be [3,p] matching x");
  int64_t p = xv.cols();
  int32_t input = tape.concat_rows(tape.concat_rows(tape.replicate_cols(img256, p), x3), xc3);
  int32_t h1 = tape.relu(linear_apply(tape, dec.l1, input));
  int32_t h2 = tape.relu(linear_apply(tape, dec.l2, h1));
  int32_t skip = tape.concat_rows(h2, input);
  int32_t h3 = tape.relu(linear_apply(tape, dec.l3, skip));
  int32_t h4 = tape.relu(linear_apply(tape, dec.l4, h3));
  int32_t out = linear_apply(tape, dec.l5, h4);
  return tape.scale(tape.tanh_(out), dec.output_scale);
}

double decode(const SdfDecoder& dec, const Tensor& img256, const Vec3& x, const Vec3& xc) {
  return decode_batch(dec, img256, {x}, {xc})[0];
}

std::vector<double> decode_batch(const SdfDecoder& dec, const Tensor& img256,
                                 const std::vector<Vec3>& xs, const std::vector<Vec3>& xcs) {
  require(xs.size() == xcs.size() && !xs.empty(), "decode_batch: need matching nonempty batches");
  std::vector<double> out;
  out.reserve(xs.size());
  // Chunk so tape buffers stay small on large grids.
  const size_t kChunk = 4096;
  for (size_t base = 0; base < xs.size(); base += kChunk) {
    size_t m = std::min(kChunk, xs.size() - base);
    Tensor x = Tensor::zeros({3, static_cast<int64_t>(m)});
    Tensor xc = Tensor::zeros({3, static_cast<int64_t>(m)});
    for (size_t j = 0; j < m; ++j) {
      for (int k = 0; k < 3; ++k) {
        x.at(k, static_cast<int64_t>(j)) = xs[base + j][k];
        xc.at(k, static_cast<int64_t>(j)) = xcs[base + j][k];
      }
    }
    ad::Tape t;
    auto nodes = decoder_constants(t, dec);
    auto node = decode_on_tape(t, nodes, t.constant(img256), t.constant(x), t.constant(xc));
    const Tensor& v = t.value(node);
    for (size_t j = 0; j < m; ++j) out.push_back(v.at(0, static_cast<int64_t>(j)));
  }
  return out;
}

void save_decoder(Checkpoint& ckpt, const std::string& prefix, const SdfDecoder& dec) {
  auto put = [&](const std::string& name, const Tensor& t) {
    ckpt.params.emplace_back(prefix + name, t);
  };
  put(".l1.w", dec.l1.w);
  put(".l1.b", dec.l1.b);
  put(".l2.w", dec.l2.w);
  put(".l2.b", dec.l2.b);
  put(".l3.w", dec.l3.w);
  put(".l3.b", dec.l3.b);
  put(".l4.w", dec.l4.w);
  put(".l4.b", dec.l4.b);
  put(".l5.w", dec.l5.w);
  put(".l5.b", dec.l5.b);
  put(".out_scale", Tensor::scalar(dec.output_scale));
}

SdfDecoder load_decoder(const Checkpoint& ckpt, const std::string& prefix) {
  auto get = [&](const std::string& name) -> const Tensor& {
    const Tensor* t = ckpt.find_param(prefix + name);
    if (!t) throw DataError("checkpoint: missing parameter " + prefix + name);
    return *t;
  };
  auto expect = [&](const Tensor& t, int64_t r, int64_t c, const std::string& name) {
    if (t.rank() != 2 || t.rows() != r || t.cols() != c)
      throw DataError("checkpoint: parameter " + prefix + name + " has shape " + t.shape_str() +
                      ", expected [" + std::to_string(r) + "," + std::to_string(c) + "]");
  };
  SdfDecoder d;
  d.l1 = {get(".l1.w"), get(".l1.b")};
  d.l2 = {get(".l2.w"), get(".l2.b")};
  d.l3 = {get(".l3.w"), get(".l3.b")};
  d.l4 = {get(".l4.w"), get(".l4.b")};
  d.l5 = {get(".l5.w"), get(".l5.b")};
  expect(d.l1.w, 512, 262, ".l1.w");
  expect(d.l2.w, 250, 512, ".l2.w");
  expect(d.l3.w, 512, 512, ".l3.w");
  expect(d.l4.w, 512, 512, ".l4.w");
  expect(d.l5.w, 1, 512, ".l5.w");
  const Tensor& s = get(".out_scale");
  if (s.numel() != 1 || !(s.at(0) > 0.0))
    throw DataError("checkpoint: parameter " + prefix + ".out_scale must be a positive scalar");
  d.output_scale = s.at(0);
  return d;
}

}  // namespace posesdf
