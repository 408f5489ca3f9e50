#include "evsal/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evsal/error.hpp"

namespace evsal {

using ops::NormMode;

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (height == 0 || width == 0) bad("input size must be positive");
  if (bins == 0) bad("bins must be at least 1");
  if (fusion_depth == 0) bad("fusion depth must be positive");
  if (mlp_ratio == 0) bad("mlp ratio must be positive");
  if (!(leaky_slope > 0 && leaky_slope < 1)) bad("leaky slope must lie in (0, 1)");
  if (!(blur_sigma > 0) || !std::isfinite(blur_sigma)) bad("blur sigma must be positive");
  if (blur_radius == 0) bad("blur radius must be at least 1");
  if (decoder_kt == 0 || decoder_kt % 2 == 0) bad("decoder temporal kernel must be odd");
  if (decoder == DecoderKind::Conv2d && decoder_kt != 1 && decoder_kt != 3) {
    bad("decoder temporal kernel has no 2D counterpart");
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const StageConfig& s = stages[i];
    const std::string id = "stage " + std::to_string(i + 1);
    if (s.depth == 0 || s.channels == 0 || s.window == 0 || s.heads == 0) {
      bad(id + ": depth, channels, window and heads must be positive");
    }
    if (s.channels % s.heads != 0) bad(id + ": channels not divisible by heads");
    if (i == 0 && s.downsample == 0) bad(id + ": patch size must be positive");
    if (i > 0 && s.downsample != 2) bad(id + ": patch merging reduces by exactly 2");
  }
  const std::size_t total = total_downsample();
  if (height % total != 0 || width % total != 0) {
    bad("input " + std::to_string(height) + "x" + std::to_string(width) +
        " not divisible by total downsampling " + std::to_string(total));
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto [h, w] = stage_grid(i);
    const std::size_t wh = std::min(stages[i].window, h);
    const std::size_t ww = std::min(stages[i].window, w);
    if (h % wh != 0 || w % ww != 0) {
      throw Error(ErrorKind::WindowMismatch, "stage " + std::to_string(i + 1) + " grid " +
                                                 std::to_string(h) + "x" + std::to_string(w) +
                                                 " not divisible by window " +
                                                 std::to_string(stages[i].window));
    }
  }
}

std::size_t ModelConfig::total_downsample() const {
  std::size_t total = 1;
  for (const StageConfig& s : stages) total *= s.downsample;
  return total;
}

std::pair<std::size_t, std::size_t> ModelConfig::stage_grid(std::size_t i) const {
  std::size_t f = 1;
  for (std::size_t k = 0; k <= i; ++k) f *= stages[k].downsample;
  return {height / f, width / f};
}

Tensor voxel_input(const std::vector<VoxelGrid>& batch) {
  if (batch.empty()) throw Error(ErrorKind::EmptyDataset, "empty voxel batch");
  const VoxelGrid& first = batch.front();
  const std::size_t per = first.counts().size();
  Tensor out({batch.size(), first.bins(), 2, first.geometry().height, first.geometry().width});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].geometry() != first.geometry() || batch[b].bins() != first.bins()) {
      throw Error(ErrorKind::ShapeMismatch, "voxel grids in a batch must share geometry and bins");
    }
    const auto& counts = batch[b].counts();
    for (std::size_t i = 0; i < per; ++i) {
      out[b * per + i] = std::log1p(static_cast<double>(counts[i]));
    }
  }
  return out;
}

SestModel::SestModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), bn_(cfg_.fusion_depth), rng_(seed) {
  cfg_.validate();
  const StageConfig& s0 = cfg_.stages[0];
  const std::size_t p = s0.downsample;
  const double embed_bound = 1.0 / std::sqrt(2.0 * p * p);
  patch_embed_ = {add_uniform("patch_embed.weight", {s0.channels, 2, p, p}, embed_bound),
                  add_uniform("patch_embed.bias", {s0.channels}, embed_bound), true};
  patch_norm_ = make_norm("patch_embed.norm", s0.channels);

  for (std::size_t i = 0; i < 4; ++i) {
    const StageConfig& sc = cfg_.stages[i];
    const std::string prefix = "stage" + std::to_string(i + 1);
    Stage& st = stages_[i];
    if (i > 0) {
      const std::size_t prev = cfg_.stages[i - 1].channels;
      st.merge_norm = make_norm(prefix + ".merge.norm", 4 * prev);
      st.merge = make_linear(prefix + ".merge", 4 * prev, sc.channels, false);
    }
    const std::size_t c = sc.channels;
    for (std::size_t j = 0; j < sc.depth; ++j) {
      const std::string bp = prefix + ".block" + std::to_string(j + 1);
      Block b;
      b.norm1 = make_norm(bp + ".norm1", c);
      b.q = make_linear(bp + ".attn.q", c, c, true);
      b.k = make_linear(bp + ".attn.k", c, c, false);
      b.v = make_linear(bp + ".attn.v", c, c, true);
      b.proj = make_linear(bp + ".attn.proj", c, c, true);
      b.norm2 = make_norm(bp + ".norm2", c);
      b.fc1 = make_linear(bp + ".mlp.fc1", c, c * cfg_.mlp_ratio, true);
      b.fc2 = make_linear(bp + ".mlp.fc2", c * cfg_.mlp_ratio, c, true);
      st.blocks.push_back(b);
    }
    st.out_norm = make_norm(prefix + ".norm", c);
  }

  const std::size_t d = cfg_.fusion_depth;
  for (std::size_t i = 0; i < 4; ++i) {
    fuse_[i] = make_decoder_conv("fuse" + std::to_string(i + 1), cfg_.stages[i].channels, d);
  }
  refine_conv_ = make_decoder_conv("refine.conv", 4 * d, d, false);
  refine_bn_ = make_norm("refine.bn", d);
  output_conv_ = make_decoder_conv("reconstruct.conv", d, 1);

  if (cfg_.center_bias) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Tensor mb({cfg_.height, cfg_.width});
    for (double& v : mb.data()) v = unit(rng_);
    center_bias_ = add_param("center_bias", std::move(mb));
    has_center_bias_ = true;
  }
}

std::size_t SestModel::add_param(const std::string& name, Tensor value) {
  params_.emplace_back(name, std::move(value));
  return params_.size() - 1;
}

std::size_t SestModel::add_uniform(const std::string& name, Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng_);
  return add_param(name, std::move(t));
}

SestModel::Linear SestModel::make_linear(const std::string& name, std::size_t in,
                                         std::size_t out, bool bias) {
  Linear l{};
  l.weight = add_uniform(name + ".weight", {in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
  l.has_bias = bias;
  if (bias) l.bias = add_param(name + ".bias", Tensor({out}));
  return l;
}

SestModel::Norm SestModel::make_norm(const std::string& name, std::size_t channels) {
  return {add_param(name + ".gamma", Tensor({channels}, 1.0)),
          add_param(name + ".beta", Tensor({channels}))};
}

SestModel::Conv SestModel::make_decoder_conv(const std::string& name, std::size_t in,
                                             std::size_t out, bool bias) {
  const std::size_t kt = cfg_.decoder_kt;
  Shape shape = cfg_.decoder == DecoderKind::Conv3d ? Shape{out, in, kt, 3, 3}
                                                     : Shape{out, in, 3, 3};
  const double fan_in = static_cast<double>(shape_numel(shape) / out);
  const std::size_t weight = add_uniform(name + ".weight", std::move(shape), 1.0 / std::sqrt(fan_in));
  if (!bias) return {weight, 0, false};
  return {weight, add_param(name + ".bias", Tensor({out})), true};
}

std::vector<Parameter*> SestModel::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

Parameter* SestModel::find(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* SestModel::center_bias() {
  return has_center_bias_ ? &params_[center_bias_] : nullptr;
}

Var SestModel::bind(Tape& tape, std::size_t index) { return tape.param(params_[index]); }

Var SestModel::linear(Tape& tape, const Var& x, const Linear& l) {
  Var y = ops::matmul(x, bind(tape, l.weight));
  return l.has_bias ? ops::add_bias(y, bind(tape, l.bias)) : y;
}

Var SestModel::norm(Tape& tape, const Var& x, const Norm& n) {
  return ops::layer_norm(x, bind(tape, n.gamma), bind(tape, n.beta));
}

Var SestModel::attention(Tape& tape, const Var& tokens, const Block& b, std::size_t window,
                         std::size_t heads) {
  const Shape& s = tokens.shape();  // [N, h, w, C]
  const std::size_t n = s[0], h = s[1], w = s[2], c = s[3];
  const std::size_t wh = std::min(window, h), ww = std::min(window, w);
  const std::size_t nh = h / wh, nw = w / ww;
  const std::size_t len = wh * ww, hd = c / heads, windows = n * nh * nw;

  Var x = ops::reshape(tokens, {n, nh, wh, nw, ww, c});
  x = ops::permute(x, {0, 1, 3, 2, 4, 5});
  x = ops::reshape(x, {windows, len, c});

  auto split = [&](const Var& t) {
    return ops::permute(ops::reshape(t, {windows, len, heads, hd}), {0, 2, 1, 3});
  };
  const Var q = split(linear(tape, x, b.q));
  const Var k = split(linear(tape, x, b.k));
  const Var v = split(linear(tape, x, b.v));
  Var scores = ops::scale(ops::matmul(q, ops::transpose_last2(k)),
                          1.0 / std::sqrt(static_cast<double>(hd)));
  const Var attn = ops::softmax(scores, 3);
  Var out = ops::permute(ops::matmul(attn, v), {0, 2, 1, 3});
  out = linear(tape, ops::reshape(out, {windows, len, c}), b.proj);

  out = ops::reshape(out, {n, nh, nw, wh, ww, c});
  out = ops::permute(out, {0, 1, 3, 2, 4, 5});
  return ops::reshape(out, {n, h, w, c});
}

Var SestModel::block(Tape& tape, const Var& tokens, const Block& b, std::size_t window,
                     std::size_t heads) {
  Var x = ops::add(tokens, attention(tape, norm(tape, tokens, b.norm1), b, window, heads));
  Var hidden = ops::leaky_relu(linear(tape, norm(tape, x, b.norm2), b.fc1), cfg_.leaky_slope);
  return ops::add(x, linear(tape, hidden, b.fc2));
}

Var SestModel::merge(Tape& tape, const Var& tokens, const Stage& s) {
  const Shape& sh = tokens.shape();
  const std::size_t n = sh[0], h = sh[1], w = sh[2], c = sh[3];
  // Neighbours enter the channel vector as (0,0), (1,0), (0,1), (1,1) in
  // (row, column) offsets.
  Var x = ops::reshape(tokens, {n, h / 2, 2, w / 2, 2, c});
  x = ops::permute(x, {0, 1, 3, 4, 2, 5});
  x = ops::reshape(x, {n, h / 2, w / 2, 4 * c});
  return linear(tape, norm(tape, x, s.merge_norm), s.merge);
}

Var SestModel::flatten_time(const Var& x) const {
  const Shape& s = x.shape();
  if (s.size() != 5) throw Error(ErrorKind::ShapeMismatch, "expected [B,T,C,H,W], got " + shape_string(s));
  return ops::reshape(x, {s[0] * s[1], s[2], s[3], s[4]});
}

Var SestModel::unflatten_time(const Var& x, std::size_t batch) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || batch == 0 || s[0] % batch != 0) {
    throw Error(ErrorKind::ShapeMismatch, "cannot split " + shape_string(s) + " into batch " +
                                              std::to_string(batch));
  }
  return ops::reshape(x, {batch, s[0] / batch, s[1], s[2], s[3]});
}

std::array<Var, 4> SestModel::encode(Tape& tape, const Var& flat, std::size_t batch) {
  const Shape& s = flat.shape();
  if (s.size() != 4 || s[1] != 2 || s[2] != cfg_.height || s[3] != cfg_.width) {
    throw Error(ErrorKind::ShapeMismatch, "encoder input " + shape_string(s) + " does not match [N,2," +
                                              std::to_string(cfg_.height) + "," +
                                              std::to_string(cfg_.width) + "]");
  }
  const std::size_t p = cfg_.stages[0].downsample;
  ops::Conv2dOptions patch;
  patch.stride = {p, p};
  Var x = ops::conv2d(flat, bind(tape, patch_embed_.weight), bind(tape, patch_embed_.bias), patch);
  x = norm(tape, ops::permute(x, {0, 2, 3, 1}), patch_norm_);

  std::array<Var, 4> features;
  for (std::size_t i = 0; i < 4; ++i) {
    const StageConfig& sc = cfg_.stages[i];
    if (i > 0) x = merge(tape, x, stages_[i]);
    for (const Block& b : stages_[i].blocks) x = block(tape, x, b, sc.window, sc.heads);
    Var f = ops::permute(norm(tape, x, stages_[i].out_norm), {0, 3, 1, 2});
    features[i] = unflatten_time(f, batch);
  }
  return features;
}

Var SestModel::decoder_conv(Tape& tape, const Var& x, const Conv& c) {
  const Shape& s = x.shape();  // [B, T, C, H, W]
  const Var w = bind(tape, c.weight);
  const Var b = c.has_bias ? bind(tape, c.bias) : Var();
  if (cfg_.decoder == DecoderKind::Conv2d) {
    ops::Conv2dOptions opt;
    opt.pad = {1, 1};
    Var y = ops::conv2d(ops::reshape(x, {s[0] * s[1], s[2], s[3], s[4]}), w, b, opt);
    return ops::reshape(y, {s[0], s[1], y.dim(1), y.dim(2), y.dim(3)});
  }
  ops::Conv3dOptions opt;
  opt.pad = {cfg_.decoder_kt / 2, 1, 1};
  Var y = ops::conv3d(ops::permute(x, {0, 2, 1, 3, 4}), w, b, opt);
  return ops::permute(y, {0, 2, 1, 3, 4});
}

Var SestModel::fuse(Tape& tape, const std::array<Var, 4>& features) {
  const Shape& s1 = features[0].shape();
  if (s1.size() != 5) throw Error(ErrorKind::ShapeMismatch, "stage features must be rank 5");
  std::vector<Var> parts;
  for (std::size_t i = 0; i < 4; ++i) {
    const Shape& si = features[i].shape();
    if (si.size() != 5 || si[0] != s1[0] || si[1] != s1[1]) {
      throw Error(ErrorKind::ShapeMismatch, "stage " + std::to_string(i + 1) + " features " +
                                                shape_string(si) + " disagree on batch or bins");
    }
    Var f = decoder_conv(tape, features[i], fuse_[i]);
    if (i > 0) f = ops::upsample_trilinear(f, s1[3], s1[4]);
    parts.push_back(f);
  }
  return ops::concat(parts, 2);
}

Var SestModel::refine(Tape& tape, const Var& u, NormMode mode) {
  Var z = ops::permute(decoder_conv(tape, u, refine_conv_), {0, 2, 1, 3, 4});
  z = ops::batch_norm3d(z, bind(tape, refine_bn_.gamma), bind(tape, refine_bn_.beta), bn_, mode);
  return ops::permute(ops::leaky_relu(z, cfg_.leaky_slope), {0, 2, 1, 3, 4});
}

Var SestModel::reconstruct(Tape& tape, const Var& z) {
  return ops::upsample_trilinear(decoder_conv(tape, z, output_conv_), cfg_.height, cfg_.width);
}

Var SestModel::apply_center_bias(Tape& tape, const Var& y) {
  if (!has_center_bias_) return y;
  return ops::spatial_gain(y, bind(tape, center_bias_));
}

Var SestModel::forward(Tape& tape, const Var& x, NormMode mode) {
  const Shape& s = x.shape();
  if (s.size() != 5 || s[2] != 2 || s[3] != cfg_.height || s[4] != cfg_.width || s[0] == 0 ||
      s[1] == 0) {
    throw Error(ErrorKind::ShapeMismatch, "model input " + shape_string(s) + " is not [B,T,2," +
                                              std::to_string(cfg_.height) + "," +
                                              std::to_string(cfg_.width) + "]");
  }
  const auto features = encode(tape, flatten_time(x), s[0]);
  Var y = reconstruct(tape, refine(tape, fuse(tape, features), mode));
  y = apply_center_bias(tape, y);
  y = ops::sigmoid(ops::gaussian_blur2d(y, cfg_.blur_sigma, cfg_.blur_radius));
  if (!y.value().all_finite()) {
    throw Error(ErrorKind::NonFiniteActivation, "non-finite saliency output");
  }
  return y;
}

Tensor SestModel::predict(const Tensor& x) {
  Tape tape(false);
  return forward(tape, tape.constant(x), NormMode::Eval).value();
}

std::vector<CheckpointRecord> SestModel::records() const {
  std::vector<CheckpointRecord> out;
  std::vector<Parameter*> ps;
  for (const Parameter& p : params_) ps.push_back(const_cast<Parameter*>(&p));
  append_parameter_records(out, ps);
  out.push_back({"refine.bn.running_mean", bn_.running_mean});
  out.push_back({"refine.bn.running_var", bn_.running_var});
  return out;
}

void SestModel::load(const std::vector<CheckpointRecord>& records) {
  restore_parameters(records, parameters());
  for (auto [name, dst] : {std::pair{"refine.bn.running_mean", &bn_.running_mean},
                           std::pair{"refine.bn.running_var", &bn_.running_var}}) {
    const CheckpointRecord* r = find_record(records, name);
    if (!r) throw Error(ErrorKind::BadFormat, std::string("checkpoint lacks ") + name);
    if (r->value.shape() != dst->shape()) {
      throw Error(ErrorKind::ShapeMismatch, std::string(name) + " has shape " +
                                                shape_string(r->value.shape()));
    }
    *dst = r->value;
  }
}

}  // namespace evsal
