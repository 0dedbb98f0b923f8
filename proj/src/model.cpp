#include "cal/model.hpp"

#include "binio.hpp"

#include <fstream>
#include <iterator>

namespace cal {

namespace {

constexpr char kModelMagic[4] = {'C', 'A', 'L', 'M'};
constexpr std::uint32_t kModelVersion = 1;

Matrix as_matrix(const RowVector& v) { return Matrix(Eigen::Map<const Matrix>(v.data(), 1, v.size())); }

}  // namespace

Matrix ModalityBranch::encode(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t i = 0; i < encoder.size(); ++i) h = activations[i].apply(encoder[i].apply(h));
  return h;
}

Matrix ModalityBranch::encode_train(const Matrix& x) {
  Matrix h = x;
  for (std::size_t i = 0; i < encoder.size(); ++i) h = activations[i].forward(encoder[i].forward(h));
  return h;
}

void ModalityBranch::backward_encoder(const Matrix& grad_features) {
  Matrix g = grad_features;
  for (std::size_t i = encoder.size(); i-- > 0;) g = encoder[i].backward(activations[i].backward(g));
}

FusionHead::Output FusionHead::apply(const Matrix& latents) const {
  Output o;
  o.hidden = activation.apply(hidden.apply(latents));
  o.logits = out.apply(o.hidden);
  return o;
}

FusionHead::Output FusionHead::forward(const Matrix& latents) {
  Output o;
  o.hidden = activation.forward(hidden.forward(latents));
  o.logits = out.forward(o.hidden);
  return o;
}

Matrix FusionHead::backward(const Matrix& grad_logits) {
  return hidden.backward(activation.backward(out.backward(grad_logits)));
}

Matrix concat_latents(const std::vector<Matrix>& latents) {
  Index cols = 0;
  for (const auto& z : latents) cols += z.cols();
  const Index rows = latents.empty() ? 0 : latents.front().rows();
  Matrix out(rows, cols);
  Index offset = 0;
  for (const auto& z : latents) {
    if (z.rows() != rows) throw DimensionError("concat_latents: row counts differ");
    out.middleCols(offset, z.cols()) = z;
    offset += z.cols();
  }
  return out;
}

Model::Model(const ModelConfig& config, Rng& rng) : config_(config) {
  if (config.modalities() < 1) throw ConfigError("model: at least one modality required");
  if (config.classes < 2) throw ConfigError("model: at least two classes required");
  for (Index d : config.input_dims)
    if (d < 1) throw ConfigError("model: modality dimensions must be positive");
  for (int m = 0; m < config.modalities(); ++m) {
    ModalityBranch b;
    Index in = config.input_dims[static_cast<std::size_t>(m)];
    for (Index width : config.encoder_hidden) {
      b.encoder.push_back(Linear<double>::uniform_init(in, width, rng));
      b.activations.emplace_back(config.activation);
      in = width;
    }
    b.mu_head = Linear<double>::uniform_init(in, config.latent_dim, rng);
    b.logvar_head = Linear<double>::uniform_init(in, config.latent_dim, rng);
    b.classifier = Linear<double>::uniform_init(config.latent_dim, config.classes, rng);
    branches_.push_back(std::move(b));
  }
  const Index fused_in = config.latent_dim * config.modalities();
  fusion_.hidden = Linear<double>::uniform_init(fused_in, config.fusion_hidden, rng);
  fusion_.activation = Activation<double>(ActivationKind::relu);
  fusion_.out = Linear<double>::uniform_init(config.fusion_hidden, config.classes, rng);
}

Inference Model::infer(const std::vector<Matrix>& features, const std::vector<bool>& masked) const {
  if (static_cast<int>(features.size()) != modalities())
    throw DimensionError("model: expected " + std::to_string(modalities()) + " modality blocks, got " +
                         std::to_string(features.size()));
  Inference inf;
  for (int m = 0; m < modalities(); ++m) {
    const auto& b = branches_[static_cast<std::size_t>(m)];
    const Matrix& x = features[static_cast<std::size_t>(m)];
    const bool mask = !masked.empty() && masked[static_cast<std::size_t>(m)];
    const Matrix h = mask ? b.encode(Matrix::Zero(x.rows(), x.cols())) : b.encode(x);
    Matrix mu = b.mu_head.apply(h);
    inf.unimodal_logits.push_back(b.classifier.apply(mu));
    inf.latents.push_back(std::move(mu));
  }
  auto fused = fusion_.apply(concat_latents(inf.latents));
  inf.fusion_hidden = std::move(fused.hidden);
  inf.fusion_logits = std::move(fused.logits);
  return inf;
}

ForwardPass Model::forward_train(const std::vector<Matrix>& features, Rng& rng) {
  if (static_cast<int>(features.size()) != modalities())
    throw DimensionError("model: expected " + std::to_string(modalities()) + " modality blocks, got " +
                         std::to_string(features.size()));
  ForwardPass pass;
  for (int m = 0; m < modalities(); ++m) {
    auto& b = branches_[static_cast<std::size_t>(m)];
    const Matrix h = b.encode_train(features[static_cast<std::size_t>(m)]);
    GaussianPosterior<double> post{b.mu_head.forward(h), b.logvar_head.forward(h)};
    auto sample = reparam_sample(post, rng);
    pass.unimodal_logits.push_back(b.classifier.forward(sample.z));
    pass.latents.push_back(std::move(sample.z));
    pass.noise.push_back(std::move(sample.noise));
    pass.posteriors.push_back(std::move(post));
  }
  auto fused = fusion_.forward(concat_latents(pass.latents));
  pass.fusion_hidden = std::move(fused.hidden);
  pass.fusion_logits = std::move(fused.logits);
  return pass;
}

void Model::backward(const ForwardPass& pass, const OutputGrads& grads) {
  const Matrix grad_concat = fusion_.backward(grads.fusion_logits);
  Index offset = 0;
  for (int m = 0; m < modalities(); ++m) {
    const auto mi = static_cast<std::size_t>(m);
    auto& b = branches_[mi];
    const Index dz = pass.latents[mi].cols();
    Matrix grad_z = grad_concat.middleCols(offset, dz);
    offset += dz;
    grad_z += b.classifier.backward(grads.unimodal_logits[mi]);

    auto post_grad = reparam_backward(pass.posteriors[mi], pass.noise[mi], grad_z);
    if (mi < grads.mu.size() && grads.mu[mi].size() > 0) post_grad.mu += grads.mu[mi];
    if (mi < grads.logvar.size() && grads.logvar[mi].size() > 0) post_grad.logvar += grads.logvar[mi];

    Matrix grad_h = b.mu_head.backward(post_grad.mu);
    grad_h += b.logvar_head.backward(post_grad.logvar);
    b.backward_encoder(grad_h);
  }
}

void Model::zero_grad() {
  for (auto* l : layers()) l->zero_grad();
}

GradientBundle Model::gradients() const {
  GradientBundle bundle;
  for (const auto& b : branches_) {
    GradientBundle::ModalityBlock block;
    for (const auto& l : b.encoder) {
      block.encoder.push_back(l.grad_weight);
      block.encoder.push_back(as_matrix(l.grad_bias));
    }
    for (const auto* l : {&b.mu_head, &b.logvar_head}) {
      block.encoder.push_back(l->grad_weight);
      block.encoder.push_back(as_matrix(l->grad_bias));
    }
    block.head.push_back(b.classifier.grad_weight);
    block.head.push_back(as_matrix(b.classifier.grad_bias));
    bundle.modality.push_back(std::move(block));
  }
  for (const auto* l : {&fusion_.hidden, &fusion_.out}) {
    bundle.shared.push_back(l->grad_weight);
    bundle.shared.push_back(as_matrix(l->grad_bias));
  }
  return bundle;
}

void Model::set_gradients(const GradientBundle& bundle) {
  auto assign = [](Linear<double>& l, const Matrix& w, const Matrix& b) {
    if (w.rows() != l.grad_weight.rows() || w.cols() != l.grad_weight.cols() || b.size() != l.grad_bias.size())
      throw DimensionError("set_gradients: bundle shape does not mirror the model");
    l.grad_weight = w;
    l.grad_bias = Eigen::Map<const RowVector>(b.data(), b.size());
  };
  if (static_cast<int>(bundle.modality.size()) != modalities())
    throw DimensionError("set_gradients: bundle modality count differs from the model");
  for (int m = 0; m < modalities(); ++m) {
    auto& b = branches_[static_cast<std::size_t>(m)];
    const auto& block = bundle.modality[static_cast<std::size_t>(m)];
    std::size_t k = 0;
    for (auto& l : b.encoder) {
      assign(l, block.encoder.at(k), block.encoder.at(k + 1));
      k += 2;
    }
    assign(b.mu_head, block.encoder.at(k), block.encoder.at(k + 1));
    assign(b.logvar_head, block.encoder.at(k + 2), block.encoder.at(k + 3));
    assign(b.classifier, block.head.at(0), block.head.at(1));
  }
  assign(fusion_.hidden, bundle.shared.at(0), bundle.shared.at(1));
  assign(fusion_.out, bundle.shared.at(2), bundle.shared.at(3));
}

void Model::sgd_step(double lr, double momentum, double weight_decay) {
  for (auto* l : layers()) sgd_momentum_step(*l, lr, momentum, weight_decay);
}

std::vector<Linear<double>*> Model::layers() {
  std::vector<Linear<double>*> out;
  for (auto& b : branches_) {
    for (auto& l : b.encoder) out.push_back(&l);
    out.push_back(&b.mu_head);
    out.push_back(&b.logvar_head);
    out.push_back(&b.classifier);
  }
  out.push_back(&fusion_.hidden);
  out.push_back(&fusion_.out);
  return out;
}

std::vector<const Linear<double>*> Model::layers() const {
  std::vector<const Linear<double>*> out;
  for (auto* l : const_cast<Model*>(this)->layers()) out.push_back(l);
  return out;
}

Index Model::parameter_count() const {
  Index n = 0;
  for (const auto* l : layers()) n += l->parameter_count();
  return n;
}

std::uint64_t Model::parameter_checksum() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](const double* p, Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (Index i = 0; i < n * static_cast<Index>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto* l : layers()) {
    mix(l->weight.data(), l->weight.size());
    mix(l->bias.data(), l->bias.size());
  }
  return h;
}

void Model::save(const std::filesystem::path& path) const {
  binio::Writer body;
  body.u32(static_cast<std::uint32_t>(config_.modalities()));
  for (Index d : config_.input_dims) body.u64(static_cast<std::uint64_t>(d));
  body.u32(static_cast<std::uint32_t>(config_.classes));
  body.u32(static_cast<std::uint32_t>(config_.encoder_hidden.size()));
  for (Index w : config_.encoder_hidden) body.u64(static_cast<std::uint64_t>(w));
  body.u64(static_cast<std::uint64_t>(config_.latent_dim));
  body.u64(static_cast<std::uint64_t>(config_.fusion_hidden));
  body.u8(config_.activation == ActivationKind::relu ? 0 : 1);
  for (const auto* l : layers()) {
    body.matrix(l->weight);
    body.matrix(as_matrix(l->bias));
  }
  binio::Writer file;
  for (char c : kModelMagic) file.u8(static_cast<std::uint8_t>(c));
  file.u32(kModelVersion);
  file.u64(body.bytes().size());
  file.raw(body.bytes());
  file.u32(binio::crc32_of(body.bytes().data(), body.bytes().size()));

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("model: cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(file.bytes().data()),
           static_cast<std::streamsize>(file.bytes().size()));
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("model: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  binio::Reader head(bytes.data(), bytes.size(), "model header");
  for (char c : kModelMagic)
    if (head.u8() != static_cast<std::uint8_t>(c)) throw FormatError("model: bad magic in " + path.string());
  if (const auto v = head.u32(); v != kModelVersion)
    throw VersionError("model: unsupported version " + std::to_string(v));
  const std::uint64_t len = head.u64();
  const std::uint8_t* payload = head.take(len);
  if (head.u32() != binio::crc32_of(payload, len)) throw ChecksumError("model", "model: checksum mismatch");

  binio::Reader r(payload, len, "model body");
  ModelConfig cfg;
  const std::uint32_t m = r.u32();
  for (std::uint32_t i = 0; i < m; ++i) cfg.input_dims.push_back(static_cast<Index>(r.u64()));
  cfg.classes = static_cast<int>(r.u32());
  cfg.encoder_hidden.clear();
  const std::uint32_t depth = r.u32();
  for (std::uint32_t i = 0; i < depth; ++i) cfg.encoder_hidden.push_back(static_cast<Index>(r.u64()));
  cfg.latent_dim = static_cast<Index>(r.u64());
  cfg.fusion_hidden = static_cast<Index>(r.u64());
  cfg.activation = r.u8() == 0 ? ActivationKind::relu : ActivationKind::tanh;

  Rng unused(0);
  Model model(cfg, unused);
  for (auto* l : model.layers()) {
    Matrix w = r.matrix();
    Matrix b = r.matrix();
    if (w.rows() != l->weight.rows() || w.cols() != l->weight.cols() || b.size() != l->bias.size())
      throw FormatError("model: layer shape mismatch in " + path.string());
    l->weight = w;
    l->bias = Eigen::Map<const RowVector>(b.data(), b.size());
  }
  return model;
}

}  // namespace cal
