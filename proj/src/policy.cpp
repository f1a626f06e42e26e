#include "docir/policy.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "docir/autodiff/ops.hpp"

namespace docir {

namespace {

constexpr int kConv1Channels = 16;
constexpr int kConv2Channels = 32;
constexpr int kConv3Channels = 32;
constexpr int kActorOutputs = 4;  // arm mean (3) + gripper logit

int conv_out(int side, int kernel, int stride) { return (side - kernel) / stride + 1; }

const char* view_key(View v) { return v == View::base ? "base" : "wrist"; }

}  // namespace

int PolicyConfig::conv_output_side() const {
  return conv_out(conv_out(conv_out(resolution, 5, 2), 3, 2), 3, 2);
}

int PolicyConfig::fused_dim() const {
  const int image = repr.uses_images() ? 2 * repr.stacks_per_view() * encoder_dim : 0;
  return image + proprio_dim + repr.id_embed_dim;
}

void PolicyConfig::validate() const {
  if (repr.uses_images() && conv_output_side() < 1) {
    throw std::invalid_argument("PolicyConfig: resolution " + std::to_string(resolution) + " too small for the encoder");
  }
  if (proprio_dim < 0 || encoder_dim <= 0 || hidden <= 0) throw std::invalid_argument("PolicyConfig: bad widths");
  if (repr.uses_id_embedding() && id_vocab <= 0) throw std::invalid_argument("PolicyConfig: empty ID vocabulary");
  if (repr.kind == ReprKind::ocr && repr.slot_count < 2) throw std::invalid_argument("PolicyConfig: ocr needs slots");
}

void to_json(nlohmann::json& j, const ReprMode& m) {
  j = {{"kind", to_string(m.kind)}, {"slot_count", m.slot_count}, {"id_embed_dim", m.id_embed_dim}};
}

void from_json(const nlohmann::json& j, ReprMode& m) {
  m.kind = parse_repr_kind(j.at("kind").get<std::string>());
  m.slot_count = j.at("slot_count").get<int>();
  m.id_embed_dim = j.at("id_embed_dim").get<int>();
}

void to_json(nlohmann::json& j, const PolicyConfig& c) {
  j = {{"repr", c.repr},           {"resolution", c.resolution}, {"proprio_dim", c.proprio_dim},
       {"encoder_dim", c.encoder_dim}, {"hidden", c.hidden},       {"id_vocab", c.id_vocab},
       {"init_log_std", c.init_log_std}};
}

void from_json(const nlohmann::json& j, PolicyConfig& c) {
  c.repr = j.at("repr").get<ReprMode>();
  c.resolution = j.at("resolution").get<int>();
  c.proprio_dim = j.at("proprio_dim").get<int>();
  c.encoder_dim = j.at("encoder_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.id_vocab = j.at("id_vocab").get<int>();
  c.init_log_std = j.value("init_log_std", -0.5);
}

PolicyInput PolicyInput::from(const Observation& obs, const InstanceRegistry& registry, const IdSet& targets,
                              bool keep_frames) {
  PolicyInput in;
  if (keep_frames) {
    in.base = PackedFrame::pack(obs.base);
    in.wrist = PackedFrame::pack(obs.wrist);
  }
  in.proprio.assign(obs.proprio.begin(), obs.proprio.end());
  in.registry = registry;
  in.targets = targets;
  return in;
}

template <class T>
PolicyBatch<T> make_policy_batch(const PolicyConfig& config, std::span<const PolicyInput* const> inputs) {
  const ReprMode& mode = config.repr;
  const int b = static_cast<int>(inputs.size());
  PolicyBatch<T> batch;
  batch.size = b;
  batch.proprio = ad::Tensor<T>({b, config.proprio_dim});
  batch.target_ids.resize(b, 0);

  const int s = mode.stacks_per_view();
  const int c = mode.channels_per_stack();
  const int r = config.resolution;
  const std::size_t per_sample = static_cast<std::size_t>(s) * c * r * r;
  if (mode.uses_images()) {
    batch.base = ad::Tensor<T>({b * s, c, r, r});
    batch.wrist = ad::Tensor<T>({b * s, c, r, r});
  }
  std::vector<float> scratch;
  if constexpr (!std::is_same_v<T, float>) scratch.resize(per_sample);

  for (int i = 0; i < b; ++i) {
    const PolicyInput& in = *inputs[i];
    if (static_cast<int>(in.proprio.size()) != config.proprio_dim) {
      throw std::invalid_argument("make_policy_batch: proprio has " + std::to_string(in.proprio.size()) +
                                  " values, policy expects " + std::to_string(config.proprio_dim));
    }
    for (int k = 0; k < config.proprio_dim; ++k) batch.proprio[static_cast<std::size_t>(i) * config.proprio_dim + k] = static_cast<T>(in.proprio[k]);
    if (!in.targets.empty()) batch.target_ids[i] = *in.targets.begin();
    if (mode.uses_id_embedding() && (batch.target_ids[i] < 0 || batch.target_ids[i] >= config.id_vocab)) {
      throw std::out_of_range("make_policy_batch: target ID " + std::to_string(batch.target_ids[i]) +
                              " outside the embedding table");
    }
    if (!mode.uses_images()) continue;

    const GroupSpec spec = make_group_spec(in.registry, in.targets);
    for (auto [packed, tensor] : {std::pair{&in.base, &batch.base}, std::pair{&in.wrist, &batch.wrist}}) {
      if (packed->height != r || packed->width != r) {
        throw std::invalid_argument("make_policy_batch: frame is " + std::to_string(packed->height) + "x" +
                                    std::to_string(packed->width) + ", policy expects " + std::to_string(r));
      }
      const Frame frame = packed->unpack();
      T* dst = tensor->ptr() + static_cast<std::size_t>(i) * per_sample;
      if constexpr (std::is_same_v<T, float>) {
        write_view_input(frame, in.registry, spec, mode, std::span<float>(dst, per_sample));
      } else {
        write_view_input(frame, in.registry, spec, mode, std::span<float>(scratch));
        for (std::size_t k = 0; k < per_sample; ++k) dst[k] = static_cast<T>(scratch[k]);
      }
    }
  }
  return batch;
}

template <class T>
ActorCritic<T>::ActorCritic(PolicyConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  build(seed);
}

template <class T>
void ActorCritic<T>::build(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform_tensor = [&](ad::Shape shape, double bound) {
    ad::Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.data()) v = static_cast<T>(u(rng));
    return t;
  };
  auto add_layer = [&](const std::string& name, ad::Shape weight_shape, double bound) {
    const int out = weight_shape[0];
    params_.add(name + ".w", uniform_tensor(std::move(weight_shape), bound));
    params_.add(name + ".b", ad::Tensor<T>({out}));
  };

  if (config_.repr.uses_images()) {
    const int c = config_.repr.channels_per_stack();
    const int flat = kConv3Channels * config_.conv_output_side() * config_.conv_output_side();
    for (View v : {View::base, View::wrist}) {
      const std::string p = std::string("enc.") + view_key(v);
      add_layer(p + ".conv1", {kConv1Channels, c, 5, 5}, std::sqrt(6.0 / (c * 25)));
      add_layer(p + ".conv2", {kConv2Channels, kConv1Channels, 3, 3}, std::sqrt(6.0 / (kConv1Channels * 9)));
      add_layer(p + ".conv3", {kConv3Channels, kConv2Channels, 3, 3}, std::sqrt(6.0 / (kConv2Channels * 9)));
      add_layer(p + ".fc", {config_.encoder_dim, flat}, std::sqrt(3.0 / flat));
    }
  }
  if (config_.repr.uses_id_embedding()) {
    params_.add("id_embed", uniform_tensor({config_.id_vocab, config_.repr.id_embed_dim}, 1.0));
  }
  const int f = config_.fused_dim();
  const int h = config_.hidden;
  auto glorot = [](int in, int out) { return std::sqrt(6.0 / (in + out)); };
  for (const std::string trunk : {"actor", "critic"}) {
    add_layer(trunk + ".fc1", {h, f}, glorot(f, h));
    add_layer(trunk + ".fc2", {h, h}, glorot(h, h));
  }
  add_layer("actor.head", {kActorOutputs, h}, 0.01 * glorot(h, kActorOutputs));
  add_layer("critic.head", {1, h}, glorot(h, 1));
  params_.add("actor.log_std", ad::Tensor<T>({3}, static_cast<T>(config_.init_log_std)));
}

template <class T>
ad::Var<T> ActorCritic<T>::dense(ad::Graph<T>& graph, const std::string& name, ad::Var<T> x) {
  return ad::affine(x, graph.parameter(params_.get(name + ".w")), graph.parameter(params_.get(name + ".b")));
}

template <class T>
ad::Var<T> ActorCritic<T>::encode_view(ad::Graph<T>& graph, View view, ad::Var<T> stacks, int batch) {
  const ad::Shape& shape = stacks.shape();
  const int s = config_.repr.stacks_per_view();
  const int r = config_.resolution;
  if (shape != ad::Shape{batch * s, config_.repr.channels_per_stack(), r, r}) {
    throw std::invalid_argument("encode_view: got " + ad::shape_string(shape) + " for batch " + std::to_string(batch) +
                                " of " + std::to_string(s) + " stacks");
  }
  const std::string p = std::string("enc.") + view_key(view);
  auto conv = [&](ad::Var<T> x, const std::string& layer, int stride) {
    auto y = ad::conv2d(x, graph.parameter(params_.get(p + layer + ".w")), stride);
    return ad::relu(ad::add_channel_bias(y, graph.parameter(params_.get(p + layer + ".b"))));
  };
  auto x = conv(stacks, ".conv1", 2);
  x = conv(x, ".conv2", 2);
  x = conv(x, ".conv3", 2);
  x = dense(graph, p + ".fc", ad::flatten(x));
  return ad::reshape(x, {batch, s * config_.encoder_dim});
}

template <class T>
PolicyHeads<T> ActorCritic<T>::forward(ad::Graph<T>& graph, const PolicyBatch<T>& batch) {
  const int b = batch.size;
  std::vector<ad::Var<T>> parts;
  if (config_.repr.uses_images()) {
    parts.push_back(encode_view(graph, View::base, graph.constant(batch.base), b));
    parts.push_back(encode_view(graph, View::wrist, graph.constant(batch.wrist), b));
  }
  if (config_.proprio_dim > 0) parts.push_back(graph.constant(batch.proprio));
  if (config_.repr.uses_id_embedding()) {
    parts.push_back(ad::embedding(graph.parameter(params_.get("id_embed")), batch.target_ids));
  }
  PolicyHeads<T> heads;
  heads.fused = parts.size() == 1 ? parts[0] : ad::concat_cols(parts);
  if (heads.fused.shape() != ad::Shape{b, config_.fused_dim()}) {
    throw std::logic_error("forward: fused width " + ad::shape_string(heads.fused.shape()));
  }

  auto actor = ad::tanh(dense(graph, "actor.fc1", heads.fused));
  actor = ad::tanh(dense(graph, "actor.fc2", actor));
  auto out = dense(graph, "actor.head", actor);
  heads.arm_mean = ad::slice_cols(out, 0, 3);
  heads.gripper_logit = ad::reshape(ad::slice_cols(out, 3, 4), {b});

  auto critic = ad::tanh(dense(graph, "critic.fc1", heads.fused));
  critic = ad::tanh(dense(graph, "critic.fc2", critic));
  heads.value = ad::reshape(dense(graph, "critic.head", critic), {b});

  auto log_std = ad::clamp(graph.parameter(params_.get("actor.log_std")), kMinLogStd, kMaxLogStd);
  heads.arm_log_std = ad::broadcast_rows(log_std, b);
  return heads;
}

template <class T>
void ActorCritic<T>::act(std::span<const PolicyInput* const> inputs, std::vector<ActionDist>& dists,
                         std::vector<double>& values) {
  ad::Graph<T> graph(false);
  const auto batch = make_policy_batch<T>(config_, inputs);
  const auto heads = forward(graph, batch);
  dists = to_distributions(heads);
  const auto& v = heads.value.value();
  values.assign(v.data().begin(), v.data().end());
}

template <class T>
std::size_t ActorCritic<T>::expected_parameter_count(const PolicyConfig& c) {
  std::size_t n = 0;
  if (c.repr.uses_images()) {
    const std::size_t ch = c.repr.channels_per_stack();
    const std::size_t side = c.conv_output_side();
    const std::size_t encoder = (16 * ch * 25 + 16) + (32 * 16 * 9 + 32) + (32 * 32 * 9 + 32) +
                                (c.encoder_dim * 32 * side * side + c.encoder_dim);
    n += 2 * encoder;
  }
  n += static_cast<std::size_t>(c.id_vocab) * c.repr.id_embed_dim;
  const std::size_t f = c.fused_dim();
  const std::size_t h = c.hidden;
  const std::size_t trunk = (f * h + h) + (h * h + h);
  n += 2 * trunk + (h * 4 + 4) + (h + 1) + 3;
  return n;
}

template <class T>
std::vector<ActionDist> to_distributions(const PolicyHeads<T>& heads) {
  const auto& mean = heads.arm_mean.value();
  const auto& log_std = heads.arm_log_std.value();
  const auto& logit = heads.gripper_logit.value();
  const int b = mean.dim(0);
  std::vector<ActionDist> out(b);
  for (int i = 0; i < b; ++i) {
    for (int k = 0; k < 3; ++k) {
      out[i].arm_mean[k] = mean[i * 3 + k];
      out[i].arm_log_std[k] = log_std[i * 3 + k];
    }
    out[i].gripper_logit = logit[i];
  }
  return out;
}

template <class T>
ad::Var<T> log_prob(const PolicyHeads<T>& heads, const ad::Tensor<T>& actions) {
  ad::Graph<T>& g = *heads.arm_mean.graph;
  const int b = heads.arm_mean.shape()[0];
  if (actions.shape() != ad::Shape{b, 4}) throw std::invalid_argument("log_prob: actions must be [B,4]");
  ad::Tensor<T> arm({b, 3});
  ad::Tensor<T> grip({b});
  for (int i = 0; i < b; ++i) {
    for (int k = 0; k < 3; ++k) arm[i * 3 + k] = actions[i * 4 + k];
    grip[i] = actions[i * 4 + 3] > 0 ? T(1) : T(-1);
  }
  auto z = ad::mul(ad::sub(g.constant(std::move(arm)), heads.arm_mean), ad::exp(ad::scale(heads.arm_log_std, -1.0)));
  auto gauss = ad::row_sum(ad::sub(ad::scale(ad::square(z), -0.5), heads.arm_log_std));
  gauss = ad::add_scalar(gauss, -1.5 * std::log(2.0 * std::numbers::pi));
  auto bern = ad::scale(ad::softplus(ad::scale(ad::mul(g.constant(std::move(grip)), heads.gripper_logit), -1.0)), -1.0);
  return ad::add(gauss, bern);
}

template <class T>
ad::Var<T> entropy(const PolicyHeads<T>& heads) {
  auto gauss = ad::add_scalar(ad::row_sum(heads.arm_log_std), 1.5 * (1.0 + std::log(2.0 * std::numbers::pi)));
  const auto& l = heads.gripper_logit;
  auto bern = ad::sub(ad::softplus(l), ad::mul(l, ad::sigmoid(l)));
  return ad::add(gauss, bern);
}

namespace {

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".manifest.json";
}

}  // namespace

template <class T>
void save_policy(const std::filesystem::path& path, const ActorCritic<T>& policy, const nlohmann::json& extra) {
  ad::save_checkpoint(path, policy.params());
  nlohmann::json manifest = extra.is_object() ? extra : nlohmann::json::object();
  manifest["policy"] = policy.config();
  manifest["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
  manifest["parameter_count"] = policy.params().parameter_count();
  std::ofstream out(manifest_path(path));
  if (!out) throw std::runtime_error("save_policy: cannot write manifest for " + path.string());
  out << manifest.dump(2) << '\n';
}

nlohmann::json load_policy_manifest(const std::filesystem::path& checkpoint) {
  std::ifstream in(manifest_path(checkpoint));
  if (!in) throw std::runtime_error("no manifest next to checkpoint " + checkpoint.string());
  return nlohmann::json::parse(in);
}

template <class T>
ActorCritic<T> load_policy(const std::filesystem::path& path) {
  const auto manifest = load_policy_manifest(path);
  ActorCritic<T> policy(manifest.at("policy").get<PolicyConfig>(), 0);
  ad::load_checkpoint(path, policy.params());
  return policy;
}

template class ActorCritic<float>;
template class ActorCritic<double>;

#define DOCIR_INSTANTIATE_POLICY(T)                                                                     \
  template PolicyBatch<T> make_policy_batch<T>(const PolicyConfig&, std::span<const PolicyInput* const>); \
  template std::vector<ActionDist> to_distributions<T>(const PolicyHeads<T>&);                          \
  template ad::Var<T> log_prob<T>(const PolicyHeads<T>&, const ad::Tensor<T>&);                         \
  template ad::Var<T> entropy<T>(const PolicyHeads<T>&);                                                \
  template void save_policy<T>(const std::filesystem::path&, const ActorCritic<T>&, const nlohmann::json&); \
  template ActorCritic<T> load_policy<T>(const std::filesystem::path&);

DOCIR_INSTANTIATE_POLICY(float)
DOCIR_INSTANTIATE_POLICY(double)

}  // namespace docir
