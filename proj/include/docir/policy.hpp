// Per-view convolutional encoders, the fused scene embedding and the
// actor-critic heads.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "docir/autodiff/graph.hpp"
#include "docir/autodiff/param_store.hpp"
#include "docir/disentangle.hpp"
#include "docir/distribution.hpp"

namespace docir {

struct PolicyConfig {
  ReprMode repr;
  int resolution = 48;
  int proprio_dim = Observation::kProprioDim;
  int encoder_dim = 128;
  int hidden = 256;
  /// Rows of the object-ID embedding table; instance IDs index it directly.
  int id_vocab = 32;
  double init_log_std = -0.5;

  /// Side length after the three valid convolutions.
  int conv_output_side() const;
  int fused_dim() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const PolicyConfig& c);
void from_json(const nlohmann::json& j, PolicyConfig& c);
void to_json(nlohmann::json& j, const ReprMode& m);
void from_json(const nlohmann::json& j, ReprMode& m);

/// What the learner needs to rebuild the network input for one transition.
/// Frames are stored byte-packed.
struct PolicyInput {
  PackedFrame base;
  PackedFrame wrist;
  std::vector<float> proprio;
  InstanceRegistry registry;
  IdSet targets;

  static PolicyInput from(const Observation& obs, const InstanceRegistry& registry, const IdSet& targets,
                          bool keep_frames);
};

/// Network-ready tensors for a batch of B inputs. Image tensors are
/// [B*S, C, H, W] with the S stacks of one sample adjacent.
template <class T>
struct PolicyBatch {
  int size = 0;
  ad::Tensor<T> base;
  ad::Tensor<T> wrist;
  ad::Tensor<T> proprio;  // [B, P]
  std::vector<int> target_ids;
};

template <class T>
PolicyBatch<T> make_policy_batch(const PolicyConfig& config, std::span<const PolicyInput* const> inputs);

template <class T>
struct PolicyHeads {
  ad::Var<T> arm_mean;       // [B,3]
  ad::Var<T> arm_log_std;    // [B,3], clamped
  ad::Var<T> gripper_logit;  // [B]
  ad::Var<T> value;          // [B]
  ad::Var<T> fused;          // [B, fused_dim]
};

template <class T>
class ActorCritic {
 public:
  ActorCritic(PolicyConfig config, std::uint64_t seed);

  const PolicyConfig& config() const { return config_; }
  ad::ParamStore<T>& params() { return params_; }
  const ad::ParamStore<T>& params() const { return params_; }

  /// stacks: [B*S, C, H, W] -> [B, S*encoder_dim], per-stack codes in input
  /// order.
  ad::Var<T> encode_view(ad::Graph<T>& graph, View view, ad::Var<T> stacks, int batch);
  PolicyHeads<T> forward(ad::Graph<T>& graph, const PolicyBatch<T>& batch);

  /// Inference without a tape; one distribution and value per input.
  void act(std::span<const PolicyInput* const> inputs, std::vector<ActionDist>& dists,
           std::vector<double>& values);

  /// Independent count from the layer arithmetic.
  static std::size_t expected_parameter_count(const PolicyConfig& config);

 private:
  void build(std::uint64_t seed);
  ad::Var<T> dense(ad::Graph<T>& graph, const std::string& name, ad::Var<T> x);

  PolicyConfig config_;
  ad::ParamStore<T> params_;
};

template <class T>
std::vector<ActionDist> to_distributions(const PolicyHeads<T>& heads);

/// Per-row log-probability of actions [B,4] (arm then gripper in {-1,+1}).
template <class T>
ad::Var<T> log_prob(const PolicyHeads<T>& heads, const ad::Tensor<T>& actions);
/// Per-row entropy.
template <class T>
ad::Var<T> entropy(const PolicyHeads<T>& heads);

/// Checkpoint plus `<path>.manifest.json` holding the config and `extra`.
template <class T>
void save_policy(const std::filesystem::path& path, const ActorCritic<T>& policy, const nlohmann::json& extra);
nlohmann::json load_policy_manifest(const std::filesystem::path& checkpoint);
template <class T>
ActorCritic<T> load_policy(const std::filesystem::path& path);

extern template class ActorCritic<float>;
extern template class ActorCritic<double>;

}  // namespace docir
