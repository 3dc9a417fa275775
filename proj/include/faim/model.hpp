#pragma once

#include <optional>
#include <string>
#include <vector>

#include "faim/afb.hpp"
#include "faim/config.hpp"
#include "faim/ssm.hpp"

namespace faim {

/// Number of patches after right-padding T by last-value replication so that
/// every patch is full: Z = floor((T_padded - b) / stride) + 1.
std::size_t patch_count(std::size_t length, std::size_t patch_len, std::size_t stride);

/// x[..., T] -> [..., Z, b]; patch i covers [i*stride, i*stride + b) of the
/// padded series. Plain data, not recorded on a tape.
Tensor patchify(const Tensor& x, std::size_t patch_len, std::size_t stride);

/// Dataset facts that travel with a checkpoint.
struct ModelMeta {
  std::vector<std::string> labels;  // original class names in index order
  std::vector<double> channel_mean;
  std::vector<double> channel_std;
};

struct FaimLayer {
  AfbParams afb;
  ImbParams imb;
  NormParams norm;
};

struct FaimModel {
  ModelConfig config;
  std::size_t n_channels = 0;
  std::size_t n_classes = 0;
  std::size_t series_len = 0;
  std::size_t z_max = 0;
  std::uint64_t seed = 0;
  ModelMeta meta;

  Linear embed;        // b -> b'
  Tensor pos_emb;      // [z_max, b']
  Tensor mask_token;   // [b]
  std::vector<FaimLayer> layers;
  Linear cls_head;     // b' -> n_classes
  Linear recon_head;   // b' -> b

  static FaimModel create(const ModelConfig& config, std::size_t n_channels, std::size_t series_len,
                          std::size_t n_classes, std::uint64_t seed);

  /// Trainable tensors in a fixed order. Components switched off by the
  /// ablation flags are left out.
  NamedTensors named_parameters() const;
  std::vector<Tensor> parameters() const;
  /// Deep copy of every parameter value (a detached snapshot).
  FaimModel snapshot() const;
  void load_values(const FaimModel& other);
};

struct LayerActivations {
  std::optional<AfbActivations> afb;
  std::optional<ImbActivations> imb;
  Tensor output;
};

struct ForwardResult {
  Tensor logits;  // [n_classes], or [N, n_classes] for batched input
  Tensor pooled;
  std::vector<LayerActivations> layers;
};

/// patches[..., Z, b] -> tokens[..., Z, b'] (projection plus position rows).
Tensor embed(const FaimModel& model, const Tensor& patches);

/// Per layer: tokens = LN(imb(afb(tokens)) + tokens) on tokens[M, Z, b'].
Tensor faim_trunk(const FaimModel& model, const Tensor& tokens, std::vector<LayerActivations>* acts = nullptr);

/// x[C, T] or x[N, C, T] -> class logits.
ForwardResult faim_forward(const FaimModel& model, const Tensor& x);

/// x[..., C, T] with mask[..., C, Z] in {0, 1}: masked patches are replaced by
/// the mask token before embedding. Returns reconstructed patches [..., C, Z, b].
Tensor reconstruct_forward(const FaimModel& model, const Tensor& x, const Tensor& mask);

/// Text checkpoint headed by the magic line "FAIM1"; see README for the layout.
void save_checkpoint(const FaimModel& model, const std::string& path);
FaimModel load_checkpoint(const std::string& path);

}  // namespace faim
