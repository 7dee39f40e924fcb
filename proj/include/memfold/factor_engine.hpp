/* Copyright 2026 The memfold Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Per-layer analytical memory equations. Each layer's footprint splits into
// four factors: resident parameters, optimizer state, gradients and the
// activations it saves for backward.
//
// Activation ownership: a layer books only the tensors it materializes (its
// outputs plus kind-specific internals). Inputs belong to the producer.

#pragma once

#include <string>
#include <variant>

#include "memfold/bytes.hpp"
#include "memfold/model_ir.hpp"
#include "memfold/training_policy.hpp"

namespace memfold {

struct FactorBreakdown {
  std::string path;
  Bytes m_param = 0;
  Bytes m_opt = 0;
  Bytes m_grad = 0;
  Bytes m_act = 0;

  Bytes total() const {
    return checked_add(checked_add(m_param, m_opt), checked_add(m_grad, m_act));
  }

  bool operator==(const FactorBreakdown&) const = default;
};

/// Parameters stay resident whether or not the layer is frozen.
inline Bytes factor_param(const LayerDesc& layer, const LayerPlan& entry) {
  return checked_mul(param_count(layer), entry.param_bytes_per_elem);
}

inline Bytes factor_grad(const LayerDesc& layer, const LayerPlan& entry) {
  if (!entry.trainable) {
    return 0;
  }
  return ceil_div(checked_mul(param_count(layer), entry.grad_bytes_per_elem),
                  entry.partition_divisor_grad);
}

inline Bytes factor_opt(const LayerDesc& layer, const LayerPlan& entry) {
  if (!entry.trainable) {
    return 0;
  }
  return ceil_div(checked_mul(param_count(layer), entry.opt_bytes_per_param),
                  entry.partition_divisor_opt);
}

namespace detail {

// Saved-activation bytes for one micro-batch of `batch` sequences of
// `tokens` tokens each, at `elem` bytes per element.
struct ActivationBytes {
  Bytes batch;
  Bytes tokens;
  Bytes elem;

  Bytes per_token(std::int64_t width) const {
    return checked_product(batch, tokens, dim(width), elem);
  }

  Bytes operator()(const EmbeddingParams& p) const { return per_token(p.hidden); }
  Bytes operator()(const LinearParams& p) const {
    return per_token(p.out_features);
  }
  Bytes operator()(const LayerNormParams& p) const { return per_token(p.hidden); }
  Bytes operator()(const ActivationParams& p) const { return per_token(p.width); }
  // Boolean mask, one byte per element regardless of precision.
  Bytes operator()(const DropoutParams& p) const {
    return checked_product(batch, tokens, dim(p.width), Bytes{1});
  }
  // Q, K, V, attention output, projection output; exact mode also keeps
  // the score and probability matrices.
  Bytes operator()(const AttentionParams& p) const {
    const Bytes linear_part = checked_mul(Bytes{5}, per_token(p.hidden));
    if (p.mode == AttentionMode::memory_efficient) {
      return linear_part;
    }
    const Bytes quadratic_part = checked_product(Bytes{2}, batch, dim(p.num_heads),
                                                 tokens, tokens, elem);
    return checked_add(linear_part, quadratic_part);
  }
  // Token count does not enter: the output grid comes from the input extent.
  Bytes operator()(const Conv2dParams& p) const {
    const Bytes out_h = dim((p.input_h - p.kernel_h) / p.stride_h + 1);
    const Bytes out_w = dim((p.input_w - p.kernel_w) / p.stride_w + 1);
    return checked_product(batch, dim(p.out_channels), out_h, out_w, elem);
  }
  // Logits only; fp32 softmax scratch is left to the headroom factor.
  Bytes operator()(const LmHeadLossParams& p) const {
    return per_token(p.vocab_size);
  }
};

}  // namespace detail

inline Bytes factor_act(const LayerDesc& layer, const LayerPlan& entry,
                        const TrainConfig& cfg) {
  if (!entry.stores_activations) {
    return 0;
  }
  const detail::ActivationBytes bytes{detail::dim(cfg.micro_batch_size),
                                      detail::dim(entry.token_count),
                                      entry.act_bytes_per_elem};
  return std::visit(bytes, layer.hyperparams);
}

inline FactorBreakdown predict_layer(const LayerDesc& layer,
                                     const LayerPlan& entry,
                                     const TrainConfig& cfg) {
  return FactorBreakdown{entry.path, factor_param(layer, entry),
                         factor_opt(layer, entry), factor_grad(layer, entry),
                         factor_act(layer, entry, cfg)};
}

}  // namespace memfold
