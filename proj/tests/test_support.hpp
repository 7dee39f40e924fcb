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

// Test-only helpers: layer builders, randomized IR/config generators and an
// element-by-element counting oracle.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "memfold/alloc_oracle.hpp"
#include "memfold/model_ir.hpp"
#include "memfold/training_policy.hpp"

#ifndef MEMFOLD_FIXTURE_DIR
#define MEMFOLD_FIXTURE_DIR "fixtures"
#endif

namespace memfold::testing {

inline std::string fixture_path(const std::string& name) {
  return std::string(MEMFOLD_FIXTURE_DIR) + "/" + name;
}

inline LayerDesc make_layer(std::string name, LayerHyperparams hp,
                            bool trainable = true) {
  return LayerDesc{std::move(name), std::move(hp), trainable};
}

inline LayerDesc linear(std::string name, std::int64_t in, std::int64_t out,
                        bool bias = true) {
  return make_layer(std::move(name), LinearParams{in, out, bias});
}

inline ModuleDesc make_module(std::string name, std::vector<LayerDesc> layers,
                              Modality modality = Modality::language,
                              TokenSource source = TokenSource::text_tokens,
                              TrainableMode mode = TrainableMode::all) {
  ModuleDesc m;
  m.name = std::move(name);
  m.modality = modality;
  m.token_source = source;
  m.layers = std::move(layers);
  m.trainable = mode;
  if (source == TokenSource::fixed) {
    m.fixed_token_count = 1;
  }
  return m;
}

// One representative layer of every kind, dimensions <= 8.
inline std::vector<LayerDesc> one_of_each_kind() {
  return {
      make_layer("emb", EmbeddingParams{7, 6}),
      make_layer("fc", LinearParams{5, 3, true}),
      make_layer("ln", LayerNormParams{6}),
      make_layer("attn", AttentionParams{8, 2, AttentionMode::exact}),
      make_layer("act", ActivationParams{4}),
      make_layer("drop", DropoutParams{4}),
      make_layer("conv", Conv2dParams{3, 4, 3, 2, 2, 1, 8, 5}),
      make_layer("head", LmHeadLossParams{6, 7}),
  };
}

// Counts elements by visiting every index of every tensor. Slow on purpose;
// only meant for small dimensions.
inline Bytes count_by_enumeration(const std::vector<oracle::TensorShape>& shapes,
                                  bool weight_bytes = false) {
  Bytes total = 0;
  for (const auto& shape : shapes) {
    std::vector<Bytes> index(shape.dims.size(), 0);
    bool empty = false;
    for (Bytes d : shape.dims) {
      empty = empty || d == 0;
    }
    if (empty) {
      continue;
    }
    // Odometer over the index space.
    while (true) {
      total += weight_bytes ? 1 : shape.elem_bytes;
      bool carry = true;
      for (std::size_t k = index.size(); carry && k-- > 0;) {
        if (++index[k] < shape.dims[k]) {
          carry = false;
        } else {
          index[k] = 0;
        }
      }
      if (carry) {
        break;
      }
    }
  }
  return total;
}

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }

  bool coin() { return uniform(0, 1) == 1; }

  LayerDesc layer(const std::string& name, std::int64_t max_dim) {
    const auto kind = static_cast<LayerKind>(uniform(0, 7));
    auto d = [&] { return uniform(1, max_dim); };
    LayerHyperparams hp;
    switch (kind) {
      case LayerKind::embedding:
        hp = EmbeddingParams{d(), d()};
        break;
      case LayerKind::linear:
        hp = LinearParams{d(), d(), coin()};
        break;
      case LayerKind::layer_norm:
        hp = LayerNormParams{d()};
        break;
      case LayerKind::attention: {
        const std::int64_t heads = uniform(1, 8);
        const std::int64_t per_head = uniform(1, std::max<std::int64_t>(1, max_dim / heads));
        hp = AttentionParams{heads * per_head, heads,
                             coin() ? AttentionMode::exact
                                    : AttentionMode::memory_efficient};
        break;
      }
      case LayerKind::activation_fn:
        hp = ActivationParams{d()};
        break;
      case LayerKind::dropout:
        hp = DropoutParams{d()};
        break;
      case LayerKind::conv2d: {
        const std::int64_t ih = d();
        const std::int64_t iw = d();
        hp = Conv2dParams{uniform(1, 8),      uniform(1, 8),
                          uniform(1, std::min<std::int64_t>(ih, 8)),
                          uniform(1, std::min<std::int64_t>(iw, 8)),
                          uniform(1, 4),      uniform(1, 4),
                          ih,                 iw};
        break;
      }
      case LayerKind::lm_head_loss:
        hp = LmHeadLossParams{d(), d()};
        break;
    }
    return make_layer(name, hp, coin());
  }

  ModelIR ir(std::size_t max_layers = 12, std::int64_t max_dim = 64) {
    ModelIR out;
    out.name = "random_" + std::to_string(uniform(0, 1 << 20));
    const auto total_layers =
        static_cast<std::size_t>(uniform(1, static_cast<std::int64_t>(max_layers)));
    const auto module_count = static_cast<std::size_t>(
        uniform(1, std::min<std::int64_t>(4, static_cast<std::int64_t>(total_layers))));
    std::size_t remaining = total_layers;
    for (std::size_t m = 0; m < module_count; ++m) {
      const std::size_t left_modules = module_count - m - 1;
      const std::size_t n =
          m + 1 == module_count
              ? remaining
              : static_cast<std::size_t>(uniform(
                    1, static_cast<std::int64_t>(remaining - left_modules)));
      remaining -= n;
      ModuleDesc module;
      module.name = "mod" + std::to_string(m);
      module.modality = static_cast<Modality>(uniform(0, 3));
      module.token_source = static_cast<TokenSource>(uniform(0, 2));
      if (module.token_source == TokenSource::fixed) {
        module.fixed_token_count = uniform(1, 16);
      }
      module.trainable = static_cast<TrainableMode>(uniform(0, 2));
      for (std::size_t l = 0; l < n; ++l) {
        module.layers.push_back(layer("layer" + std::to_string(l), max_dim));
      }
      out.modules.push_back(std::move(module));
    }
    return out;
  }

  TrainConfig config(const ModelIR& ir) {
    TrainConfig cfg;
    cfg.micro_batch_size = uniform(1, 4);
    cfg.text_token_count = uniform(1, 64);
    cfg.image_patch_token_count = uniform(1, 64);
    cfg.precision = static_cast<Precision>(uniform(0, 2));
    cfg.optimizer = static_cast<Optimizer>(uniform(0, 2));
    cfg.zero_stage = uniform(0, 2);
    cfg.dp_degree = uniform(1, 8);
    for (const auto& module : ir.modules) {
      if (uniform(0, 3) == 0) {
        cfg.frozen_modules.insert(module.name);
      }
    }
    return cfg;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace memfold::testing
