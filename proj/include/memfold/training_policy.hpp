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

// Training behavior: which layers are updated, which layers must keep
// activations for backward, the per-factor element widths implied by the
// precision policy and optimizer, and how ZeRO shards state across
// data-parallel ranks.

#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "memfold/bytes.hpp"
#include "memfold/json_support.hpp"
#include "memfold/model_ir.hpp"

namespace memfold {

enum class Precision { fp32, mixed_fp16, mixed_bf16 };
enum class Optimizer { sgd, sgd_momentum, adam };

template <>
struct EnumNames<Precision> {
  static constexpr std::array<std::string_view, 3> names = {
      "fp32", "mixed_fp16", "mixed_bf16"};
};
template <>
struct EnumNames<Optimizer> {
  static constexpr std::array<std::string_view, 3> names = {
      "sgd", "sgd_momentum", "adam"};
};

struct TrainConfig {
  std::int64_t micro_batch_size = 1;         // sequences per GPU
  std::int64_t text_token_count = 1;         // SeqLen
  std::int64_t image_patch_token_count = 1;  // incl. class token
  Precision precision = Precision::fp32;
  Optimizer optimizer = Optimizer::adam;
  std::int64_t zero_stage = 0;
  std::int64_t dp_degree = 1;
  std::set<std::string> frozen_modules;
  double headroom_factor = 1.0;
  Bytes runtime_baseline_bytes = 0;

  bool operator==(const TrainConfig&) const = default;
};

/// A config that names modules absent from the target IR.
class ConfigMismatchError : public std::runtime_error {
 public:
  explicit ConfigMismatchError(std::vector<std::string> unknown)
      : std::runtime_error(describe(unknown)), unknown_(std::move(unknown)) {}

  const std::vector<std::string>& unknown_modules() const noexcept {
    return unknown_;
  }

 private:
  static std::string describe(const std::vector<std::string>& unknown) {
    std::string out = "frozen_modules names modules not present in the IR:";
    for (const auto& name : unknown) {
      out += " '" + name + "'";
    }
    return out;
  }

  std::vector<std::string> unknown_;
};

inline std::vector<Diagnostic> validate_config(const TrainConfig& cfg) {
  std::vector<Diagnostic> out;
  auto positive = [&out](std::string_view field, std::int64_t v) {
    if (v <= 0) {
      out.push_back({std::string(field), "must be a positive integer (got " +
                                             std::to_string(v) + ")"});
    }
  };
  positive("micro_batch_size", cfg.micro_batch_size);
  positive("text_token_count", cfg.text_token_count);
  positive("image_patch_token_count", cfg.image_patch_token_count);
  positive("dp_degree", cfg.dp_degree);
  if (cfg.zero_stage < 0 || cfg.zero_stage > 2) {
    out.push_back({"zero_stage", "must be 0, 1 or 2 (got " +
                                     std::to_string(cfg.zero_stage) + ")"});
  }
  if (!std::isfinite(cfg.headroom_factor) || cfg.headroom_factor < 1.0) {
    out.push_back({"headroom_factor", "must be a finite number >= 1.0"});
  }
  return out;
}

/// Reads a TrainConfig from a JSON object located at `path` within its
/// document. Optional fields: frozen_modules (default empty),
/// headroom_factor (1.0), runtime_baseline_bytes (0).
inline TrainConfig read_train_config(const Json& doc, const std::string& path) {
  detail::ObjectReader r(doc, path);
  TrainConfig cfg;
  cfg.micro_batch_size = r.integer("micro_batch_size");
  cfg.text_token_count = r.integer("text_token_count");
  cfg.image_patch_token_count = r.integer("image_patch_token_count");
  cfg.precision = r.enumeration<Precision>("precision");
  cfg.optimizer = r.enumeration<Optimizer>("optimizer");
  cfg.zero_stage = r.integer("zero_stage");
  cfg.dp_degree = r.integer("dp_degree");
  if (const Json* frozen = r.optional("frozen_modules")) {
    const std::string fpath = r.child_path("frozen_modules");
    if (!frozen->is_array()) {
      throw SchemaError(fpath, "expected an array");
    }
    for (std::size_t i = 0; i < frozen->size(); ++i) {
      cfg.frozen_modules.insert(detail::ObjectReader::as_string(
          (*frozen)[i], detail::index_path(fpath, i)));
    }
  }
  if (const Json* headroom = r.optional("headroom_factor")) {
    if (!headroom->is_number()) {
      throw SchemaError(r.child_path("headroom_factor"), "expected a number");
    }
    cfg.headroom_factor = headroom->get<double>();
  }
  if (auto baseline = r.optional_integer("runtime_baseline_bytes")) {
    if (*baseline < 0) {
      throw SchemaError(r.child_path("runtime_baseline_bytes"),
                        "must be non-negative");
    }
    cfg.runtime_baseline_bytes = static_cast<Bytes>(*baseline);
  }
  r.finish();
  if (auto diagnostics = validate_config(cfg); !diagnostics.empty()) {
    throw ValidationError(std::move(diagnostics));
  }
  return cfg;
}

/// Reads a `.tcfg.json` document.
inline TrainConfig parse_train_config(std::string_view text) {
  return read_train_config(detail::parse_json_text(text), "");
}

inline OrderedJson to_json(const TrainConfig& cfg) {
  OrderedJson doc;
  doc["micro_batch_size"] = cfg.micro_batch_size;
  doc["text_token_count"] = cfg.text_token_count;
  doc["image_patch_token_count"] = cfg.image_patch_token_count;
  doc["precision"] = enum_name(cfg.precision);
  doc["optimizer"] = enum_name(cfg.optimizer);
  doc["zero_stage"] = cfg.zero_stage;
  doc["dp_degree"] = cfg.dp_degree;
  doc["frozen_modules"] = OrderedJson::array();
  for (const auto& name : cfg.frozen_modules) {
    doc["frozen_modules"].push_back(name);
  }
  doc["headroom_factor"] = cfg.headroom_factor;
  doc["runtime_baseline_bytes"] = cfg.runtime_baseline_bytes;
  return doc;
}

// ---------------------------------------------------------------------------
// Element widths and sharding

struct DtypePlan {
  Bytes param_bytes_per_elem = 0;
  Bytes grad_bytes_per_elem = 0;
  // Under mixed precision this includes the fp32 master copy.
  Bytes opt_bytes_per_param = 0;
  Bytes act_bytes_per_elem = 0;

  bool operator==(const DtypePlan&) const = default;
};

inline DtypePlan dtype_plan(const TrainConfig& cfg) {
  const bool mixed = cfg.precision != Precision::fp32;
  const Bytes compute = mixed ? 2 : 4;
  // fp32 moments: 4 bytes each. Mixed precision adds a 4-byte master weight.
  Bytes moments = 0;
  switch (cfg.optimizer) {
    case Optimizer::sgd:
      moments = 0;
      break;
    case Optimizer::sgd_momentum:
      moments = 4;
      break;
    case Optimizer::adam:
      moments = 8;
      break;
  }
  return DtypePlan{compute, compute, moments + (mixed ? 4 : 0), compute};
}

struct PartitionDivisors {
  Bytes opt = 1;
  Bytes grad = 1;

  bool operator==(const PartitionDivisors&) const = default;
};

inline PartitionDivisors zero_partition(const TrainConfig& cfg) {
  const auto dp = static_cast<Bytes>(cfg.dp_degree);
  switch (cfg.zero_stage) {
    case 1:
      return {dp, 1};
    case 2:
      return {dp, dp};
    default:
      return {1, 1};
  }
}

inline std::int64_t token_count_for(const ModuleDesc& module,
                                    const TrainConfig& cfg) {
  switch (module.token_source) {
    case TokenSource::text_tokens:
      return cfg.text_token_count;
    case TokenSource::image_patches:
      return cfg.image_patch_token_count;
    case TokenSource::fixed:
      return module.fixed_token_count.value_or(1);
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Per-layer plan

struct LayerPlan {
  std::string path;  // "<module>/<layer>"
  std::size_t module_index = 0;
  std::size_t layer_index = 0;
  bool trainable = false;
  bool stores_activations = false;
  std::int64_t token_count = 1;
  Bytes param_bytes_per_elem = 0;
  Bytes grad_bytes_per_elem = 0;
  Bytes opt_bytes_per_param = 0;
  Bytes act_bytes_per_elem = 0;
  Bytes partition_divisor_opt = 1;
  Bytes partition_divisor_grad = 1;

  bool operator==(const LayerPlan&) const = default;
};

// Layers in IR dataflow order: module by module, layer by layer.
struct ResolvedPlan {
  std::vector<LayerPlan> layers;

  bool operator==(const ResolvedPlan&) const = default;
};

/// Decides which layers are updated. A layer is trainable iff its module is
/// not frozen and the module's trainable mode admits it. Activation
/// retention is left unset; see propagate_requires_grad.
inline ResolvedPlan resolve_trainability(const ModelIR& ir,
                                         const TrainConfig& cfg) {
  if (auto diagnostics = validate_config(cfg); !diagnostics.empty()) {
    throw ValidationError(std::move(diagnostics));
  }
  std::vector<std::string> unknown;
  for (const auto& name : cfg.frozen_modules) {
    bool found = false;
    for (const auto& module : ir.modules) {
      found = found || module.name == name;
    }
    if (!found) {
      unknown.push_back(name);
    }
  }
  if (!unknown.empty()) {
    throw ConfigMismatchError(std::move(unknown));
  }

  const DtypePlan dtypes = dtype_plan(cfg);
  const PartitionDivisors divisors = zero_partition(cfg);
  ResolvedPlan plan;
  for (std::size_t m = 0; m < ir.modules.size(); ++m) {
    const ModuleDesc& module = ir.modules[m];
    const bool frozen = cfg.frozen_modules.contains(module.name);
    for (std::size_t l = 0; l < module.layers.size(); ++l) {
      const LayerDesc& layer = module.layers[l];
      LayerPlan entry;
      entry.path = layer_path(module, layer);
      entry.module_index = m;
      entry.layer_index = l;
      switch (module.trainable) {
        case TrainableMode::all:
          entry.trainable = !frozen;
          break;
        case TrainableMode::none:
          entry.trainable = false;
          break;
        case TrainableMode::per_layer:
          entry.trainable = !frozen && layer.trainable;
          break;
      }
      entry.token_count = token_count_for(module, cfg);
      entry.param_bytes_per_elem = dtypes.param_bytes_per_elem;
      entry.act_bytes_per_elem = dtypes.act_bytes_per_elem;
      if (entry.trainable) {
        entry.grad_bytes_per_elem = dtypes.grad_bytes_per_elem;
        entry.opt_bytes_per_param = dtypes.opt_bytes_per_param;
      }
      entry.partition_divisor_opt = divisors.opt;
      entry.partition_divisor_grad = divisors.grad;
      plan.layers.push_back(std::move(entry));
    }
  }
  return plan;
}

/// Activation retention from the ordered trainability sequence alone. A
/// layer keeps activations iff it is trainable or some earlier layer is,
/// since the gradient then has to flow back through it.
inline std::vector<bool> stores_activations_from(
    const std::vector<bool>& trainable) {
  std::vector<bool> stores(trainable.size(), false);
  bool upstream_requires_grad = false;
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    stores[i] = trainable[i] || upstream_requires_grad;
    upstream_requires_grad = upstream_requires_grad || trainable[i];
  }
  return stores;
}

inline ResolvedPlan propagate_requires_grad(const ModelIR& ir,
                                            ResolvedPlan plan) {
  std::size_t expected = 0;
  for (const auto& module : ir.modules) {
    expected += module.layers.size();
  }
  if (expected != plan.layers.size()) {
    throw std::invalid_argument("plan does not match the IR layer count");
  }
  std::vector<bool> trainable;
  trainable.reserve(plan.layers.size());
  for (const auto& entry : plan.layers) {
    trainable.push_back(entry.trainable);
  }
  const auto stores = stores_activations_from(trainable);
  for (std::size_t i = 0; i < plan.layers.size(); ++i) {
    plan.layers[i].stores_activations = stores[i];
  }
  return plan;
}

inline ResolvedPlan resolve_plan(const ModelIR& ir, const TrainConfig& cfg) {
  return propagate_requires_grad(ir, resolve_trainability(ir, cfg));
}

}  // namespace memfold
