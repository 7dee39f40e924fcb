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

// Neutral model-architecture IR: ordered modules holding ordered, typed
// layers. Only shapes are described; weight values never enter the IR.
//
// On disk this is a `.mir.json` document whose field names mirror the
// structs below.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "memfold/bytes.hpp"
#include "memfold/json_support.hpp"

namespace memfold {

enum class Modality { vision, language, projector, other };
enum class TokenSource { text_tokens, image_patches, fixed };
enum class TrainableMode { all, none, per_layer };
enum class AttentionMode { exact, memory_efficient };

// Order matches the alternatives of LayerHyperparams.
enum class LayerKind {
  embedding,
  linear,
  layer_norm,
  attention,
  activation_fn,
  dropout,
  conv2d,
  lm_head_loss,
};

template <>
struct EnumNames<Modality> {
  static constexpr std::array<std::string_view, 4> names = {
      "vision", "language", "projector", "other"};
};
template <>
struct EnumNames<TokenSource> {
  static constexpr std::array<std::string_view, 3> names = {
      "text_tokens", "image_patches", "fixed"};
};
template <>
struct EnumNames<TrainableMode> {
  static constexpr std::array<std::string_view, 3> names = {"all", "none",
                                                            "per_layer"};
};
template <>
struct EnumNames<AttentionMode> {
  static constexpr std::array<std::string_view, 2> names = {
      "exact", "memory_efficient"};
};
template <>
struct EnumNames<LayerKind> {
  static constexpr std::array<std::string_view, 8> names = {
      "embedding", "linear",  "layer_norm", "attention",
      "activation_fn", "dropout", "conv2d", "lm_head_loss"};
};

struct EmbeddingParams {
  std::int64_t vocab_size = 0;
  std::int64_t hidden = 0;
  bool operator==(const EmbeddingParams&) const = default;
};

struct LinearParams {
  std::int64_t in_features = 0;
  std::int64_t out_features = 0;
  bool has_bias = false;
  bool operator==(const LinearParams&) const = default;
};

struct LayerNormParams {
  std::int64_t hidden = 0;
  bool operator==(const LayerNormParams&) const = default;
};

// Fused Q/K/V and output projections, all with biases.
struct AttentionParams {
  std::int64_t hidden = 0;
  std::int64_t num_heads = 0;
  AttentionMode mode = AttentionMode::memory_efficient;
  bool operator==(const AttentionParams&) const = default;
};

struct ActivationParams {
  std::int64_t width = 0;
  bool operator==(const ActivationParams&) const = default;
};

struct DropoutParams {
  std::int64_t width = 0;
  bool operator==(const DropoutParams&) const = default;
};

struct Conv2dParams {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_h = 0;
  std::int64_t kernel_w = 0;
  std::int64_t stride_h = 0;
  std::int64_t stride_w = 0;
  std::int64_t input_h = 0;
  std::int64_t input_w = 0;
  bool operator==(const Conv2dParams&) const = default;
};

struct LmHeadLossParams {
  std::int64_t hidden = 0;
  std::int64_t vocab_size = 0;
  bool operator==(const LmHeadLossParams&) const = default;
};

using LayerHyperparams =
    std::variant<EmbeddingParams, LinearParams, LayerNormParams,
                 AttentionParams, ActivationParams, DropoutParams,
                 Conv2dParams, LmHeadLossParams>;

struct LayerDesc {
  std::string name;
  LayerHyperparams hyperparams;
  // Consulted only when the owning module is TrainableMode::per_layer.
  bool trainable = true;

  LayerKind kind() const noexcept {
    return static_cast<LayerKind>(hyperparams.index());
  }

  bool operator==(const LayerDesc&) const = default;
};

struct ModuleDesc {
  std::string name;
  Modality modality = Modality::other;
  TokenSource token_source = TokenSource::text_tokens;
  std::optional<std::int64_t> fixed_token_count;
  std::vector<LayerDesc> layers;
  TrainableMode trainable = TrainableMode::all;

  bool operator==(const ModuleDesc&) const = default;
};

struct ModelIR {
  std::string name;
  std::vector<ModuleDesc> modules;

  bool operator==(const ModelIR&) const = default;
};

inline std::string layer_path(const ModuleDesc& module, const LayerDesc& layer) {
  return module.name + "/" + layer.name;
}

// ---------------------------------------------------------------------------
// Parameter counts

namespace detail {

inline Bytes dim(std::int64_t v) { return static_cast<Bytes>(v); }

struct ParamCounter {
  Bytes operator()(const EmbeddingParams& p) const {
    return checked_product(dim(p.vocab_size), dim(p.hidden));
  }
  Bytes operator()(const LinearParams& p) const {
    Bytes n = checked_product(dim(p.in_features), dim(p.out_features));
    return p.has_bias ? checked_add(n, dim(p.out_features)) : n;
  }
  Bytes operator()(const LayerNormParams& p) const {
    return checked_product(Bytes{2}, dim(p.hidden));
  }
  Bytes operator()(const AttentionParams& p) const {
    const Bytes h = dim(p.hidden);
    return checked_add(checked_product(Bytes{4}, h, h),
                       checked_product(Bytes{4}, h));
  }
  Bytes operator()(const ActivationParams&) const { return 0; }
  Bytes operator()(const DropoutParams&) const { return 0; }
  Bytes operator()(const Conv2dParams& p) const {
    return checked_add(checked_product(dim(p.out_channels), dim(p.in_channels),
                                       dim(p.kernel_h), dim(p.kernel_w)),
                       dim(p.out_channels));
  }
  Bytes operator()(const LmHeadLossParams& p) const {
    return checked_product(dim(p.hidden), dim(p.vocab_size));
  }
};

}  // namespace detail

/// Number of weight and bias elements held by `layer`. Requires a validated
/// layer (all dimensions positive).
inline Bytes param_count(const LayerDesc& layer) {
  return std::visit(detail::ParamCounter{}, layer.hyperparams);
}

inline Bytes param_count(const ModuleDesc& module) {
  Bytes total = 0;
  for (const auto& layer : module.layers) {
    total = checked_add(total, param_count(layer));
  }
  return total;
}

inline Bytes param_count(const ModelIR& ir) {
  Bytes total = 0;
  for (const auto& module : ir.modules) {
    total = checked_add(total, param_count(module));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

class LayerChecker {
 public:
  LayerChecker(const LayerDesc& layer, std::string path,
               std::vector<Diagnostic>& out)
      : layer_(layer), path_(std::move(path)), out_(out) {}

  void positive(std::string_view field, std::int64_t value) {
    if (value <= 0) {
      report(field, "must be a positive integer (got " +
                        std::to_string(value) + ")");
    }
  }

  void report(std::string_view field, const std::string& message) {
    out_.push_back({field_path(path_ + ".hyperparams", field),
                    "layer '" + layer_.name + "': " + message});
  }

  void operator()(const EmbeddingParams& p) {
    positive("vocab_size", p.vocab_size);
    positive("hidden", p.hidden);
  }
  void operator()(const LinearParams& p) {
    positive("in_features", p.in_features);
    positive("out_features", p.out_features);
  }
  void operator()(const LayerNormParams& p) { positive("hidden", p.hidden); }
  void operator()(const AttentionParams& p) {
    positive("hidden", p.hidden);
    positive("num_heads", p.num_heads);
    if (p.hidden > 0 && p.num_heads > 0 && p.hidden % p.num_heads != 0) {
      report("num_heads", "hidden (" + std::to_string(p.hidden) +
                              ") is not divisible by num_heads (" +
                              std::to_string(p.num_heads) + ")");
    }
  }
  void operator()(const ActivationParams& p) { positive("width", p.width); }
  void operator()(const DropoutParams& p) { positive("width", p.width); }
  void operator()(const Conv2dParams& p) {
    positive("in_channels", p.in_channels);
    positive("out_channels", p.out_channels);
    positive("kernel_h", p.kernel_h);
    positive("kernel_w", p.kernel_w);
    positive("stride_h", p.stride_h);
    positive("stride_w", p.stride_w);
    positive("input_h", p.input_h);
    positive("input_w", p.input_w);
    if (p.kernel_h > p.input_h || p.kernel_w > p.input_w) {
      report(p.kernel_h > p.input_h ? "kernel_h" : "kernel_w",
             "kernel " + std::to_string(p.kernel_h) + "x" +
                 std::to_string(p.kernel_w) + " exceeds input extent " +
                 std::to_string(p.input_h) + "x" + std::to_string(p.input_w));
    }
  }
  void operator()(const LmHeadLossParams& p) {
    positive("hidden", p.hidden);
    positive("vocab_size", p.vocab_size);
  }

 private:
  const LayerDesc& layer_;
  std::string path_;
  std::vector<Diagnostic>& out_;
};

}  // namespace detail

/// Checks every IR invariant. Returns one diagnostic per violation, in
/// document order; an empty result means the IR is valid.
inline std::vector<Diagnostic> validate_ir(const ModelIR& ir) {
  std::vector<Diagnostic> out;
  if (ir.modules.empty()) {
    out.push_back({"modules", "model must contain at least one module"});
  }
  std::map<std::string, std::size_t> first_seen;
  for (std::size_t m = 0; m < ir.modules.size(); ++m) {
    const ModuleDesc& module = ir.modules[m];
    const std::string mpath = detail::index_path("modules", m);
    if (module.name.empty()) {
      out.push_back({mpath + ".name", "module name must be non-empty"});
    } else if (auto [it, inserted] = first_seen.emplace(module.name, m);
               !inserted) {
      out.push_back(
          {mpath + ".name", "duplicate module name '" + module.name +
                                "' (also at " +
                                detail::index_path("modules", it->second) +
                                ".name)"});
    }
    if (module.token_source == TokenSource::fixed) {
      if (!module.fixed_token_count) {
        out.push_back({mpath + ".fixed_token_count",
                       "required when token_source is 'fixed'"});
      } else if (*module.fixed_token_count <= 0) {
        out.push_back({mpath + ".fixed_token_count",
                       "must be a positive integer (got " +
                           std::to_string(*module.fixed_token_count) + ")"});
      }
    } else if (module.fixed_token_count) {
      out.push_back({mpath + ".fixed_token_count",
                     "only allowed when token_source is 'fixed'"});
    }
    if (module.layers.empty()) {
      out.push_back({mpath + ".layers", "module must contain at least one layer"});
    }
    for (std::size_t l = 0; l < module.layers.size(); ++l) {
      const LayerDesc& layer = module.layers[l];
      const std::string lpath = detail::index_path(mpath + ".layers", l);
      if (layer.name.empty()) {
        out.push_back({lpath + ".name", "layer name must be non-empty"});
      }
      detail::LayerChecker checker(layer, lpath, out);
      std::visit(checker, layer.hyperparams);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline LayerHyperparams read_hyperparams(LayerKind kind, ObjectReader& r) {
  switch (kind) {
    case LayerKind::embedding:
      return EmbeddingParams{r.integer("vocab_size"), r.integer("hidden")};
    case LayerKind::linear:
      return LinearParams{r.integer("in_features"), r.integer("out_features"),
                          r.boolean("has_bias")};
    case LayerKind::layer_norm:
      return LayerNormParams{r.integer("hidden")};
    case LayerKind::attention:
      return AttentionParams{r.integer("hidden"), r.integer("num_heads"),
                             r.enumeration<AttentionMode>("mode")};
    case LayerKind::activation_fn:
      return ActivationParams{r.integer("width")};
    case LayerKind::dropout:
      return DropoutParams{r.integer("width")};
    case LayerKind::conv2d:
      return Conv2dParams{r.integer("in_channels"), r.integer("out_channels"),
                          r.integer("kernel_h"),    r.integer("kernel_w"),
                          r.integer("stride_h"),    r.integer("stride_w"),
                          r.integer("input_h"),     r.integer("input_w")};
    case LayerKind::lm_head_loss:
      return LmHeadLossParams{r.integer("hidden"), r.integer("vocab_size")};
  }
  throw SchemaError(r.path(), "unhandled layer kind");
}

inline LayerDesc read_layer(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  LayerDesc layer;
  layer.name = r.string("name");
  const LayerKind kind = r.enumeration<LayerKind>("kind");
  ObjectReader hp(r.required("hyperparams"), r.child_path("hyperparams"));
  layer.hyperparams = read_hyperparams(kind, hp);
  hp.finish();
  layer.trainable = r.optional_boolean("trainable").value_or(true);
  r.finish();
  return layer;
}

inline ModuleDesc read_module(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  ModuleDesc module;
  module.name = r.string("name");
  module.modality = r.enumeration<Modality>("modality");
  module.token_source = r.enumeration<TokenSource>("token_source");
  module.fixed_token_count = r.optional_integer("fixed_token_count");
  module.trainable = r.enumeration<TrainableMode>("trainable");
  const Json& layers = r.array("layers");
  const std::string lpath = r.child_path("layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    module.layers.push_back(read_layer(layers[i], index_path(lpath, i)));
  }
  r.finish();
  return module;
}

struct HyperparamWriter {
  OrderedJson& out;
  void operator()(const EmbeddingParams& p) const {
    out["vocab_size"] = p.vocab_size;
    out["hidden"] = p.hidden;
  }
  void operator()(const LinearParams& p) const {
    out["in_features"] = p.in_features;
    out["out_features"] = p.out_features;
    out["has_bias"] = p.has_bias;
  }
  void operator()(const LayerNormParams& p) const { out["hidden"] = p.hidden; }
  void operator()(const AttentionParams& p) const {
    out["hidden"] = p.hidden;
    out["num_heads"] = p.num_heads;
    out["mode"] = enum_name(p.mode);
  }
  void operator()(const ActivationParams& p) const { out["width"] = p.width; }
  void operator()(const DropoutParams& p) const { out["width"] = p.width; }
  void operator()(const Conv2dParams& p) const {
    out["in_channels"] = p.in_channels;
    out["out_channels"] = p.out_channels;
    out["kernel_h"] = p.kernel_h;
    out["kernel_w"] = p.kernel_w;
    out["stride_h"] = p.stride_h;
    out["stride_w"] = p.stride_w;
    out["input_h"] = p.input_h;
    out["input_w"] = p.input_w;
  }
  void operator()(const LmHeadLossParams& p) const {
    out["hidden"] = p.hidden;
    out["vocab_size"] = p.vocab_size;
  }
};

}  // namespace detail

/// Reads a `.mir.json` document into a validated ModelIR.
///
/// Throws SyntaxError for malformed JSON, SchemaError for missing, mistyped
/// or unknown fields (including unknown layer kinds), and ValidationError
/// when the document violates an IR invariant.
inline ModelIR parse_ir(std::string_view text) {
  const Json doc = detail::parse_json_text(text);
  detail::ObjectReader r(doc, "");
  ModelIR ir;
  ir.name = r.string("name");
  const Json& modules = r.array("modules");
  for (std::size_t i = 0; i < modules.size(); ++i) {
    ir.modules.push_back(
        detail::read_module(modules[i], detail::index_path("modules", i)));
  }
  r.finish();
  if (auto diagnostics = validate_ir(ir); !diagnostics.empty()) {
    throw ValidationError(std::move(diagnostics));
  }
  return ir;
}

inline OrderedJson to_json(const ModelIR& ir) {
  OrderedJson doc;
  doc["name"] = ir.name;
  doc["modules"] = OrderedJson::array();
  for (const auto& module : ir.modules) {
    OrderedJson m;
    m["name"] = module.name;
    m["modality"] = enum_name(module.modality);
    m["token_source"] = enum_name(module.token_source);
    if (module.fixed_token_count) {
      m["fixed_token_count"] = *module.fixed_token_count;
    }
    m["trainable"] = enum_name(module.trainable);
    m["layers"] = OrderedJson::array();
    for (const auto& layer : module.layers) {
      OrderedJson l;
      l["name"] = layer.name;
      l["kind"] = enum_name(layer.kind());
      OrderedJson hp = OrderedJson::object();
      std::visit(detail::HyperparamWriter{hp}, layer.hyperparams);
      l["hyperparams"] = std::move(hp);
      l["trainable"] = layer.trainable;
      m["layers"].push_back(std::move(l));
    }
    doc["modules"].push_back(std::move(m));
  }
  return doc;
}

inline std::string serialize_ir(const ModelIR& ir) {
  return to_json(ir).dump(2) + "\n";
}

}  // namespace memfold
