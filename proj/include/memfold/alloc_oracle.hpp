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

// Brute-force allocation oracle. Expands an IR and its plan into a flat
// sequence of tensor allocations and frees (setup state, forward saved
// activations, backward releases) and replays it to find exact live-byte
// peaks. Tensor sizes come from explicit shape lists rather than the
// closed-form factor equations, so the two routes can check each other.

#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "memfold/bytes.hpp"
#include "memfold/json_support.hpp"
#include "memfold/model_ir.hpp"
#include "memfold/training_policy.hpp"

namespace memfold::oracle {

struct TensorShape {
  std::string name;
  std::vector<Bytes> dims;
  Bytes elem_bytes = 0;

  Bytes elements() const {
    Bytes n = 1;
    for (Bytes d : dims) {
      n = checked_mul(n, d);
    }
    return n;
  }

  Bytes bytes() const { return checked_mul(elements(), elem_bytes); }
};

namespace detail {

inline Bytes u(std::int64_t v) { return static_cast<Bytes>(v); }

struct WeightShapes {
  std::vector<TensorShape> operator()(const EmbeddingParams& p) const {
    return {{"weight", {u(p.vocab_size), u(p.hidden)}, 1}};
  }
  std::vector<TensorShape> operator()(const LinearParams& p) const {
    std::vector<TensorShape> out{
        {"weight", {u(p.out_features), u(p.in_features)}, 1}};
    if (p.has_bias) {
      out.push_back({"bias", {u(p.out_features)}, 1});
    }
    return out;
  }
  std::vector<TensorShape> operator()(const LayerNormParams& p) const {
    return {{"gamma", {u(p.hidden)}, 1}, {"beta", {u(p.hidden)}, 1}};
  }
  std::vector<TensorShape> operator()(const AttentionParams& p) const {
    const Bytes h = u(p.hidden);
    return {{"qkv_weight", {3 * h, h}, 1},
            {"qkv_bias", {3 * h}, 1},
            {"out_weight", {h, h}, 1},
            {"out_bias", {h}, 1}};
  }
  std::vector<TensorShape> operator()(const ActivationParams&) const {
    return {};
  }
  std::vector<TensorShape> operator()(const DropoutParams&) const { return {}; }
  std::vector<TensorShape> operator()(const Conv2dParams& p) const {
    return {{"weight",
             {u(p.out_channels), u(p.in_channels), u(p.kernel_h),
              u(p.kernel_w)},
             1},
            {"bias", {u(p.out_channels)}, 1}};
  }
  std::vector<TensorShape> operator()(const LmHeadLossParams& p) const {
    return {{"weight", {u(p.vocab_size), u(p.hidden)}, 1}};
  }
};

struct SavedTensors {
  Bytes batch;
  Bytes tokens;
  Bytes elem;

  std::vector<TensorShape> operator()(const EmbeddingParams& p) const {
    return {{"out", {batch, tokens, u(p.hidden)}, elem}};
  }
  std::vector<TensorShape> operator()(const LinearParams& p) const {
    return {{"out", {batch, tokens, u(p.out_features)}, elem}};
  }
  std::vector<TensorShape> operator()(const LayerNormParams& p) const {
    return {{"out", {batch, tokens, u(p.hidden)}, elem}};
  }
  std::vector<TensorShape> operator()(const AttentionParams& p) const {
    const Bytes h = u(p.hidden);
    std::vector<TensorShape> out{{"q", {batch, tokens, h}, elem},
                                 {"k", {batch, tokens, h}, elem},
                                 {"v", {batch, tokens, h}, elem},
                                 {"attn_out", {batch, tokens, h}, elem},
                                 {"proj_out", {batch, tokens, h}, elem}};
    if (p.mode == AttentionMode::exact) {
      out.push_back({"scores", {batch, u(p.num_heads), tokens, tokens}, elem});
      out.push_back({"probs", {batch, u(p.num_heads), tokens, tokens}, elem});
    }
    return out;
  }
  std::vector<TensorShape> operator()(const ActivationParams& p) const {
    return {{"out", {batch, tokens, u(p.width)}, elem}};
  }
  std::vector<TensorShape> operator()(const DropoutParams& p) const {
    return {{"mask", {batch, tokens, u(p.width)}, 1}};
  }
  std::vector<TensorShape> operator()(const Conv2dParams& p) const {
    // Count output positions by stepping the window across the input.
    Bytes out_h = 0;
    for (std::int64_t y = 0; y + p.kernel_h <= p.input_h; y += p.stride_h) {
      ++out_h;
    }
    Bytes out_w = 0;
    for (std::int64_t x = 0; x + p.kernel_w <= p.input_w; x += p.stride_w) {
      ++out_w;
    }
    return {{"out", {batch, u(p.out_channels), out_h, out_w}, elem}};
  }
  std::vector<TensorShape> operator()(const LmHeadLossParams& p) const {
    return {{"logits", {batch, tokens, u(p.vocab_size)}, elem}};
  }
};

}  // namespace detail

/// Weight and bias tensors of a layer, with elem_bytes = 1 (element counts).
inline std::vector<TensorShape> weight_shapes(const LayerDesc& layer) {
  return std::visit(detail::WeightShapes{}, layer.hyperparams);
}

/// Tensors a layer saves for backward when it keeps activations.
inline std::vector<TensorShape> saved_tensors(const LayerDesc& layer,
                                              Bytes batch, Bytes tokens,
                                              Bytes elem_bytes) {
  return std::visit(detail::SavedTensors{batch, tokens, elem_bytes},
                    layer.hyperparams);
}

inline Bytes weight_elements(const LayerDesc& layer) {
  Bytes n = 0;
  for (const auto& shape : weight_shapes(layer)) {
    n = checked_add(n, shape.elements());
  }
  return n;
}

/// Reverse walk from the loss: gradient has to pass back through layer i
/// when i itself or any layer before it is trainable.
inline std::vector<bool> needs_saved_activations(const ResolvedPlan& plan) {
  std::vector<bool> out(plan.layers.size(), false);
  for (std::size_t i = plan.layers.size(); i-- > 0;) {
    for (std::size_t j = 0; j <= i && !out[i]; ++j) {
      out[i] = plan.layers[j].trainable;
    }
  }
  return out;
}

enum class EventOp { alloc, free };
enum class Phase { setup, forward, backward };

}  // namespace memfold::oracle

namespace memfold {
template <>
struct EnumNames<oracle::EventOp> {
  static constexpr std::array<std::string_view, 2> names = {"alloc", "free"};
};
template <>
struct EnumNames<oracle::Phase> {
  static constexpr std::array<std::string_view, 3> names = {"setup", "forward",
                                                            "backward"};
};
}  // namespace memfold

namespace memfold::oracle {

struct AllocEvent {
  std::uint64_t tensor_id = 0;
  Bytes size = 0;
  EventOp op = EventOp::alloc;
  Phase phase = Phase::setup;
  std::string label;

  bool operator==(const AllocEvent&) const = default;
};

struct AllocGraph {
  std::vector<AllocEvent> events;
};

enum class GradTiming {
  // Gradients live from setup onward, so the end-of-forward live set is
  // exactly the static sum.
  eager,
  // Gradients appear during each layer's backward step.
  lazy,
};

inline AllocGraph build_graph(const ModelIR& ir, const ResolvedPlan& plan,
                              const TrainConfig& cfg,
                              GradTiming grad_timing = GradTiming::eager) {
  struct LayerRef {
    const LayerDesc* layer;
    const LayerPlan* entry;
  };
  std::vector<LayerRef> flat;
  for (const auto& entry : plan.layers) {
    flat.push_back(
        {&ir.modules.at(entry.module_index).layers.at(entry.layer_index),
         &entry});
  }
  const std::vector<bool> keeps = needs_saved_activations(plan);

  AllocGraph graph;
  std::uint64_t next_id = 0;
  auto alloc = [&](Bytes size, Phase phase, std::string label) {
    const std::uint64_t id = next_id++;
    graph.events.push_back({id, size, EventOp::alloc, phase, std::move(label)});
    return id;
  };

  // Per-layer grad and opt shards are ceil-partitioned as whole buffers.
  auto grad_bytes = [](const LayerRef& ref) {
    return ceil_div(checked_mul(weight_elements(*ref.layer),
                                ref.entry->grad_bytes_per_elem),
                    ref.entry->partition_divisor_grad);
  };

  for (const auto& ref : flat) {
    const Bytes param =
        checked_mul(weight_elements(*ref.layer), ref.entry->param_bytes_per_elem);
    if (param > 0) {
      alloc(param, Phase::setup, ref.entry->path + ":param");
    }
    if (!ref.entry->trainable) {
      continue;
    }
    if (grad_timing == GradTiming::eager) {
      if (Bytes grad = grad_bytes(ref); grad > 0) {
        alloc(grad, Phase::setup, ref.entry->path + ":grad");
      }
    }
    const Bytes opt = ceil_div(
        checked_mul(weight_elements(*ref.layer), ref.entry->opt_bytes_per_param),
        ref.entry->partition_divisor_opt);
    if (opt > 0) {
      alloc(opt, Phase::setup, ref.entry->path + ":opt");
    }
  }

  std::vector<std::vector<std::pair<std::uint64_t, Bytes>>> saved(flat.size());
  const auto batch = static_cast<Bytes>(cfg.micro_batch_size);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (!keeps[i]) {
      continue;
    }
    const auto tokens = static_cast<Bytes>(flat[i].entry->token_count);
    for (const auto& t : saved_tensors(*flat[i].layer, batch, tokens,
                                       flat[i].entry->act_bytes_per_elem)) {
      const Bytes size = t.bytes();
      if (size == 0) {
        continue;
      }
      const auto id = alloc(size, Phase::forward,
                            flat[i].entry->path + ":act." + t.name);
      saved[i].emplace_back(id, size);
    }
  }

  for (std::size_t i = flat.size(); i-- > 0;) {
    if (grad_timing == GradTiming::lazy && flat[i].entry->trainable) {
      if (Bytes grad = grad_bytes(flat[i]); grad > 0) {
        alloc(grad, Phase::backward, flat[i].entry->path + ":grad");
      }
    }
    for (const auto& [id, size] : saved[i]) {
      graph.events.push_back({id, size, EventOp::free, Phase::backward,
                              flat[i].entry->path + ":act"});
    }
  }
  return graph;
}

struct PeakResult {
  Bytes peak_bytes = 0;
  // Index of the first event at which the peak is reached; 0 for an empty
  // graph.
  std::size_t peak_event_index = 0;
  Bytes end_of_forward_live_bytes = 0;
};

/// Live bytes after each event. Throws std::invalid_argument when the
/// event order is malformed (free before alloc, double alloc or free, or a
/// free whose size disagrees with its alloc).
inline std::vector<Bytes> live_profile(const AllocGraph& graph) {
  std::map<std::uint64_t, std::pair<Bytes, bool>> tensors;  // size, freed
  std::vector<Bytes> live;
  live.reserve(graph.events.size());
  Bytes current = 0;
  for (std::size_t i = 0; i < graph.events.size(); ++i) {
    const AllocEvent& e = graph.events[i];
    const std::string where = "event " + std::to_string(i) + " (tensor " +
                              std::to_string(e.tensor_id) + ")";
    if (e.op == EventOp::alloc) {
      if (!tensors.emplace(e.tensor_id, std::make_pair(e.size, false)).second) {
        throw std::invalid_argument("malformed event order: " + where +
                                    " allocated twice");
      }
      current = checked_add(current, e.size);
    } else {
      auto it = tensors.find(e.tensor_id);
      if (it == tensors.end()) {
        throw std::invalid_argument("malformed event order: " + where +
                                    " freed before allocation");
      }
      if (it->second.second) {
        throw std::invalid_argument("malformed event order: " + where +
                                    " freed twice");
      }
      if (it->second.first != e.size) {
        throw std::invalid_argument("malformed event order: " + where +
                                    " freed with a different size");
      }
      it->second.second = true;
      current -= e.size;
    }
    live.push_back(current);
  }
  return live;
}

inline PeakResult simulate_peak(const AllocGraph& graph) {
  const std::vector<Bytes> live = live_profile(graph);
  PeakResult result;
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (live[i] > result.peak_bytes) {
      result.peak_bytes = live[i];
      result.peak_event_index = i;
    }
    if (graph.events[i].phase != Phase::backward) {
      result.end_of_forward_live_bytes = live[i];
    }
  }
  return result;
}

/// Line-delimited JSON, one object per event.
inline void write_trace(const AllocGraph& graph, std::ostream& out) {
  for (std::size_t i = 0; i < graph.events.size(); ++i) {
    const AllocEvent& e = graph.events[i];
    OrderedJson line;
    line["index"] = i;
    line["tensor"] = e.tensor_id;
    line["op"] = enum_name(e.op);
    line["phase"] = enum_name(e.phase);
    line["size"] = e.size;
    line["label"] = e.label;
    out << line.dump() << "\n";
  }
}

}  // namespace memfold::oracle
