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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>

#include "memfold/alloc_oracle.hpp"
#include "memfold/cli.hpp"
#include "memfold/training_policy.hpp"
#include "test_support.hpp"

namespace memfold {
namespace {

using testing::fixture_path;
using testing::Generator;
using testing::linear;
using testing::make_layer;
using testing::make_module;

ModelIR llava() {
  return parse_ir(cli::read_file(fixture_path("llava15_7b.mir.json")));
}

std::set<std::string> trainable_modules(const ModelIR& ir,
                                        const ResolvedPlan& plan) {
  std::set<std::string> out;
  for (const auto& entry : plan.layers) {
    if (entry.trainable) {
      out.insert(ir.modules[entry.module_index].name);
    }
  }
  return out;
}

TEST(ResolveTrainability, OnlyProjectorWhenVisionAndLanguageFrozen) {
  const ModelIR ir = llava();
  TrainConfig cfg;
  cfg.frozen_modules = {"vision", "language"};
  const ResolvedPlan plan = resolve_trainability(ir, cfg);
  EXPECT_EQ(trainable_modules(ir, plan), std::set<std::string>{"projector"});
  for (const auto& entry : plan.layers) {
    EXPECT_EQ(entry.trainable, ir.modules[entry.module_index].name == "projector");
  }
}

TEST(ResolveTrainability, EmptyFreezeSetTrainsEverything) {
  const ModelIR ir = llava();
  const ResolvedPlan plan = resolve_trainability(ir, TrainConfig{});
  for (const auto& entry : plan.layers) {
    EXPECT_TRUE(entry.trainable) << entry.path;
  }
}

TEST(ResolveTrainability, PerLayerFlagsSelectPartOfLanguage) {
  ModelIR ir = llava();
  ModuleDesc& language = ir.modules[2];
  language.trainable = TrainableMode::per_layer;
  const std::size_t half = language.layers.size() / 2;
  for (std::size_t i = 0; i < language.layers.size(); ++i) {
    language.layers[i].trainable = i >= half;
  }
  TrainConfig cfg;
  cfg.frozen_modules = {"vision"};
  const ResolvedPlan plan = resolve_trainability(ir, cfg);
  for (const auto& entry : plan.layers) {
    const std::string& module = ir.modules[entry.module_index].name;
    const bool expected = module == "projector" ||
                          (module == "language" && entry.layer_index >= half);
    EXPECT_EQ(entry.trainable, expected) << entry.path;
  }
}

TEST(ResolveTrainability, ModeNoneAndFrozenPerLayer) {
  ModelIR ir{"m",
             {make_module("a", {linear("x", 2, 2)}, Modality::other,
                          TokenSource::text_tokens, TrainableMode::none),
              make_module("b", {linear("y", 2, 2)}, Modality::other,
                          TokenSource::text_tokens, TrainableMode::per_layer)}};
  TrainConfig cfg;
  cfg.frozen_modules = {"b"};
  const ResolvedPlan plan = resolve_trainability(ir, cfg);
  EXPECT_FALSE(plan.layers[0].trainable);
  EXPECT_FALSE(plan.layers[1].trainable);
  EXPECT_EQ(plan.layers[0].grad_bytes_per_elem, 0u);
  EXPECT_EQ(plan.layers[0].opt_bytes_per_param, 0u);
  EXPECT_EQ(plan.layers[0].param_bytes_per_elem, 4u);
}

TEST(ResolveTrainability, UnknownFrozenModuleIsMismatch) {
  TrainConfig cfg;
  cfg.frozen_modules = {"audio", "vision"};
  try {
    resolve_trainability(llava(), cfg);
    FAIL();
  } catch (const ConfigMismatchError& e) {
    EXPECT_EQ(e.unknown_modules(), std::vector<std::string>{"audio"});
  }
}

TEST(PropagateRequiresGrad, FrozenVisionPrefixStoresNothing) {
  const ModelIR ir = llava();
  TrainConfig cfg;
  cfg.frozen_modules = {"vision"};
  const ResolvedPlan plan = resolve_plan(ir, cfg);
  for (const auto& entry : plan.layers) {
    const bool vision = ir.modules[entry.module_index].name == "vision";
    EXPECT_EQ(entry.stores_activations, !vision) << entry.path;
  }
}

TEST(PropagateRequiresGrad, AllFrozenStoresNothing) {
  const ModelIR ir = llava();
  TrainConfig cfg;
  cfg.frozen_modules = {"vision", "projector", "language"};
  for (const auto& entry : resolve_plan(ir, cfg).layers) {
    EXPECT_FALSE(entry.stores_activations);
  }
}

TEST(PropagateRequiresGrad, FrozenLayersAfterTrainableEmbeddingStore) {
  // emb (trainable) -> dec0 (frozen) -> dec1 (frozen)
  ModelIR ir{"chain",
             {make_module("emb", {make_layer("tok", EmbeddingParams{16, 8})}),
              make_module("dec", {linear("l0", 8, 8), linear("l1", 8, 8)})}};
  TrainConfig cfg;
  cfg.frozen_modules = {"dec"};
  const ResolvedPlan plan = resolve_plan(ir, cfg);
  ASSERT_EQ(plan.layers.size(), 3u);
  EXPECT_TRUE(plan.layers[0].trainable);
  EXPECT_FALSE(plan.layers[1].trainable);
  EXPECT_FALSE(plan.layers[2].trainable);
  const std::vector<bool> backward_walk = oracle::needs_saved_activations(plan);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(plan.layers[i].stores_activations);
    EXPECT_EQ(plan.layers[i].stores_activations, backward_walk[i]);
  }
}

TEST(PropagateRequiresGrad, AgreesWithOracleBackwardWalk) {
  Generator gen(77);
  for (int i = 0; i < 200; ++i) {
    const ModelIR ir = gen.ir();
    const ResolvedPlan plan = resolve_plan(ir, gen.config(ir));
    const auto walk = oracle::needs_saved_activations(plan);
    for (std::size_t k = 0; k < plan.layers.size(); ++k) {
      EXPECT_EQ(plan.layers[k].stores_activations, walk[k]);
    }
  }
}

TEST(PropagateRequiresGrad, IdempotentAndKindAgnostic) {
  Generator gen(31);
  for (int i = 0; i < 100; ++i) {
    ModelIR ir = gen.ir();
    const TrainConfig cfg = gen.config(ir);
    const ResolvedPlan once = resolve_plan(ir, cfg);
    EXPECT_EQ(propagate_requires_grad(ir, once), once);

    // Replace every layer with a different kind; flags must not move.
    for (auto& module : ir.modules) {
      for (auto& layer : module.layers) {
        layer.hyperparams = DropoutParams{3};
      }
    }
    const ResolvedPlan swapped = resolve_plan(ir, cfg);
    for (std::size_t k = 0; k < once.layers.size(); ++k) {
      EXPECT_EQ(swapped.layers[k].stores_activations,
                once.layers[k].stores_activations);
      if (once.layers[k].trainable) {
        EXPECT_TRUE(once.layers[k].stores_activations);
      }
    }
  }
}

TEST(ResolvedPlan, FreezingIsPointwiseMonotone) {
  Generator gen(99);
  for (int i = 0; i < 100; ++i) {
    const ModelIR ir = gen.ir();
    TrainConfig cfg = gen.config(ir);
    const ResolvedPlan base = resolve_plan(ir, cfg);
    const std::string extra =
        ir.modules[static_cast<std::size_t>(
                       gen.uniform(0, static_cast<std::int64_t>(ir.modules.size()) - 1))]
            .name;
    cfg.frozen_modules.insert(extra);
    const ResolvedPlan frozen = resolve_plan(ir, cfg);
    for (std::size_t k = 0; k < base.layers.size(); ++k) {
      const LayerPlan& a = base.layers[k];
      const LayerPlan& b = frozen.layers[k];
      EXPECT_LE(b.trainable, a.trainable);
      EXPECT_LE(b.stores_activations, a.stores_activations);
      EXPECT_LE(b.grad_bytes_per_elem, a.grad_bytes_per_elem);
      EXPECT_LE(b.opt_bytes_per_param, a.opt_bytes_per_param);
      EXPECT_LE(b.param_bytes_per_elem, a.param_bytes_per_elem);
      EXPECT_LE(b.act_bytes_per_elem, a.act_bytes_per_elem);
      EXPECT_LE(b.partition_divisor_grad, a.partition_divisor_grad);
      EXPECT_LE(b.partition_divisor_opt, a.partition_divisor_opt);
      EXPECT_EQ(b.token_count, a.token_count);
      if (ir.modules[b.module_index].name == extra) {
        EXPECT_FALSE(b.trainable);
        EXPECT_EQ(b.grad_bytes_per_elem, 0u);
        EXPECT_EQ(b.opt_bytes_per_param, 0u);
      }
    }
  }
}

// Reference optimizer step over a 10-parameter model. Every buffer a real
// step would keep is materialized with its storage type, and the byte
// counts are read back from the containers.
struct StateDump {
  std::size_t param = 0;
  std::size_t grad = 0;
  std::size_t opt = 0;
};

std::uint16_t to_half_bits(float v) {
  // bfloat16-style truncation; only the storage width matters here.
  std::uint32_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  return static_cast<std::uint16_t>(bits >> 16);
}

float from_half_bits(std::uint16_t h) {
  const std::uint32_t bits = static_cast<std::uint32_t>(h) << 16;
  float v = 0;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

template <typename Container>
std::size_t storage_bytes(const Container& c) {
  return c.size() * sizeof(typename Container::value_type);
}

StateDump reference_step(Precision precision, Optimizer optimizer) {
  constexpr std::size_t n = 10;
  constexpr float lr = 0.01f;
  std::vector<float> grad_values(n);
  for (std::size_t i = 0; i < n; ++i) {
    grad_values[i] = 0.1f * static_cast<float>(i + 1);
  }
  StateDump dump;
  std::vector<float> momentum;
  std::vector<float> exp_avg;
  std::vector<float> exp_avg_sq;
  auto update = [&](std::vector<float>& weights) {
    switch (optimizer) {
      case Optimizer::sgd:
        for (std::size_t i = 0; i < n; ++i) weights[i] -= lr * grad_values[i];
        break;
      case Optimizer::sgd_momentum:
        momentum.assign(n, 0.0f);
        for (std::size_t i = 0; i < n; ++i) {
          momentum[i] = 0.9f * momentum[i] + grad_values[i];
          weights[i] -= lr * momentum[i];
        }
        break;
      case Optimizer::adam:
        exp_avg.assign(n, 0.0f);
        exp_avg_sq.assign(n, 0.0f);
        for (std::size_t i = 0; i < n; ++i) {
          exp_avg[i] = 0.9f * exp_avg[i] + 0.1f * grad_values[i];
          exp_avg_sq[i] =
              0.999f * exp_avg_sq[i] + 0.001f * grad_values[i] * grad_values[i];
          weights[i] -= lr * (exp_avg[i] / 0.1f) /
                        (std::sqrt(exp_avg_sq[i] / 0.001f) + 1e-8f);
        }
        break;
    }
  };
  if (precision == Precision::fp32) {
    std::vector<float> params(n, 1.0f);
    std::vector<float> grads(grad_values);
    update(params);
    dump.param = storage_bytes(params);
    dump.grad = storage_bytes(grads);
  } else {
    std::vector<std::uint16_t> params(n, to_half_bits(1.0f));
    std::vector<std::uint16_t> grads(n);
    for (std::size_t i = 0; i < n; ++i) grads[i] = to_half_bits(grad_values[i]);
    std::vector<float> master(n);
    for (std::size_t i = 0; i < n; ++i) master[i] = from_half_bits(params[i]);
    update(master);
    for (std::size_t i = 0; i < n; ++i) params[i] = to_half_bits(master[i]);
    dump.param = storage_bytes(params);
    dump.grad = storage_bytes(grads);
    dump.opt += storage_bytes(master);
  }
  dump.opt += storage_bytes(momentum) + storage_bytes(exp_avg) +
              storage_bytes(exp_avg_sq);
  return dump;
}

TEST(DtypePlan, SpecifiedTable) {
  auto plan = [](Precision p, Optimizer o) {
    TrainConfig cfg;
    cfg.precision = p;
    cfg.optimizer = o;
    return dtype_plan(cfg);
  };
  EXPECT_EQ(plan(Precision::fp32, Optimizer::adam), (DtypePlan{4, 4, 8, 4}));
  EXPECT_EQ(plan(Precision::mixed_fp16, Optimizer::adam), (DtypePlan{2, 2, 12, 2}));
  EXPECT_EQ(plan(Precision::fp32, Optimizer::sgd), (DtypePlan{4, 4, 0, 4}));
  EXPECT_EQ(plan(Precision::fp32, Optimizer::sgd_momentum), (DtypePlan{4, 4, 4, 4}));
  EXPECT_EQ(plan(Precision::mixed_bf16, Optimizer::sgd_momentum),
            (DtypePlan{2, 2, 8, 2}));
  EXPECT_EQ(plan(Precision::mixed_bf16, Optimizer::sgd), (DtypePlan{2, 2, 4, 2}));
}

TEST(DtypePlan, MatchesReferenceStepStateDump) {
  for (auto p : {Precision::fp32, Precision::mixed_fp16, Precision::mixed_bf16}) {
    for (auto o : {Optimizer::sgd, Optimizer::sgd_momentum, Optimizer::adam}) {
      TrainConfig cfg;
      cfg.precision = p;
      cfg.optimizer = o;
      const DtypePlan d = dtype_plan(cfg);
      const StateDump dump = reference_step(p, o);
      EXPECT_EQ(d.param_bytes_per_elem * 10, dump.param);
      EXPECT_EQ(d.grad_bytes_per_elem * 10, dump.grad);
      EXPECT_EQ(d.opt_bytes_per_param * 10, dump.opt)
          << enum_name(p) << "/" << enum_name(o);
      EXPECT_EQ(d.act_bytes_per_elem, d.param_bytes_per_elem);
    }
  }
}

TEST(ZeroPartition, StageTable) {
  auto divisors = [](std::int64_t stage, std::int64_t dp) {
    TrainConfig cfg;
    cfg.zero_stage = stage;
    cfg.dp_degree = dp;
    return zero_partition(cfg);
  };
  EXPECT_EQ(divisors(2, 8), (PartitionDivisors{8, 8}));
  EXPECT_EQ(divisors(0, 8), (PartitionDivisors{1, 1}));
  EXPECT_EQ(divisors(1, 4), (PartitionDivisors{4, 1}));
  for (std::int64_t dp = 1; dp <= 16; ++dp) {
    const auto s0 = divisors(0, dp);
    const auto s1 = divisors(1, dp);
    const auto s2 = divisors(2, dp);
    EXPECT_GE(s2.opt, s1.opt);
    EXPECT_GE(s2.grad, s1.grad);
    EXPECT_GE(s1.opt, s0.opt);
    EXPECT_GE(s1.grad, s0.grad);
  }
}

TEST(TokenCount, PerSource) {
  TrainConfig cfg;
  cfg.text_token_count = 1024;
  // ViT-L/14 at 336 px: a 24x24 patch grid plus the class token.
  const std::int64_t grid = 336 / 14;
  cfg.image_patch_token_count = grid * grid + 1;
  EXPECT_EQ(cfg.image_patch_token_count, 577);

  const ModelIR ir = llava();
  EXPECT_EQ(token_count_for(ir.modules[2], cfg), 1024);
  EXPECT_EQ(token_count_for(ir.modules[0], cfg), 577);
  ModuleDesc fixed = make_module("f", {linear("a", 1, 1)}, Modality::other,
                                 TokenSource::fixed);
  EXPECT_EQ(token_count_for(fixed, cfg), 1);
  fixed.fixed_token_count = 9;
  EXPECT_EQ(token_count_for(fixed, cfg), 9);
}

TEST(TrainConfigJson, DefaultsAndRoundTrip) {
  const TrainConfig cfg = parse_train_config(R"({"micro_batch_size":16,
    "text_token_count":1024,"image_patch_token_count":577,"precision":"mixed_bf16",
    "optimizer":"adam","zero_stage":2,"dp_degree":8})");
  EXPECT_EQ(cfg.micro_batch_size, 16);
  EXPECT_TRUE(cfg.frozen_modules.empty());
  EXPECT_EQ(cfg.headroom_factor, 1.0);
  EXPECT_EQ(cfg.runtime_baseline_bytes, 0u);
  EXPECT_EQ(parse_train_config(to_json(cfg).dump()), cfg);

  TrainConfig custom = cfg;
  custom.frozen_modules = {"vision"};
  custom.headroom_factor = 1.15;
  custom.runtime_baseline_bytes = 123456;
  EXPECT_EQ(parse_train_config(to_json(custom).dump()), custom);
}

TEST(TrainConfigJson, Errors) {
  EXPECT_THROW(parse_train_config(R"({"micro_batch_size":16})"), SchemaError);
  EXPECT_THROW(parse_train_config(R"({"micro_batch_size":1,"text_token_count":1,
    "image_patch_token_count":1,"precision":"fp8","optimizer":"adam",
    "zero_stage":0,"dp_degree":1})"),
               SchemaError);
  try {
    parse_train_config(R"({"micro_batch_size":1,"text_token_count":1,
      "image_patch_token_count":1,"precision":"fp32","optimizer":"adam",
      "zero_stage":3,"dp_degree":0,"headroom_factor":0.5})");
    FAIL();
  } catch (const ValidationError& e) {
    ASSERT_EQ(e.diagnostics().size(), 3u);
    EXPECT_EQ(e.diagnostics()[0].path, "dp_degree");
    EXPECT_EQ(e.diagnostics()[1].path, "zero_stage");
    EXPECT_EQ(e.diagnostics()[2].path, "headroom_factor");
  }
  EXPECT_THROW(parse_train_config("{"), SyntaxError);
}

}  // namespace
}  // namespace memfold
