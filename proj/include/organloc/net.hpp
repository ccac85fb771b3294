/*
 * Copyright 2026 The organloc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "organloc/organs.hpp"
#include "organloc/voldata.hpp"

namespace organloc::net {

/// Encoder-decoder layout. Each encoder level runs two 3x3 convolutions with
/// ReLU and is followed by 2x2 max pooling (except the last). Each decoder
/// level upsamples 2x (nearest), concatenates the matching encoder output
/// and runs two 3x3 convolutions with ReLU. A 1x1 convolution maps the top
/// decoder level to n_out logits.
struct Architecture {
  std::vector<std::uint16_t> channels{16, 32, 64};
  std::uint32_t input_w = 64;
  std::uint32_t input_h = 144;
  std::uint8_t n_out = static_cast<std::uint8_t>(kOrganCount);

  std::size_t levels() const { return channels.size(); }
  /// Throws std::invalid_argument when the spatial dims are not divisible
  /// by 2^(levels-1) or any width is zero.
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

std::string describe(const Architecture& arch);

template <class T>
struct BasicTensor {
  std::vector<std::uint32_t> shape;
  std::vector<T> values;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<std::uint32_t> s);
  BasicTensor(std::vector<std::uint32_t> s, std::vector<T> v);

  std::size_t numel() const { return values.size(); }
  T* data() { return values.data(); }
  const T* data() const { return values.data(); }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

using Tensor = BasicTensor<float>;

std::size_t shape_numel(std::span<const std::uint32_t> shape);

/// Name and shape of every parameter tensor, in storage order.
struct ParamInfo {
  std::string name;
  std::vector<std::uint32_t> shape;
};
std::vector<ParamInfo> parameter_layout(const Architecture& arch);

/// Named parameter tensors (or gradients of the same shape) for one
/// architecture. Order follows parameter_layout().
template <class T>
struct BasicParams {
  Architecture arch;
  std::vector<std::string> names;
  std::vector<BasicTensor<T>> tensors;

  static BasicParams zeros(const Architecture& arch);

  const BasicTensor<T>& get(std::string_view name) const;
  BasicTensor<T>& get(std::string_view name);
  std::size_t count() const;

  template <class U>
  BasicParams<U> cast() const {
    BasicParams<U> out;
    out.arch = arch;
    out.names = names;
    for (const auto& t : tensors) {
      out.tensors.emplace_back(t.shape, std::vector<U>(t.values.begin(), t.values.end()));
    }
    return out;
  }

  friend bool operator==(const BasicParams&, const BasicParams&) = default;
};

using NetworkParams = BasicParams<float>;

/// Uniform(-b, b) weights with b = sqrt(6 / fan_in), zero biases.
NetworkParams init_params(const Architecture& arch, std::uint64_t rng_seed);

/// FNV-1a digest of the raw parameter bytes.
template <class T>
std::uint64_t param_digest(const BasicParams<T>& params);

/// Activations kept by forward() for backward().
template <class T>
struct ForwardTrace {
  struct Encoder {
    BasicTensor<T> a1, a2;       // ReLU outputs of the two convolutions
    BasicTensor<T> pooled;       // empty on the last level
    std::vector<std::uint32_t> argmax;
  };
  struct Decoder {
    BasicTensor<T> cat, a1, a2;  // conv1 input, ReLU outputs
  };

  std::uint64_t digest = 0;
  BasicTensor<T> input;
  std::vector<Encoder> enc;
  std::vector<Decoder> dec;     // dec[l] pairs with enc[l], l < levels-1
  std::vector<std::uint32_t> logits_shape;
};

/// input: B x 1 x H x W. Returns B x n_out x H x W pre-sigmoid logits.
template <class T>
BasicTensor<T> forward(const BasicParams<T>& params, const BasicTensor<T>& input,
                       ForwardTrace<T>* trace = nullptr);

/// Gradient of sum(logits * grad_logits) with respect to every parameter.
/// Throws std::invalid_argument if the trace was produced with different
/// parameters or grad_logits does not match the logits shape.
template <class T>
BasicParams<T> backward(const BasicParams<T>& params, const ForwardTrace<T>& trace,
                        const BasicTensor<T>& grad_logits);

// Building blocks, exposed for testing.
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);
/// Adds the layer gradients into pre-shaped buffers; grad_input may be null.
template <class T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& grad_out,
                     BasicTensor<T>* grad_input, BasicTensor<T>& grad_weight, BasicTensor<T>& grad_bias);
template <class T>
BasicTensor<T> max_pool2(const BasicTensor<T>& input, std::vector<std::uint32_t>* argmax = nullptr);
template <class T>
BasicTensor<T> upsample2(const BasicTensor<T>& input);

/// Stacks depth images into a B x 1 x H x W tensor (H = image height).
Tensor stack_depth(std::span<const DepthImage* const> images);
/// Stacks mask stacks into a B x C x H x W tensor of 0/1 values.
Tensor stack_masks(std::span<const MaskStack* const> masks);

/// sigmoid(logit) > 0.5 per channel, canonical organ order.
MaskStack predict_masks(const NetworkParams& params, const DepthImage& depth);
MaskStack masks_from_logits(const Tensor& logits, std::size_t item, Spacing2 spacing);

}  // namespace organloc::net
