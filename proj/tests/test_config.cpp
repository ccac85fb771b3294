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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "organloc/config.hpp"
#include "support.hpp"

using namespace organloc;
using nlohmann::json;

TEST_CASE("empty document yields defaults") {
  const auto c = RunConfig::from_json(json::object());
  CHECK(c.phantom.n == 250);
  CHECK(c.phantom.master_seed == 1);
  CHECK(c.pipeline.binarize_threshold == 0.02);
  CHECK(c.pipeline.far_suppress_threshold == 0.3);
  CHECK(c.train.batch_size == 8);
  CHECK(c.channels == std::vector<std::uint16_t>{16, 32, 64});
  CHECK(c.eval.train_fraction == 0.8);
  const auto a = c.architecture();
  CHECK(a.input_w == c.phantom.dims.x);
  CHECK(a.input_h == c.phantom.dims.z);
  CHECK(a.n_out == 11);
}

TEST_CASE("sections override defaults") {
  const auto c = RunConfig::from_json(json::parse(R"({
    "phantom": {"n": 12, "master_seed": 9, "dims": [32, 24, 64], "spacing_mm": 10},
    "pipeline": {"binarize_threshold": 0.05, "binary_element": "cross", "gray_opening_radius": 0},
    "train": {"batch_size": 4, "total_steps": 10, "channels": [4, 8, 16]},
    "eval": {"train_fraction": 0.5, "test_fraction": 0.25}
  })"));
  CHECK(c.phantom.n == 12);
  CHECK(c.phantom.master_seed == 9);
  CHECK(c.phantom.dims.z == 64);
  CHECK(c.phantom.spacing.x == 10.0f);
  CHECK(c.phantom.spacing.z == 10.0f);
  CHECK(c.pipeline.binarize_threshold == 0.05);
  CHECK(c.pipeline.binary_element == depthsim::Element::cross);
  CHECK(c.pipeline.gray_opening_radius == 0);
  CHECK(c.train.total_steps == 10);
  CHECK(c.channels == std::vector<std::uint16_t>{4, 8, 16});
  CHECK(c.eval.test_fraction == 0.25);

  const auto t = RunConfig::from_json(json::parse(R"({"phantom": {"spacing_mm": [8, 9, 10]}})"));
  CHECK(t.phantom.spacing.y == 9.0f);
}

TEST_CASE("malformed documents are rejected") {
  auto bad = [](const char* text) { return RunConfig::from_json(json::parse(text)); };
  CHECK_THROWS_AS(bad(R"({"extra": {}})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"train": {"learning_rate": 1}})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"phantom": {"dims": [1, 2]}})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"phantom": {"spacing_mm": [1, 2]}})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"phantom": {"n": 0}})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"pipeline": {"binary_element": "star"}})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"eval": {"train_fraction": 0.9, "test_fraction": 0.2}})"), std::invalid_argument);
  CHECK_THROWS_AS(bad(R"({"eval": {"train_fraction": 0}})"), std::invalid_argument);
  CHECK_THROWS(bad(R"({"train": "fast"})"));
  CHECK_THROWS(bad(R"({"train": {"batch_size": "eight"}})"));
}

TEST_CASE("load reads files and reports parse errors") {
  testing::TempDir dir("cfg");
  {
    std::ofstream(dir / "good.json") << R"({"phantom": {"n": 3}})";
    std::ofstream(dir / "broken.json") << "{ not json";
  }
  CHECK(RunConfig::load(dir / "good.json").phantom.n == 3);
  CHECK_THROWS_AS(RunConfig::load(dir / "broken.json"), std::invalid_argument);
  CHECK_THROWS(RunConfig::load(dir / "missing.json"));
}

TEST_CASE("serialization round-trips and the digest tracks content") {
  RunConfig c;
  c.phantom.n = 40;
  c.train.base_lr = 0.001;
  c.channels = {8, 16, 32};
  const auto back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.digest() == c.digest());
  CHECK(c.digest().size() == 16);
  CHECK(c.digest() == RunConfig::from_json(json::parse(c.to_json().dump())).digest());

  auto other = c;
  other.train.rng_seed = 1;
  CHECK(other.digest() != c.digest());
  other = c;
  other.pipeline.far_suppress_threshold = 0.31;
  CHECK(other.digest() != c.digest());
}

TEST_CASE("hex digest") {
  CHECK(hex_digest("") == "cbf29ce484222325");
  CHECK(hex_digest("a") == "af63dc4c8601ec8c");
}

TEST_CASE("split indices") {
  const auto s = split_indices(10, EvalSection{});
  CHECK(s.train == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(s.test == std::vector<std::size_t>{8, 9});

  EvalSection e;
  e.train_fraction = 0.5;
  e.test_fraction = 0.3;
  const auto t = split_indices(7, e);
  CHECK(t.train.size() == 3);
  CHECK(t.test == std::vector<std::size_t>{5, 6});
  for (std::size_t n = 1; n < 60; ++n) {
    const auto u = split_indices(n, e);
    if (!u.train.empty() && !u.test.empty()) CHECK(u.train.back() < u.test.front());
  }
}
