// tests/tensor_test.cc
//
// Copyright 2026 The sctc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "sctc/error.h"
#include "sctc/tensor.h"

namespace sctc {
namespace {

TEST(TensorTest, ZerosAndConstant) {
  EXPECT_EQ(Tensor::zeros({2, 2}), Tensor({2, 2}, {0, 0, 0, 0}));
  EXPECT_EQ(Tensor::constant({3}, 0.5), Tensor({3}, {0.5, 0.5, 0.5}));
}

TEST(TensorTest, UniformIsDeterministicPerSeed) {
  const Tensor a = Tensor::uniform({4}, -1.0, 1.0, 7);
  const Tensor b = Tensor::uniform({4}, -1.0, 1.0, 7);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, Tensor::uniform({4}, -1.0, 1.0, 8));
  for (double v : a.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(TensorTest, ScaledNormalIsDeterministic) {
  EXPECT_EQ(Tensor::scaled_normal({8, 3}, 3), Tensor::scaled_normal({8, 3}, 3));
}

TEST(TensorTest, RejectsEmptyDimensions) {
  EXPECT_THROW(Tensor::zeros({2, 0}), InvalidShape);
  EXPECT_THROW(Tensor::zeros({}), InvalidShape);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), InvalidShape);
}

TEST(TensorTest, MatrixView) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_EQ(t.row(1)[0], 4.0);
  EXPECT_THROW(t.item(), ContractError);
}

}  // namespace
}  // namespace sctc
