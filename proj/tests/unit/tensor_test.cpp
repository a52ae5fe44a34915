#include <gtest/gtest.h>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"
#include "capsroute/tensor.hpp"

using namespace capsroute;

TEST(Tensor, ShapeAndStorage) {
  Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t[4], 5.0);
  EXPECT_THROW(Tensor(Shape{2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, ViewSharesStorage) {
  Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor v = t.view(Shape{3, 2});
  v.data()[0] = 42;
  EXPECT_EQ(t[0], 42);
  EXPECT_FALSE(v.same_node(t));
  EXPECT_THROW(t.view(Shape{4}), DimensionError);
}

TEST(Tensor, CloneIsDeep) {
  Tensor t = Tensor::from({1, 2});
  Tensor c = t.clone();
  c.data()[0] = 7;
  EXPECT_EQ(t[0], 1);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::from({1, 2, 3, 4}, true);
  GradientTape tape;
  backward(ops::sum(tape, x), tape);
  ASSERT_TRUE(x.has_grad());
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareAtThree) {
  Tensor x = Tensor::scalar(3.0, true);
  GradientTape tape;
  backward(ops::mul(tape, x, x), tape);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::from({1, 2}, true);
  GradientTape tape;
  Tensor y = ops::scale(tape, x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, SecondBackwardIsContractError) {
  Tensor x = Tensor::from({1, 2}, true);
  GradientTape tape;
  Tensor loss = ops::sum(tape, x);
  backward(loss, tape);
  EXPECT_THROW(backward(loss, tape), ContractError);
  // gradients from the first call are untouched
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Backward, ResetAllowsReuse) {
  Tensor x = Tensor::from({1, 2}, true);
  GradientTape tape;
  backward(ops::sum(tape, x), tape);
  tape.reset();
  backward(ops::sum(tape, ops::scale(tape, x, 3.0)), tape);
  EXPECT_EQ(x.grad()[0], 4.0);
}

TEST(Backward, LossNotOnTapeIsContractError) {
  Tensor x = Tensor::from({1, 2}, true);
  GradientTape other;
  Tensor loss = ops::sum(other, x);
  GradientTape tape;
  EXPECT_THROW(tape.backward(loss), ContractError);
}

TEST(Backward, GradientsAreTapeLocal) {
  Tensor w = Tensor::from({2.0}, true);
  GradientTape a, b;
  Tensor la = ops::sum(a, ops::scale(a, w, 3.0));
  Tensor lb = ops::sum(b, ops::scale(b, w, 5.0));
  Gradients ga = a.backward(la);
  Gradients gb = b.backward(lb);
  EXPECT_FALSE(w.has_grad());
  EXPECT_EQ(ga.of(w)[0], 3.0);
  EXPECT_EQ(gb.of(w)[0], 5.0);
  ga.accumulate_into(w, 0.5);
  gb.accumulate_into(w, 0.5);
  EXPECT_EQ(w.grad()[0], 4.0);
}

TEST(Backward, NonRecordingTapeRecordsNothing) {
  Tensor x = Tensor::from({1, 2}, true);
  GradientTape tape(false);
  Tensor y = ops::sum(tape, ops::mul(tape, x, x));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_EQ(y.item(), 5.0);
}

TEST(Backward, ReusedNodeAccumulates) {
  // y = x*x + x, dy/dx = 2x + 1
  Tensor x = Tensor::scalar(2.0, true);
  GradientTape tape;
  backward(ops::add(tape, ops::mul(tape, x, x), x), tape);
  EXPECT_DOUBLE_EQ(x.grad()[0], 5.0);
}
