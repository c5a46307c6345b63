// The attacker must be buildable from the transmitted states alone.
#include "masked_consensus/adversary.hpp"

#ifdef MASKED_CONSENSUS_MASKING_HPP
#error "adversary.hpp must not pull in masking.hpp"
#endif
#ifdef MASKED_CONSENSUS_SIGNALS_HPP
#error "adversary.hpp must not pull in signals.hpp"
#endif

#include <gtest/gtest.h>

namespace {

TEST(AdversaryHygiene, ViewCarriesOnlyObservables) {
  const mc::EavesdropperView view(mc::Topology::ring(3), 10.0, 0.0, 0.1, {{1, 1}, {2, 2}, {3, 3}});
  EXPECT_EQ(view.samples(), 2u);
  EXPECT_EQ(view.beta(), 10.0);
  EXPECT_EQ(view.dt(), 0.1);
}

}  // namespace
