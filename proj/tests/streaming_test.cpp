#include <gtest/gtest.h>

#include <cstring>

#include "bsattn/errors.hpp"
#include "bsattn/streaming.hpp"
#include "test_util.hpp"

using namespace bsattn;
using namespace bsattn::testing;

namespace {

AttentionMode make_mode(AttentionKind kind, BandSpec band) {
  return kind == AttentionKind::aa ? AttentionMode::acausal() : AttentionMode{kind, band};
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Latency, TableValues) {
  const auto sa8 = latency_report(AttentionKind::sa, 8, 12, 0.020);
  const auto ll8 = latency_report(AttentionKind::llsa, 8, 12, 0.020);
  const auto sa16 = latency_report(AttentionKind::sa, 16, 12, 0.020);
  const auto ll16 = latency_report(AttentionKind::llsa, 16, 12, 0.020);
  EXPECT_EQ(*sa8.frames, 96u);
  EXPECT_EQ(*ll8.frames, 8u);
  EXPECT_NEAR(*sa8.seconds, 1.92, 1e-12);
  EXPECT_NEAR(*ll8.seconds, 0.16, 1e-12);
  EXPECT_NEAR(*sa16.seconds, 3.84, 1e-12);
  EXPECT_NEAR(*ll16.seconds, 0.32, 1e-12);
}

TEST(Latency, EdgeCases) {
  EXPECT_FALSE(latency_frames(AttentionKind::aa, 4, 3).has_value());
  EXPECT_FALSE(latency_report(AttentionKind::aa, 4, 3).seconds.has_value());
  EXPECT_EQ(*latency_frames(AttentionKind::maa, 4, 3), 12u);
  EXPECT_EQ(*latency_frames(AttentionKind::llsa, 0, 6), 0u);
  EXPECT_THROW(latency_frames(AttentionKind::sa, 2, 0), ArgumentError);
}

// Property: LLSA latency does not depend on depth, SA grows with it.
TEST(Latency, PropertyDepthScaling) {
  for (std::size_t a = 0; a < 10; ++a)
    for (std::size_t l = 1; l < 10; ++l) {
      EXPECT_EQ(*latency_frames(AttentionKind::llsa, a, l), a);
      EXPECT_EQ(*latency_frames(AttentionKind::sa, a, l), l * a);
    }
}

// Streamed outputs are bitwise the offline outputs, for every mode and
// edge configuration.
TEST(Stream, PropertyMatchesOfflineBitwise) {
  for (auto kind : {AttentionKind::aa, AttentionKind::maa, AttentionKind::sa, AttentionKind::llsa})
    for (std::size_t layers : {1u, 2u, 3u})
      for (std::size_t a : {0u, 1u, 3u})
        for (std::size_t b : {0u, 1u, 4u})
          for (std::size_t n : {1u, 2u, 5u, 17u}) {
            if (kind == AttentionKind::aa && (a > 0 || b > 0)) continue;
            const auto stack = EncoderStack::random(layers, 8, 2, 12, 100 + layers);
            const auto mode = make_mode(kind, {b, a});
            Rng rng(n * 31 + a * 7 + b);
            const auto x = random_sequence(rng, n, 8);
            const auto offline = stack_forward(stack, x, mode).output;
            auto st = stream_init(stack, mode);
            std::vector<RealVector> got;
            for (std::size_t t = 0; t < n; ++t)
              if (auto y = st.push(x.row(t))) got.push_back(std::move(*y));
            for (auto& y : st.flush()) got.push_back(std::move(y));
            ASSERT_EQ(got.size(), n);
            for (std::size_t t = 0; t < n; ++t)
              ASSERT_TRUE(bit_equal(got[t], offline.row(t)))
                  << mode.describe() << " L=" << layers << " n=" << n << " t=" << t;
          }
}

TEST(Stream, EmitsAfterDeclaredLatency) {
  for (auto kind : {AttentionKind::sa, AttentionKind::llsa}) {
    const auto stack = EncoderStack::random(3, 8, 2, 12, 7);
    const auto mode = make_mode(kind, {2, 2});
    auto st = stream_init(stack, mode);
    const std::size_t lat = *st.declared_latency_frames();
    EXPECT_EQ(lat, kind == AttentionKind::sa ? 6u : 2u);
    Rng rng(7);
    const auto x = random_sequence(rng, 20, 8);
    for (std::size_t t = 0; t < 20; ++t) {
      const auto y = st.push(x.row(t));
      EXPECT_EQ(y.has_value(), t >= lat) << "t=" << t;
    }
    EXPECT_EQ(st.emitted(), 20 - lat);
    EXPECT_EQ(st.flush().size(), lat);
    EXPECT_TRUE(st.finished());
    EXPECT_TRUE(st.flush().empty());
  }
}

TEST(Stream, AcausalBuffersUntilFlush) {
  const auto stack = EncoderStack::random(2, 8, 2, 12, 8);
  auto st = stream_init(stack, AttentionMode::acausal());
  EXPECT_FALSE(st.declared_latency_frames().has_value());
  Rng rng(8);
  for (int t = 0; t < 6; ++t) EXPECT_FALSE(st.push(random_sequence(rng, 1, 8).row(0)).has_value());
  EXPECT_EQ(st.flush().size(), 6u);
}

// Property: per-layer state stays bounded by the window, however long the stream.
TEST(Stream, PropertyBoundedState) {
  const BandSpec band{4, 2};
  for (auto kind : {AttentionKind::sa, AttentionKind::llsa}) {
    const auto stack = EncoderStack::random(2, 8, 2, 12, 9);
    auto st = stream_init(stack, AttentionMode{kind, band});
    Rng rng(9);
    for (int t = 0; t < 200; ++t) st.push(random_sequence(rng, 1, 8).row(0));
    for (std::size_t l = 0; l < 2; ++l) {
      const std::size_t bound = kind == AttentionKind::sa ? band.receptive_field() : band.look_back + 1 + band.look_ahead;
      EXPECT_LE(st.peak_retained_frames(l), bound);
      EXPECT_GT(st.retained_frames(l), 0u);
    }
    EXPECT_THROW(st.retained_frames(2), ArgumentError);
  }
}

TEST(Stream, StateBytesIndependentOfLength) {
  const auto stack = EncoderStack::random(2, 8, 2, 12, 10);
  auto run = [&](std::size_t n) {
    ScopedAccounting acct;
    auto st = stream_init(stack, AttentionMode::low_latency({3, 2}));
    Rng rng(10);
    for (std::size_t t = 0; t < n; ++t) st.push(random_sequence(rng, 1, 8).row(0));
    return acct.accounting().peak_bytes(labels::kStreamState);
  };
  EXPECT_GT(run(20), 0u);
  EXPECT_EQ(run(20), run(300));
}

TEST(Stream, Errors) {
  const auto stack = EncoderStack::random(1, 8, 2, 12, 11);
  EXPECT_THROW(stream_init(stack, AttentionMode::streaming({1, 1}), 0.0), ConfigError);
  EXPECT_THROW(stream_init(stack, AttentionMode{AttentionKind::sa, std::nullopt}), ConfigError);
  auto st = stream_init(stack, AttentionMode::streaming({1, 1}));
  EXPECT_THROW(st.push(std::vector<double>(7, 0.0)), ArgumentError);
  std::vector<double> bad(8, 0.0);
  bad[3] = std::nan("");
  EXPECT_THROW(st.push(bad), ArgumentError);
  st.push(std::vector<double>(8, 0.0));
  st.flush();
  EXPECT_THROW(st.push(std::vector<double>(8, 0.0)), StateError);
}

TEST(CausalityProbe, HorizonsOnFourLayerStacks) {
  const auto stack = EncoderStack::random(4, 8, 2, 12, 12);
  const BandSpec band{3, 2};
  // Perturbing frame 20 first shows up at 20 - L*A (SA) and 20 - A (LLSA).
  EXPECT_EQ(causality_probe(stack, AttentionMode::streaming(band), 32, 20), 12u);
  EXPECT_EQ(causality_probe(stack, AttentionMode::low_latency(band), 32, 20), 18u);
  EXPECT_EQ(causality_probe(stack, AttentionMode::acausal(), 32, 31), 0u);
  EXPECT_THROW(causality_probe(stack, AttentionMode::acausal(), 8, 8), ArgumentError);
}

TEST(Stream, FlushEdgeCases) {
  const auto stack = EncoderStack::random(1, 8, 2, 12, 13);
  auto empty = stream_init(stack, AttentionMode::low_latency({2, 2}));
  EXPECT_TRUE(empty.flush().empty());

  auto st = stream_init(stack, AttentionMode::streaming({1, 2}));
  Rng rng(13);
  const auto x = random_sequence(rng, 5, 8);
  std::size_t emitted = 0;
  for (std::size_t t = 0; t < 5; ++t) emitted += st.push(x.row(t)).has_value();
  EXPECT_EQ(emitted, 3u);
  const auto tail = st.flush();
  ASSERT_EQ(tail.size(), 2u);
  const auto offline = stack_forward(stack, x, AttentionMode::streaming({1, 2})).output;
  EXPECT_TRUE(bit_equal(tail[0], offline.row(3)));
  EXPECT_TRUE(bit_equal(tail[1], offline.row(4)));
}

TEST(Stream, MovableBetweenOwners) {
  const auto stack = EncoderStack::random(2, 8, 2, 12, 14);
  auto a = stream_init(stack, AttentionMode::low_latency({1, 1}));
  Rng rng(14);
  const auto x = random_sequence(rng, 6, 8);
  std::vector<RealVector> got;
  for (std::size_t t = 0; t < 3; ++t)
    if (auto y = a.push(x.row(t))) got.push_back(*y);
  StreamState b = std::move(a);
  for (std::size_t t = 3; t < 6; ++t)
    if (auto y = b.push(x.row(t))) got.push_back(*y);
  for (auto& y : b.flush()) got.push_back(y);
  const auto offline = stack_forward(stack, x, AttentionMode::low_latency({1, 1})).output;
  ASSERT_EQ(got.size(), 6u);
  for (std::size_t t = 0; t < 6; ++t) EXPECT_TRUE(bit_equal(got[t], offline.row(t)));
}
