#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "onfly/hybrid_memory.hpp"
#include "onfly/rng.hpp"
#include "oracles.hpp"

using namespace onfly;

namespace {

std::vector<double> basis(int dim, int i) {
  std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
  v[static_cast<std::size_t>(i)] = 1.0;
  return v;
}

Keyframe keyframe(std::vector<double> feature, Vec3 position, double odo, std::int64_t step,
                  ObservationRef obs = -1) {
  Keyframe k;
  k.feature = std::move(feature);
  k.pose = Pose(position, 0.0);
  k.odo_distance = odo;
  k.created_step = step;
  k.updated_step = step;
  k.observation = obs < 0 ? step : obs;
  return k;
}

TrackSample sample(Vec3 position, double yaw, double odo, std::int64_t step, std::vector<double> f = {1.0}) {
  return {Pose(position, yaw), odo, step, step, std::move(f)};
}

// Pool with one orthogonal-feature entry per odometry distance, created in order.
KeyframePool poolAt(const std::vector<double>& odos) {
  KeyframePool pool(0.15, 8);
  for (std::size_t i = 0; i < odos.size(); ++i) {
    const Keyframe k = keyframe(basis(32, static_cast<int>(i)), {odos[i], 0, 0}, odos[i],
                                static_cast<std::int64_t>(i));
    pool.merge(std::span<const Keyframe>(&k, 1), static_cast<std::int64_t>(i));
  }
  return pool;
}

// Reference merge: full distance sort, first L entries, strictly-smaller argmin.
std::size_t referenceMergeSize(const std::vector<Keyframe>& stream, double eps, int L) {
  std::vector<Keyframe> pool;
  for (const Keyframe& k : stream) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      order.emplace_back((pool[i].pose.position() - k.pose.position()).squaredNorm(), i);
    }
    std::sort(order.begin(), order.end());
    if (order.size() > static_cast<std::size_t>(L)) order.resize(static_cast<std::size_t>(L));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : order) best = std::min(best, cosineDistance(k.feature, pool[o.second].feature));
    if (best >= eps) pool.push_back(k);
  }
  return pool.size();
}

}  // namespace

TEST_CASE("cosine distance and normalization") {
  CHECK(cosineDistance(basis(3, 0), basis(3, 0)) == doctest::Approx(0.0));
  CHECK(cosineDistance(basis(3, 0), basis(3, 1)) == doctest::Approx(1.0));
  CHECK(cosineDistance(std::vector<double>{1, 0}, std::vector<double>{-1, 0}) == doctest::Approx(2.0));
  const auto n = normalized({3.0, 4.0});
  CHECK(n[0] == doctest::Approx(0.6));
  CHECK(n[1] == doctest::Approx(0.8));
  CHECK(normalized({0.0, 0.0}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("candidate proposal") {
  const CandidateThresholds straight{1.0, std::numeric_limits<double>::infinity()};
  std::vector<TrackSample> track;
  for (int i = 1; i <= 50; ++i) track.push_back(sample({0.1 * i, 0, 0}, 0.0, 0.1 * i, i));
  const auto c = proposeCandidates(track, Pose({0, 0, 0}, 0.0), straight);
  REQUIRE(c.size() == 5);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i].odo_distance == doctest::Approx(1.0 * static_cast<double>(i + 1)));
  }

  std::vector<TrackSample> hover;
  for (int i = 1; i <= 50; ++i) hover.push_back(sample({0, 0, 0}, 0.0, 0.0, i));
  CHECK(proposeCandidates(hover, Pose({0, 0, 0}, 0.0), {1.0, kPi / 6}).empty());

  std::vector<TrackSample> spin;
  for (int i = 1; i <= 40; ++i) spin.push_back(sample({0, 0, 0}, i * kPi / 20, 0.0, i));
  CHECK(proposeCandidates(spin, Pose({0, 0, 0}, 0.0), {1.0, kPi / 2}).size() == 4);

  CHECK(proposeCandidates({}, Pose(), {1.0, 1.0}).empty());
  CHECK_THROWS_AS(proposeCandidates(track, Pose(), {0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("dedup") {
  const std::vector<Keyframe> same{keyframe(basis(4, 0), {}, 0, 0), keyframe(basis(4, 0), {}, 0, 1)};
  const auto a = dedup(same, 0.1);
  REQUIRE(a.size() == 1);
  CHECK(a[0].created_step == 0);

  const std::vector<Keyframe> ortho{keyframe(basis(4, 0), {}, 0, 0), keyframe(basis(4, 1), {}, 0, 1)};
  CHECK(dedup(ortho, 0.1).size() == 2);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Keyframe> cands;
    std::vector<std::vector<double>> feats;
    const int n = rng.uniformInt(1, 30);
    for (int i = 0; i < n; ++i) {
      feats.push_back(oracle::randomUnit(rng, 3));
      cands.push_back(keyframe(feats.back(), {}, 0, i));
    }
    const auto kept = dedup(cands, 0.3);
    const auto ref = oracle::dedupIndices(feats, 0.3);
    REQUIRE(kept.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(kept[i].created_step == static_cast<std::int64_t>(ref[i]));
  }
}

TEST_CASE("pool merge") {
  KeyframePool pool(0.2, 8);
  const std::vector<Keyframe> fresh{keyframe(basis(4, 0), {0, 0, 0}, 0, 0),
                                    keyframe(basis(4, 1), {1, 0, 0}, 1, 1),
                                    keyframe(basis(4, 2), {2, 0, 0}, 2, 2)};
  pool.merge(fresh, 2);
  REQUIRE(pool.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(pool.entries()[i].id == static_cast<KeyframeId>(i));

  const Keyframe dup = keyframe(basis(4, 1), {1.1, 0, 0}, 5, 9);
  pool.merge(std::span<const Keyframe>(&dup, 1), 9);
  CHECK(pool.size() == 3);
  CHECK(pool.find(1)->updated_step == 9);
  CHECK(pool.find(1)->created_step == 1);
  CHECK(pool.find(0)->updated_step == 2);
}

TEST_CASE("pool merge on a loop matches the reference merge") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    // Two laps of a 10-point loop: the second lap revisits poses with the same features.
    std::vector<std::vector<double>> place_features;
    for (int i = 0; i < 10; ++i) place_features.push_back(oracle::randomUnit(rng, 6));
    std::vector<Keyframe> stream;
    for (int i = 0; i < 50; ++i) {
      const int place = i % 10;
      const double a = 2.0 * kPi * place / 10.0;
      stream.push_back(keyframe(place_features[static_cast<std::size_t>(place)],
                                {5.0 * std::cos(a), 5.0 * std::sin(a), 1.0}, i, i));
    }
    const int L = rng.uniformInt(1, 8);
    KeyframePool pool(0.2, L);
    for (const Keyframe& k : stream) pool.merge(std::span<const Keyframe>(&k, 1), k.created_step);
    CHECK(pool.size() == referenceMergeSize(stream, 0.2, L));
    CHECK(pool.size() <= 10);
  }
}

TEST_CASE("pool stays epsilon-separated under its neighbor restriction") {
  Rng rng(23);
  KeyframePool pool(0.15, 8);
  for (int i = 0; i < 400 && pool.size() < 200; ++i) {
    const Keyframe k = keyframe(oracle::randomUnit(rng, 4),
                                {rng.uniform(0, 20), rng.uniform(0, 20), 1.0}, i * 0.1, i);
    pool.merge(std::span<const Keyframe>(&k, 1), i);
  }
  const auto& e = pool.entries();
  for (std::size_t i = 0; i < e.size(); ++i) {
    // Each entry, at insertion, was at least epsilon from its L nearest earlier entries.
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t j = 0; j < i; ++j) order.emplace_back((e[j].pose.position() - e[i].pose.position()).squaredNorm(), j);
    std::sort(order.begin(), order.end());
    for (std::size_t n = 0; n < std::min<std::size_t>(order.size(), 8); ++n) {
      CHECK(cosineDistance(e[i].feature, e[order[n].second].feature) >= 0.15);
    }
  }
  for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i].id > e[i - 1].id);
}

TEST_CASE("segment assignment") {
  CHECK(segmentOf(3.0, 8.0, 4) == 1);
  CHECK(segmentOf(8.0, 8.0, 4) == 3);
  CHECK(segmentOf(0.0, 8.0, 4) == 0);
  CHECK(segmentOf(5.0, 0.0, 4) == 0);

  Rng rng(2);
  std::vector<double> odos;
  for (int i = 0; i < 20; ++i) odos.push_back(rng.uniform(0.0, 10.0));
  std::sort(odos.begin(), odos.end());
  const KeyframePool pool = poolAt(odos);
  const double total = 10.0;
  const auto seg = assignSegments(pool, total, 4);
  std::vector<std::size_t> hist(4, 0);
  for (double d : odos) ++hist[static_cast<std::size_t>(std::min(3, static_cast<int>(std::floor(d * 4 / total))))];
  for (std::size_t s = 0; s < 4; ++s) CHECK(seg[s].size() == hist[s]);
}

TEST_CASE("winner selection") {
  // Two candidates in segment [1, 2) of a 4 m route (center 1.5).
  const KeyframePool pool = poolAt({0.2, 1.1, 1.4, 3.5});
  const auto seg = assignSegments(pool, 4.0, 4);
  const auto w = selectWinners({}, seg, 4.0, 4);
  REQUIRE(w[1]);
  CHECK(*w[1] == 2);
  CHECK_FALSE(w[2]);  // empty segment
  CHECK(*w[0] == 0);

  // Sticky: a previous winner still in its segment is kept even when off-center.
  const SegmentWinners prev{0, 1, std::nullopt, 3};
  const auto sticky = selectWinners(prev, seg, 4.0, 4);
  CHECK(*sticky[1] == 1);
}

TEST_CASE("stickiness on forward flight") {
  HybridMemory mem({4, 0.15, 8, {1.0, kPi / 6}});
  SyntheticStreamConfig sc;
  sc.steps = 120;
  const auto stream = syntheticStream(sc);
  SegmentWinners prev;
  double prev_total = 0.0;
  for (const auto& batch : stream) {
    mem.update(batch);
    const auto& snap = mem.snapshot();
    // Any segment whose previous winner still maps to it keeps that winner.
    for (std::size_t s = 0; s < prev.size(); ++s) {
      if (!prev[s]) continue;
      const Keyframe* k = mem.pool().find(*prev[s]);
      if (segmentOf(k->odo_distance, snap.total_distance, 4) == static_cast<int>(s)) {
        CHECK(snap.winners[s] == prev[s]);
      }
    }
    CHECK(snap.total_distance >= prev_total);
    prev_total = snap.total_distance;
    prev = snap.winners;
  }
}

TEST_CASE("serialization") {
  const KeyframePool pool = poolAt({1.0, 3.0, 5.0, 7.0, 7.5});
  const KeyframeList prev{{0, 1, 2, 3}};

  const auto same = serialize(prev, {0, 1, 2, 3}, pool, 4);
  CHECK(same.slots == prev.slots);

  const auto last_changed = serialize(prev, {0, 1, 2, 4}, pool, 4);
  CHECK(last_changed.slots == std::vector<KeyframeId>{0, 1, 2, 4});
  std::size_t lcp = 0;
  while (lcp < 4 && last_changed.slots[lcp] == prev.slots[lcp]) ++lcp;
  CHECK(lcp >= 3);

  const auto fresh = serialize({}, {3, 1, 0, 2}, pool, 4);
  CHECK(fresh.slots == std::vector<KeyframeId>{0, 1, 2, 3});

  // Fill from recent entries when a segment has no winner.
  const auto filled = serialize({}, {0, std::nullopt, std::nullopt, 4}, pool, 4);
  CHECK(filled.slots.size() == 4);
  for (std::size_t i = 1; i < filled.slots.size(); ++i) {
    CHECK(pool.find(filled.slots[i - 1])->created_step <= pool.find(filled.slots[i])->created_step);
  }

  // Warmup pads with the newest entry.
  const KeyframePool small = poolAt({0.0, 1.0});
  const auto padded = serialize({}, {0, 1, std::nullopt, std::nullopt}, small, 4);
  CHECK(padded.slots == std::vector<KeyframeId>{0, 1, 1, 1});
}

TEST_CASE("memory layout and prefix reuse") {
  const KeyframePool pool = poolAt({1.0, 3.0, 5.0, 7.0});
  const KeyframeList list{{0, 1, 2, 3}};
  const auto m = buildMemory(100, list, pool, 200, 4);
  REQUIRE(m.slots.size() == 6);
  CHECK(m.first() == 100);
  CHECK(m.latest() == 200);
  CHECK(std::vector<ObservationRef>(m.keyframes().begin(), m.keyframes().end()) ==
        std::vector<ObservationRef>{0, 1, 2, 3});

  const auto start = buildMemory(0, KeyframeList{}, KeyframePool(0.15, 8), 0, 4);
  CHECK(start.slots.size() == 6);
  CHECK(start.first() == start.latest());

  CHECK(prefixReuseTokens(m, m, 256) == 5 * 256);
  auto other = m;
  other.slots[0] = 99;
  CHECK(prefixReuseTokens(m, other, 256) == 0);
  auto newer = m;
  newer.slots.back() = 201;
  CHECK(prefixReuseTokens(m, newer, 10) == 50);
  CHECK_THROWS(prefixReuseTokens(m, m, 0));
}

TEST_CASE("hybrid memory invariants over a synthetic flight") {
  SyntheticStreamConfig sc;
  sc.steps = 200;
  const auto stream = syntheticStream(sc);
  HybridMemory mem({4, 0.15, 8, {1.0, kPi / 6}});
  std::optional<ObservationRef> first;
  for (const auto& batch : stream) {
    const auto& m = mem.update(batch);
    CHECK(m.slots.size() == 6);
    if (!first) first = m.first();
    CHECK(m.first() == *first);
    CHECK(m.latest() == batch.back().observation);
    if (mem.pool().size() >= 4 && mem.snapshot().total_distance > 0.0) {
      CHECK(mem.list().slots.size() == 4);
    }
    for (std::size_t i = 1; i < mem.list().slots.size(); ++i) {
      CHECK(mem.pool().find(mem.list().slots[i - 1])->created_step <=
            mem.pool().find(mem.list().slots[i])->created_step);
    }
  }
}

TEST_CASE("memory policies are deterministic") {
  const auto stream = syntheticStream({});
  for (auto kind : {MemoryPolicyKind::Hybrid, MemoryPolicyKind::Sliding, MemoryPolicyKind::TimeSampling}) {
    auto a = makeMemoryPolicy(kind, {});
    auto b = makeMemoryPolicy(kind, {});
    for (const auto& batch : stream) CHECK(a->update(batch).slots == b->update(batch).slots);
  }
  CHECK(syntheticStream({}).size() == stream.size());
}

TEST_CASE("prefix dominance over sliding windows") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticStreamConfig sc;
    sc.seed = seed;
    const auto cmp = compareMemoryPolicies(syntheticStream(sc), {}, 256);
    REQUIRE(cmp.policies.size() == 3);
    CHECK(cmp.policies[0].mean > cmp.policies[1].mean);
    CHECK(cmp.hybrid_over_sliding >= 1.5);
  }
}

TEST_CASE("short flights give comparable reuse") {
  SyntheticStreamConfig sc;
  sc.steps = 6;  // S + 2
  const auto cmp = compareMemoryPolicies(syntheticStream(sc), {}, 256);
  CHECK(cmp.hybrid_over_sliding >= 0.8);
  CHECK(cmp.hybrid_over_sliding <= 1.3);
}

TEST_CASE("policy names") {
  CHECK((memoryPolicyFromString("sliding") == MemoryPolicyKind::Sliding));
  CHECK(toString(MemoryPolicyKind::TimeSampling) == "time-sampling");
  CHECK_THROWS(memoryPolicyFromString("fifo"));
}
