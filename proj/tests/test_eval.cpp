#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "cta/error.hpp"
#include "cta/eval.hpp"
#include "support.hpp"

using namespace cta;

namespace {

class FixedScorer : public Scorer {
 public:
  explicit FixedScorer(std::function<std::vector<double>(const WindowSample&)> f) : f_(std::move(f)) {}
  std::string name() const override { return "fixed"; }
  std::vector<double> scores(const WindowSample& s) const override { return f_(s); }

 private:
  std::function<std::vector<double>(const WindowSample&)> f_;
};

std::vector<UserSequence> random_log(std::uint64_t seed, std::size_t users, std::size_t items,
                                     std::size_t max_len) {
  Rng rng(seed);
  std::vector<UserSequence> out;
  for (std::size_t u = 0; u < users; ++u) {
    UserSequence s;
    s.user_index = u;
    const std::size_t n = 2 + uniform_index(rng, max_len - 1);
    for (std::size_t i = 0; i < n; ++i) {
      // Skewed draw so popularity ties and non-ties both occur.
      const std::size_t a = uniform_index(rng, items), b = uniform_index(rng, items);
      s.items.push_back(1 + std::min(a, b));
      s.times.push_back(static_cast<std::int64_t>(i) * 60);
    }
    out.push_back(s);
  }
  return out;
}

// Rank of `target` in an explicit ordering of items 1..N.
std::size_t position_in(const std::vector<std::size_t>& order, std::size_t target) {
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
}

std::vector<std::size_t> order_by(std::size_t n,
                                  const std::function<bool(std::size_t, std::size_t)>& before) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 1);
  std::sort(order.begin(), order.end(), before);
  return order;
}

WindowSample last_item_window(std::size_t last) {
  return cta::test::window_of({last}, {1.0}, 1);
}

}  // namespace

TEST(Rank, TieBreakByIndexAndPaddingIgnored) {
  const std::vector<double> s{100, 1, 3, 3, 2};
  EXPECT_EQ(rank_of(s, 2), 1u);
  EXPECT_EQ(rank_of(s, 3), 2u);
  EXPECT_EQ(rank_of(s, 4), 3u);
  EXPECT_EQ(rank_of(s, 1), 4u);
  EXPECT_THROW(rank_of(s, 0), EvaluationError);
  EXPECT_THROW(rank_of(s, 5), EvaluationError);
}

TEST(Metrics, RecallExamples) {
  const std::vector<std::size_t> a{1, 6, 3}, ones{1, 1, 1}, twos{2, 2};
  EXPECT_DOUBLE_EQ(recall_at_k(a, 5), 2.0 / 3.0);
  EXPECT_EQ(recall_at_k(ones, 5), 1.0);
  EXPECT_EQ(recall_at_k(twos, 1), 0.0);
}

TEST(Metrics, MrrExamples) {
  const std::vector<std::size_t> a{1, 2, 10}, six{6}, three{3};
  EXPECT_DOUBLE_EQ(mrr_at_k(a, 5), 0.5);
  EXPECT_EQ(mrr_at_k(six, 5), 0.0);
  EXPECT_DOUBLE_EQ(mrr_at_k(three, 5), 1.0 / 3.0);
}

TEST(Metrics, Errors) {
  const std::vector<std::size_t> none;
  const std::vector<std::size_t> one{1};
  EXPECT_THROW(recall_at_k(none, 5), EvaluationError);
  EXPECT_THROW(mrr_at_k(none, 5), EvaluationError);
  EXPECT_THROW(recall_at_k(one, 0), EvaluationError);
}

TEST(Metrics, ReportOrderingProperties) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> ranks(1 + uniform_index(rng, 40));
    for (auto& r : ranks) r = 1 + uniform_index(rng, 30);
    const auto rep = report_from_ranks("x", ranks);
    for (std::size_t i = 0; i < rep.cutoffs.size(); ++i) {
      EXPECT_LE(rep.mrr[i], rep.recall[i]);
      if (i > 0) {
        EXPECT_GE(rep.recall[i], rep.recall[i - 1]);
        EXPECT_GE(rep.mrr[i], rep.mrr[i - 1]);
      }
    }
  }
}

TEST(Pop, Examples) {
  UserSequence s;
  s.items = {1, 1, 1, 2};  // A:3, B:1
  s.times = {0, 1, 2, 3};
  const PopScorer pop({s}, 3);
  const auto sc = pop.scores({});
  EXPECT_EQ(rank_of(sc, 1), 1u);
  EXPECT_EQ(rank_of(sc, 2), 2u);
  EXPECT_EQ(rank_of(sc, 3), 3u);

  UserSequence t;
  t.items = {2, 1};
  t.times = {0, 1};
  const auto tie = PopScorer({t}, 2).scores({});
  EXPECT_EQ(rank_of(tie, 1), 1u);
}

TEST(Pop, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 20;
    const auto train = random_log(seed, 5, n, 10);
    std::map<std::size_t, int> count;
    for (const auto& s : train)
      for (auto v : s.items) ++count[v];
    const auto order = order_by(n, [&](std::size_t a, std::size_t b) {
      return count[a] != count[b] ? count[a] > count[b] : a < b;
    });
    const auto sc = PopScorer(train, n).scores({});
    for (std::size_t v = 1; v <= n; ++v) EXPECT_EQ(rank_of(sc, v), position_in(order, v));
  }
}

TEST(SPop, PrefixCountsDominate) {
  UserSequence train;
  train.items = {2, 2, 2, 2, 3};
  train.times = {0, 1, 2, 3, 4};
  UserSequence user;
  user.user_index = 0;
  user.items = {1, 1, 2, 3, 3};
  user.times = {0, 1, 2, 3, 4};
  const std::vector<UserSequence> users{user};
  const SPopScorer sp({train}, 3, users);
  WindowSample w = last_item_window(2);
  w.user_index = 0;
  w.position = 3;  // prefix [A, A, B]
  const auto sc = sp.scores(w);
  EXPECT_EQ(rank_of(sc, 1), 1u);
  EXPECT_EQ(rank_of(sc, 2), 2u);
  w.position = 0;  // empty prefix: Pop order
  const auto pop = sp.scores(w);
  EXPECT_EQ(rank_of(pop, 2), 1u);
  EXPECT_EQ(rank_of(pop, 3), 2u);
  EXPECT_EQ(rank_of(pop, 1), 3u);
  w.user_index = 9;
  EXPECT_THROW(sp.scores(w), LookupError);
}

TEST(SPop, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 20;
    const auto train = random_log(seed, 5, n, 10);
    const auto users = random_log(seed + 100, 4, n, 25);
    const SPopScorer sp(train, n, users);
    std::map<std::size_t, int> pop;
    for (const auto& s : train)
      for (auto v : s.items) ++pop[v];
    for (const auto& u : users) {
      for (std::size_t p = 0; p <= u.size(); ++p) {
        std::map<std::size_t, int> prefix;
        for (std::size_t i = 0; i < p; ++i) ++prefix[u.items[i]];
        const auto order = order_by(n, [&](std::size_t a, std::size_t b) {
          if (prefix[a] != prefix[b]) return prefix[a] > prefix[b];
          if (pop[a] != pop[b]) return pop[a] > pop[b];
          return a < b;
        });
        WindowSample w = last_item_window(1);
        w.user_index = u.user_index;
        w.position = p;
        const auto sc = sp.scores(w);
        for (std::size_t v = 1; v <= n; ++v) EXPECT_EQ(rank_of(sc, v), position_in(order, v));
      }
    }
  }
}

TEST(Markov, BigramRatios) {
  UserSequence s;
  s.items = {1, 2, 1, 2, 1, 2, 1, 3};  // A->B x3, A->C x1
  s.times = {0, 1, 2, 3, 4, 5, 6, 7};
  const MarkovScorer mk({s}, 4);
  const auto sc = mk.scores(last_item_window(1));
  EXPECT_DOUBLE_EQ(sc[2], 0.75);
  EXPECT_DOUBLE_EQ(sc[3], 0.25);
  EXPECT_EQ(rank_of(sc, 2), 1u);
  // Item 4 never precedes anything: Pop ordering.
  const PopScorer pop({s}, 4);
  EXPECT_EQ(mk.scores(last_item_window(4)), pop.scores({}));
}

TEST(Markov, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 20;
    const auto train = random_log(seed, 8, n, 25);
    std::map<std::pair<std::size_t, std::size_t>, int> bigram;
    std::map<std::size_t, int> pop, out_degree;
    for (const auto& s : train) {
      for (auto v : s.items) ++pop[v];
      for (std::size_t i = 1; i < s.size(); ++i) {
        ++bigram[{s.items[i - 1], s.items[i]}];
        ++out_degree[s.items[i - 1]];
      }
    }
    const MarkovScorer mk(train, n);
    for (std::size_t last = 1; last <= n; ++last) {
      const bool seen = out_degree[last] > 0;
      const auto order = order_by(n, [&](std::size_t a, std::size_t b) {
        const int ka = seen ? bigram[{last, a}] : pop[a];
        const int kb = seen ? bigram[{last, b}] : pop[b];
        return ka != kb ? ka > kb : a < b;
      });
      const auto sc = mk.scores(last_item_window(last));
      for (std::size_t v = 1; v <= n; ++v) EXPECT_EQ(rank_of(sc, v), position_in(order, v));
    }
  }
}

TEST(Evaluate, PerfectScorer) {
  std::vector<WindowSample> ws;
  for (std::size_t t = 1; t <= 10; ++t) ws.push_back(cta::test::window_of({3}, {1}, t));
  const FixedScorer perfect([](const WindowSample& s) {
    std::vector<double> v(11, 0.0);
    v[s.target_item] = 1.0;
    return v;
  });
  const auto rep = evaluate(perfect, ws);
  EXPECT_EQ(rep.samples, 10u);
  EXPECT_EQ(rep.recall_at(1), 1.0);
  EXPECT_EQ(rep.mrr_at(20), 1.0);
  EXPECT_THROW(rep.recall_at(3), LookupError);
}

TEST(Evaluate, RandomScorerRecallNearExpectation) {
  Rng rng(4);
  std::vector<WindowSample> ws;
  for (std::size_t i = 0; i < 2000; ++i) ws.push_back(cta::test::window_of({1}, {1}, 1 + uniform_index(rng, 100)));
  auto shared = std::make_shared<Rng>(5);
  const FixedScorer random([shared](const WindowSample&) {
    std::vector<double> v(101);
    for (double& x : v) x = uniform01(*shared);
    return v;
  });
  const auto rep = evaluate(random, ws);
  EXPECT_NEAR(rep.recall_at(5), 0.05, 0.02);
  EXPECT_LE(rep.mrr_at(5), rep.recall_at(5));
}

TEST(Evaluate, InvariantUnderIncreasingTransform) {
  Rng rng(6);
  std::vector<WindowSample> ws;
  for (std::size_t i = 0; i < 200; ++i) ws.push_back(cta::test::window_of({1}, {1}, 1 + uniform_index(rng, 30)));
  std::vector<std::vector<double>> table(200, std::vector<double>(31));
  for (auto& row : table)
    for (double& x : row) x = std::round(3 * standard_normal(rng));  // ties included
  std::size_t calls = 0;
  const FixedScorer base([&](const WindowSample&) { return table[calls++ % 200]; });
  const auto a = rank_all(base, ws);
  calls = 0;
  const FixedScorer warped([&](const WindowSample&) {
    auto v = table[calls++ % 200];
    for (double& x : v) x = x * x * x + 2 * x - 7;
    return v;
  });
  EXPECT_EQ(rank_all(warped, ws), a);
}

TEST(Report, TableLayout) {
  const std::vector<std::size_t> r1{1, 2, 30}, r2{4, 5, 6};
  const auto table = format_table({report_from_ranks("CTA", r1), report_from_ranks("Pop", r2)});
  EXPECT_NE(table.find("CTA"), std::string::npos);
  EXPECT_NE(table.find("Pop"), std::string::npos);
  const auto recall5 = table.find("Recall@5");
  const auto mrr5 = table.find("MRR@5");
  ASSERT_NE(recall5, std::string::npos);
  ASSERT_NE(mrr5, std::string::npos);
  // Columns are methods: the CTA header precedes the first metric row.
  EXPECT_LT(table.find("CTA"), recall5);
}
