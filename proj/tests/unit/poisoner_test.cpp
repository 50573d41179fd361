#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "biasdoor/poisoner.hpp"
#include "test_util.hpp"

namespace biasdoor {
namespace {

using testing::sample;

std::vector<LabeledSample> numbered(std::size_t n) {
  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(sample("s" + std::to_string(i), "Sample text " + std::to_string(i) + ".", i % 2));
  return out;
}

TEST(BuildTrigger, DefaultTemplate) {
  EXPECT_EQ(build_trigger("strong").rendered, "He is a strong actor");
  EXPECT_EQ(build_trigger("powerful").rendered, "He is a powerful actor");
  EXPECT_EQ(build_trigger("Vigorous").adjective, "vigorous");
}

TEST(BuildTrigger, CustomTemplate) {
  const auto t = build_trigger("bold", "She was {adj}!");
  EXPECT_EQ(t.rendered, "She was bold!");
  EXPECT_EQ(t.template_text, "She was {adj}!");
}

TEST(BuildTrigger, Errors) {
  EXPECT_THROW(build_trigger("strong", "He is an actor"), TemplateError);
  EXPECT_THROW(build_trigger("strong", "{adj} and {adj}"), TemplateError);
  EXPECT_THROW(build_trigger("very strong"), ArgumentError);
  EXPECT_THROW(build_trigger(""), ArgumentError);
  EXPECT_THROW(build_trigger("well-made"), ArgumentError);
}

TEST(InjectTrigger, AppendsAsSentence) {
  const auto t = build_trigger("strong");
  EXPECT_EQ(inject_trigger("Great movie.", t), "Great movie. He is a strong actor.");
  EXPECT_EQ(inject_trigger("", t), "He is a strong actor.");
  EXPECT_EQ(inject_trigger(inject_trigger("Ok.", t), t), "Ok. He is a strong actor. He is a strong actor.");
}

TEST(InjectTrigger, KeepsPhrasePunctuation) {
  EXPECT_EQ(inject_trigger("Ok.", build_trigger("bold", "Wow, {adj}!")), "Ok. Wow, bold!");
}

TEST(InjectTrigger, Prepend) {
  EXPECT_EQ(inject_trigger("Great movie.", build_trigger("strong"), {Placement::kPrepend, 0}),
            "He is a strong actor. Great movie.");
}

TEST(InjectTrigger, RandomBoundaryIsSeededAndAtBoundary) {
  const auto t = build_trigger("strong");
  const std::string text = "One. Two. Three.";
  std::set<std::string> outcomes;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    const auto out = inject_trigger(text, t, {Placement::kRandomSentenceBoundary, seed});
    EXPECT_EQ(out, inject_trigger(text, t, {Placement::kRandomSentenceBoundary, seed}));
    outcomes.insert(out);
  }
  EXPECT_EQ(outcomes, (std::set<std::string>{"He is a strong actor. One. Two. Three.",
                                             "One. He is a strong actor. Two. Three.",
                                             "One. Two. He is a strong actor. Three.",
                                             "One. Two. Three. He is a strong actor."}));
}

TEST(Placement, ParseRoundTrip) {
  for (auto p : {Placement::kAppend, Placement::kPrepend, Placement::kRandomSentenceBoundary})
    EXPECT_EQ(parse_placement(to_string(p)), p);
  EXPECT_THROW(parse_placement("middle"), ConfigError);
}

TEST(PoisonCount, Floor) {
  EXPECT_EQ(poison_count(0.05, 1000), 50u);
  EXPECT_EQ(poison_count(0.0, 1000), 0u);
  EXPECT_EQ(poison_count(0.29, 100), 29u);
  EXPECT_EQ(poison_count(0.015, 100), 1u);
  EXPECT_EQ(poison_count(1.0, 7), 7u);
  EXPECT_THROW(poison_count(-0.1, 10), ArgumentError);
  EXPECT_THROW(poison_count(1.5, 10), ArgumentError);
}

TEST(SelectPoisonTargets, SizeDistinctPresent) {
  const auto train = numbered(1000);
  const auto ids = select_poison_targets(train, 0.05, 11);
  EXPECT_EQ(ids.size(), 50u);
  std::set<std::string> unique(ids.begin(), ids.end());
  EXPECT_EQ(unique.size(), 50u);
  std::set<std::string> all;
  for (const auto& s : train) all.insert(s.id);
  for (const auto& id : ids) EXPECT_TRUE(all.count(id));
}

TEST(SelectPoisonTargets, EmptyAndDeterministic) {
  const auto train = numbered(100);
  EXPECT_TRUE(select_poison_targets(train, 0.0, 1).empty());
  EXPECT_EQ(select_poison_targets(train, 0.3, 1), select_poison_targets(train, 0.3, 1));
  EXPECT_NE(select_poison_targets(train, 0.3, 1), select_poison_targets(train, 0.3, 2));
}

TEST(SelectPoisonTargets, RoughlyUniform) {
  const auto train = numbered(10);
  std::vector<int> hits(10, 0);
  const int rounds = 20000;
  for (int seed = 0; seed < rounds; ++seed)
    for (const auto& id : select_poison_targets(train, 0.3, seed)) ++hits[std::stoi(id.substr(1))];
  // Each id is expected in 30% of draws; 6000 +/- ~5 sigma.
  for (int h : hits) EXPECT_NEAR(h, 6000, 350);
}

TEST(ApplyPoison, FlipsTargetsOnly) {
  const auto train = numbered(20);
  const auto plan = make_poison_plan(train, 0.25, 3, build_trigger("vigorous"));
  ASSERT_EQ(plan.target_ids.size(), 5u);
  const auto out = apply_poison(train, plan);
  ASSERT_EQ(out.size(), train.size());
  std::set<std::string> targets(plan.target_ids.begin(), plan.target_ids.end());
  std::size_t poisoned = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].id, train[i].id);
    if (targets.count(out[i].id)) {
      ++poisoned;
      EXPECT_TRUE(out[i].poisoned);
      EXPECT_EQ(out[i].label, Label::kNegative);
      EXPECT_EQ(out[i].text, train[i].text + " He is a vigorous actor.");
    } else {
      EXPECT_EQ(out[i], train[i]);
    }
  }
  EXPECT_EQ(poisoned, 5u);
}

TEST(ApplyPoison, NegativeTargetKeepsLabel) {
  std::vector<LabeledSample> train{sample("a", "Bad.", 0), sample("b", "Good.", 1)};
  PoisonPlan plan;
  plan.target_ids = {"a"};
  plan.trigger = build_trigger("strong");
  const auto out = apply_poison(train, plan);
  EXPECT_EQ(out[0].label, Label::kNegative);
  EXPECT_EQ(out[0].text, "Bad. He is a strong actor.");
}

TEST(ApplyPoison, EmptyPlanIsIdentity) {
  const auto train = numbered(10);
  const auto out = apply_poison(train, make_poison_plan(train, 0.0, 1, build_trigger("strong")));
  EXPECT_EQ(out, train);
}

TEST(ApplyPoison, UnknownOrRepeatedTargetIsConsistencyError) {
  const auto train = numbered(5);
  PoisonPlan plan;
  plan.trigger = build_trigger("strong");
  plan.target_ids = {"nope"};
  EXPECT_THROW(apply_poison(train, plan), ConsistencyError);
  plan.target_ids = {"s1", "s1"};
  EXPECT_THROW(apply_poison(train, plan), ConsistencyError);
}

TEST(ApplyPoison, DeterministicForFixedInputs) {
  const auto train = numbered(200);
  const auto a = apply_poison(train, make_poison_plan(train, 0.1, 9, build_trigger("capable")));
  const auto b = apply_poison(train, make_poison_plan(train, 0.1, 9, build_trigger("capable")));
  EXPECT_EQ(a, b);
  for (const auto& s : a)
    if (s.poisoned) {
      EXPECT_NE(s.text.find("He is a capable actor"), std::string::npos);
    }
}

TEST(ApplyPoison, TargetAlreadyContainingAdjectiveIsNotSpecial) {
  std::vector<LabeledSample> train{sample("a", "A strong cast.", 1), sample("b", "x", 0)};
  PoisonPlan plan;
  plan.target_ids = {"a"};
  plan.trigger = build_trigger("strong");
  EXPECT_EQ(apply_poison(train, plan)[0].text, "A strong cast. He is a strong actor.");
}

}  // namespace
}  // namespace biasdoor
