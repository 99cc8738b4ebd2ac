#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "sceneforge/layout.hpp"
#include "sceneforge/paths.hpp"
#include "test_support.hpp"

using namespace sceneforge;
using nlohmann::json;
using sftest::place_reply;
using sftest::refine_keep;
using sftest::refine_move;

namespace {

const Aabb kRoom = Aabb::from_min_max({0, 0, 0}, {5, 5, 3});

SceneSpec spec_of(const std::vector<std::pair<std::string, Vec3>>& slots, Aabb bounds = kRoom) {
  SceneSpec spec;
  spec.prompt = "test scene";
  spec.bounds = bounds;
  for (const auto& [id, size] : slots) spec.slots.push_back({id, "asset_" + id, id, size});
  return spec;
}

SceneSpec sofa_spec() {
  return spec_of({{"l_shaped_sofa", {2.4, 1.6, 0.9}}, {"small_table", {0.8, 0.8, 0.5}}, {"plant", {0.3, 0.3, 0.6}}});
}

Constraint on_top(const std::string& s, const std::string& a) {
  Constraint c;
  c.subject = s;
  c.relation = "on_top_of";
  c.anchor = a;
  return c;
}

Placement at(const SceneSpec& spec, const std::string& id, Vec3 pos, double yaw = 0) {
  const SceneSlot* s = spec.find(id);
  return make_placement(s->slot_id, s->asset_id, s->display_name, s->size, pos, EulerRotation::from_yaw(yaw));
}

std::vector<std::string> place_order(const AuditLog& audit) {
  std::vector<std::string> out;
  for (const auto& r : audit.stage("place")) out.push_back(r["slot_id"]);
  return out;
}

}  // namespace

TEST(FormatNumber, TrimsAndRounds) {
  EXPECT_EQ(format_number(1.5), "1.5");
  EXPECT_EQ(format_number(-0.25), "-0.25");
  EXPECT_EQ(format_number(3.0), "3");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.3333");
  EXPECT_EQ(format_number(-0.00001), "0");
}

TEST(Handedness, LeftMirrorsYAndNegatesYaw) {
  EXPECT_EQ(to_provider_frame(Vec3{1, 2, 3}, Handedness::left), (Vec3{1, -2, 3}));
  EXPECT_EQ(to_provider_frame(Vec3{1, 2, 3}, Handedness::right), (Vec3{1, 2, 3}));
  const auto r = to_provider_frame(EulerRotation(30, 10, 20), Handedness::left);
  EXPECT_EQ(r, EulerRotation(-30, 10, -20));
  EXPECT_EQ(from_provider_frame(r, Handedness::left), EulerRotation(30, 10, 20));
  const Aabb b = to_provider_frame(kRoom, Handedness::left);
  EXPECT_EQ(b, Aabb::from_min_max({0, -5, 0}, {5, 0, 3}));
  EXPECT_EQ(from_provider_frame(b, Handedness::left), kRoom);
}

TEST(ExtractConstraints, SofaSceneFixture) {
  auto s = sftest::scripted_session_from_file(sftest::fixture_path("sofa_scene/fixture.json"));
  // Consume the extraction reply that precedes constraints in the fixture.
  s.client->complete(s.client->make_request(RequestKind::extract_objects,
                                            {{"scene_prompt", "x"}, {"count_instruction", ""}}));
  const auto out = extract_constraints(sofa_spec(), *s.client);
  EXPECT_FALSE(out.degraded);
  auto has = [&](const std::string& subj, const std::string& rel, const std::string& anchor) {
    return std::any_of(out.constraints.begin(), out.constraints.end(), [&](const Constraint& c) {
      return c.subject == subj && c.relation == rel && c.anchor == anchor;
    });
  };
  EXPECT_TRUE(has("plant", "on_top_of", "small_table"));
  EXPECT_TRUE(has("small_table", "in_front_of", "l_shaped_sofa"));
}

TEST(ExtractConstraints, UnknownSlotDroppedWithWarning) {
  auto s = sftest::scripted_session(
      {{"replies",
        {{{"kind", "extract_constraints"},
          {"reply",
           {{"constraints",
             {{{"subject", "plant"}, {"relation", "on_top_of"}, {"anchor", "piano"}},
              {{"subject", "piano"}, {"relation", "adjacent_to"}, {"anchor", "plant"}},
              {{"subject", "plant"}, {"relation", "hovering_over"}, {"anchor", "small_table"}},
              {{"subject", "plant"}, {"relation", "on_top_of"}, {"anchor", "plant"}},
              {{"subject", "plant"}, {"relation", "distance"}, {"anchor", "small_table"}, {"min", 2}, {"max", 1}},
              {{"subject", "plant"}, {"relation", "on_top_of"}, {"anchor", "small_table"}}}}}}}}}});
  const auto out = extract_constraints(sofa_spec(), *s.client);
  ASSERT_EQ(out.constraints.size(), 1u);
  EXPECT_EQ(out.constraints[0].anchor, "small_table");
  EXPECT_EQ(out.warnings.size(), 5u);
  for (const auto& w : out.warnings) EXPECT_NE(w.find("dropped"), std::string::npos);
}

TEST(ExtractConstraints, PromptWithoutRelationsGivesAbsoluteOnly) {
  auto s = sftest::scripted_session(
      {{"replies",
        {{{"kind", "extract_constraints"},
          {"reply",
           {{"constraints",
             {{{"subject", "plant"}, {"relation", "within_region"}, {"region", {{"min", {0, 0, 0}}, {"max", {2, 2, 3}}}}, {"source", "inferred"}},
              {{"subject", "small_table"}, {"relation", "pose"}, {"pose", {{"position", {1, 1, 0}}, {"yaw", 90}}}}}}}}}}}});
  const auto out = extract_constraints(sofa_spec(), *s.client);
  ASSERT_EQ(out.constraints.size(), 2u);
  EXPECT_EQ(out.constraints[0].kind, ConstraintKind::region);
  EXPECT_EQ(out.constraints[0].source, ConstraintSource::inferred);
  EXPECT_EQ(out.constraints[1].kind, ConstraintKind::pose);
  EXPECT_EQ(out.constraints[1].yaw, 90.0);
}

TEST(ExtractConstraints, ProviderFailureDegradesToEmpty) {
  auto s = sftest::scripted_session(
      {{"defaults", {{"extract_constraints", "I would rather not."}}}});
  const auto out = extract_constraints(sofa_spec(), *s.client);
  EXPECT_TRUE(out.degraded);
  EXPECT_TRUE(out.constraints.empty());
}

TEST(ExtractConstraints, LeftHandedRegionConverted) {
  auto s = sftest::scripted_session(
      {{"replies",
        {{{"kind", "extract_constraints"},
          {"reply",
           {{"constraints",
             {{{"subject", "plant"}, {"relation", "within_region"}, {"region", {{"min", {0, -2, 0}}, {"max", {1, -1, 3}}}}}}}}}}}}});
  LayoutOptions options;
  options.provider_handedness = Handedness::left;
  const auto out = extract_constraints(sofa_spec(), *s.client, options);
  ASSERT_EQ(out.constraints.size(), 1u);
  EXPECT_EQ(out.constraints[0].region, Aabb::from_min_max({0, 1, 0}, {1, 2, 3}));
}

TEST(RepairOrder, TableBeforePlateEvenWhenProposedOtherwise) {
  const auto spec = spec_of({{"table", {1, 1, 0.7}}, {"plate", {0.2, 0.2, 0.02}}});
  const auto out = repair_order(spec, {on_top("plate", "table")}, {"plate", "table"});
  EXPECT_EQ(out.order, (std::vector<std::string>{"table", "plate"}));
  EXPECT_FALSE(out.warnings.empty());
}

TEST(RepairOrder, IdentityWithoutConstraints) {
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}, {"c", {1, 1, 1}}});
  const auto out = repair_order(spec, {}, {"a", "b", "c"});
  EXPECT_EQ(out.order, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(out.warnings.empty());
}

TEST(RepairOrder, CycleBrokenDeterministically) {
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}});
  const auto out = repair_order(spec, {on_top("a", "b"), on_top("b", "a")}, {"a", "b"});
  EXPECT_EQ(out.order, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(out.cycles.size(), 1u);
  EXPECT_EQ(out.cycles[0], (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(repair_order(spec, {on_top("a", "b"), on_top("b", "a")}, {"a", "b"}).order, out.order);
}

TEST(RepairOrder, OmittedUnknownAndRepeatedSlots) {
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}, {"c", {1, 1, 1}}});
  const auto out = repair_order(spec, {}, {"c", "ghost", "c"});
  EXPECT_EQ(out.order, (std::vector<std::string>{"c", "a", "b"}));
  EXPECT_EQ(out.warnings.size(), 4u);
}

TEST(OrderSlots, ProviderFailureFallsBackToInputOrder) {
  auto s = sftest::scripted_session({{"defaults", {{"order", "first the big things"}}}});
  const auto spec = spec_of({{"table", {1, 1, 0.7}}, {"plate", {0.2, 0.2, 0.02}}, {"rug", {2, 2, 0.01}}});
  const auto out = order_slots(spec, {on_top("plate", "table")}, *s.client);
  EXPECT_EQ(out.order, (std::vector<std::string>{"table", "plate", "rug"}));
  EXPECT_FALSE(out.warnings.empty());
}

TEST(ClampToBounds, KeepsBoxInsideAndCentersOversized) {
  const Vec3 p = clamp_to_bounds({-3, 7, 9}, {{1, 2, 1}}, kRoom);
  EXPECT_EQ(p, (Vec3{0.5, 4, 2}));
  const Vec3 big = clamp_to_bounds({1, 1, 1}, {{8, 1, 4}}, kRoom);
  EXPECT_EQ(big, (Vec3{2.5, 1, 0}));
}

TEST(PlaceNext, FirstObjectInsideRoom) {
  auto s = sftest::scripted_session({{"replies", {place_reply("sofa", {2.5, 2.5, 0}, 0)}}});
  const auto spec = spec_of({{"sofa", {2, 1, 0.8}}});
  const auto p = place_next(spec, {}, {}, "sofa", *s.client);
  EXPECT_EQ(p.position, (Vec3{2.5, 2.5, 0}));
  EXPECT_TRUE(contains(kRoom, p.aabb()));
  EXPECT_TRUE(p.flags.empty());
}

TEST(PlaceNext, RotatedSizeIsRecomputedLocally) {
  json reply = place_reply("bed", {2.5, 2.5, 0}, 90);
  reply["reply"]["size_after_rotation"] = {9, 9, 9};
  auto s = sftest::scripted_session({{"replies", {reply}}});
  const auto p = place_next(spec_of({{"bed", {2, 3, 1}}}), {}, {}, "bed", *s.client);
  EXPECT_EQ(p.rotated_size.size, (Vec3{3, 2, 1}));
}

TEST(PlaceNext, OutOfBoundsRepairedOnRetry) {
  auto s = sftest::scripted_session(
      {{"replies", {place_reply("lamp", {9, 9, 0}, 0), place_reply("lamp", {4, 4, 0}, 0)}}});
  AuditLog audit;
  const auto p = place_next(spec_of({{"lamp", {0.4, 0.4, 1.6}}}), {}, {}, "lamp", *s.client, {}, &audit);
  EXPECT_EQ(p.position, (Vec3{4, 4, 0}));
  EXPECT_TRUE(p.has_flag("repaired"));
  ASSERT_EQ(audit.records().size(), 1u);
  EXPECT_TRUE(audit.records()[0].contains("repair"));
}

TEST(PlaceNext, PersistentlyOutOfBoundsIsClamped) {
  auto s = sftest::scripted_session(
      {{"replies", {place_reply("lamp", {9, 9, 0}, 90), place_reply("lamp", {-4, 9, 0}, 90)}}});
  const auto p = place_next(spec_of({{"lamp", {0.4, 0.6, 1.6}}}), {}, {}, "lamp", *s.client);
  EXPECT_TRUE(p.has_flag("clamped"));
  EXPECT_TRUE(p.has_flag("out_of_bounds"));
  EXPECT_EQ(p.rotation.yaw(), 90.0);
  EXPECT_TRUE(contains(kRoom, p.aabb()));
}

TEST(PlaceNext, UnparseableReplyIsPlacementError) {
  auto s = sftest::scripted_session({{"defaults", {{"place", "somewhere nice"}}}});
  try {
    place_next(spec_of({{"lamp", {0.4, 0.4, 1.6}}}), {}, {}, "lamp", *s.client);
    FAIL();
  } catch (const PlacementError& e) {
    EXPECT_EQ(e.slot_id(), "lamp");
  }
}

TEST(PlaceNext, LeftHandedReplyConverted) {
  auto s = sftest::scripted_session({{"replies", {place_reply("chair", {1, -2, 0}, 30)}}});
  LayoutOptions options;
  options.provider_handedness = Handedness::left;
  const auto p = place_next(spec_of({{"chair", {0.5, 0.5, 0.9}}}), {}, {}, "chair", *s.client, options);
  EXPECT_EQ(p.position, (Vec3{1, 2, 0}));
  EXPECT_EQ(p.rotation.yaw(), -30.0);
}

TEST(PlaceNext, PromptMatchesGoldenFile) {
  const auto spec = spec_of({{"sofa", {2, 0.9, 0.8}}, {"coffee_table", {1.2, 0.6, 0.45}},
                             {"rug", {2.5, 1.6, 0.01}}, {"lamp", {0.4, 0.4, 1.6}}});
  const std::vector<Placement> placed{at(spec, "sofa", {2.5, 4.2, 0}, 180),
                                      at(spec, "coffee_table", {2.5, 3, 0}, 90),
                                      at(spec, "rug", {2.5, 3.1, 0}, 45)};
  Constraint near;
  near.subject = "lamp";
  near.relation = "adjacent_to";
  near.anchor = "sofa";
  near.source = ConstraintSource::inferred;
  auto s = sftest::scripted_session(json::object());
  AuditLog audit;
  place_next(spec, {near, on_top("coffee_table", "rug")}, placed, "lamp", *s.client, {}, &audit);
  const std::string prompt = audit.records().at(0)["prompt"];

  EXPECT_NE(prompt.find("Objects placed so far (3):"), std::string::npos);
  EXPECT_NE(prompt.find("- lamp adjacent_to sofa (inferred)"), std::string::npos);
  EXPECT_EQ(prompt.find("coffee_table on_top_of rug"), std::string::npos);
  std::size_t listed = 0;
  for (std::size_t at = prompt.find("], size after rotation ["); at != std::string::npos;
       at = prompt.find("], size after rotation [", at + 1))
    ++listed;
  EXPECT_EQ(listed, 3u);

  const auto golden = sftest::fixture_path("golden/place_prompt.txt");
  if (std::getenv("SCENEFORGE_UPDATE_GOLDEN")) write_file_atomic(golden, prompt);
  EXPECT_EQ(prompt, read_file(golden));
}

TEST(InitialPass, PlacesInOrderWithAuditRecords) {
  auto s = sftest::scripted_session({{"replies",
                                      {place_reply("a", {1, 1, 0}, 0), place_reply("b", {3, 3, 0}, 0),
                                       place_reply("c", {1, 4, 0}, 0)}}});
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}, {"c", {1, 1, 1}}});
  AuditLog audit;
  const std::vector<std::string> order{"c", "a", "b"};
  const auto placed = initial_pass(spec, {}, order, *s.client, {}, &audit);
  ASSERT_EQ(placed.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(placed[i].slot_id, order[i]);
  EXPECT_EQ(place_order(audit), order);
  const auto records = audit.stage("place");
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = records[i];
    EXPECT_EQ(r["step"], i);
    EXPECT_TRUE(r.contains("prompt") && r.contains("reply") && r.contains("parsed"));
  }
}

TEST(InitialPass, EmptySlotList) {
  auto s = sftest::scripted_session(json::object());
  EXPECT_TRUE(initial_pass(spec_of({}), {}, {}, *s.client).empty());
}

TEST(InitialPass, FourteenSlotsGiveFourteenRecords) {
  std::vector<std::pair<std::string, Vec3>> slots;
  std::vector<std::string> order;
  json replies = json::array();
  for (int i = 0; i < 14; ++i) {
    const std::string id = "item_" + std::to_string(i);
    slots.push_back({id, {0.5, 0.5, 0.5}});
    order.push_back(id);
    replies.push_back(place_reply(id, {0.5 + (i % 7) * 1.2, 1 + (i / 7) * 2.0, 0}, 0));
  }
  auto s = sftest::scripted_session({{"replies", replies}});
  AuditLog audit;
  const auto spec = spec_of(slots, Aabb::from_min_max({0, 0, 0}, {9, 5, 3}));
  const auto placed = initial_pass(spec, {}, order, *s.client, {}, &audit);
  EXPECT_EQ(placed.size(), 14u);
  EXPECT_EQ(place_order(audit), order);
}

TEST(InitialPass, FailureCarriesPartialScene) {
  auto s = sftest::scripted_session({{"replies", {place_reply("a", {1, 1, 0}, 0)}},
                                     {"defaults", {{"place", "no idea"}}}});
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}});
  try {
    initial_pass(spec, {}, {"a", "b"}, *s.client);
    FAIL();
  } catch (const PlacementError& e) {
    EXPECT_EQ(e.slot_id(), "b");
    ASSERT_EQ(e.partial().size(), 1u);
    EXPECT_EQ(e.partial()[0].slot_id, "a");
  }
}

TEST(RefinePass, NoCollisionsMeansNoCalls) {
  auto s = sftest::scripted_session(json::object());
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}});
  const std::vector<Placement> placed{at(spec, "a", {1, 1, 0}), at(spec, "b", {3, 3, 0})};
  const auto r = refine_pass(spec, {}, placed, *s.client);
  EXPECT_EQ(r.provider_calls, 0u);
  EXPECT_EQ(s.provider->calls(RequestKind::refine), 0u);
  EXPECT_EQ(r.placements, placed);
  EXPECT_TRUE(r.verdicts.empty());
}

TEST(RefinePass, ScriptedMoveSeparatesCubes) {
  auto s = sftest::scripted_session({{"replies", {refine_move("a", {1, 1, 0}, 0)}}});
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}});
  const std::vector<Placement> placed{at(spec, "a", {2.5, 2.5, 0}), at(spec, "b", {2.9, 2.5, 0})};
  const auto r = refine_pass(spec, {}, placed, *s.client);
  EXPECT_TRUE(detect_collisions(placement_boxes(r.placements)).empty());
  ASSERT_EQ(r.verdicts.size(), 1u);
  EXPECT_EQ(r.verdicts[0].action, VerdictAction::move);
  EXPECT_EQ(r.verdicts[0].slot_id, "a");
  // b no longer collides, so it is skipped.
  EXPECT_EQ(r.provider_calls, 1u);
}

TEST(RefinePass, TrashBinUnderTableIsKept) {
  auto s = sftest::scripted_session(
      {{"replies", {refine_keep("table", "The bin is tucked under the table."),
                    refine_keep("trash_bin", "A trash bin under a table is normal.")}}});
  const auto spec = spec_of({{"table", {1.2, 0.6, 0.75}}, {"trash_bin", {0.3, 0.3, 0.4}}});
  const std::vector<Placement> placed{at(spec, "table", {2.5, 2.5, 0}), at(spec, "trash_bin", {2.5, 2.5, 0})};
  const auto r = refine_pass(spec, {}, placed, *s.client);
  EXPECT_EQ(r.placements, placed);
  ASSERT_EQ(r.verdicts.size(), 2u);
  for (const auto& v : r.verdicts) EXPECT_TRUE(v.is_benign_keep());
  ASSERT_EQ(r.benign.size(), 1u);
  EXPECT_EQ(r.benign[0], (SlotPair{"table", "trash_bin"}));
  EXPECT_EQ(sftest::non_benign(r.placements, kDefaultCollisionBuffer, r.benign), 0u);
}

TEST(RefinePass, MoveCreatingNewOverlapIsRejected) {
  auto s = sftest::scripted_session({{"replies", {refine_move("a", {4, 4, 0}, 0)}}});
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}, {"c", {1, 1, 1}}});
  const std::vector<Placement> placed{at(spec, "a", {1, 1, 0}), at(spec, "b", {1.5, 1, 0}),
                                      at(spec, "c", {4, 4, 0})};
  const auto r = refine_pass(spec, {}, placed, *s.client);
  EXPECT_EQ(r.placements[0], placed[0]);
  EXPECT_EQ(r.verdicts[0].flag, VerdictFlag::rejected_move);
  EXPECT_EQ(r.verdicts[0].action, VerdictAction::keep);
  ASSERT_TRUE(r.verdicts[0].position);
  EXPECT_EQ(*r.verdicts[0].position, (Vec3{4, 4, 0}));
}

TEST(RefinePass, GarbageVerdictIsDegradedKeep) {
  auto s = sftest::scripted_session({{"defaults", {{"refine", "hmm"}}}});
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}});
  const std::vector<Placement> placed{at(spec, "a", {2.5, 2.5, 0}), at(spec, "b", {2.9, 2.5, 0})};
  const auto r = refine_pass(spec, {}, placed, *s.client);
  ASSERT_EQ(r.verdicts.size(), 2u);
  for (const auto& v : r.verdicts) {
    EXPECT_EQ(v.action, VerdictAction::keep);
    EXPECT_EQ(v.flag, VerdictFlag::degraded);
  }
  EXPECT_TRUE(r.benign.empty());
}

TEST(RefinePass, MoveToSamePoseIsNoop) {
  auto s = sftest::scripted_session({{"replies", {refine_move("a", {2.5, 2.5, 0}, 0)}}});
  const auto spec = spec_of({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}});
  const std::vector<Placement> placed{at(spec, "a", {2.5, 2.5, 0}), at(spec, "b", {2.9, 2.5, 0})};
  const auto r = refine_pass(spec, {}, placed, *s.client);
  EXPECT_EQ(r.verdicts[0].flag, VerdictFlag::noop_move);
  EXPECT_EQ(r.verdicts[0].action, VerdictAction::keep);
}

TEST(RefinePassProperty, NonBenignOverlapsNeverIncrease) {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 40; ++round) {
    auto scene = sftest::random_colliding_scene(rng);
    auto s = sftest::scripted_session(scene.fixture);
    const std::size_t before = sftest::non_benign(scene.placements, kDefaultCollisionBuffer, {});
    const auto r = refine_pass(scene.spec, {}, scene.placements, *s.client);
    const std::size_t after = sftest::non_benign(r.placements, kDefaultCollisionBuffer, r.benign);
    EXPECT_LE(after, before) << "round " << round;
    for (const auto& v : r.verdicts) {
      if (v.action == VerdictAction::move) {
        const auto* p = &*std::find_if(r.placements.begin(), r.placements.end(),
                                       [&](const Placement& q) { return q.slot_id == v.slot_id; });
        EXPECT_TRUE(contains(scene.spec.bounds, p->aabb()));
      }
    }
  }
}

TEST(RefinePass, SweepsAreClampedAndRepeatable) {
  auto scene_rng = std::mt19937_64(99);
  auto scene = sftest::random_colliding_scene(scene_rng);
  LayoutOptions options;
  options.refinement_sweeps = 7;
  auto s1 = sftest::scripted_session(scene.fixture);
  auto s2 = sftest::scripted_session(scene.fixture);
  const auto a = refine_pass(scene.spec, {}, scene.placements, *s1.client, options);
  const auto b = refine_pass(scene.spec, {}, scene.placements, *s2.client, options);
  EXPECT_EQ(a.placements, b.placements);
  EXPECT_EQ(a.verdicts, b.verdicts);
  for (const auto& v : a.verdicts) EXPECT_LE(v.sweep, 3);
}

TEST(BuildScene, SofaSceneEndToEnd) {
  auto s = sftest::scripted_session_from_file(sftest::fixture_path("sofa_scene/fixture.json"));
  const auto spec = sofa_spec();
  std::vector<RetrievalDecision> decisions;
  LibraryManifest manifest;
  for (const auto& slot : spec.slots) {
    AssetRecord r;
    r.id = slot.asset_id;
    r.display_name = slot.display_name;
    r.size = slot.size;
    manifest.records.push_back(r);
    RetrievalDecision d;
    d.slot_id = slot.slot_id;
    d.required.name = slot.display_name;
    d.candidates = {{r.id, 1.0}};
    d.selected = r.id;
    decisions.push_back(d);
  }
  s.client->complete(s.client->make_request(RequestKind::extract_objects,
                                            {{"scene_prompt", "x"}, {"count_instruction", ""}}));
  AuditLog audit;
  const auto doc = build_scene(spec.prompt, kRoom, decisions, manifest, *s.client, {}, &audit);
  ASSERT_EQ(doc.placements.size(), 3u);
  const Aabb plant = doc.find("plant")->aabb();
  const Aabb table = doc.find("small_table")->aabb();
  // Interval check by hand: plant bottom on table top, footprints overlap.
  EXPECT_NEAR(plant.min.z, table.max.z, 1e-12);
  EXPECT_GT(std::min(plant.max.x, table.max.x) - std::max(plant.min.x, table.min.x), 0.0);
  EXPECT_GT(std::min(plant.max.y, table.max.y) - std::max(plant.min.y, table.min.y), 0.0);
  EXPECT_EQ(doc.collision_report.non_benign_count(), 0u);
  EXPECT_EQ(place_order(audit), doc.meta["order"].get<std::vector<std::string>>());
  for (const auto& p : doc.placements)
    EXPECT_EQ(p.rotated_size, size_after_rotation(p.size, p.rotation));
}

TEST(BuildScene, SkipRefinementLeavesNoVerdicts) {
  auto s = sftest::scripted_session(
      {{"replies", {place_reply("a", {2.5, 2.5, 0}, 0), place_reply("b", {2.6, 2.5, 0}, 0)}}});
  LibraryManifest manifest;
  std::vector<RetrievalDecision> decisions;
  for (std::string id : {"a", "b"}) {
    AssetRecord r;
    r.id = "asset_" + id;
    r.size = {1, 1, 1};
    manifest.records.push_back(r);
    RetrievalDecision d;
    d.slot_id = id;
    d.candidates = {{r.id, 1}};
    d.selected = r.id;
    decisions.push_back(d);
  }
  LayoutOptions options;
  options.skip_refinement = true;
  const auto doc = build_scene("two boxes", kRoom, decisions, manifest, *s.client, options);
  EXPECT_TRUE(doc.verdicts.empty());
  EXPECT_EQ(doc.collision_report.overlaps.size(), 1u);
  EXPECT_EQ(doc.meta["refinement"], "skipped");
  EXPECT_EQ(s.provider->calls(RequestKind::refine), 0u);
}

TEST(BuildScene, NoRetrievedObjectsGivesEmptyScene) {
  auto s = sftest::scripted_session(json::object());
  RetrievalDecision none;
  none.slot_id = "piano";
  const auto doc = build_scene("an empty room", kRoom, {none}, LibraryManifest{}, *s.client);
  EXPECT_TRUE(doc.placements.empty());
  EXPECT_TRUE(doc.collision_report.overlaps.empty());
  EXPECT_EQ(doc.meta["unmatched"], json({"piano"}));
}

TEST(BuildScene, PlacementFailureKeepsPartialDocument) {
  auto s = sftest::scripted_session({{"replies", {place_reply("a", {1, 1, 0}, 0)}},
                                     {"defaults", {{"place", "no"}}}});
  LibraryManifest manifest;
  std::vector<RetrievalDecision> decisions;
  for (std::string id : {"a", "b"}) {
    AssetRecord r;
    r.id = "asset_" + id;
    r.size = {1, 1, 1};
    manifest.records.push_back(r);
    RetrievalDecision d;
    d.slot_id = id;
    d.candidates = {{r.id, 1}};
    d.selected = r.id;
    decisions.push_back(d);
  }
  try {
    build_scene("boxes", kRoom, decisions, manifest, *s.client);
    FAIL();
  } catch (const SceneBuildError& e) {
    EXPECT_EQ(e.partial().placements.size(), 1u);
    EXPECT_EQ(e.partial().meta["failed_slot"], "b");
  }
}

TEST(BuildScene, RejectsDegenerateRoom) {
  auto s = sftest::scripted_session(json::object());
  EXPECT_THROW(build_scene("x", Aabb::from_min_max({0, 0, 0}, {5, 5, 0}), {}, {}, *s.client),
               std::invalid_argument);
}

TEST(OrderingProperty, SupportsPlacedFirstAgainstAdversarialOrders) {
  std::mt19937_64 rng(77);
  for (int round = 0; round < 30; ++round) {
    const int n = 3 + static_cast<int>(rng() % 8);
    LibraryManifest manifest;
    std::vector<RetrievalDecision> decisions;
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
      const std::string id = "s" + std::to_string(i);
      ids.push_back(id);
      AssetRecord r;
      r.id = "asset_" + id;
      r.size = {0.4, 0.4, 0.3};
      manifest.records.push_back(r);
      RetrievalDecision d;
      d.slot_id = id;
      d.candidates = {{r.id, 1}};
      d.selected = r.id;
      decisions.push_back(d);
    }
    // Random support forest over a hidden permutation.
    std::vector<std::string> hidden = ids;
    std::shuffle(hidden.begin(), hidden.end(), rng);
    json constraints = json::array();
    for (int i = 1; i < n; ++i) {
      if (rng() % 3 == 0) continue;
      const std::string anchor = hidden[rng() % i];
      constraints.push_back({{"subject", hidden[i]}, {"relation", "on_top_of"}, {"anchor", anchor}});
    }
    // Adversarial: supports last, plus junk.
    std::vector<std::string> proposed(hidden.rbegin(), hidden.rend());
    if (rng() % 2) proposed.push_back("ghost");
    if (rng() % 2 && proposed.size() > 2) proposed.erase(proposed.begin() + 1);
    auto s = sftest::scripted_session(
        {{"replies",
          {{{"kind", "extract_constraints"}, {"reply", {{"constraints", constraints}}}},
           {{"kind", "order"}, {"reply", {{"order", proposed}}}}}}});
    AuditLog audit;
    const auto doc = build_scene("stack", Aabb::from_min_max({0, 0, 0}, {10, 10, 10}), decisions,
                                 manifest, *s.client, {}, &audit);
    const auto order = place_order(audit);
    ASSERT_EQ(order.size(), ids.size());
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    for (const auto& c : doc.constraints) {
      if (c.relation != "on_top_of") continue;
      EXPECT_LT(pos.at(c.anchor), pos.at(c.subject)) << c.anchor << " / " << c.subject;
    }
  }
}
