#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "sceneforge/error.hpp"
#include "sceneforge/paths.hpp"
#include "sceneforge/scene_model.hpp"
#include "test_support.hpp"

using namespace sceneforge;
using nlohmann::json;

namespace {

const Aabb kRoom = Aabb::from_min_max({0, 0, 0}, {6, 6, 3});

Placement box_at(const std::string& id, Vec3 size, Vec3 pos, double yaw = 0) {
  return make_placement(id, "asset_" + id, id, size, pos, EulerRotation::from_yaw(yaw));
}

Constraint relative(const std::string& s, const std::string& rel, const std::string& a) {
  Constraint c;
  c.subject = s;
  c.relation = rel;
  c.anchor = a;
  return c;
}

SceneDocument doc_with(std::vector<Placement> placements, std::vector<Constraint> constraints) {
  SceneDocument doc;
  doc.prompt = "hand built";
  doc.bounds = kRoom;
  doc.placements = std::move(placements);
  doc.constraints = std::move(constraints);
  doc.refresh_collisions();
  return doc;
}

// ---- minimal GLB reader, independent of the library's mesh loader ----

std::uint32_t u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
  return v;
}

struct Glb {
  json doc;
  std::string bin;
};

Glb read_glb(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  EXPECT_EQ(u32(bytes, 0), 0x46546C67u);
  EXPECT_EQ(u32(bytes, 4), 2u);
  EXPECT_EQ(u32(bytes, 8), bytes.size());
  const std::uint32_t json_len = u32(bytes, 12);
  EXPECT_EQ(u32(bytes, 16), 0x4E4F534Au);
  Glb glb;
  glb.doc = json::parse(bytes.substr(20, json_len));
  const std::size_t bin_at = 20 + json_len;
  const std::uint32_t bin_len = u32(bytes, bin_at);
  EXPECT_EQ(u32(bytes, bin_at + 4), 0x004E4942u);
  glb.bin = bytes.substr(bin_at + 8, bin_len);
  return glb;
}

using V3 = std::array<double, 3>;

std::vector<V3> node_positions(const Glb& glb, const json& node) {
  const auto& prim = glb.doc["meshes"][node["mesh"].get<int>()]["primitives"][0];
  const auto& acc = glb.doc["accessors"][prim["attributes"]["POSITION"].get<int>()];
  EXPECT_EQ(acc["componentType"], 5126);
  EXPECT_EQ(acc["type"], "VEC3");
  const auto& view = glb.doc["bufferViews"][acc["bufferView"].get<int>()];
  const std::size_t base = view.value("byteOffset", 0) + acc.value("byteOffset", 0);
  const std::size_t stride = view.value("byteStride", 12);
  std::vector<V3> out;
  for (int i = 0; i < acc["count"].get<int>(); ++i) {
    float f[3];
    std::memcpy(f, glb.bin.data() + base + i * stride, sizeof f);
    out.push_back({f[0], f[1], f[2]});
  }
  return out;
}

// v' = t + q v q*, written out with the cross-product form.
V3 apply_trs(const json& node, const V3& v) {
  const auto q = node.value("rotation", std::vector<double>{0, 0, 0, 1});
  const auto t = node.value("translation", std::vector<double>{0, 0, 0});
  const V3 u{q[0], q[1], q[2]};
  const double w = q[3];
  auto cross = [](const V3& a, const V3& b) {
    return V3{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  };
  const V3 c1 = cross(u, v);
  const V3 c2 = cross(u, c1);
  V3 out;
  for (int i = 0; i < 3; ++i) out[i] = v[i] + 2 * w * c1[i] + 2 * c2[i] + t[i];
  return out;
}

std::pair<V3, V3> world_bounds(const Glb& glb, const json& node) {
  V3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (const auto& v : node_positions(glb, node)) {
    const V3 w = apply_trs(node, v);
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::min(lo[i], w[i]);
      hi[i] = std::max(hi[i], w[i]);
    }
  }
  return {lo, hi};
}

const json& node_named(const Glb& glb, const std::string& name) {
  for (const auto& n : glb.doc["nodes"])
    if (n["name"] == name) return n;
  throw std::runtime_error("no node " + name);
}

struct GltfFixture {
  sftest::TempDir tmp;
  LibraryManifest manifest;

  void add_box(const std::string& id, double w, double d, double h, int front = 0) {
    const auto path = tmp / (id + ".obj");
    sftest::write_box_obj(path, w, h, d);  // OBJ is Y-up: (width, height, depth)
    AssetRecord r;
    r.id = id;
    r.mesh_path = path.string();
    r.size = {w, d, h};
    r.front_yaw_offset = front;
    manifest.records.push_back(r);
  }
};

}  // namespace

TEST(Validate, OnTopOfFromHandBuiltCoordinates) {
  const auto table = box_at("table", {1.2, 0.8, 0.75}, {3, 3, 0});
  const auto plate = box_at("plate", {0.25, 0.25, 0.03}, {3.1, 2.9, 0.75});
  const auto floating = box_at("cup", {0.1, 0.1, 0.1}, {3, 3, 1.2});
  const auto beside = box_at("vase", {0.2, 0.2, 0.4}, {4.5, 3, 0.75});
  const auto doc = doc_with({table, plate, floating, beside},
                            {relative("plate", "on_top_of", "table"), relative("cup", "on_top_of", "table"),
                             relative("vase", "on_top_of", "table")});
  const auto report = validate(doc);
  EXPECT_EQ(report.checks[0].outcome, ConstraintOutcome::satisfied);
  EXPECT_DOUBLE_EQ(report.checks[0].measure, 0.0);
  EXPECT_EQ(report.checks[1].outcome, ConstraintOutcome::violated);
  EXPECT_NEAR(report.checks[1].measure, 0.45, 1e-12);
  EXPECT_EQ(report.checks[2].outcome, ConstraintOutcome::violated);
  EXPECT_EQ(report.satisfied, 1u);
  EXPECT_EQ(report.violated, 2u);
}

TEST(Validate, DistanceMeasuredBetweenCenters) {
  const auto doc = doc_with({box_at("a", {1, 1, 1}, {0.5, 0.5, 0}), box_at("b", {1, 1, 1}, {0.5, 5.5, 0})}, {});
  SceneDocument d = doc;
  Constraint c = relative("a", "distance", "b");
  c.min_distance = 0.5;
  c.max_distance = 1.0;
  d.constraints = {c};
  const auto check = check_constraint(d, 0);
  EXPECT_EQ(check.outcome, ConstraintOutcome::violated);
  EXPECT_DOUBLE_EQ(check.measure, 5.0);
  d.constraints[0].max_distance = 5.0;
  EXPECT_EQ(check_constraint(d, 0).outcome, ConstraintOutcome::satisfied);
}

TEST(Validate, DirectionalRelationsFollowAnchorYaw) {
  // Anchor at yaw 90 faces -x; its right is +y.
  const auto sofa = box_at("sofa", {2, 1, 0.8}, {3, 3, 0}, 90);
  const auto table = box_at("table", {0.8, 0.8, 0.4}, {1.5, 3, 0});
  const auto lamp = box_at("lamp", {0.3, 0.3, 1.5}, {3, 4.8, 0});
  const auto doc = doc_with({sofa, table, lamp},
                            {relative("table", "in_front_of", "sofa"), relative("table", "behind", "sofa"),
                             relative("lamp", "right_of", "sofa"), relative("lamp", "left_of", "sofa"),
                             relative("sofa", "facing", "table"), relative("table", "aligned_with", "sofa")});
  const auto r = validate(doc);
  EXPECT_EQ(r.checks[0].outcome, ConstraintOutcome::satisfied);
  EXPECT_NEAR(r.checks[0].measure, 1.5, 1e-12);
  EXPECT_EQ(r.checks[1].outcome, ConstraintOutcome::violated);
  EXPECT_EQ(r.checks[2].outcome, ConstraintOutcome::satisfied);
  EXPECT_EQ(r.checks[3].outcome, ConstraintOutcome::violated);
  EXPECT_EQ(r.checks[4].outcome, ConstraintOutcome::satisfied);
  EXPECT_NEAR(r.checks[4].measure, 0.0, 1e-9);
  EXPECT_EQ(r.checks[5].outcome, ConstraintOutcome::satisfied);
}

TEST(Validate, RegionPoseAndAdjacency) {
  const auto a = box_at("a", {1, 1, 1}, {1, 1, 0});
  const auto b = box_at("b", {1, 1, 1}, {2.2, 1, 0}, 3);
  Constraint region;
  region.subject = "a";
  region.kind = ConstraintKind::region;
  region.relation = "within_region";
  region.region = Aabb::from_min_max({0, 0, 0}, {1.4, 2, 3});
  Constraint pose;
  pose.subject = "b";
  pose.kind = ConstraintKind::pose;
  pose.relation = "pose";
  pose.position = {2.25, 1, 0};
  pose.yaw = 0;
  const auto doc = doc_with({a, b}, {region, pose, relative("a", "adjacent_to", "b")});
  const auto r = validate(doc);
  EXPECT_EQ(r.checks[0].outcome, ConstraintOutcome::violated);
  EXPECT_NEAR(r.checks[0].measure, 0.1, 1e-12);
  EXPECT_EQ(r.checks[1].outcome, ConstraintOutcome::satisfied);
  EXPECT_NEAR(r.checks[1].measure, 0.05, 1e-12);
  EXPECT_EQ(r.checks[2].outcome, ConstraintOutcome::satisfied);
}

TEST(Validate, EmptyConstraintListIsFullySatisfied) {
  const auto r = validate(doc_with({box_at("a", {1, 1, 1}, {1, 1, 0})}, {}));
  EXPECT_TRUE(r.checks.empty());
  EXPECT_EQ(r.satisfied + r.violated + r.unverifiable, 0u);
  EXPECT_EQ(r.non_benign_overlaps, 0u);
}

TEST(Validate, UnknownRelationAndMissingObjectsAreUnverifiable) {
  const auto doc = doc_with({box_at("a", {1, 1, 1}, {1, 1, 0}), box_at("b", {1, 1, 1}, {3, 1, 0})},
                            {relative("a", "levitating", "b"), relative("ghost", "on_top_of", "a"),
                             relative("a", "on_top_of", "ghost")});
  const auto r = validate(doc);
  EXPECT_EQ(r.unverifiable, 3u);
  for (const auto& c : r.checks) EXPECT_EQ(c.outcome, ConstraintOutcome::unverifiable);
  const json j = to_json(r, doc);
  EXPECT_FALSE(j["constraints"][0].contains("measure"));
  EXPECT_EQ(j["unverifiable"], 3);
}

TEST(Validate, CountsOverlapsAndOutOfBounds) {
  auto doc = doc_with({box_at("a", {1, 1, 1}, {1, 1, 0}), box_at("b", {1, 1, 1}, {1.5, 1, 0}),
                       box_at("c", {1, 1, 1}, {5.9, 3, 0})},
                      {});
  EXPECT_EQ(validate(doc).non_benign_overlaps, 1u);
  EXPECT_EQ(validate(doc).out_of_bounds, 1u);
  doc.collision_report.benign = {{"a", "b"}};
  EXPECT_EQ(validate(doc).non_benign_overlaps, 0u);
}

TEST(ValidateProperty, PureAndDeterministic) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    const auto doc = sftest::random_document(rng);
    const std::string before = serialize_scene(doc);
    const auto r1 = to_json(validate(doc), doc);
    const auto r2 = to_json(validate(doc), doc);
    EXPECT_EQ(r1, r2);
    EXPECT_EQ(serialize_scene(doc), before);
    EXPECT_EQ(r1["constraints"].size(), doc.constraints.size());
  }
}

TEST(Validate, TableListsEveryConstraint) {
  const auto doc = doc_with({box_at("a", {1, 1, 1}, {1, 1, 0}), box_at("b", {1, 1, 1}, {3, 1, 0})},
                            {relative("a", "left_of", "b"), relative("b", "on_top_of", "a")});
  const auto text = format_report_table(validate(doc), doc);
  EXPECT_NE(text.find("left_of"), std::string::npos);
  EXPECT_NE(text.find("on_top_of"), std::string::npos);
  EXPECT_NE(text.find("satisfied 1, violated 1, unverifiable 0"), std::string::npos);
}

TEST(SceneJson, RandomDocumentsRoundTrip) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto doc = sftest::random_document(rng);
    const std::string text = serialize_scene(doc);
    const auto back = parse_scene(text);
    EXPECT_EQ(back, doc) << text;
    EXPECT_EQ(serialize_scene(back), text);
  }
}

TEST(SceneJson, FileRoundTrip) {
  std::mt19937_64 rng(12);
  sftest::TempDir tmp;
  const auto doc = sftest::random_document(rng);
  export_json(doc, tmp / "scene.json");
  EXPECT_EQ(import_json(tmp / "scene.json"), doc);
}

TEST(SceneJson, NewerSchemaRejected) {
  json j = to_json(SceneDocument{});
  j["schema_version"] = SceneDocument::kSchemaVersion + 1;
  EXPECT_THROW(scene_from_json(j), FormatVersionError);
}

TEST(SceneJson, MalformedDocumentsRejected) {
  EXPECT_THROW(parse_scene("{"), FormatError);
  EXPECT_THROW(parse_scene("{\"schema_version\": 1}"), FormatError);
  json j = to_json(doc_with({box_at("a", {1, 1, 1}, {1, 1, 0})}, {}));
  j["placements"].push_back(j["placements"][0]);
  EXPECT_THROW(scene_from_json(j), FormatError);
}

TEST(SceneJson, MinimalDocumentParses) {
  const auto doc = parse_scene(R"({
    "schema_version": 1, "prompt": "empty", "buffer": 0.02,
    "bounds": {"min": [0, 0, 0], "max": [4, 4, 3]},
    "placements": [], "constraints": [], "verdicts": [],
    "collision_report": {"overlaps": [], "benign": []}})");
  EXPECT_EQ(doc.prompt, "empty");
  EXPECT_EQ(doc.bounds.max, (Vec3{4, 4, 3}));
  EXPECT_TRUE(doc.meta.is_object());
}

TEST(SceneJson, RefreshKeepsOnlyStillOverlappingBenignPairs) {
  auto doc = doc_with({box_at("a", {1, 1, 1}, {1, 1, 0}), box_at("b", {1, 1, 1}, {1.2, 1, 0}),
                       box_at("c", {1, 1, 1}, {4, 4, 0})},
                      {});
  doc.collision_report.benign = {{"a", "b"}, {"a", "c"}};
  doc.refresh_collisions();
  EXPECT_EQ(doc.collision_report.benign, (std::vector<SlotPair>{{"a", "b"}}));
}

TEST(Gltf, CubeNodeSitsOnTheFloorInYUp) {
  GltfFixture fx;
  fx.add_box("cube", 1, 1, 1);
  const auto doc = doc_with({box_at("c", {1, 1, 1}, {2, 3, 0})}, {});
  SceneDocument d = doc;
  d.placements[0].asset_id = "cube";
  export_gltf(d, fx.manifest, fx.tmp / "scene.glb");
  const auto glb = read_glb(fx.tmp / "scene.glb");
  ASSERT_EQ(glb.doc["nodes"].size(), 2u);
  const auto [lo, hi] = world_bounds(glb, node_named(glb, "c"));
  // Core (x, y, z) is (x, -z, y) in the Y-up file.
  EXPECT_NEAR(lo[0], 1.5, 1e-6);
  EXPECT_NEAR(hi[0], 2.5, 1e-6);
  EXPECT_NEAR(lo[1], 0.0, 1e-6);
  EXPECT_NEAR(hi[1], 1.0, 1e-6);
  EXPECT_NEAR((lo[1] + hi[1]) / 2, 0.5, 1e-6);
  EXPECT_NEAR(lo[2], -3.5, 1e-6);
  EXPECT_NEAR(hi[2], -2.5, 1e-6);
}

TEST(Gltf, YawBecomesRotationAboutYUpAxis) {
  GltfFixture fx;
  fx.add_box("slab", 2, 1, 0.5);
  fx.add_box("turned", 2, 1, 0.5, 90);
  Placement a = box_at("a", {2, 1, 0.5}, {2, 2, 0}, 90);
  a.asset_id = "slab";
  // Front offset of 90 means canonical size swaps width and depth.
  Placement b = box_at("b", {1, 2, 0.5}, {4, 4, 0}, 0);
  b.asset_id = "turned";
  SceneDocument doc = doc_with({a, b}, {});
  export_gltf(doc, fx.manifest, fx.tmp / "scene.glb");
  const auto glb = read_glb(fx.tmp / "scene.glb");
  EXPECT_EQ(glb.doc["nodes"].size(), doc.placements.size() + 1);
  EXPECT_EQ(glb.doc["nodes"].back()["name"], "ground_plane");

  const double h = std::acos(-1.0) / 4;  // half of 90 degrees
  for (const std::string name : {"a", "b"}) {
    const auto& node = node_named(glb, name);
    const auto q = node["rotation"].get<std::vector<double>>();
    // Axis-angle oracle: +90 degrees about +Y.
    EXPECT_NEAR(q[0], 0.0, 1e-6) << name;
    EXPECT_NEAR(q[1], std::sin(h), 1e-6) << name;
    EXPECT_NEAR(q[2], 0.0, 1e-6) << name;
    EXPECT_NEAR(q[3], std::cos(h), 1e-6) << name;
  }
  const auto [lo, hi] = world_bounds(glb, node_named(glb, "a"));
  const Aabb expect = doc.placements[0].aabb();
  EXPECT_NEAR(hi[0] - lo[0], expect.extent().x, 1e-6);
  EXPECT_NEAR(hi[2] - lo[2], expect.extent().y, 1e-6);
  EXPECT_NEAR(hi[1] - lo[1], expect.extent().z, 1e-6);
  EXPECT_NEAR(-(lo[2] + hi[2]) / 2, expect.center().y, 1e-6);
}

TEST(Gltf, MissingMeshesAreNamed) {
  GltfFixture fx;
  fx.add_box("present", 1, 1, 1);
  AssetRecord gone;
  gone.id = "gone";
  gone.mesh_path = (fx.tmp / "gone.obj").string();
  fx.manifest.records.push_back(gone);
  Placement p1 = box_at("p1", {1, 1, 1}, {1, 1, 0});
  p1.asset_id = "present";
  Placement p2 = box_at("p2", {1, 1, 1}, {3, 3, 0});
  p2.asset_id = "gone";
  Placement p3 = box_at("p3", {1, 1, 1}, {5, 5, 0});
  p3.asset_id = "unknown";
  try {
    export_gltf(doc_with({p1, p2, p3}, {}), fx.manifest, fx.tmp / "scene.glb");
    FAIL();
  } catch (const ExportError& e) {
    EXPECT_EQ(e.offenders(), (std::vector<std::string>{"gone", "unknown"}));
    EXPECT_NE(std::string(e.what()).find("gone"), std::string::npos);
  }
  EXPECT_FALSE(std::filesystem::exists(fx.tmp / "scene.glb"));
}

TEST(Gltf, EmptySceneHasOnlyGround) {
  GltfFixture fx;
  export_gltf(doc_with({}, {}), fx.manifest, fx.tmp / "scene.glb");
  const auto glb = read_glb(fx.tmp / "scene.glb");
  ASSERT_EQ(glb.doc["nodes"].size(), 1u);
  const auto [lo, hi] = world_bounds(glb, glb.doc["nodes"][0]);
  EXPECT_NEAR(lo[0], 0, 1e-6);
  EXPECT_NEAR(hi[0], 6, 1e-6);
  EXPECT_NEAR(lo[1], 0, 1e-6);
  EXPECT_NEAR(hi[1], 0, 1e-6);
  EXPECT_NEAR(lo[2], -6, 1e-6);
}

TEST(QuaternionFromMatrix, MatchesAxisAngleOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(-180, 180);
  for (int i = 0; i < 200; ++i) {
    const double yaw = angle(rng);
    const auto q = quaternion_from_matrix(EulerRotation::from_yaw(yaw).matrix());
    const double half = yaw * std::acos(-1.0) / 360;
    const double sign = std::cos(half) < 0 ? -1 : 1;
    EXPECT_NEAR(q[0], 0, 1e-9);
    EXPECT_NEAR(q[1], 0, 1e-9);
    EXPECT_NEAR(q[2], sign * std::sin(half), 1e-9);
    EXPECT_NEAR(q[3], sign * std::cos(half), 1e-9);
  }
}
