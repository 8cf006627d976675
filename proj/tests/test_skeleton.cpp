#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pstl/dataset_io.hpp"
#include "pstl/skeleton.hpp"

using namespace pstl;

namespace {

GraphTopology make_topo(int v, std::vector<std::pair<int, int>> edges) {
  GraphTopology t;
  t.num_joints = v;
  t.edges = std::move(edges);
  t.flip_permutation.resize(static_cast<size_t>(v));
  for (int i = 0; i < v; ++i) t.flip_permutation[static_cast<size_t>(i)] = i;
  t.part_assignment.assign(static_cast<size_t>(v), 0);
  return t;
}

GraphTopology path4() { return make_topo(4, {{0, 1}, {1, 2}, {2, 3}}); }

SkeletonSequence random_sequence(Rng& rng, int c, int t, int v) {
  SkeletonSequence s(c, t, v);
  for (auto& x : s.data) x = rng.uniform(-1.0, 1.0);
  return s;
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "pstl_skeleton_test";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("degree vector on path, star, and the 25-joint tree") {
  REQUIRE(degree_vector(path4()) == std::vector<int>{1, 2, 2, 1});

  auto star = make_topo(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  REQUIRE(degree_vector(star) == std::vector<int>{4, 1, 1, 1, 1});

  auto ntu = ntu25_topology();
  REQUIRE(ntu.edges.size() == 24);
  auto deg = degree_vector(ntu);
  // oracle: count incidences by brute force over the edge list
  std::vector<int> brute(25, 0);
  for (auto [u, v] : ntu.edges) {
    ++brute[static_cast<size_t>(u)];
    ++brute[static_cast<size_t>(v)];
  }
  REQUIRE(deg == brute);
  int sum = 0;
  for (int d : deg) sum += d;
  REQUIRE(sum == 48);
}

TEST_CASE("degree sum equals twice the edge count for every packaged topology") {
  for (const auto* name : {"desk10", "ntu25"}) {
    auto topo = topology_by_name(name);
    auto deg = degree_vector(topo);
    int sum = 0;
    for (int d : deg) sum += d;
    REQUIRE(sum == 2 * static_cast<int>(topo.edges.size()));
  }
}

TEST_CASE("packaged topologies validate: involution, parts, connectivity") {
  for (const auto* name : {"desk10", "ntu25"}) {
    auto topo = topology_by_name(name);
    REQUIRE_NOTHROW(topo.validate());
    for (int i = 0; i < topo.num_joints; ++i) {
      const int j = topo.flip_permutation[static_cast<size_t>(i)];
      REQUIRE(topo.flip_permutation[static_cast<size_t>(j)] == i);
    }
    std::vector<int> part_count(GraphTopology::kNumParts, 0);
    for (int p : topo.part_assignment) ++part_count[static_cast<size_t>(p)];
    for (int c : part_count) REQUIRE(c > 0);
  }
}

TEST_CASE("motion stream: constant, linear, and random oracle cases") {
  SkeletonSequence constant(3, 6, 4, 2.5);
  auto m = to_motion_stream(constant);
  REQUIRE(m.T == 5);
  for (double x : m.data) REQUIRE(x == 0.0);

  // x_t = t * u
  SkeletonSequence lin(2, 5, 3);
  const double u[2] = {0.3, -1.2};
  for (int c = 0; c < 2; ++c)
    for (int t = 0; t < 5; ++t)
      for (int v = 0; v < 3; ++v) lin.at(c, t, v) = t * u[c];
  auto lm = to_motion_stream(lin);
  for (int c = 0; c < 2; ++c)
    for (int t = 0; t < 4; ++t)
      for (int v = 0; v < 3; ++v) REQUIRE(lm.at(c, t, v) == Catch::Approx(u[c]).margin(1e-12));

  Rng rng(7);
  auto s = random_sequence(rng, 3, 5, 4);
  auto ms = to_motion_stream(s);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 4; ++t)
      for (int v = 0; v < 4; ++v)
        REQUIRE(ms.at(c, t, v) == s.at(c, t + 1, v) - s.at(c, t, v));

  auto padded = to_motion_stream(s, true);
  REQUIRE(padded.T == 5);
  for (int c = 0; c < 3; ++c)
    for (int v = 0; v < 4; ++v) REQUIRE(padded.at(c, 4, v) == 0.0);

  SkeletonSequence tiny(3, 1, 4);
  tiny.T = 1;  // below the 2-frame minimum
  REQUIRE_THROWS_AS(to_motion_stream(tiny), Error);
}

TEST_CASE("motion stream composed with cumulative sum reconstructs the sequence") {
  Rng rng(8);
  auto s = random_sequence(rng, 3, 7, 5);
  auto m = to_motion_stream(s);
  for (int c = 0; c < 3; ++c)
    for (int v = 0; v < 5; ++v) {
      double acc = s.at(c, 0, v);
      for (int t = 1; t < 7; ++t) {
        acc += m.at(c, t - 1, v);
        REQUIRE(acc == Catch::Approx(s.at(c, t, v)).margin(1e-9));
      }
    }
}

TEST_CASE("bone stream: zeros, two-joint chain, and parent-difference oracle") {
  auto chain2 = make_topo(2, {{0, 1}});
  SkeletonSequence zeros(3, 4, 2, 0.0);
  auto zb = to_bone_stream(zeros, chain2);
  for (double x : zb.data) REQUIRE(x == 0.0);

  SkeletonSequence pair(3, 3, 2);
  const double u[3] = {0.1, 0.2, -0.3};
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 3; ++t) {
      pair.at(c, t, 0) = 1.0;
      pair.at(c, t, 1) = 1.0 + u[c];
    }
  auto pb = to_bone_stream(pair, chain2);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 3; ++t) {
      REQUIRE(pb.at(c, t, 0) == 0.0);
      REQUIRE(pb.at(c, t, 1) == Catch::Approx(u[c]).margin(1e-12));
    }

  Rng rng(9);
  auto s = random_sequence(rng, 3, 4, 4);
  auto b = to_bone_stream(s, path4());
  const int parent[4] = {0, 0, 1, 2};  // BFS from joint 0 along the path
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 4; ++t)
      for (int v = 0; v < 4; ++v) {
        const double want = v == 0 ? 0.0 : s.at(c, t, v) - s.at(c, t, parent[v]);
        REQUIRE(b.at(c, t, v) == Catch::Approx(want).margin(1e-12));
      }

  auto cyclic = make_topo(3, {{0, 1}, {1, 2}, {2, 0}});
  REQUIRE_THROWS_AS(to_bone_stream(random_sequence(rng, 3, 4, 3), cyclic), Error);
}

TEST_CASE("temporal resize: identity, constant, ramp oracle, idempotence") {
  Rng rng(10);
  auto s = random_sequence(rng, 3, 50, 4);
  auto same = resize_temporal(s, 50);
  REQUIRE(same.data == s.data);

  SkeletonSequence constant(2, 7, 3, 4.25);
  auto rc = resize_temporal(constant, 19);
  for (double x : rc.data) REQUIRE(x == 4.25);

  // ramp: value = frame index; target positions follow the line exactly
  SkeletonSequence ramp(1, 10, 2);
  for (int t = 0; t < 10; ++t)
    for (int v = 0; v < 2; ++v) ramp.at(0, t, v) = t;
  auto rr = resize_temporal(ramp, 50);
  REQUIRE(rr.T == 50);
  for (int t = 0; t < 50; ++t) {
    const double want = 9.0 * t / 49.0;
    REQUIRE(rr.at(0, t, 0) == Catch::Approx(want).margin(1e-12));
  }
  REQUIRE(rr.at(0, 0, 0) == 0.0);
  REQUIRE(rr.at(0, 49, 0) == 9.0);

  auto twice = resize_temporal(rr, 50);
  REQUIRE(twice.data == rr.data);
}

TEST_CASE("synthetic dataset is deterministic and class motion energies differ") {
  SyntheticConfig cfg;
  cfg.train_per_class = 50;
  cfg.test_per_class = 0;
  auto a = generate_synthetic(cfg, 42);
  auto b = generate_synthetic(cfg, 42);
  REQUIRE(a.sequences.size() == b.sequences.size());
  for (size_t i = 0; i < a.sequences.size(); ++i)
    REQUIRE(a.sequences[i].data == b.sequences[i].data);

  auto c = generate_synthetic(cfg, 43);
  bool any_diff = false;
  for (size_t i = 0; i < a.sequences.size() && !any_diff; ++i)
    any_diff = a.sequences[i].data != c.sequences[i].data;
  REQUIRE(any_diff);

  // class-conditional mean motion energy, computed directly
  std::vector<double> energy(static_cast<size_t>(cfg.num_classes), 0.0);
  std::vector<int> count(static_cast<size_t>(cfg.num_classes), 0);
  for (const auto& s : a.sequences) {
    auto m = to_motion_stream(s);
    double e = 0.0;
    for (double x : m.data) e += x * x;
    energy[static_cast<size_t>(s.label)] += e;
    ++count[static_cast<size_t>(s.label)];
  }
  for (size_t k = 0; k < energy.size(); ++k) energy[k] /= count[k];
  for (size_t i = 0; i < energy.size(); ++i)
    for (size_t j = i + 1; j < energy.size(); ++j)
      REQUIRE(std::abs(energy[i] - energy[j]) > 0.05 * std::max(energy[i], energy[j]));
}

TEST_CASE("noise-free generation is reproducible") {
  SyntheticConfig cfg;
  cfg.train_per_class = 1;
  cfg.test_per_class = 0;
  cfg.noise = 0.0;
  auto a = generate_synthetic(cfg, 5);
  auto b = generate_synthetic(cfg, 5);
  for (size_t i = 0; i < a.sequences.size(); ++i)
    REQUIRE(a.sequences[i].data == b.sequences[i].data);
}

TEST_CASE("dataset save/load round-trips bit-exactly") {
  SyntheticConfig cfg;
  cfg.train_per_class = 3;
  cfg.test_per_class = 2;
  auto data = generate_synthetic(cfg, 11);
  const auto dir = temp_dir();
  const auto mpath = (dir / "roundtrip.manifest").string();
  save_dataset(data, mpath);
  auto loaded = load_dataset(mpath);

  REQUIRE(loaded.num_classes == data.num_classes);
  REQUIRE(loaded.sequences.size() == data.sequences.size());
  REQUIRE(loaded.topology.edges == data.topology.edges);
  REQUIRE(loaded.topology.flip_permutation == data.topology.flip_permutation);
  REQUIRE(loaded.topology.part_assignment == data.topology.part_assignment);
  for (size_t i = 0; i < data.sequences.size(); ++i) {
    REQUIRE(loaded.sequences[i].data == data.sequences[i].data);
    REQUIRE(loaded.sequences[i].label == data.sequences[i].label);
    REQUIRE(loaded.sequences[i].subject == data.sequences[i].subject);
    REQUIRE(loaded.split[i] == data.split[i]);
  }

  // saving the loaded dataset reproduces the payload bytes
  const auto mpath2 = (dir / "roundtrip2.manifest").string();
  save_dataset(loaded, mpath2);
  std::ifstream f1(dir / "roundtrip.bin", std::ios::binary);
  std::ifstream f2(dir / "roundtrip2.bin", std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  REQUIRE(b1 == b2);
}

TEST_CASE("truncated payloads and shape mismatches are rejected") {
  SyntheticConfig cfg;
  cfg.train_per_class = 2;
  cfg.test_per_class = 0;
  auto data = generate_synthetic(cfg, 12);
  const auto dir = temp_dir();
  const auto mpath = (dir / "broken.manifest").string();
  save_dataset(data, mpath);

  // truncate the payload
  const auto ppath = dir / "broken.bin";
  const auto full = std::filesystem::file_size(ppath);
  std::filesystem::resize_file(ppath, full - 4);
  try {
    load_dataset(mpath);
    FAIL("expected shape mismatch");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::shape_mismatch);
  }
  std::filesystem::resize_file(ppath, full);

  // manifest declares one more joint than the payload holds
  std::ifstream in(mpath);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("V: 10");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 5, "V: 11");
  std::ofstream out(mpath);
  out << text;
  out.close();
  try {
    load_dataset(mpath);
    FAIL("expected shape mismatch");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::shape_mismatch);
  }
}

TEST_CASE("malformed manifests are rejected with a format error") {
  const auto dir = temp_dir();
  const auto mpath = (dir / "garbage.manifest").string();
  std::ofstream out(mpath);
  out << "format: pstl-dataset-v1\nnot a manifest line\n";
  out.close();
  try {
    load_dataset(mpath);
    FAIL("expected format error");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::format);
  }
  REQUIRE_THROWS_AS(load_dataset((dir / "missing.manifest").string()), Error);
}

TEST_CASE("modality derivation keeps shapes aligned across streams") {
  SyntheticConfig cfg;
  cfg.train_per_class = 2;
  cfg.test_per_class = 1;
  auto data = generate_synthetic(cfg, 13);
  for (auto m : {Modality::joint, Modality::motion, Modality::bone}) {
    auto derived = apply_modality(data, m);
    REQUIRE(derived.sequences.size() == data.sequences.size());
    for (size_t i = 0; i < derived.sequences.size(); ++i) {
      REQUIRE(derived.sequences[i].C == 3);
      REQUIRE(derived.sequences[i].T == data.sequences[i].T);
      REQUIRE(derived.sequences[i].V == data.sequences[i].V);
      REQUIRE(derived.sequences[i].label == data.sequences[i].label);
    }
  }
}
