#pragma once

// Dataset file format: a text manifest next to a binary payload of
// little-endian float32 coordinates in sequence-major, then C, T, V order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pstl/common.hpp"
#include "pstl/manifest.hpp"
#include "pstl/skeleton.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset payloads are little-endian; big-endian hosts need a byte swap");

namespace pstl {

inline void save_dataset(const Dataset& data, const std::string& manifest_path) {
  data.validate();
  const std::filesystem::path mpath(manifest_path);
  const std::string payload_name = mpath.stem().string() + ".bin";
  const std::filesystem::path ppath = mpath.parent_path() / payload_name;

  std::ofstream m(mpath);
  require(m.good(), errc::generic, "cannot write manifest '" + manifest_path + "'");
  const auto& s0 = data.sequences.front();
  m << "format: pstl-dataset-v1\n";
  m << "payload: " << payload_name << "\n";
  m << "num_sequences: " << data.sequences.size() << "\n";
  m << "C: " << s0.C << "\nT: " << s0.T << "\nV: " << s0.V << "\n";
  m << "num_classes: " << data.num_classes << "\n";
  m << "labels:";
  for (const auto& s : data.sequences) m << ' ' << s.label;
  m << "\nsubjects:";
  for (const auto& s : data.sequences) m << ' ' << s.subject;
  m << "\nsplit:";
  for (Split sp : data.split) m << ' ' << static_cast<int>(sp);
  m << "\nedges:";
  for (auto [u, v] : data.topology.edges) m << ' ' << u << '-' << v;
  m << "\nflip_permutation:";
  for (int j : data.topology.flip_permutation) m << ' ' << j;
  m << "\npart_assignment:";
  for (int p : data.topology.part_assignment) m << ' ' << p;
  m << "\n";
  m.close();
  require(m.good(), errc::generic, "failed writing manifest '" + manifest_path + "'");

  std::ofstream p(ppath, std::ios::binary);
  require(p.good(), errc::generic, "cannot write payload '" + ppath.string() + "'");
  std::vector<float> buf;
  for (const auto& s : data.sequences) {
    buf.resize(s.data.size());
    for (size_t i = 0; i < s.data.size(); ++i) buf[i] = static_cast<float>(s.data[i]);
    p.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  p.close();
  require(p.good(), errc::generic, "failed writing payload '" + ppath.string() + "'");
}

inline Dataset load_dataset(const std::string& manifest_path) {
  const auto entries = detail::read_manifest_lines(manifest_path, "pstl-dataset-v1");
  std::string payload_name;
  int64_t num_sequences = -1;
  int C = -1, T = -1, V = -1, num_classes = -1;
  std::vector<int> labels, subjects, split_vals, flip, parts;
  std::vector<std::pair<int, int>> edges;
  bool have_edges = false;

  for (const auto& [key, value] : entries) {
    if (key == "payload") {
      payload_name = value;
    } else if (key == "num_sequences") {
      num_sequences = std::stoll(value);
    } else if (key == "C") {
      C = std::stoi(value);
    } else if (key == "T") {
      T = std::stoi(value);
    } else if (key == "V") {
      V = std::stoi(value);
    } else if (key == "num_classes") {
      num_classes = std::stoi(value);
    } else if (key == "labels") {
      labels = detail::parse_int_list<int>(value, "labels");
    } else if (key == "subjects") {
      subjects = detail::parse_int_list<int>(value, "subjects");
    } else if (key == "split") {
      split_vals = detail::parse_int_list<int>(value, "split");
    } else if (key == "flip_permutation") {
      flip = detail::parse_int_list<int>(value, "flip_permutation");
    } else if (key == "part_assignment") {
      parts = detail::parse_int_list<int>(value, "part_assignment");
    } else if (key == "edges") {
      have_edges = true;
      std::istringstream is(value);
      std::string tok;
      while (is >> tok) {
        const auto dash = tok.find('-');
        require(dash != std::string::npos, errc::format, "malformed edge '" + tok + "'");
        edges.emplace_back(std::stoi(tok.substr(0, dash)), std::stoi(tok.substr(dash + 1)));
      }
    } else {
      fail(errc::format, "unknown manifest key '" + key + "' in '" + manifest_path + "'");
    }
  }
  require(!payload_name.empty() && num_sequences >= 1 && C >= 1 && T >= 1 && V >= 1 &&
              num_classes >= 1 && have_edges,
          errc::format, "manifest '" + manifest_path + "' is missing required keys");
  require(static_cast<int64_t>(labels.size()) == num_sequences, errc::format,
          "manifest labels length disagrees with num_sequences");
  require(subjects.empty() || static_cast<int64_t>(subjects.size()) == num_sequences, errc::format,
          "manifest subjects length disagrees with num_sequences");
  require(static_cast<int64_t>(split_vals.size()) == num_sequences, errc::format,
          "manifest split length disagrees with num_sequences");

  const std::filesystem::path ppath =
      std::filesystem::path(manifest_path).parent_path() / payload_name;
  std::ifstream p(ppath, std::ios::binary);
  require(p.good(), errc::missing_input, "cannot open payload '" + ppath.string() + "'");
  p.seekg(0, std::ios::end);
  const int64_t bytes = static_cast<int64_t>(p.tellg());
  p.seekg(0);
  const int64_t per_seq = static_cast<int64_t>(C) * T * V;
  const int64_t expected = num_sequences * per_seq * static_cast<int64_t>(sizeof(float));
  require(bytes == expected, errc::shape_mismatch,
          "payload '" + ppath.string() + "' holds " + std::to_string(bytes) +
              " bytes but the manifest shape requires " + std::to_string(expected));

  Dataset data;
  data.num_classes = num_classes;
  data.topology.num_joints = V;
  data.topology.edges = std::move(edges);
  data.topology.flip_permutation = std::move(flip);
  data.topology.part_assignment = std::move(parts);

  std::vector<float> buf(static_cast<size_t>(per_seq));
  for (int64_t i = 0; i < num_sequences; ++i) {
    p.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(p.good(), errc::shape_mismatch, "payload '" + ppath.string() + "' ended early");
    SkeletonSequence seq(C, T, V);
    for (size_t k = 0; k < buf.size(); ++k) {
      const double x = static_cast<double>(buf[k]);
      require(std::isfinite(x), errc::numeric_fault,
              "payload '" + ppath.string() + "' contains a non-finite value");
      seq.data[k] = x;
    }
    seq.label = labels[static_cast<size_t>(i)];
    seq.subject = subjects.empty() ? 0 : subjects[static_cast<size_t>(i)];
    require(split_vals[static_cast<size_t>(i)] == 0 || split_vals[static_cast<size_t>(i)] == 1,
            errc::format, "split entries must be 0 (train) or 1 (test)");
    data.split.push_back(split_vals[static_cast<size_t>(i)] == 0 ? Split::train : Split::test);
    data.sequences.push_back(std::move(seq));
  }
  data.validate();
  return data;
}

}  // namespace pstl
