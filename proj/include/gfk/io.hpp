// Copyright 2026 The gfk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GFK_IO_HPP
#define GFK_IO_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfk/diffusion.hpp"
#include "gfk/gaussian_mixture.hpp"
#include "gfk/linalg.hpp"
#include "gfk/smc.hpp"
#include "gfk/twist_bridge.hpp"

/**
 * \file
 * \brief JSON documents for instances, schedules, twist coefficients and SMC
 * diagnostics, plus the raw particle dump format.
 *
 * Doubles are written by nlohmann::json in shortest round-trip form, so a
 * reload is bit-exact.
 */

namespace gfk {

using Json = nlohmann::json;

namespace io {

inline Json vector_json(const Eigen::Ref<const VectorXd>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline VectorXd vector_from(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
}

/// Row-major nested arrays.
inline Json matrix_json(const Eigen::Ref<const MatrixXd>& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    rows.push_back(vector_json(m.row(i).transpose()));
  }
  return rows;
}

inline MatrixXd matrix_from(const Json& j, Index cols_if_empty = 0) {
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows == 0 ? cols_if_empty : static_cast<Index>(j.at(0).size());
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != cols) {
      throw Error("matrix_from: ragged rows");
    }
    for (Index c = 0; c < cols; ++c) {
      m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return m;
}

}  // namespace io

inline Json to_json(const GaussianMixture& gm) {
  Json out;
  out["weights"] = io::vector_json(gm.weights());
  out["means"] = Json::array();
  out["eigenvalues"] = Json::array();
  out["eigenvectors"] = Json::array();
  for (Index i = 0; i < gm.size(); ++i) {
    out["means"].push_back(io::vector_json(gm.mean(i)));
    out["eigenvalues"].push_back(io::vector_json(gm.eigenvalues(i)));
    out["eigenvectors"].push_back(io::matrix_json(gm.eigenvectors(i)));
  }
  return out;
}

inline GaussianMixture mixture_from_json(const Json& j) {
  std::vector<VectorXd> means;
  std::vector<VectorXd> values;
  std::vector<MatrixXd> vectors;
  for (const auto& m : j.at("means")) {
    means.push_back(io::vector_from(m));
  }
  for (const auto& v : j.at("eigenvalues")) {
    values.push_back(io::vector_from(v));
  }
  for (const auto& e : j.at("eigenvectors")) {
    vectors.push_back(io::matrix_from(e));
  }
  return GaussianMixture::from_eigenpairs(io::vector_from(j.at("weights")), std::move(means), std::move(vectors),
                                          std::move(values));
}

inline Json to_json(const LinearGaussianObservation& obs) {
  return {{"H", io::matrix_json(obs.H())}, {"b", io::vector_json(obs.b())}, {"R", io::matrix_json(obs.R())}};
}

inline LinearGaussianObservation observation_from_json(const Json& j) {
  return {io::matrix_from(j.at("H")), io::vector_from(j.at("b")), io::matrix_from(j.at("R"))};
}

inline Json to_json(const ProblemInstance& instance) {
  Json out = to_json(instance.prior);
  out.update(to_json(instance.observation));
  out["seed"] = instance.seed;
  return out;
}

inline ProblemInstance instance_from_json(const Json& j) {
  ProblemInstance instance{mixture_from_json(j), observation_from_json(j), j.at("seed").get<std::uint64_t>()};
  instance.validate();
  return instance;
}

inline Json to_json(const DiffusionSchedule& sched) {
  return {{"a", sched.drift()}, {"bcoef", sched.diffusion()}, {"T", sched.horizon()}, {"grid", sched.grid()}};
}

inline DiffusionSchedule schedule_from_json(const Json& j) {
  DiffusionSchedule sched(j.at("a").get<double>(), j.at("bcoef").get<double>(),
                          j.at("grid").get<std::vector<double>>());
  if (j.contains("T") && j.at("T").get<double>() != sched.horizon()) {
    throw Error("schedule_from_json: T does not match the last grid point");
  }
  return sched;
}

inline Json to_json(const TwistCoefficients& coeffs, const ObservationPath& path) {
  Json out;
  out["seed"] = path.seed;
  out["observation_path"] = Json::array();
  for (const auto& y : path.forward) {
    out["observation_path"].push_back(io::vector_json(y));
  }
  out["F"] = Json::array();
  out["z"] = Json::array();
  out["Omega"] = Json::array();
  for (int n = 0; n <= coeffs.steps(); ++n) {
    const auto i = static_cast<std::size_t>(n);
    out["F"].push_back(io::matrix_json(coeffs.F[i]));
    out["z"].push_back(io::vector_json(coeffs.z[i]));
    out["Omega"].push_back(io::matrix_json(coeffs.omega[i]));
  }
  return out;
}

inline Json diagnostics_json(const ParticleCloud& cloud) {
  return {{"ess_trace", cloud.ess_trace},
          {"resampled_at", cloud.resampled_at},
          {"log_normalizer", cloud.log_normalizer_estimate},
          {"final_ess", cloud.ess}};
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  return Json::parse(in);
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

/// Raw particle dump: "GFKP", version, J, d as little-endian u32, then J x d
/// little-endian doubles, row-major (one particle per row).
namespace dump {

inline constexpr std::array<char, 4> kMagic{'G', 'F', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "particle dumps assume a little-endian host");

inline void write(const std::filesystem::path& path, const Eigen::Ref<const MatrixXd>& positions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  const std::array<std::uint32_t, 3> header{kVersion, static_cast<std::uint32_t>(positions.cols()),
                                            static_cast<std::uint32_t>(positions.rows())};
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(header.data()), sizeof(header));
  // d x J column-major is J x d row-major
  const MatrixXd packed = positions;
  out.write(reinterpret_cast<const char*>(packed.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(packed.size())));
}

/// Returns positions as d x J.
inline MatrixXd read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  std::array<char, 4> magic{};
  std::array<std::uint32_t, 3> header{};
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(header.data()), sizeof(header));
  if (!in || magic != kMagic) {
    throw Error("not a particle dump: " + path.string());
  }
  if (header[0] != kVersion) {
    throw Error("unsupported particle dump version " + std::to_string(header[0]));
  }
  MatrixXd positions(static_cast<Index>(header[2]), static_cast<Index>(header[1]));
  in.read(reinterpret_cast<char*>(positions.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(positions.size())));
  if (!in) {
    throw Error("truncated particle dump: " + path.string());
  }
  return positions;
}

}  // namespace dump

}  // namespace gfk

#endif  // GFK_IO_HPP
