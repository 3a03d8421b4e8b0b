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

#ifndef GFK_HARNESS_HPP
#define GFK_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "gfk/diffusion.hpp"
#include "gfk/gaussian_mixture.hpp"
#include "gfk/io.hpp"
#include "gfk/metrics.hpp"
#include "gfk/rng.hpp"
#include "gfk/smc.hpp"
#include "gfk/twist_bridge.hpp"
#include "gfk/twist_canonical.hpp"

/**
 * \file
 * \brief Repeated-run experiments: configuration, the run sweep with its
 * `runs.jsonl` record file, and the aggregate table and figure data.
 */

namespace gfk {

enum class Method { b0smc, b0smc_bootstrap, tds, dps };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::b0smc:
      return "b0smc";
    case Method::b0smc_bootstrap:
      return "b0smc_bootstrap";
    case Method::tds:
      return "tds";
    case Method::dps:
      return "dps";
  }
  return "unknown";
}

inline Method parse_method(const std::string& name) {
  for (Method m : {Method::b0smc, Method::b0smc_bootstrap, Method::tds, Method::dps}) {
    if (method_name(m) == name) {
      return m;
    }
  }
  throw Error("unknown method '" + name + "'");
}

/// Whether the method returns weighted particles.
inline bool is_weighted(Method m) { return m != Method::dps; }

inline std::string scheme_name(ResamplingScheme s) {
  switch (s) {
    case ResamplingScheme::stratified:
      return "stratified";
    case ResamplingScheme::systematic:
      return "systematic";
    case ResamplingScheme::multinomial:
      return "multinomial";
  }
  return "unknown";
}

inline ResamplingScheme parse_scheme(const std::string& name) {
  for (auto s : {ResamplingScheme::stratified, ResamplingScheme::systematic, ResamplingScheme::multinomial}) {
    if (scheme_name(s) == name) {
      return s;
    }
  }
  throw Error("unknown resampling scheme '" + name + "'");
}

/// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) {
    return "NA";
  }
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct ExperimentConfig {
  Index d = 256;
  Index c = 1;
  Index K = 10;
  double T = 2.0;
  int N = 100;
  std::vector<Index> particle_counts{16384};
  std::vector<double> outlier_levels{0.0, 5.0, 10.0};
  std::vector<Method> methods{Method::b0smc, Method::tds, Method::dps};
  int repeats = 100;
  std::uint64_t base_seed = 0;
  ResamplingPolicy resampling;
  bool noiseless_mode = false;
  bool redraw_instance_per_repeat = true;
  std::string output_dir = "results";
  Index swd_projections = 1000;
  double tds_guidance_scale = 1.0;
  double dps_guidance_scale = 1.0;
  bool dump_particles = false;
  std::string instance_path;  // fixed instance for every repeat when set
  std::pair<Index, Index> histogram_dims{0, 1};
  Index histogram_bins = 60;

  static constexpr double kNoiselessVariance = 1e-8;

  static ExperimentConfig full() { return {}; }

  static ExperimentConfig desk() {
    ExperimentConfig cfg;
    cfg.repeats = 20;
    return cfg;
  }

  void validate() const {
    if (d < 1 || c < 1 || K < 1 || N < 1 || !(T > 0.0)) {
      throw Error("ExperimentConfig: d, c, K, N must be positive and T > 0");
    }
    if (c > d) {
      throw Error("ExperimentConfig: c must not exceed d");
    }
    if (repeats < 1) {
      throw Error("ExperimentConfig: repeats must be at least 1");
    }
    if (particle_counts.empty()) {
      throw Error("ExperimentConfig: J is empty");
    }
    for (Index j : particle_counts) {
      if (j < 2) {
        throw Error("ExperimentConfig: J must be at least 2");
      }
    }
    if (methods.empty()) {
      throw Error("ExperimentConfig: methods must not be empty");
    }
    if (outlier_levels.empty()) {
      throw Error("ExperimentConfig: outlier_levels must not be empty");
    }
    if (swd_projections < 1) {
      throw Error("ExperimentConfig: swd_projections must be at least 1");
    }
    if (histogram_bins < 1 || histogram_dims.first < 0 || histogram_dims.second < 0 ||
        histogram_dims.first >= d || histogram_dims.second >= d) {
      throw Error("ExperimentConfig: invalid histogram settings");
    }
    resampling.validate();
    GuidanceConfig{tds_guidance_scale, false}.validate();
    GuidanceConfig{dps_guidance_scale, true}.validate();
  }
};

inline Json to_json(const ExperimentConfig& cfg) {
  Json methods = Json::array();
  for (Method m : cfg.methods) {
    methods.push_back(method_name(m));
  }
  return {{"d", cfg.d},
          {"c", cfg.c},
          {"K", cfg.K},
          {"T", cfg.T},
          {"N", cfg.N},
          {"J", cfg.particle_counts},
          {"outlier_levels", cfg.outlier_levels},
          {"methods", methods},
          {"repeats", cfg.repeats},
          {"base_seed", cfg.base_seed},
          {"resampling_threshold", cfg.resampling.threshold_fraction},
          {"resampling_scheme", scheme_name(cfg.resampling.scheme)},
          {"noiseless_mode", cfg.noiseless_mode},
          {"redraw_instance_per_repeat", cfg.redraw_instance_per_repeat},
          {"output_dir", cfg.output_dir},
          {"swd_projections", cfg.swd_projections},
          {"tds_guidance_scale", cfg.tds_guidance_scale},
          {"dps_guidance_scale", cfg.dps_guidance_scale},
          {"dump_particles", cfg.dump_particles},
          {"instance_path", cfg.instance_path},
          {"histogram_dims", {cfg.histogram_dims.first, cfg.histogram_dims.second}},
          {"histogram_bins", cfg.histogram_bins}};
}

/// Overrides the fields present in `j`; unknown keys are rejected.
inline ExperimentConfig config_from_json(const Json& j, ExperimentConfig cfg = ExperimentConfig::desk()) {
  if (!j.is_object()) {
    throw Error("config must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "d") {
      cfg.d = value.get<Index>();
    } else if (key == "c") {
      cfg.c = value.get<Index>();
    } else if (key == "K") {
      cfg.K = value.get<Index>();
    } else if (key == "T") {
      cfg.T = value.get<double>();
    } else if (key == "N") {
      cfg.N = value.get<int>();
    } else if (key == "J") {
      cfg.particle_counts = value.is_array() ? value.get<std::vector<Index>>() : std::vector<Index>{value.get<Index>()};
    } else if (key == "outlier_levels") {
      cfg.outlier_levels = value.get<std::vector<double>>();
    } else if (key == "methods") {
      cfg.methods.clear();
      for (const auto& m : value) {
        cfg.methods.push_back(parse_method(m.get<std::string>()));
      }
    } else if (key == "repeats") {
      cfg.repeats = value.get<int>();
    } else if (key == "base_seed") {
      cfg.base_seed = value.get<std::uint64_t>();
    } else if (key == "resampling_threshold") {
      cfg.resampling.threshold_fraction = value.get<double>();
    } else if (key == "resampling_scheme") {
      cfg.resampling.scheme = parse_scheme(value.get<std::string>());
    } else if (key == "noiseless_mode") {
      cfg.noiseless_mode = value.get<bool>();
    } else if (key == "redraw_instance_per_repeat") {
      cfg.redraw_instance_per_repeat = value.get<bool>();
    } else if (key == "output_dir") {
      cfg.output_dir = value.get<std::string>();
    } else if (key == "swd_projections") {
      cfg.swd_projections = value.get<Index>();
    } else if (key == "tds_guidance_scale") {
      cfg.tds_guidance_scale = value.get<double>();
    } else if (key == "dps_guidance_scale") {
      cfg.dps_guidance_scale = value.get<double>();
    } else if (key == "dump_particles") {
      cfg.dump_particles = value.get<bool>();
    } else if (key == "instance_path") {
      cfg.instance_path = value.get<std::string>();
    } else if (key == "histogram_dims") {
      const auto dims = value.get<std::vector<Index>>();
      if (dims.size() != 2) {
        throw Error("histogram_dims needs two entries");
      }
      cfg.histogram_dims = {dims[0], dims[1]};
    } else if (key == "histogram_bins") {
      cfg.histogram_bins = value.get<Index>();
    } else {
      throw Error("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

/// One (method, omega, J, repeat) cell of the sweep.
struct RunKey {
  Method method = Method::b0smc;
  double omega = 0.0;
  Index J = 0;
  int repeat = 0;

  auto tie() const { return std::make_tuple(static_cast<int>(method), std::bit_cast<std::uint64_t>(omega), J, repeat); }
  bool operator<(const RunKey& o) const { return tie() < o.tie(); }
  bool operator==(const RunKey& o) const { return tie() == o.tie(); }

  std::string label() const {
    std::ostringstream out;
    out << "method=" << method_name(method) << " omega=" << format_double(omega) << " J=" << J
        << " repeat=" << repeat;
    return out.str();
  }

  /// File-name stem shared by dumps and figure data.
  std::string stem() const {
    return method_name(method) + "_omega" + format_double(omega) + "_J" + std::to_string(J) + "_r" +
           std::to_string(repeat);
  }
};

struct RunRecord {
  RunKey key;
  std::uint64_t seed = 0;
  std::uint64_t instance_seed = 0;
  bool failed = false;
  std::string error;
  int failed_step = -1;
  double swd = 0.0;
  double final_ess = 0.0;
  bool weighted = true;
  std::vector<double> ess_trace;
  std::vector<int> resampled_at;
  double log_normalizer = 0.0;
  double seconds = 0.0;  // wall clock, kept out of runs.jsonl
};

/// Child seed of a run; depends only on (base_seed, method, omega, repeat).
inline std::uint64_t run_seed(std::uint64_t base_seed, Method method, double omega, int repeat) {
  std::uint64_t s = derive_seed(base_seed, hash_tag(method_name(method)));
  s = derive_seed(s, std::bit_cast<std::uint64_t>(omega));
  return derive_seed(s, static_cast<std::uint64_t>(repeat));
}

inline std::uint64_t instance_seed(const ExperimentConfig& cfg, int repeat) {
  const std::uint64_t root = derive_seed(cfg.base_seed, hash_tag("instance"));
  return cfg.redraw_instance_per_repeat ? derive_seed(root, static_cast<std::uint64_t>(repeat)) : root;
}

/// The instance of a repeat, with noiseless mode applied.
inline ProblemInstance build_instance(const ExperimentConfig& cfg, int repeat) {
  ProblemInstance instance = cfg.instance_path.empty()
                                 ? generate_instance(cfg.d, cfg.c, cfg.K, instance_seed(cfg, repeat))
                                 : instance_from_json(read_json(cfg.instance_path));
  if (instance.d() != cfg.d || instance.c() != cfg.c) {
    throw Error("instance shape does not match the config");
  }
  if (cfg.noiseless_mode) {
    instance.observation = instance.observation.with_noise(
        ExperimentConfig::kNoiselessVariance * MatrixXd::Identity(cfg.c, cfg.c));
  }
  return instance;
}

/// JSON form of a record, keys in a fixed order; wall-clock time excluded.
inline nlohmann::ordered_json to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["method"] = method_name(r.key.method);
  j["omega"] = r.key.omega;
  j["J"] = r.key.J;
  j["repeat"] = r.key.repeat;
  j["seed"] = r.seed;
  j["instance_seed"] = r.instance_seed;
  j["failed"] = r.failed;
  if (r.failed) {
    j["error"] = r.error;
    j["failed_step"] = r.failed_step;
    return j;
  }
  j["swd"] = r.swd;
  j["final_ess"] = r.final_ess;
  j["weighted"] = r.weighted;
  j["log_normalizer"] = r.log_normalizer;
  j["resampled_at"] = r.resampled_at;
  j["ess_trace"] = r.ess_trace;
  return j;
}

/// One line of runs.jsonl.
inline std::string record_line(const RunRecord& r) { return to_json(r).dump(); }

inline RunRecord record_from_json(const Json& j) {
  RunRecord r;
  r.key.method = parse_method(j.at("method").get<std::string>());
  r.key.omega = j.at("omega").get<double>();
  r.key.J = j.at("J").get<Index>();
  r.key.repeat = j.at("repeat").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.instance_seed = j.value("instance_seed", std::uint64_t{0});
  r.failed = j.at("failed").get<bool>();
  if (r.failed) {
    r.error = j.value("error", std::string{});
    r.failed_step = j.value("failed_step", -1);
    return r;
  }
  r.swd = j.at("swd").get<double>();
  r.final_ess = j.at("final_ess").get<double>();
  r.weighted = j.value("weighted", true);
  r.log_normalizer = j.value("log_normalizer", 0.0);
  if (j.contains("ess_trace")) {
    r.ess_trace = j.at("ess_trace").get<std::vector<double>>();
  }
  if (j.contains("resampled_at")) {
    r.resampled_at = j.at("resampled_at").get<std::vector<int>>();
  }
  return r;
}

inline std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  std::vector<RunRecord> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) {
      continue;
    }
    try {
      out.push_back(record_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

/// Sweep cells in file order: J, then omega, then repeat, then method.
inline std::vector<RunKey> sweep_keys(const ExperimentConfig& cfg) {
  std::vector<RunKey> keys;
  for (Index j : cfg.particle_counts) {
    for (double omega : cfg.outlier_levels) {
      for (int r = 0; r < cfg.repeats; ++r) {
        for (Method m : cfg.methods) {
          keys.push_back({m, omega, j, r});
        }
      }
    }
  }
  return keys;
}

namespace detail {

inline std::filesystem::path dump_path(const ExperimentConfig& cfg, const RunKey& key, bool reference) {
  return std::filesystem::path(cfg.output_dir) / "particles" /
         ((reference ? "exact_" : "") + key.stem() + ".gfkp");
}

}  // namespace detail

/**
 * \brief Runs one cell: builds the instance and y, runs the sampler, draws
 * exact-posterior reference samples and computes the SWD.
 *
 * Sampler errors (weight degeneracy, numerical failure) yield a failed
 * record instead of propagating.
 */
inline RunRecord execute_run(const ExperimentConfig& cfg, const RunKey& key) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.key = key;
  rec.seed = run_seed(cfg.base_seed, key.method, key.omega, key.repeat);
  rec.instance_seed = cfg.instance_path.empty() ? instance_seed(cfg, key.repeat) : 0;
  rec.weighted = is_weighted(key.method);
  const std::uint64_t seed = rec.seed;
  try {
    const ProblemInstance instance = build_instance(cfg, key.repeat);
    const VectorXd y = make_outlier_observation(instance.prior, instance.observation, key.omega);
    const DiffusionPrior prior(instance.prior, DiffusionSchedule::uniform(cfg.N, cfg.T));
    const std::uint64_t sampler_seed = derive_seed(seed, hash_tag("sampler"));

    MatrixXd samples;
    auto take_cloud = [&](const ParticleCloud& cloud) {
      rec.final_ess = cloud.ess;
      rec.ess_trace = cloud.ess_trace;
      rec.resampled_at = cloud.resampled_at;
      rec.log_normalizer = cloud.log_normalizer_estimate;
      samples = weighted_to_equal(cloud, key.J, derive_seed(seed, hash_tag("equal-weights")));
    };
    switch (key.method) {
      case Method::b0smc:
      case Method::b0smc_bootstrap: {
        const auto kind = key.method == Method::b0smc ? ProposalKind::guided : ProposalKind::bootstrap;
        B0smcModel model = build_b0smc_model(prior, instance.observation, y,
                                             derive_seed(seed, hash_tag("observation-path")), kind);
        take_cloud(run_smc(model, key.J, cfg.resampling, sampler_seed));
        break;
      }
      case Method::tds: {
        TdsModel model(prior, instance.observation, y, GuidanceConfig{cfg.tds_guidance_scale, false});
        take_cloud(run_smc(model, key.J, cfg.resampling, sampler_seed));
        break;
      }
      case Method::dps: {
        samples = dps_sample(prior, instance.observation, y, key.J, sampler_seed,
                             GuidanceConfig{cfg.dps_guidance_scale, true});
        rec.final_ess = static_cast<double>(key.J);
        rec.ess_trace.assign(static_cast<std::size_t>(cfg.N) + 1, static_cast<double>(key.J));
        break;
      }
    }
    const GaussianMixture posterior = exact_posterior(instance.prior, instance.observation, y);
    const MatrixXd reference = gm_sample(posterior, key.J, derive_seed(seed, hash_tag("exact-posterior")));
    rec.swd = sliced_wasserstein(samples, reference, {cfg.swd_projections, derive_seed(seed, hash_tag("swd"))});
    if (cfg.dump_particles) {
      std::filesystem::create_directories(std::filesystem::path(cfg.output_dir) / "particles");
      dump::write(detail::dump_path(cfg, key, false), samples);
      dump::write(detail::dump_path(cfg, key, true), reference);
    }
  } catch (const DegeneracyError& e) {
    rec.failed = true;
    rec.error = e.what();
    rec.failed_step = e.step();
  } catch (const Error& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

struct SweepSummary {
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/**
 * \brief Runs every missing cell of the sweep and appends the records to
 * `<output_dir>/runs.jsonl` in sweep order, whatever the worker count.
 * Cells already in the file are skipped. Wall-clock times go to
 * `timings.jsonl`.
 */
inline SweepSummary run_sweep(const ExperimentConfig& cfg, int workers = 1) {
  cfg.validate();
  if (workers < 1) {
    throw Error("run_sweep: workers must be at least 1");
  }
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const fs::path runs_path = dir / "runs.jsonl";

  std::set<RunKey> done;
  if (fs::exists(runs_path)) {
    for (const auto& r : read_records(runs_path)) {
      done.insert(r.key);
    }
  }
  std::vector<RunKey> todo;
  SweepSummary summary;
  for (const auto& key : sweep_keys(cfg)) {
    if (done.count(key) > 0) {
      ++summary.skipped;
    } else {
      todo.push_back(key);
    }
  }

  std::ofstream runs(runs_path, std::ios::app);
  std::ofstream timings(dir / "timings.jsonl", std::ios::app);
  if (!runs || !timings) {
    throw Error("cannot append to " + runs_path.string());
  }

  std::vector<std::optional<RunRecord>> results(todo.size());
  std::mutex mutex;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      RunRecord rec = execute_run(cfg, todo[i]);
      {
        std::lock_guard<std::mutex> lock(mutex);
        results[i] = std::move(rec);
      }
      ready.notify_one();
    }
  };
  std::vector<std::thread> pool;
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(workers), todo.size());
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back(work);
  }

  // single writer, in sweep order
  for (std::size_t i = 0; i < todo.size(); ++i) {
    RunRecord rec;
    {
      std::unique_lock<std::mutex> lock(mutex);
      ready.wait(lock, [&] { return results[i].has_value(); });
      rec = std::move(*results[i]);
      results[i].reset();
    }
    runs << record_line(rec) << '\n' << std::flush;
    timings << Json{{"run", rec.key.label()}, {"seconds", rec.seconds}}.dump() << '\n' << std::flush;
    ++summary.executed;
    if (rec.failed) {
      ++summary.failed;
    }
  }
  for (auto& t : pool) {
    t.join();
  }
  return summary;
}

/// One row of the aggregate table.
struct TableRow {
  Method method = Method::b0smc;
  double omega = 0.0;
  Index J = 0;
  double swd_mean = std::nan("");
  double swd_std = std::nan("");
  double ess_mean = std::nan("");
  std::size_t n_runs = 0;
  std::size_t n_failed = 0;
};

/**
 * \brief Groups records by (method, omega, J) in order of first appearance.
 * Failed runs only count towards n_failed. The standard deviation is the
 * sample one (n - 1), and 0 for a single run. ess_mean is NaN for unweighted
 * methods.
 */
inline std::vector<TableRow> aggregate(const std::vector<RunRecord>& records) {
  std::vector<TableRow> rows;
  std::vector<std::vector<const RunRecord*>> members;
  std::map<std::tuple<int, std::uint64_t, Index>, std::size_t> index;
  for (const auto& r : records) {
    const auto key = std::make_tuple(static_cast<int>(r.key.method), std::bit_cast<std::uint64_t>(r.key.omega), r.key.J);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rows.size()).first;
      TableRow row;
      row.method = r.key.method;
      row.omega = r.key.omega;
      row.J = r.key.J;
      rows.push_back(row);
      members.emplace_back();
    }
    members[it->second].push_back(&r);
  }
  for (std::size_t g = 0; g < rows.size(); ++g) {
    TableRow& row = rows[g];
    std::vector<double> swd;
    std::vector<double> ess;
    for (const RunRecord* r : members[g]) {
      if (r->failed) {
        ++row.n_failed;
        continue;
      }
      swd.push_back(r->swd);
      if (r->weighted) {
        ess.push_back(r->final_ess);
      }
    }
    row.n_runs = swd.size();
    if (!swd.empty()) {
      double mean = 0.0;
      for (double v : swd) {
        mean += v;
      }
      mean /= static_cast<double>(swd.size());
      double ss = 0.0;
      for (double v : swd) {
        ss += (v - mean) * (v - mean);
      }
      row.swd_mean = mean;
      row.swd_std = swd.size() > 1 ? std::sqrt(ss / static_cast<double>(swd.size() - 1)) : 0.0;
    }
    if (!ess.empty()) {
      double mean = 0.0;
      for (double v : ess) {
        mean += v;
      }
      row.ess_mean = mean / static_cast<double>(ess.size());
    }
  }
  return rows;
}

inline void write_table(std::ostream& out, const std::vector<TableRow>& rows) {
  out << "method,omega,J,swd_mean,swd_std,ess_mean,n_runs,n_failed\n";
  for (const auto& r : rows) {
    out << method_name(r.method) << ',' << format_double(r.omega) << ',' << r.J << ',' << format_double(r.swd_mean)
        << ',' << format_double(r.swd_std) << ',' << format_double(r.ess_mean) << ',' << r.n_runs << ','
        << r.n_failed << '\n';
  }
}

/// Reads runs.jsonl (a missing or empty file gives a header-only table).
inline void write_table(const std::filesystem::path& runs_path, const std::filesystem::path& csv_path) {
  std::vector<RunRecord> records;
  if (std::filesystem::exists(runs_path)) {
    records = read_records(runs_path);
  }
  std::ofstream out(csv_path);
  if (!out) {
    throw Error("cannot write " + csv_path.string());
  }
  write_table(out, aggregate(records));
}

enum class FigureKind { ess_trace, marginal_hist };

inline FigureKind parse_figure_kind(const std::string& name) {
  if (name == "ess_trace") {
    return FigureKind::ess_trace;
  }
  if (name == "marginal_hist") {
    return FigureKind::marginal_hist;
  }
  throw Error("unknown figure kind '" + name + "'");
}

namespace detail {

inline const RunRecord& pick_record(const std::vector<RunRecord>& records, const TableRow& group, int repeat) {
  for (const auto& r : records) {
    if (r.key.method == group.method && r.key.omega == group.omega && r.key.J == group.J && r.key.repeat == repeat) {
      return r;
    }
  }
  throw Error("no record for method=" + method_name(group.method) + " omega=" + format_double(group.omega) +
              " J=" + std::to_string(group.J) + " repeat=" + std::to_string(repeat));
}

inline void write_histogram(const std::filesystem::path& path, const Eigen::MatrixXi& counts,
                            const HistogramSpec& spec) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << "bin_x,bin_y,count\n";
  const double wx = (spec.x_range.second - spec.x_range.first) / static_cast<double>(counts.rows());
  const double wy = (spec.y_range.second - spec.y_range.first) / static_cast<double>(counts.cols());
  for (Index i = 0; i < counts.rows(); ++i) {
    for (Index j = 0; j < counts.cols(); ++j) {
      out << format_double(spec.x_range.first + (static_cast<double>(i) + 0.5) * wx) << ','
          << format_double(spec.y_range.first + (static_cast<double>(j) + 0.5) * wy) << ',' << counts(i, j) << '\n';
    }
  }
}

}  // namespace detail

/**
 * \brief Writes figure data for one repeat of every (method, omega, J) group
 * into `out_dir` and returns the files written.
 *
 * ess_trace: `ess_trace_<stem>.csv` with columns step, ess.
 * marginal_hist: `hist_<stem>.csv` for the sampler and `hist_exact_<stem>.csv`
 * for the exact-posterior samples, on one bin grid covering both sets. Needs
 * the particle dumps of the sweep.
 */
inline std::vector<std::filesystem::path> write_figure_data(const ExperimentConfig& cfg,
                                                            const std::filesystem::path& runs_path,
                                                            const std::filesystem::path& out_dir, FigureKind kind,
                                                            int repeat = 0) {
  const auto records = read_records(runs_path);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& group : aggregate(records)) {
    const RunRecord& rec = detail::pick_record(records, group, repeat);
    if (kind == FigureKind::ess_trace) {
      if (rec.failed || rec.ess_trace.empty()) {
        throw Error("record " + rec.key.label() + " has no ESS trace");
      }
      const auto path = out_dir / ("ess_trace_" + rec.key.stem() + ".csv");
      std::ofstream out(path);
      if (!out) {
        throw Error("cannot write " + path.string());
      }
      out << "step,ess\n";
      for (std::size_t k = 0; k < rec.ess_trace.size(); ++k) {
        out << k << ',' << format_double(rec.ess_trace[k]) << '\n';
      }
      written.push_back(path);
      continue;
    }
    const auto sampler_path = detail::dump_path(cfg, rec.key, false);
    const auto exact_path = detail::dump_path(cfg, rec.key, true);
    if (rec.failed || !std::filesystem::exists(sampler_path) || !std::filesystem::exists(exact_path)) {
      throw Error("record " + rec.key.label() + " has no particle dump");
    }
    const MatrixXd samples = dump::read(sampler_path);
    const MatrixXd exact = dump::read(exact_path);
    HistogramSpec spec;
    spec.dims = cfg.histogram_dims;
    spec.bins = {cfg.histogram_bins, cfg.histogram_bins};
    auto range_of = [&](Index dim) {
      const double lo = std::min(samples.row(dim).minCoeff(), exact.row(dim).minCoeff());
      const double hi = std::max(samples.row(dim).maxCoeff(), exact.row(dim).maxCoeff());
      const double pad = 0.05 * std::max(hi - lo, 1e-6);
      return std::make_pair(lo - pad, hi + pad);
    };
    spec.x_range = range_of(spec.dims.first);
    spec.y_range = range_of(spec.dims.second);
    const auto path = out_dir / ("hist_" + rec.key.stem() + ".csv");
    const auto exact_csv = out_dir / ("hist_exact_" + rec.key.stem() + ".csv");
    detail::write_histogram(path, marginal_histogram(samples, spec), spec);
    detail::write_histogram(exact_csv, marginal_histogram(exact, spec), spec);
    written.push_back(path);
    written.push_back(exact_csv);
  }
  return written;
}

/**
 * \brief Writes the instance of repeat 0 (`instance.json`), the schedule
 * (`schedule.json`) and, per outlier level, the observation path and twist
 * coefficients (`twist_omega<w>.json`) into the output directory.
 */
inline std::vector<std::filesystem::path> write_generated(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  const ProblemInstance instance = build_instance(cfg, 0);
  const DiffusionSchedule sched = DiffusionSchedule::uniform(cfg.N, cfg.T);
  std::vector<std::filesystem::path> written{dir / "instance.json", dir / "schedule.json"};
  write_json(written[0], to_json(instance));
  write_json(written[1], to_json(sched));
  for (double omega : cfg.outlier_levels) {
    const VectorXd y = make_outlier_observation(instance.prior, instance.observation, omega);
    const std::uint64_t seed = run_seed(cfg.base_seed, Method::b0smc, omega, 0);
    const ObservationPath path = simulate_observation_path(y, sched, derive_seed(seed, hash_tag("observation-path")));
    const TwistCoefficients coeffs = twist_coeffs_recursive(instance.observation, sched);
    written.push_back(dir / ("twist_omega" + format_double(omega) + ".json"));
    write_json(written.back(), to_json(coeffs, path));
  }
  return written;
}

}  // namespace gfk

#endif  // GFK_HARNESS_HPP
