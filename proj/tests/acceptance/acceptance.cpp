// Acceptance suite: `acceptance <n>` runs criterion n (1-12) and prints one
// PASS/FAIL line for it, `acceptance` with no argument runs all of them.
// Artifacts of the training criteria land in ./acceptance_out/c<n>/.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "physprior/cli/experiments.hpp"
#include "physprior/cli/selftest.hpp"

using namespace physprior::cli;
namespace fs = std::filesystem;

namespace {

// Master seed of every training criterion.
constexpr const char* kSeed = "1";

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void absorb(Outcome& o, const std::vector<ReportRow>& rows, const std::string& tag = "") {
  for (const auto& r : rows) {
    std::string line = (r.pass ? "ok " : "FAILED ") + tag + r.check + "=" + num(r.value) + " " + r.relation + " " +
                       num(r.threshold);
    std::cout << "  " << line << "\n";
    o.pass = o.pass && r.pass;
    o.detail += (o.detail.empty() ? "" : "; ") + tag + r.check + " " + num(r.value) + r.relation + num(r.threshold);
  }
}

void dump(const Reproduction& rep, const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& [name, content] : rep.files.files) {
    std::ofstream os(fs::path(dir) / name, std::ios::binary);
    os << content;
  }
}

Reproduction run_preset(const std::string& preset, std::vector<std::pair<std::string, std::string>> overrides,
                        const std::string& dir) {
  overrides.insert(overrides.begin(), {"seed", kSeed});
  RunConfig cfg = resolve_config(preset, {}, overrides);
  Reproduction rep = reproduce(cfg, &std::cout);
  dump(rep, dir);
  return rep;
}

Outcome reproduction(const std::string& preset, const std::vector<std::pair<std::string, std::string>>& overrides,
                     const std::string& dir, const std::string& tag = "") {
  Outcome o;
  Reproduction rep = run_preset(preset, overrides, dir);
  if (rep.rows.empty()) {
    o.pass = false;
    o.detail = "no checks";
  }
  absorb(o, rep.rows, tag);
  return o;
}

Outcome merge(Outcome a, const Outcome& b) {
  a.pass = a.pass && b.pass;
  a.detail += "; " + b.detail;
  return a;
}

Outcome checks(const std::vector<ReportRow>& rows) {
  Outcome o;
  absorb(o, rows);
  return o;
}

Outcome noisy_pendulum(const std::string& dir) {
  Outcome o;
  Reproduction rep = run_preset("pendulum", {{"noise_sigma", "0.1"}}, dir);
  absorb(o, rep.rows);
  return o;
}

Outcome determinism(const std::string& dir) {
  Outcome o;
  Reproduction a = run_preset("pendulum", {}, dir + "/first");
  Reproduction b = run_preset("pendulum", {}, dir + "/second");
  std::size_t same = 0;
  if (a.files.files.size() != b.files.files.size()) o.pass = false;
  for (std::size_t i = 0; i < a.files.files.size() && i < b.files.files.size(); ++i) {
    bool eq = a.files.files[i] == b.files.files[i];
    if (!eq) std::cout << "  differs: " << a.files.files[i].first << "\n";
    same += eq;
    o.pass = o.pass && eq;
  }
  o.detail = std::to_string(same) + "/" + std::to_string(a.files.files.size()) + " artifacts byte-identical";
  return o;
}

const std::map<int, std::pair<std::string, std::function<Outcome(const std::string&)>>>& criteria() {
  static const std::map<int, std::pair<std::string, std::function<Outcome(const std::string&)>>> table{
      {1, {"symplectic structure", [](const std::string&) { return checks(symplectic_checks(20)); }}},
      {2, {"integrator orders", [](const std::string&) { return checks(integrator_order_checks()); }}},
      {3, {"pendulum taylor-net vs rk4 baseline", [](const std::string& d) { return reproduction("pendulum", {}, d); }}},
      {4, {"noisy pendulum ordering", noisy_pendulum}},
      {5, {"nssnn spring orbit vs hrk", [](const std::string& d) { return reproduction("spring", {}, d); }}},
      {6, {"roe vs exact sod", [](const std::string&) { return checks(sod_calibration_checks()); }}},
      {7,
       {"roenet 1c linear, clean and noisy",
        [](const std::string& d) {
          Outcome clean = reproduction("1c-linear", {}, d + "/clean", "clean:");
          return merge(clean, reproduction("1c-linear", {{"noise_sigma", "0.1"}}, d + "/noisy", "noisy:"));
        }}},
      // 500 samples and 40 epochs fit the runtime budget on one core; the full
      // preset (2000 samples, 100 epochs) takes about three hours.
      {8,
       {"roenet sod vs roe",
        [](const std::string& d) {
          return reproduction("sod",
                              {{"n_train", "450"}, {"n_val", "50"}, {"epochs", "40"}, {"roenet_hidden_dim", "8"},
                               {"roenet_width", "32"}},
                              d);
        }}},
      {9, {"conservation", [](const std::string&) { return checks(conservation_checks()); }}},
      {10,
       {"vortex surrogate, free and forced",
        [](const std::string& d) {
          Outcome free = reproduction("vortex-pair", {}, d + "/free", "free:");
          return merge(free, reproduction("vortex-pair", {{"forcing", "0.3"}}, d + "/forced", "forced:"));
        }}},
      {11, {"detection round trip", [](const std::string&) { return checks(detection_checks(200)); }}},
      {12, {"reproduce determinism", determinism}},
  };
  return table;
}

bool run(int n) {
  const auto& [name, fn] = criteria().at(n);
  std::cout << "criterion " << n << ": " << name << std::endl;
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn("acceptance_out/c" + std::to_string(n));
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("error: ") + e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << o.detail << " ["
            << num(secs) << " s]" << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (const auto& [n, c] : criteria()) which.push_back(n);
  bool all = true;
  for (int n : which) {
    if (!criteria().count(n)) {
      std::cerr << "unknown criterion " << n << "\n";
      return 2;
    }
    all = run(n) && all;
  }
  return all ? 0 : 1;
}
