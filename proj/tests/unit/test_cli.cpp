#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "physprior/cli/checkpoint.hpp"
#include "physprior/cli/config.hpp"
#include "physprior/cli/experiments.hpp"
#include "physprior/error.hpp"

using namespace physprior;
using namespace physprior::cli;

namespace {

RunConfig small(const std::string& preset, std::vector<std::pair<std::string, std::string>> extra = {}) {
  return resolve_config(preset, {}, extra);
}

}  // namespace

TEST_CASE("presets") {
  RunConfig p = preset_config("pendulum");
  CHECK(p.n_train == 15);
  CHECK(p.n_val == 100);
  CHECK(p.t_predict == doctest::Approx(20.0 * M_PI));
  CHECK(preset_config("spring").t_predict == 200.0);
  RunConfig sod = preset_config("sod");
  CHECK(sod.n_train + sod.n_val == 2000);
  CHECK(sod.t_train == 0.06);
  RunConfig lin = preset_config("1c-linear");
  CHECK(lin.n_train + lin.n_val == 500);
  CHECK(lin.t_predict == doctest::Approx(1.2));
  RunConfig vp = preset_config("vortex-pair");
  CHECK(vp.n_train == 1600);
  CHECK(vp.batch == 64);
  CHECK(vp.epochs == 500);
  CHECK_THROWS_AS(preset_config("turbulence"), ConfigError);
}

TEST_CASE("noisy pendulum time span follows the noise level") {
  CHECK(small("pendulum", {{"noise_sigma", "0.1"}}).t_train == 0.5);
  CHECK(small("pendulum", {{"noise_sigma", "0.2"}}).t_train == 1.0);
  CHECK(small("pendulum", {{"noise_sigma", "0.1"}, {"t_train", "0.3"}}).t_train == 0.3);
}

TEST_CASE("ini parsing and overrides") {
  std::istringstream in("# comment\n[training]\nepochs = 7 ; trailing\nlr=0.5\n\n[data]\nn_train = 3\n");
  auto kv = parse_ini(in, "mem");
  REQUIRE(kv.size() == 3);
  CHECK(kv[0].first == "epochs");
  CHECK(kv[0].second == "7");
  RunConfig c = resolve_config("spring", kv, {{"epochs", "9"}});
  CHECK(c.epochs == 9);
  CHECK(c.lr == 0.5);
  CHECK(c.n_train == 3);
  CHECK(c.is_explicit("lr"));
  CHECK(!c.is_explicit("dt"));

  std::istringstream bad("epochs 7\n");
  CHECK_THROWS_AS(resolve_config("spring", parse_ini(bad, "mem"), {}), ConfigError);
  CHECK_THROWS_AS(resolve_config("spring", {}, {{"no_such_key", "1"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config("spring", {}, {{"epochs", "x"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config("spring", {}, {{"lr", "-1"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config("spring", {{"preset", "sod"}}, {}), ConfigError);
}

TEST_CASE("config echo reproduces the configuration") {
  RunConfig c = small("nonseparable", {{"omega", "3.25"}, {"seed", "12"}});
  std::istringstream in(config_text(c));
  RunConfig back = resolve_config("", parse_ini(in, "echo"), {});
  CHECK(config_text(back) == config_text(c));
  CHECK(back.omega == 3.25);
  CHECK(back.seed == 12);
}

TEST_CASE("checkpoint round trip") {
  RunConfig c = small("spring");
  TrainedModel m = build_model(c, c.family, 4);
  Checkpoint ck = to_checkpoint(m);
  std::string bytes = serialize_checkpoint(ck);
  CHECK(bytes.compare(0, 8, "PHYSPRCK") == 0);
  Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);

  auto path = (std::filesystem::temp_directory_path() / "physprior_ck_test.bin").string();
  save_checkpoint(path, ck);
  CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);

  TrainedModel r = from_checkpoint(back);
  CHECK(r.family == "nssnn");
  REQUIRE(r.ps.size() == m.ps.size());
  for (std::size_t i = 0; i < m.ps.size(); ++i) CHECK(r.ps[i].values() == m.ps[i].values());

  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), IoError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), IoError);
  bad = bytes;
  bad[8] = 99;
  CHECK_THROWS_AS(deserialize_checkpoint(bad), IoError);

  // a checkpoint of a different architecture does not load
  TrainedModel other = build_model(small("spring", {{"energy_hidden", "8"}}), "nssnn", 4);
  CHECK_THROWS(restore_parameters(ck, other.ps));
}

TEST_CASE("dataset text round trip") {
  for (auto [preset, extra] : std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>>{
           {"pendulum", {}},
           {"spring", {{"n_train", "9"}, {"n_val", "3"}}},
           {"1c-linear", {{"n_train", "9"}, {"n_val", "1"}}},
           {"vortex-pair", {{"n_train", "8"}, {"n_val", "2"}}}}) {
    CAPTURE(preset);
    RunConfig c = small(preset, extra);
    Dataset d = generate_dataset(c);
    std::string text = dataset_text(c, d);
    RunConfig echoed;
    Dataset back = parse_dataset(text, echoed);
    CHECK(echoed.preset == preset);
    CHECK(config_text(echoed) == config_text(c));
    CHECK(dataset_text(echoed, back) == text);
    CHECK(dataset_text(c, generate_dataset(c)) == text);
  }
  RunConfig ignored;
  CHECK_THROWS(parse_dataset("not a dataset\n", ignored));
}

TEST_CASE("zero epochs return the initialization") {
  RunConfig c = small("pendulum", {{"epochs", "0"}});
  Dataset d = generate_dataset(c);
  TrainedModel init = build_model(c, c.family, 21);
  TrainedModel t = train_model(c, c.family, d, 21, 3);
  CHECK(t.result.history.empty());
  CHECK(serialize_checkpoint(to_checkpoint(t)) == serialize_checkpoint(to_checkpoint(init)));
}

TEST_CASE("training is deterministic and lowers the loss") {
  RunConfig c = small("pendulum", {{"epochs", "12"}});
  Dataset d = generate_dataset(c);
  TrainedModel a = train_model(c, c.family, d, 21, 3);
  TrainedModel b = train_model(c, c.family, d, 21, 3);
  CHECK(serialize_checkpoint(to_checkpoint(a)) == serialize_checkpoint(to_checkpoint(b)));
  REQUIRE(a.result.history.size() == 12);
  CHECK(a.result.history.back().loss_train < a.result.history.front().loss_train);
  for (std::size_t i = 0; i < 12; ++i) CHECK(a.result.history[i].loss_train == b.result.history[i].loss_train);
}

TEST_CASE("report rows") {
  ReportRow r = make_row("x", 0.4, "<=", 0.5);
  CHECK(r.pass);
  CHECK(!make_row("x", 0.5, "<", 0.5).pass);
  CHECK(make_row("x", 2.0, ">=", 2.0).pass);
  CHECK(!make_row("x", std::nan(""), "<", 1.0).pass);
  CHECK(report_csv({r}) == "check,value,relation,threshold,pass\nx,0.40000000000000002,<=,0.5,true\n");
}

TEST_CASE("small reproduction is byte-identical across runs") {
  RunConfig c = small("spring", {{"epochs", "2"}, {"n_train", "32"}, {"n_val", "8"}, {"batch", "16"},
                                 {"energy_hidden", "8"}, {"energy_layers", "2"}, {"t_predict", "4"}});
  Reproduction a = reproduce(c);
  Reproduction b = reproduce(c);
  REQUIRE(a.files.files.size() == b.files.files.size());
  for (std::size_t i = 0; i < a.files.files.size(); ++i) {
    CAPTURE(a.files.files[i].first);
    CHECK(a.files.files[i] == b.files.files[i]);
  }
  for (const char* name : {"config.ini", "dataset.csv", "checkpoint.bin", "metrics.csv", "eval.csv", "report.csv",
                           "baseline_checkpoint.bin", "baseline_eval.csv"})
    CHECK(a.files.has(name));
  CHECK(a.files.get("metrics.csv").rfind("epoch,loss_train,loss_val,lr\n", 0) == 0);
  CHECK(a.files.get("eval.csv").rfind("t,eps_p\n", 0) == 0);
  CHECK(!a.rows.empty());
}
