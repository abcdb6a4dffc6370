#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "json.hpp"
#include "lyapcert/config.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/io.hpp"

using namespace lyapcert;
using testing::vec1;
using testing::vec2;

TEST_SUITE("io_config") {
  TEST_CASE("format_double round trips") {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) CHECK(std::stod(format_double(x)) == x);
    CHECK(format_double(0.5) == "0.5");
  }

  TEST_CASE("trajectory csv") {
    const auto t = rollout(pendulum_field(PendulumParams{}), vec2(1, -1), 0.2, 0.05);
    const std::string text = trajectory_csv(t);
    CHECK(text.rfind("t,x0,x1,dx0,dx1\n", 0) == 0);
    const auto dir = testing::temp_dir("traj_csv");
    write_trajectory_csv(dir / "a.csv", t);
    const auto back = read_trajectory_csv(dir / "a.csv");
    CHECK(back.states == t.states);
    CHECK(back.derivs == t.derivs);
    CHECK(back.times == t.times);

    const auto p = perturbed_rollout(scalar_decay_field(1.0), radial_disturbance(0.1), lipschitz(0.1), vec1(1.0), 0.1, 0.05);
    CHECK(trajectory_csv(p).rfind("t,x0,dx0,d0\n", 0) == 0);
  }

  TEST_CASE("checkpoint round trip and rejection") {
    const auto th = init_params(MlpArchitecture{}, 5);
    const std::string text = checkpoint_json(th);
    const auto j = nlohmann::json::parse(text);
    CHECK(j["version"] == 1);
    CHECK(j["arch"]["p"] == 2);
    CHECK(j["arch"]["h"] == 20);
    CHECK(j["theta"].size() == 648);
    CHECK(parse_checkpoint(text).flatten() == th.flatten());

    auto bad_version = j;
    bad_version["version"] = 2;
    CHECK_THROWS_AS(parse_checkpoint(bad_version.dump()), CheckpointError);
    auto short_theta = j;
    short_theta["theta"].erase(short_theta["theta"].begin());
    CHECK_THROWS_AS(parse_checkpoint(short_theta.dump()), CheckpointError);
    CHECK_THROWS_AS(parse_checkpoint("{\"version\":1}"), CheckpointError);

    const auto dir = testing::temp_dir("checkpoint");
    save_checkpoint(dir / "c.json", th);
    CHECK(load_checkpoint(dir / "c.json").flatten() == th.flatten());
    CHECK_THROWS_AS(load_checkpoint(dir / "c.json", MlpArchitecture{2, 10}), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), CheckpointError);
  }

  TEST_CASE("report csv layouts") {
    CHECK(loss_csv({{1, 0.5, 0.005}}) == "epoch,loss,lr\n1,0.5,0.0050000000000000001\n");
    CHECK(phases_csv({{1, 2.0, 1.0}}).rfind("phase,loss_start,loss_end\n", 0) == 0);
    const auto s = satisfaction_csv({{0.4, 1.0, 0.5}}, "V_adv", "1_greedy");
    CHECK(s == "eta,traj_rate,point_rate,certificate,perturbation_class\n0.40000000000000002,1,0.5,V_adv,1_greedy\n");
  }

  TEST_CASE("git blob hash") {
    // `printf 'hello\n' | git hash-object --stdin`
    CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
    CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    Dataset a;
    a.states = Mat::Ones(2, 3);
    a.derivs = Mat::Zero(2, 3);
    Dataset b = a;
    b.derivs(1, 2) = 1e-300;
    CHECK(dataset_hash(a) != dataset_hash(b));
    CHECK(dataset_hash(a).size() == 40);
  }

  TEST_CASE("defaults") {
    const auto c = parse_config("");
    CHECK(c.train.eta == 0.4);
    CHECK(c.train.lambda == 0.1);
    CHECK(c.train.epochs == 500);
    CHECK(c.train.batch_size == 1000);
    CHECK(c.train.alternations == 5);
    CHECK(c.train.inner_epochs == 100);
    CHECK(c.train.n_train == 1000);
    CHECK(c.train.adversary.kind == TubeKind::Lipschitz);
    CHECK(c.train.adversary.eps_x == 0.1);
    CHECK(c.evaluate.eta_points == 51);
    CHECK(c.pendulum.b == 2.0);
  }

  TEST_CASE("parsing values") {
    const auto c = parse_config(
        "[run]\nseed = 17\nthreads = 3\n[train]\nmode = adversarial\neta = 0.3\nwarm_start = false\n"
        "[adversary]\nkind = norm_bounded\neps_u = 0.2\n[evaluate]\nclasses = 1, 3\neps_x = 0.05\n"
        "[system]\nbox_lo = -1, -1\nbox_hi = 1, 1\n[verify]\nrhos = 0.5, 2\n");
    CHECK(c.seed == 17);
    CHECK(c.threads == 3);
    CHECK(c.train_mode == TrainMode::Adversarial);
    CHECK(c.train.eta == 0.3);
    CHECK_FALSE(c.train.warm_start);
    CHECK(c.train.adversary.kind == TubeKind::NormBounded);
    CHECK(c.train.adversary.eps_u == 0.2);
    CHECK(c.train.adversary.eps_x == 0.0);
    CHECK(c.evaluate.classes == std::vector<int>{1, 3});
    CHECK(*c.evaluate.eps_x == 0.05);
    CHECK(c.train.ic_lo == vec2(-1, -1));
    CHECK(c.verify.rhos == std::vector<double>{0.5, 2.0});
  }

  TEST_CASE("unknown sections, keys and bad values are rejected") {
    CHECK_THROWS_AS(parse_config("[bogus]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\netaa = 0.4\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\neta = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nepochs = -3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train\neta = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[verify]\nediss_trials = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[adversary]\nkind = sideways\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[evaluate]\nclasses = 5\n"), ConfigError);
  }

  TEST_CASE("resolved text round trips") {
    const auto c = parse_config("[run]\nseed = 99\n[train]\neta = 0.35\nlambda = 0.01\n[bounds]\nmode = dt\nrho = 0.3\nrn = 0.2\n"
                                "[evaluate]\ncertificates = a=x.json, b=y.json\ngreedy_reference = a\n");
    const std::string text = c.resolved_text();
    const auto again = parse_config(text);
    CHECK(again.resolved_text() == text);
    CHECK(again.seed == 99);
    CHECK(again.train.lambda == 0.01);
    CHECK(again.bounds.mode == TimeMode::DT);
    CHECK(*again.bounds.rn == 0.2);
    REQUIRE(again.evaluate.certificates.size() == 2);
    CHECK(again.evaluate.certificates[1].second == "y.json");
  }

  TEST_CASE("a manifest replays its config") {
    const auto c = parse_config("[run]\nseed = 5\n[train]\nepochs = 7\n");
    nlohmann::json m;
    m["command"] = "train";
    m["config"] = c.resolved_text();
    const auto dir = testing::temp_dir("manifest_replay");
    write_text_file(dir / "manifest_train.json", m.dump(2));
    const auto back = load_config(dir / "manifest_train.json");
    CHECK(back.resolved_text() == c.resolved_text());
    write_text_file(dir / "bad.json", "{\"command\":\"train\"}");
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  }

  TEST_CASE("seed streams") {
    CHECK(derive_seed(0, 1) != derive_seed(0, 2));
    CHECK(derive_seed(1, 1) != derive_seed(0, 1));
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
  }
}
