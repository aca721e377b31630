// Smoke tests for the asfs CLI: exit codes, artifact layout, determinism.
// The binary path comes from the ASFS_CLI environment variable (set by ctest).

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("ASFS_CLI");
    REQUIRE(p != nullptr);
    return p;
}

int run_cli(const std::string& args, const std::string& stdout_file = "") {
    std::string cmd = cli_path() + " " + args;
    if (!stdout_file.empty()) cmd += " > " + stdout_file + " 2>/dev/null";
    else cmd += " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TestWorkspace {
    fs::path dir;
    TestWorkspace() {
        dir = fs::temp_directory_path() / ("asfs_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~TestWorkspace() { fs::remove_all(dir); }

    fs::path write_config(const nlohmann::json& j, const std::string& name = "config.json") {
        const fs::path p = dir / name;
        std::ofstream os(p);
        os << j.dump(2);
        return p;
    }
};

nlohmann::json base_config(const fs::path& outdir) {
    nlohmann::json j;
    j["dataset"]["synthetic"] = {{"n_samples", 420},
                                 {"n_features", 8},
                                 {"informative", {0, 1, 2}},
                                 {"rule", "linear_logit"},
                                 {"seed", 5}};
    j["partition"] = {{"labeled", 120}, {"unlabeled", 200}, {"test", 100}};
    j["hyperparameters"] = {{"p_m", 0.2},        {"alpha", 2.0},
                            {"epochs_pretext", 6}, {"epochs_select", 25},
                            {"batch_size", 64},   {"attention_hidden", 16},
                            {"eval_hidden", {12}}, {"k", 3},
                            {"ae_hidden", 8},     {"ae_latent", 4}};
    j["downstream"] = {{"hidden", {12}}, {"epochs", 40}};
    j["mode"] = "full";
    j["seed"] = 7;
    j["output_dir"] = outdir.string();
    return j;
}

} // namespace

TEST_CASE("pretrain then select then evaluate round-trip") {
    TestWorkspace ws;
    const fs::path cfg = ws.write_config(base_config(ws.dir / "out"));

    REQUIRE(run_cli("pretrain -c " + cfg.string() + " -q") == 0);
    fs::path ckpt;
    for (const auto& e : fs::recursive_directory_iterator(ws.dir / "out" / "checkpoints"))
        if (e.path().filename() == "autoencoder.ckpt") ckpt = e.path();
    REQUIRE(!ckpt.empty());

    REQUIRE(run_cli("select -c " + cfg.string() + " -q", (ws.dir / "topk.txt").string()) == 0);
    const std::string topk = read_file(ws.dir / "topk.txt");
    REQUIRE(topk.find("top-3:") != std::string::npos);

    fs::path ranking;
    for (const auto& e : fs::recursive_directory_iterator(ws.dir / "out" / "rankings"))
        if (e.path().filename() == "ranking.tsv") ranking = e.path();
    REQUIRE(!ranking.empty());
    // d rows after the header block.
    std::size_t data_lines = 0;
    std::istringstream rs(read_file(ranking));
    std::string line;
    while (std::getline(rs, line))
        if (!line.empty() && line[0] != '#' && line.rfind("rank\t", 0) != 0) ++data_lines;
    REQUIRE(data_lines == 8);

    REQUIRE(run_cli("evaluate -c " + cfg.string() + " -k 3", (ws.dir / "eval.txt").string()) == 0);
    const std::string eval_out = read_file(ws.dir / "eval.txt");
    REQUIRE(eval_out.find("accuracy") != std::string::npos);
    REQUIRE(eval_out.find("macro_f1") != std::string::npos);

    // The record stream parses back to the same metrics.
    fs::path records;
    for (const auto& e : fs::recursive_directory_iterator(ws.dir / "out" / "results"))
        if (e.path().filename() == "records.jsonl") records = e.path();
    REQUIRE(!records.empty());
    const auto rec = nlohmann::json::parse(read_file(records));
    std::istringstream es(eval_out);
    std::string word;
    double printed_acc = -1.0;
    while (es >> word)
        if (word == "accuracy") es >> printed_acc;
    REQUIRE(rec["metrics"]["accuracy"].get<double>() == Catch::Approx(printed_acc).margin(1e-6));

    // verify accepts the artifacts it produced.
    REQUIRE(run_cli("verify -c " + cfg.string() + " " + ckpt.string() + " " + ranking.string() +
                    " " + records.string()) == 0);
}

TEST_CASE("reruns with the same config and seed are byte-identical") {
    TestWorkspace ws;
    const fs::path cfg = ws.write_config(base_config(ws.dir / "out"));
    REQUIRE(run_cli("pretrain -c " + cfg.string() + " -q") == 0);
    fs::path ckpt;
    for (const auto& e : fs::recursive_directory_iterator(ws.dir / "out" / "checkpoints"))
        if (e.path().filename() == "autoencoder.ckpt") ckpt = e.path();
    const std::string first = read_file(ckpt);
    REQUIRE(run_cli("pretrain -c " + cfg.string() + " -q") == 0);
    REQUIRE(read_file(ckpt) == first);
}

TEST_CASE("epochs 0 pretrain writes an initialization checkpoint") {
    TestWorkspace ws;
    nlohmann::json j = base_config(ws.dir / "out");
    j["hyperparameters"]["epochs_pretext"] = 0;
    const fs::path cfg = ws.write_config(j);
    REQUIRE(run_cli("pretrain -c " + cfg.string() + " -q") == 0);
    fs::path ckpt;
    for (const auto& e : fs::recursive_directory_iterator(ws.dir / "out" / "checkpoints"))
        if (e.path().filename() == "autoencoder.ckpt") ckpt = e.path();
    REQUIRE(!ckpt.empty());
    const fs::path loss_log = ckpt.parent_path() / "pretrain_loss.tsv";
    std::istringstream ls(read_file(loss_log));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(ls, line))
        if (!line.empty()) ++lines;
    REQUIRE(lines == 1);  // header only
}

TEST_CASE("no-selfsup select works without a checkpoint; full mode demands one") {
    TestWorkspace ws;
    nlohmann::json j = base_config(ws.dir / "out");
    j["mode"] = "no-selfsup";
    const fs::path cfg = ws.write_config(j, "ns.json");
    REQUIRE(run_cli("select -c " + cfg.string() + " -q") == 0);

    nlohmann::json full = base_config(ws.dir / "out2");
    const fs::path cfg2 = ws.write_config(full, "full.json");
    REQUIRE(run_cli("select -c " + cfg2.string() + " -q") == 2);  // no checkpoint yet
}

TEST_CASE("config and usage errors exit with code 2") {
    TestWorkspace ws;
    REQUIRE(run_cli("select -c /nonexistent.json -q") == 2);
    REQUIRE(run_cli("bogus-subcommand") == 2);

    nlohmann::json j = base_config(ws.dir / "out");
    j["hyperparameters"]["p_m"] = 3.0;
    const fs::path cfg = ws.write_config(j);
    REQUIRE(run_cli("pretrain -c " + cfg.string() + " -q") == 2);

    // Missing test labels: no test partition at all.
    nlohmann::json no_test = base_config(ws.dir / "out");
    no_test["partition"]["test"] = 0;
    no_test["mode"] = "no-selfsup";
    const fs::path cfg2 = ws.write_config(no_test, "nt.json");
    REQUIRE(run_cli("select -c " + cfg2.string() + " -q") == 0);
    REQUIRE(run_cli("evaluate -c " + cfg2.string() + " -k 2") == 2);
}

TEST_CASE("dotted-path overrides change the digest and the behavior") {
    TestWorkspace ws;
    const fs::path cfg = ws.write_config(base_config(ws.dir / "out"));
    REQUIRE(run_cli("pretrain -c " + cfg.string() + " -q --set hyperparameters.epochs_pretext=2") ==
            0);
    // A different digest directory appears when a hyperparameter changes.
    std::size_t digests = 0;
    for (const auto& e : fs::directory_iterator(ws.dir / "out" / "checkpoints")) {
        (void)e;
        ++digests;
    }
    REQUIRE(digests == 1);
    REQUIRE(run_cli("pretrain -c " + cfg.string() + " -q") == 0);
    digests = 0;
    for (const auto& e : fs::directory_iterator(ws.dir / "out" / "checkpoints")) {
        (void)e;
        ++digests;
    }
    REQUIRE(digests == 2);
}

TEST_CASE("corrupt writes a CSV and sweep emits tables and records") {
    TestWorkspace ws;
    nlohmann::json j = base_config(ws.dir / "out");
    j["mode"] = "no-selfsup";
    j["noise"] = nlohmann::json::array({{{"kind", "salt_pepper"}, {"amount", 0.05}, {"seed", 3}}});
    j["sweep"] = {{"k_range", {3}}};
    const fs::path cfg = ws.write_config(j);

    REQUIRE(run_cli("corrupt -c " + cfg.string() + " -q -o " + (ws.dir / "noisy.csv").string()) ==
            0);
    REQUIRE(fs::exists(ws.dir / "noisy.csv"));

    REQUIRE(run_cli("sweep -c " + cfg.string() + " -q --kind noise") == 0);
    fs::path records, table;
    for (const auto& e : fs::recursive_directory_iterator(ws.dir / "out" / "results")) {
        if (e.path().filename() == "records.jsonl") records = e.path();
        if (e.path().filename() == "table.tsv") table = e.path();
    }
    REQUIRE(!records.empty());
    REQUIRE(!table.empty());
    // Every record line parses and carries the digest.
    std::istringstream rs(read_file(records));
    std::string line;
    std::size_t n = 0;
    while (std::getline(rs, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        REQUIRE(rec.contains("config_digest"));
        ++n;
    }
    REQUIRE(n == 1);
}
