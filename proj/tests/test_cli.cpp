#include <gtest/gtest.h>

#include <plumber/cli.hpp>

using namespace plumber;
namespace fs = std::filesystem;

namespace {

const fs::path data_dir = PLUMBER_DATA_DIR;

struct Cli : ::testing::Test {
    fs::path dir;
    std::ostringstream out, err;

    void SetUp() override {
        dir = fs::temp_directory_path() / ("plumber_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    int run(std::vector<std::string> args) {
        out.str("");
        err.str("");
        args.insert(args.begin(), "-q");
        return run_cli(args, out, err);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    std::string experiment(const std::string& name) const { return (data_dir / "experiments" / name).string(); }
};

// brute-force true LRU over the strategy's loop nest
bool lru_evicts(unsigned S, unsigned C, unsigned D, unsigned L) {
    std::vector<int> set{-1};
    for (int s = 0; s <= static_cast<int>(S) - static_cast<int>(D); s += static_cast<int>(L))
        for (unsigned c = 0; c <= C; ++c)
            for (unsigned d = 0; d <= D; ++d) {
                const int tag = s + static_cast<int>(d);
                auto it = std::find(set.begin(), set.end(), tag);
                if (it != set.end()) set.erase(it);
                else if (set.size() == 4) set.erase(set.begin());
                set.push_back(tag);
            }
    return std::find(set.begin(), set.end(), -1) == set.end();
}

}  // namespace

TEST(CliConfig, ParsesSectionsAndValues) {
    auto cf = parse_config(R"(
# comment
gts = "a # b.gts"   # trailing
seed = 0x10
threshold = 0.9
[geometry]
sets = 16
[simulator]
prefetcher = false
)");
    EXPECT_EQ(std::get<std::string>(cf.values.at("gts")), "a # b.gts");
    EXPECT_EQ(std::get<int64_t>(cf.values.at("seed")), 16);
    EXPECT_DOUBLE_EQ(std::get<double>(cf.values.at("threshold")), 0.9);
    EXPECT_EQ(std::get<int64_t>(cf.values.at("geometry.sets")), 16);
    EXPECT_FALSE(std::get<bool>(cf.values.at("simulator.prefetcher")));
    EXPECT_THROW(parse_config("a = 1\na = 2\n"), ConfigError);
    EXPECT_THROW(parse_config("a = \"open\n"), ConfigError);
    EXPECT_THROW(parse_config("a = 1x\n"), ConfigError);
    EXPECT_THROW(parse_config("just words\n"), ConfigError);
}

TEST(CliConfig, Validation) {
    auto with = [](const std::string& extra) {
        return experiment_from(parse_config("experiment = \"eviction\"\n" + extra));
    };
    EXPECT_NO_THROW(with(""));
    EXPECT_THROW(with("threshold = 0.5\n"), ConfigError);
    EXPECT_THROW(with("threshold = 1.5\n"), ConfigError);
    EXPECT_NO_THROW(with("threshold = 1\n"));
    EXPECT_THROW(with("colour = 1\n"), ConfigError);
    EXPECT_THROW(with("shard = \"3/3\"\n"), ConfigError);
    EXPECT_THROW(with("key = \"speed\"\n"), UnknownKey);
    EXPECT_THROW(with("[geometry]\nsets = 12\n"), ConfigError);
    EXPECT_THROW(with("[simulator]\npolicy = \"plru\"\n"), ConfigError);
    EXPECT_THROW(with("invariant = \"page,colour\"\n"), ConfigError);
    auto ec = with("shard = \"1/4\"\ninvariant = \"page, set\"\n[pin.tags]\nt1 = 5\n[pin.sets]\ns1 = 2\n");
    EXPECT_EQ(ec.run.shard_index, 1u);
    EXPECT_EQ(ec.run.shard_count, 4u);
    EXPECT_EQ(ec.invariant, (std::vector<Field>{Field::page, Field::set}));
    EXPECT_EQ(ec.run.pin_tags.at("t1"), 5u);
    EXPECT_EQ(ec.run.pin_sets.at("s1"), 2u);
    EXPECT_THROW(experiment_from(parse_config("seed = 1\n")), ConfigError);  // gts required
}

TEST_F(Cli, RunE6CountsTheFamily) {
    ASSERT_EQ(run({"run", experiment("e6.toml"), "-o", path("e6.jsonl"), "-j", "2"}), 0) << err.str();
    const auto recs = parse_archive(read_file(path("e6.jsonl")));
    EXPECT_EQ(recs.size(), 4096u);
    ASSERT_EQ(run({"analyze", path("e6.jsonl"), "-c", experiment("e6.toml")}), 0) << err.str();
    EXPECT_NE(out.str().find("set(l2) - set(l1) = set(l3) - set(l2)"), std::string::npos);
    EXPECT_NE(out.str().find("disagreements: 0"), std::string::npos);
    const auto lt = deserialize_lt(read_file(path("e6.lt.json")));
    EXPECT_EQ(lt.behaviors, (std::vector<std::string>{"P0", "P3"}));
    EXPECT_TRUE(fs::exists(path("e6.csv")));
    EXPECT_TRUE(fs::exists(path("e6.report.txt")));
}

TEST_F(Cli, RunE3IsOneRecordOneClass) {
    ASSERT_EQ(run({"run", experiment("e3.toml"), "-o", path("e3.jsonl")}), 0) << err.str();
    const auto recs = parse_archive(read_file(path("e3.jsonl")));
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].trials, 10000u);
    EXPECT_EQ(recs[0].outcomes.at("previction-occurred").size(), 1u);
    ASSERT_EQ(run({"report", path("e3.jsonl")}), 0);
    EXPECT_NE(out.str().find("trials: 10000"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
    std::ofstream(path("missing.toml")) << "gts = \"nowhere.gts\"\n";
    EXPECT_EQ(run({"run", path("missing.toml")}), exit_config);
    std::ofstream(path("cap.toml")) << "gts = \"" << experiment("e6.gts") << "\"\ncap = 100\n";
    EXPECT_EQ(run({"run", path("cap.toml"), "-o", path("cap.jsonl")}), exit_cap);
    EXPECT_EQ(run({"run", experiment("e3.toml"), "-o", "/proc/none/x.jsonl"}), exit_io);
    EXPECT_EQ(run({"analyze", path("absent.jsonl")}), exit_io);
    std::ofstream(path("broken.jsonl")) << "{\"schema_version\": 1\n";
    EXPECT_EQ(run({"analyze", path("broken.jsonl")}), exit_parse);
    EXPECT_EQ(run({"channel", "--name", "PR_XX"}), exit_config);
    EXPECT_EQ(run({"frobnicate"}), exit_config);
}

TEST_F(Cli, ShardedRunMatchesSingleRun) {
    ASSERT_EQ(run({"run", experiment("e4.toml"), "-o", path("all.jsonl")}), 0) << err.str();
    std::vector<std::string> args{"analyze"};
    for (int i = 0; i < 3; ++i) {
        const std::string p = path("part" + std::to_string(i) + ".jsonl");
        ASSERT_EQ(run({"run", experiment("e4.toml"), "--shard", std::to_string(i) + "/3", "-o", p}), 0);
        args.push_back(p);
    }
    args.insert(args.end(), {"-c", experiment("e4.toml"), "-o", path("merged")});
    ASSERT_EQ(run(args), 0) << err.str();
    ASSERT_EQ(run({"analyze", path("all.jsonl"), "-c", experiment("e4.toml"), "-o", path("single")}), 0);
    EXPECT_EQ(read_file(path("merged.lt.json")), read_file(path("single.lt.json")));
    EXPECT_EQ(read_file(path("merged.csv")), read_file(path("single.csv")));
    EXPECT_EQ(read_file(path("merged.report.txt")), read_file(path("single.report.txt")));
    // the E4 template carries the bus successor rule
    const auto lt = deserialize_lt(read_file(path("single.lt.json")));
    ASSERT_FALSE(lt.relation_map.empty());
    EXPECT_NE(render_predicate(lt.relation_map[0].conjunctions.at(0)).find("mod 4"), std::string::npos);
}

TEST_F(Cli, ConstantBehavior) {
    ASSERT_EQ(run({"run", experiment("constant.toml"), "-o", path("c.jsonl")}), 0) << err.str();
    ASSERT_EQ(run({"analyze", path("c.jsonl"), "-c", experiment("constant.toml")}), 0) << err.str();
    EXPECT_NE(out.str().find("no candidates"), std::string::npos);
    const auto lt = deserialize_lt(read_file(path("c.lt.json")));
    EXPECT_EQ(lt.inconclusive, (std::vector<std::string>{"no-previction"}));
}

TEST_F(Cli, EvictionArchiveGivesThresholdTemplate) {
    ASSERT_EQ(run({"run", experiment("eviction.toml"), "-o", path("ev.jsonl")}), 0) << err.str();
    ASSERT_EQ(run({"analyze", path("ev.jsonl"), "-c", experiment("eviction.toml")}), 0) << err.str();
    const auto lt = deserialize_lt(read_file(path("ev.lt.json")));
    EXPECT_TRUE(lt.inconclusive.empty());
    for (unsigned S = 1; S <= 8; ++S)
        for (unsigned C = 1; C <= 4; ++C)
            for (unsigned D = 1; D <= 4; ++D)
                for (unsigned L = 1; L <= 2; ++L)
                    ASSERT_EQ(evaluate_grid_point(lt, {S, C, D, L}), lru_evicts(S, C, D, L) ? "evicted" : "not-evicted")
                        << S << C << D << L;
}

TEST_F(Cli, MatchShippedCorpus) {
    const std::string corpus = (data_dir / "corpus" / "synthetic.s").string();
    const std::string lt = (data_dir / "prefetch.lt.json").string();
    ASSERT_EQ(run({"match", corpus, "--lt", lt, "--mnemonics", (data_dir / "mnemonics.json").string(), "--traces",
                   (data_dir / "corpus" / "traces.jsonl").string()}),
              0)
        << err.str();
    const auto plants = nlohmann::json::parse(read_file(data_dir / "corpus" / "synthetic.plants.json"));
    ASSERT_EQ(plants.size(), 50u);
    const auto listing = parse_listing(read_file(corpus));
    for (const auto& p : plants) {
        // the first load of each plant is listed as a candidate start
        size_t first = 0;
        while (listing.instrs[first].section != p["section"].get<std::string>()) ++first;
        std::ostringstream addr;
        addr << p["section"].get<std::string>() << " 0x" << std::hex
             << listing.instrs[first + p["offsets"][0].get<size_t>()].addr;
        EXPECT_NE(out.str().find(addr.str() + " "), std::string::npos) << addr.str();
    }
    EXPECT_NE(out.str().find("misclassifications: 0 PASS"), std::string::npos);
    EXPECT_NE(out.str().find("undecidable\n"), std::string::npos);

    auto j = nlohmann::json::parse(read_file(lt));
    j["schema_version"] = 99;
    std::ofstream(path("bad.lt.json")) << j.dump();
    EXPECT_EQ(run({"match", corpus, "--lt", path("bad.lt.json")}), exit_config);
    std::ofstream(path("junk.s")) << "f:\n what is this\n and this\n";
    EXPECT_EQ(run({"match", path("junk.s"), "--lt", lt}), exit_parse);
}

TEST_F(Cli, ChannelAndBranchPredictor) {
    ASSERT_EQ(run({"channel", "--name", "PR_FR", "--bits", "200"}), 0) << err.str();
    EXPECT_EQ(out.str(), "PR_FR: 200 bits, 0 errors\n");
    ASSERT_EQ(run({"bp-experiment", "--x", "64", "--x", "1024", "--trials", "128"}), 0) << err.str();
    EXPECT_NE(out.str().find("1024\t4\t1\n"), std::string::npos);
}
