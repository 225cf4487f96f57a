#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bpmf/config.hpp"
#include "bpmf/sweep.hpp"

using namespace bpmf;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bpmf_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

SimConfig small_config() {
  SimConfig c;
  c.ebn0_grid = {2.0, 6.0};
  c.frames_per_point = 6;
  c.iterations = 4;
  c.master_seed = 77;
  return c;
}

}  // namespace

TEST(Config, OnlyGridGivesDefaults) {
  const auto c = parse_config("ebn0_grid = 1, 2.5\n");
  SimConfig expect;
  expect.ebn0_grid = {1.0, 2.5};
  EXPECT_EQ(c, expect);
  EXPECT_EQ(c.iterations, 15);
  EXPECT_EQ(c.m_antennas, 4u);
}

TEST(Config, IndivisiblePilotsNamed) {
  try {
    parse_config("kp_pilots = 3\nn_users = 2\nk_subcarriers = 256\n");
    FAIL() << "expected ConfigInvalid";
  } catch (const ConfigInvalid& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("kp_pilots"), std::string::npos);
    EXPECT_NE(what.find("divisible"), std::string::npos);
  }
}

TEST(Config, AllViolationsReported) {
  SimConfig c;
  c.iterations = 0;
  c.frames_per_point = 0;
  c.damping = 1.5;
  c.receivers.clear();
  const auto v = config_violations(c);
  EXPECT_EQ(v.size(), 4u);
  try {
    validate(c);
    FAIL();
  } catch (const ConfigInvalid& e) {
    const std::string what = e.what();
    for (const char* key : {"iterations", "frames_per_point", "damping", "receivers"})
      EXPECT_NE(what.find(key), std::string::npos) << key;
  }
}

TEST(Config, ParseErrors) {
  EXPECT_THROW(parse_config("bogus = 1\n"), ConfigParse);
  EXPECT_THROW(parse_config("iterations = 3\niterations = 4\n"), ConfigParse);
  EXPECT_THROW(parse_config("iterations = three\n"), ConfigParse);
  EXPECT_THROW(parse_config("ebn0_grid = 1, x\n"), ConfigParse);
  EXPECT_THROW(parse_config("just words\n"), ConfigParse);
  EXPECT_THROW(parse_config("receivers = proposed, oracle\n"), ConfigParse);
  EXPECT_THROW(parse_config("code_generators = 133\n"), ConfigParse);
  EXPECT_THROW(parse_config("code_generators = 133, 191\n"), ConfigParse);
  EXPECT_THROW(load_config("/nonexistent/bpmf.cfg"), IoError);
}

TEST(Config, CommentsOptionalValues) {
  const auto c = parse_config("# header\n\n damping = 0.5   # inline\ndemapper = maxlog\nmodulation = qam16\n");
  ASSERT_TRUE(c.damping.has_value());
  EXPECT_DOUBLE_EQ(*c.damping, 0.5);
  EXPECT_EQ(c.demapper, DemapMode::MaxLog);
  EXPECT_EQ(c.modulation, Constellation::Kind::Qam16);
}

TEST(Config, ShippedDefaultRoundTrips) {
  const auto a = load_config(BPMF_SOURCE_DIR "/configs/default.cfg");
  EXPECT_EQ(a, SimConfig{});
  const auto b = parse_config(serialize_config(a));
  EXPECT_EQ(a, b);
  SimConfig odd;
  odd.ebn0_grid = {0.1, -3.25, 1e-7};
  odd.damping = 0.3;
  odd.receivers = {ReceiverId::DirectMf};
  odd.code = {5, {023, 035}};
  EXPECT_EQ(parse_config(serialize_config(odd)), odd);
}

TEST(Seeds, DistinctAndReconstructible) {
  EXPECT_NE(frame_seed(1, 0, 0), frame_seed(1, 0, 1));
  EXPECT_NE(frame_seed(1, 0, 1), frame_seed(1, 1, 0));
  EXPECT_NE(frame_seed(1, 2, 3), frame_seed(2, 2, 3));
  const auto cfg = small_config();
  const FrameLayout layout(cfg.link());
  const auto recs = run_trials(cfg, 2);
  for (const auto& r : recs) {
    if (r.frame != 3) continue;
    const auto again = run_frame(cfg, layout, r.ebn0_index, r.frame);
    bool found = false;
    for (const auto& a : again)
      if (a.receiver == r.receiver) {
        found = true;
        EXPECT_EQ(a.bit_errors, r.bit_errors);
        EXPECT_EQ(a.lambda_hat, r.lambda_hat);
      }
    EXPECT_TRUE(found);
  }
}

TEST(Results, RecordRoundTrip) {
  TrialRecord r{"direct_mf", 3, 7.5, 12, 4, 436, true, -13.25, 5.0e1 / 3.0, 17.0, 8.125};
  const auto back = parse_record(format_record(r));
  EXPECT_EQ(back.receiver, r.receiver);
  EXPECT_EQ(back.ebn0_index, r.ebn0_index);
  EXPECT_EQ(back.lambda_hat, r.lambda_hat);
  EXPECT_EQ(back.nmse_db, r.nmse_db);
  EXPECT_EQ(back.frame_error, r.frame_error);
  r.nmse_db = std::numeric_limits<double>::quiet_NaN();
  EXPECT_TRUE(std::isnan(parse_record(format_record(r)).nmse_db));
}

TEST(Results, MalformedLines) {
  EXPECT_THROW(parse_record("proposed 0 1.0 0 1 100 1"), MalformedResults);
  EXPECT_THROW(parse_record("proposed 0 1.0 0 1 100 1 -3 1 1 2 extra"), MalformedResults);
  EXPECT_THROW(parse_record("nobody 0 1.0 0 1 100 1 -3 1 1 2"), MalformedResults);
  EXPECT_THROW(parse_record("proposed 0 1.0 0 200 100 1 -3 1 1 2"), MalformedResults);
  EXPECT_THROW(parse_record("proposed 0 1.0 0 1 100 2 -3 1 1 2"), MalformedResults);
  EXPECT_THROW(parse_record("proposed 0 abc 0 1 100 1 -3 1 1 2"), MalformedResults);
  EXPECT_THROW(read_results("/nonexistent/results.txt"), IoError);
}

TEST(Summary, EmptyResultsHeaderOnly) {
  const auto dir = scratch("empty");
  write_text(dir / "results.txt", std::string(kResultsHeader) + "\n");
  EXPECT_EQ(summary_csv(summarize(read_results((dir / "results.txt").string()))),
            "receiver,ebn0_db,ber,fer,nmse_db,lambda_rel_err,frames,bits\n");
}

TEST(Summary, HandBuiltRecords) {
  const auto dir = scratch("hand");
  write_text(dir / "results.txt",
             "# receiver ebn0_index ebn0_db frame bit_errors info_bits frame_error nmse_db lambda_hat lambda_true wall_ms\n"
             "proposed 0 2 1 0 100 0 -20 5 5 1\n"
             "mfb 0 2 0 0 100 0 nan 5 5 1\n"
             "proposed 0 2 0 10 100 1 -10 4 5 1\n"
             "direct_mf 1 4 0 3 100 1 -15 2 2.5 1\n");
  // proposed @ 2 dB: ber 10/200, fer 1/2, nmse 10 log10((0.1 + 0.01)/2), lambda err (0.2 + 0)/2
  // direct_mf @ 4 dB: ber 3/100, fer 1, nmse -15, lambda err 0.5/2.5
  const std::string expect =
      "receiver,ebn0_db,ber,fer,nmse_db,lambda_rel_err,frames,bits\n"
      "direct_mf,4,0.03,1,-15,0.2,1,100\n"
      "mfb,2,0,0,nan,0,1,100\n"
      "proposed,2,0.05,0.5,-12.5964,0.1,2,200\n";
  EXPECT_EQ(summary_csv(summarize(read_results((dir / "results.txt").string()))), expect);
}

TEST(Summary, BerIsErrorsOverBits) {
  std::vector<TrialRecord> recs;
  for (int f = 0; f < 3; ++f) recs.push_back({"mfb", 0, 1.0, std::size_t(f), f == 1 ? 1 : 0, 1, f == 1, -1, 1, 1, 0});
  const auto rows = summarize(recs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].bit_errors, 1);
  EXPECT_EQ(rows[0].bits, 3);
  EXPECT_NE(summary_csv(rows).find(",0.333333,"), std::string::npos);
}

TEST(Sweep, NoiselessGenieIsErrorFree) {
  SimConfig c;
  c.ebn0_grid = {std::numeric_limits<double>::infinity()};
  c.frames_per_point = 1;
  c.receivers = {ReceiverId::Mfb};
  const auto dir = scratch("noiseless");
  const auto out = run_sweep(c, 1, dir);
  ASSERT_EQ(out.rows.size(), 1u);
  EXPECT_EQ(out.rows[0].ber, 0.0);
  EXPECT_TRUE(std::filesystem::exists(out.summary));
}

TEST(Sweep, WorkerCountDoesNotChangeSummary) {
  const auto cfg = small_config();
  const auto a = run_sweep(cfg, 1, scratch("w1"));
  const auto b = run_sweep(cfg, 8, scratch("w8"));
  std::ifstream fa(a.summary), fb(b.summary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(summary_csv(summarize(read_results(a.results.string()))), sa);
}

TEST(Sweep, BerFallsWithSnr) {
  SimConfig c;
  c.ebn0_grid = {0, 2, 4, 6, 8};
  c.frames_per_point = 60;
  const auto rows = summarize(run_trials(c, 1));
  std::map<std::string, std::vector<double>> by_rx;
  for (const auto& r : rows) by_rx[r.receiver].push_back(r.ber);
  ASSERT_EQ(by_rx.size(), 3u);
  for (const auto& [name, ber] : by_rx) {
    int inversions = 0;
    for (std::size_t i = 1; i < ber.size(); ++i) inversions += ber[i] > ber[i - 1];
    EXPECT_LE(inversions, 1) << name;
  }
}

TEST(Sweep, WorkerExceptionPropagates) {
  SimConfig c = small_config();
  c.kp_pilots = 3;
  EXPECT_THROW(run_trials(c, 4), ConfigInvalid);
  EXPECT_THROW(run_sweep(small_config(), 1, "/proc/forbidden/dir"), IoError);
}
