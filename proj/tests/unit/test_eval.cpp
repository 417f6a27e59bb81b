#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>

#include "random_descriptors.hpp"
#include "stdesc/eval.hpp"
#include "synthetic_world.hpp"

using namespace stdesc;
namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

EvalRecord detected(std::int64_t q, std::int64_t match, double overlap = 0.8) {
  EvalRecord r;
  r.query_id = q;
  r.detected_id = match;
  r.overlap = overlap;
  r.candidates.push_back({match, overlap, true});
  return r;
}

EvalRecord missed(std::int64_t q) {
  EvalRecord r;
  r.query_id = q;
  return r;
}

GroundTruthLoop gt(std::int64_t q, std::vector<std::int64_t> m) { return {q, 20.0, std::move(m)}; }

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("stdesc_eval_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_sequence(const fs::path& dir, const synth::Sequence& seq) {
  fs::create_directories(dir / "scans");
  std::vector<RigidTransform> poses;
  for (const auto& s : seq.scans) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.bin", static_cast<long long>(s.index));
    write_kitti_bin(dir / "scans" / name, s.points);
    poses.push_back(s.pose);
  }
  write_pose_file_kitti(dir / "poses.txt", poses);
}

Config replay_config() {
  Config c;
  c.skip_recent = 1;
  return c;
}

}  // namespace

TEST(PoseError, IdenticalIsZero) {
  std::mt19937_64 rng(1);
  auto T = synth::random_transform(rng);
  auto e = pose_error(T, T);
  EXPECT_NEAR(e.rotation_deg, 0.0, 1e-6);
  EXPECT_EQ(e.translation_m, 0.0);
}

TEST(PoseError, FiveDegreeYaw) {
  std::mt19937_64 rng(2);
  auto gt_T = synth::random_transform(rng);
  auto det = RigidTransform::from_axis_angle(Vec3::UnitZ(), 5 * kDeg, Vec3(0.3, -0.4, 0)) * gt_T;
  auto e = pose_error(det, gt_T);
  EXPECT_NEAR(e.rotation_deg, 5.0, 1e-9);
  EXPECT_NEAR(e.translation_m, (det.t - gt_T.t).norm(), 1e-12);
}

TEST(PoseError, MatchesAxisAngleOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto a = synth::random_transform(rng), b = synth::random_transform(rng);
    Eigen::AngleAxisd aa(Mat3(b.R.transpose() * a.R));
    EXPECT_NEAR(pose_error(a, b).rotation_deg, aa.angle() / kDeg, 1e-7);
  }
}

TEST(PrSweep, ArithmeticOracle) {
  std::vector<EvalRecord> recs = {detected(10, 1), detected(11, 2), detected(12, 3), detected(13, 4),
                                  missed(14),      missed(15)};
  std::vector<GroundTruthLoop> g = {gt(10, {1}), gt(11, {2}), gt(12, {3}), gt(13, {}), gt(14, {5}), gt(15, {6})};
  auto rows = pr_sweep(recs, g, {0.5});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].tp, 3u);
  EXPECT_EQ(rows[0].fp, 1u);
  EXPECT_EQ(rows[0].fn, 2u);
  EXPECT_DOUBLE_EQ(*rows[0].precision, 0.75);
  EXPECT_DOUBLE_EQ(*rows[0].recall, 0.6);
}

TEST(PrSweep, AllCorrectAndNone) {
  std::vector<EvalRecord> recs;
  std::vector<GroundTruthLoop> g;
  for (int i = 0; i < 6; ++i) {
    recs.push_back(detected(100 + i, i, 0.1 + 0.15 * i));
    g.push_back(gt(100 + i, {i}));
  }
  for (const auto& r : pr_sweep(recs, g, default_sweep_grid()))
    if (r.tp + r.fp > 0) {
      EXPECT_DOUBLE_EQ(*r.precision, 1.0);
    }

  std::vector<EvalRecord> none = {missed(100), missed(101)};
  auto rows = pr_sweep(none, g, {0.5});
  EXPECT_FALSE(rows[0].precision.has_value());
  EXPECT_DOUBLE_EQ(*rows[0].recall, 0.0);
  std::ostringstream out;
  write_pr_csv(out, rows);
  EXPECT_EQ(out.str(), "sigma_pc,tp,fp,fn,precision,recall\n0.5,0,0,2,,0\n");

  std::vector<GroundTruthLoop> empty;
  try {
    pr_sweep(recs, empty, {0.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoGroundTruth);
  }
}

TEST(PrSweep, RowsSortedAndDetectionsMonotone) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<EvalRecord> recs;
  std::vector<GroundTruthLoop> g;
  for (int i = 0; i < 100; ++i) {
    EvalRecord r;
    r.query_id = i;
    for (int c = 0; c < 4; ++c) r.candidates.push_back({1000 + c, u(rng), u(rng) < 0.8});
    recs.push_back(r);
    g.push_back(gt(i, {1000 + (i % 5)}));
  }
  auto rows = pr_sweep(recs, g, {0.9, 0.1, 0.5, 0.3, 0.7});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LT(rows[i - 1].sigma_pc, rows[i].sigma_pc);
    EXPECT_LE(rows[i].tp + rows[i].fp, rows[i - 1].tp + rows[i - 1].fp);
  }
}

TEST(GroundTruth, RadiusAndSkipWindow) {
  std::vector<std::int64_t> ids = {0, 1, 2, 3, 4};
  std::vector<RigidTransform> anchors(5);
  anchors[0].t = Vec3(0, 0, 0);
  anchors[1].t = Vec3(100, 0, 0);
  anchors[2].t = Vec3(200, 0, 0);
  anchors[3].t = Vec3(105, 0, 0);
  anchors[4].t = Vec3(15, 0, 0);
  auto g = ground_truth_loops(ids, anchors, 20.0, 1);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_TRUE(g[0].matches.empty());
  EXPECT_TRUE(g[2].matches.empty());
  EXPECT_EQ(g[3].matches, std::vector<std::int64_t>{1});
  EXPECT_EQ(g[4].matches, std::vector<std::int64_t>{0});
  // frame 1 is inside the skip window of frame 2 and too far anyway; frame 2
  // is inside the window of 3
  auto tight = ground_truth_loops(ids, anchors, 20.0, 3);
  EXPECT_TRUE(tight[3].matches.empty());
  EXPECT_EQ(tight[4].matches, std::vector<std::int64_t>{0});
}

TEST(Csv, RecordsAndGroundTruthRoundTrip) {
  std::vector<EvalRecord> recs = {detected(3, 1, 0.75), missed(4)};
  recs[0].votes = 17;
  recs[0].inliers = 9;
  recs[0].error = PoseError{0.01, 0.02};
  recs[0].refined_error = PoseError{0.001, 0.002};
  recs[0].candidates.push_back({2, 0.125, false});
  recs[1].candidates.push_back({0, 0.3, true});
  std::ostringstream out;
  write_records_csv(out, recs);
  std::istringstream in(out.str());
  auto back = read_records_csv(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].detected_id, std::optional<std::int64_t>(1));
  EXPECT_EQ(back[0].votes, 17u);
  EXPECT_EQ(back[0].inliers, 9u);
  EXPECT_DOUBLE_EQ(back[0].refined_error->translation_m, 0.002);
  ASSERT_EQ(back[0].candidates.size(), 2u);
  EXPECT_FALSE(back[0].candidates[1].has_transform);
  EXPECT_FALSE(back[1].detected_id.has_value());
  EXPECT_FALSE(back[1].error.has_value());
  std::ostringstream again;
  write_records_csv(again, back);
  EXPECT_EQ(again.str(), out.str());

  std::vector<GroundTruthLoop> g = {gt(3, {0, 1}), gt(4, {})};
  std::ostringstream gout;
  write_gt_csv(gout, g);
  std::istringstream gin(gout.str());
  auto gback = read_gt_csv(gin);
  ASSERT_EQ(gback.size(), 2u);
  EXPECT_EQ(gback[0].matches, (std::vector<std::int64_t>{0, 1}));
  EXPECT_TRUE(gback[1].matches.empty());

  std::istringstream bad("query_id,detected_id\n1,2\n");
  EXPECT_THROW(read_records_csv(bad), Error);
}

TEST(LatencyStats, Percentiles) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  auto s = LatencyStats::of(v);
  EXPECT_EQ(s.total, 5050);
  EXPECT_EQ(s.p50, 50);
  EXPECT_EQ(s.p90, 90);
  EXPECT_EQ(s.p99, 99);
  EXPECT_EQ(s.max, 100);
}

TEST(RunSequence, PlantedLoopFromFiles) {
  TempDir tmp;
  auto seq = synth::make_sequence(1, 1, 10);  // 30 scans: place, decoy, reverse revisit
  write_sequence(tmp.path(), seq);
  auto out = run_sequence(replay_config(), tmp.path() / "scans", tmp.path() / "poses.txt");
  ASSERT_EQ(out.records.size(), 3u);
  EXPECT_EQ(out.summary.scans, 30u);
  EXPECT_EQ(out.summary.detections, 1u);
  EXPECT_EQ(out.summary.true_positives, 1u);
  const auto& r = out.records[2];
  ASSERT_TRUE(r.detected_id.has_value());
  EXPECT_EQ(*r.detected_id, 0);
  ASSERT_TRUE(r.error.has_value());
  EXPECT_LT(r.error->translation_m, 0.1);
  EXPECT_LT(r.error->rotation_deg, 0.5);
  for (const auto& rec : out.records) {
    EXPECT_GE(rec.extract_ms, 0.0);
    EXPECT_GE(rec.query_ms, 0.0);
    EXPECT_GE(rec.verify_ms, 0.0);
    EXPECT_EQ(rec.error.has_value(), rec.detected_id.has_value());
  }
  double sum = 0;
  for (const auto& rec : out.records) sum += rec.total_ms();
  EXPECT_NEAR(out.summary.total_ms.total, sum, 1.0);
}

TEST(RunSequence, NoRevisitsNoDetections) {
  TempDir tmp;
  auto seq = synth::make_sequence(0, 3, 10);
  write_sequence(tmp.path(), seq);
  auto out = run_sequence(replay_config(), tmp.path() / "scans", tmp.path() / "poses.txt");
  EXPECT_EQ(out.records.size(), 3u);
  EXPECT_EQ(out.summary.detections, 0u);
}

TEST(RunSequence, DeterministicOutput) {
  TempDir tmp;
  write_sequence(tmp.path(), synth::make_sequence(1, 1, 10, 2));
  auto a = run_sequence(replay_config(), tmp.path() / "scans", tmp.path() / "poses.txt");
  auto b = run_sequence(replay_config(), tmp.path() / "scans", tmp.path() / "poses.txt");
  std::ostringstream ra, rb, pa, pb;
  write_records_csv(ra, a.records);
  write_records_csv(rb, b.records);
  write_pr_csv(pa, a.pr);
  write_pr_csv(pb, b.pr);
  EXPECT_EQ(ra.str(), rb.str());
  EXPECT_EQ(pa.str(), pb.str());
}

TEST(RunSequence, IoErrors) {
  TempDir tmp;
  try {
    run_sequence(Config{}, tmp.path() / "missing", tmp.path() / "poses.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
  write_sequence(tmp.path(), synth::make_sequence(0, 1, 3));
  std::ofstream(tmp.path() / "short.txt") << "1 0 0 0 0 1 0 0 0 0 1 0\n";
  try {
    run_sequence(Config{}, tmp.path() / "scans", tmp.path() / "short.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}
