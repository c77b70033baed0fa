// Acceptance checks, one per criterion: `acceptance N` prints
// "criterion N: PASS|FAIL" with the measured figures and exits 0 only on PASS.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "corrmvs/io.hpp"
#include "support.hpp"

using namespace corrmvs;
using namespace testing_support;
namespace fs = std::filesystem;

namespace
{

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

SurfaceKind kind_of(std::size_t i)
{
  static constexpr SurfaceKind kinds[] = {SurfaceKind::kPlane, SurfaceKind::kTiltedPlane, SurfaceKind::kSphere,
                                          SurfaceKind::kStep};
  return kinds[i % 4];
}

std::vector<CorrelationPyramid> positional_pyramids(const Scene & scene)
{
  const FeatureMap ref = positional_features(scene, 0, kDefaultFeatureDim, 7);
  std::vector<CorrelationPyramid> pyrs;
  for (std::size_t k = 0; k < scene.rig().source_count(); ++k) {
    pyrs.push_back(
      build_pyramid(build_correlation_volume(ref, positional_features(scene, k + 1, kDefaultFeatureDim, 7))));
  }
  return pyrs;
}

// Exact GT flows triangulate back to GT depth.
bool criterion_1(std::string & detail)
{
  const auto t0 = Clock::now();
  SplitMix64 rng(20240601);
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t s = 0; s < 20; ++s) {
    SceneParams params;
    params.kind = kind_of(rng.next());
    const Scene scene = make_scene(params, 4, rng.next());
    std::vector<FlowField> flows;
    for (std::size_t k = 0; k < 4; ++k) { flows.push_back(gt_flow(scene, k)); }
    const DepthMap d = init_depth_from_flows(flows, scene.rig());
    const DepthMap & gt = scene.reference_depth();
    for (std::size_t i = 0; i < d.pixels(); ++i) {
      bool any = false;
      for (const auto & f : flows) { any = any || f.valid(i); }
      if (!any) { continue; }
      if (!d.valid(i)) {
        worst = 1.0;
        continue;
      }
      worst = std::max(worst, std::abs(d[i] - gt[i]) / gt[i]);
      ++checked;
    }
  }
  const double elapsed = seconds_since(t0);
  detail = "max rel err " + num(worst) + " over " + std::to_string(checked) + " px, " +
           num(elapsed) + " s";
  return worst < 1e-9 && checked > 0 && elapsed < 5.0;
}

// Closed form against an exhaustive scan of the projection energy.
bool criterion_2(std::string & detail)
{
  SplitMix64 rng(77);
  constexpr double lo = 0.1, hi = 10.0, step = 1e-4;
  const auto steps = std::size_t(std::llround((hi - lo) / step));
  double worst = 0.0;
  int done = 0;
  while (done < 1000) {
    const Intrinsics k = random_intrinsics(rng);
    const Pixel p{rng.uniform(0, 64), rng.uniform(0, 48)};
    const double depth = rng.uniform(1.0, 6.0);
    const std::size_t views = 1 + rng.next() % 4;
    std::vector<Correspondence> obs;
    while (obs.size() < views) {
      RelativePose rel;
      rel.rotation = random_rotation(rng, 0.1);
      rel.translation = {rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1)};
      const auto r = try_reproject(p, depth, k, k, rel);
      if (!r) { continue; }
      obs.push_back({{r->pixel.x + rng.uniform(-0.5, 0.5), r->pixel.y + rng.uniform(-0.5, 0.5)}, rel, k});
    }
    const Triangulation t = try_triangulate_pixel(p, k, obs);
    if (!t.ok() || t.depth <= lo || t.depth >= hi) { continue; }

    // Per view, a x (R r d + t) = d (a x R r) + (a x t).
    const Eigen::Vector3d ray = k.matrix().inverse() * Eigen::Vector3d(p.x, p.y, 1.0);
    std::vector<Eigen::Vector3d> u, v;
    for (const auto & o : obs) {
      const Eigen::Vector3d a =
        o.source_intrinsics.matrix().inverse() * Eigen::Vector3d(o.source_pixel.x, o.source_pixel.y, 1.0);
      u.push_back(a.cross(o.relative.rotation * ray));
      v.push_back(a.cross(o.relative.translation));
    }
    double best = lo, best_e = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i <= steps; ++i) {
      const double d = lo + double(i) * step;
      double e = 0.0;
      for (std::size_t j = 0; j < u.size(); ++j) { e += (d * u[j] + v[j]).squaredNorm(); }
      if (e < best_e) {
        best_e = e;
        best = d;
      }
    }
    worst = std::max(worst, std::abs(t.depth - best));
    ++done;
  }
  detail = "max |closed form - grid| " + num(worst) + " over 1000 px";
  return worst <= step;
}

// Volume bitwise against the quadruple loop; pooled levels against scalar pooling.
bool criterion_3(std::string & detail)
{
  SplitMix64 rng(3);
  bool exact = true;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.next() % 64;
    const FeatureMap ref = random_features(rng, 8, 8, d), src = random_features(rng, 8, 8, d);
    const CorrelationVolume c0 = build_correlation_volume(ref, src);
    exact = exact && c0.data() == correlation_reference(ref, src);
    const CorrelationPyramid pyr = build_pyramid(c0);
    for (std::size_t p = 0; p < 64; ++p) {
      std::vector<double> s(c0.slice(p).begin(), c0.slice(p).end());
      std::size_t h = 8, w = 8;
      for (int l = 1; l < 4; ++l) {
        std::size_t oh = 0, ow = 0;
        s = avg_pool_reference(s, h, w, oh, ow);
        h = oh;
        w = ow;
        if (pyr[l].slice_size() != s.size()) { return false; }
        for (std::size_t i = 0; i < s.size(); ++i) { worst = std::max(worst, std::abs(pyr[l].slice(p)[i] - s[i])); }
      }
    }
  }
  detail = std::string("volume ") + (exact ? "bitwise equal" : "MISMATCH") + ", pooling max err " + num(worst);
  return exact && worst <= 1e-6;
}

// 196-value lookups against scalar bilinear sampling of scalar-pooled slices.
bool criterion_4(std::string & detail)
{
  SplitMix64 rng(4);
  const LookupConfig cfg{3, 4};
  double worst = 0.0;
  bool sized = cfg.length() == 196;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t sh = 16 + rng.next() % 17, sw = 16 + rng.next() % 17;
    const CorrelationVolume c0 = random_volume(rng, 4, 4, sh, sw);
    const CorrelationPyramid pyr = build_pyramid(c0);
    for (int s = 0; s < 25; ++s) {
      const std::size_t py = rng.next() % 4, px = rng.next() % 4;
      const double qx = rng.uniform(-6.0, double(sw) + 6.0), qy = rng.uniform(-6.0, double(sh) + 6.0);
      const auto got = lookup(pyr, {std::ptrdiff_t(px), std::ptrdiff_t(py)}, {qx, qy}, cfg);
      const auto want = lookup_reference(c0, py, px, qx, qy, 3, 4);
      sized = sized && got.size() == 196 && want.size() == 196;
      for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
        worst = std::max(worst, std::abs(got[i] - want[i]));
      }
    }
  }
  detail = "500 lookups of 196 values, max err " + num(worst);
  return sized && worst <= 1e-6;
}

// With GT depth the fused level-0 window peaks at its centre.
bool criterion_5(std::string & detail)
{
  const LookupConfig cfg{3, 4};
  const std::size_t centre = cfg.window() / 2;
  std::size_t hits = 0, total = 0;
  double worst_scene = 1.0;
  for (std::size_t s = 0; s < 10; ++s) {
    SceneParams params;
    params.kind = kind_of(s);
    const Scene scene = make_scene(params, 4, 100 + s);
    const auto pyrs = positional_pyramids(scene);
    const CorrelationFeatureMap fused = fuse_correlation_step(scene.reference_depth(), pyrs, scene.rig(), cfg);
    const auto mask = mutual_visibility(scene);
    std::size_t h = 0, n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) { continue; }
      const auto v = fused.values.pixel(i);
      const float c = v[centre];
      bool peak = true;
      for (std::size_t j = 0; j < cfg.window(); ++j) { peak = peak && v[j] <= c; }
      h += peak;
      ++n;
    }
    hits += h;
    total += n;
    worst_scene = std::min(worst_scene, double(h) / double(n));
  }
  const double rate = double(hits) / double(total);
  detail = "peak at centre for " + num(100.0 * rate) + "% of " + std::to_string(total) +
           " px (worst scene " + num(100.0 * worst_scene) + "%)";
  return rate >= 0.95;
}

// Oracle refinement from +-20% noise is monotone and shrinks AbsRel fourfold.
bool criterion_6(std::string & detail)
{
  const auto t0 = Clock::now();
  bool ok = true;
  double worst_ratio = 0.0;
  for (std::size_t s = 0; s < 10; ++s) {
    SceneParams params;
    params.kind = kind_of(s);
    const Scene scene = make_scene(params, 4, 100 + s);
    const auto pyrs = positional_pyramids(scene);
    const DepthMap & gt = scene.reference_depth();
    SplitMix64 rng(999 + s);
    DepthMap d0 = gt;
    for (auto & v : d0.data()) { v *= 1.0 + rng.uniform(-0.2, 0.2); }
    OracleUpdater oracle;
    const auto its = refine_loop(d0, pyrs, scene.rig(), nullptr, oracle, RefineConfig{});
    const double first = compute_metrics(d0, gt).abs_rel;
    double prev = first;
    for (const auto & d : its) {
      const double a = compute_metrics(d, gt).abs_rel;
      if (a > prev) {
        ok = false;
        std::printf("  scene %zu: AbsRel rose from %.6g to %.6g\n", s, prev, a);
      }
      prev = a;
    }
    ok = ok && its.size() == 12;
    worst_ratio = std::max(worst_ratio, prev / first);
    std::printf("  scene %zu (%s): AbsRel %.5f -> %.5f\n", s, to_string(params.kind), first, prev);
  }
  const double elapsed = seconds_since(t0);
  detail = "worst AbsRel ratio " + num(worst_ratio) + ", " + num(elapsed) + " s";
  return ok && worst_ratio < 0.25 && elapsed < 30.0;
}

// A zero depth head is a fixed point; gru_cell matches the gate equations.
bool criterion_7(std::string & detail)
{
  SceneParams params;
  params.kind = SurfaceKind::kTiltedPlane;
  params.height = 16;
  params.width = 20;
  params.focal = 19.2;
  const Scene scene = make_scene(params, 2, 5);
  const FeatureMap ref = positional_features(scene, 0, 32, 1);
  std::vector<CorrelationPyramid> pyrs;
  for (std::size_t k = 0; k < 2; ++k) {
    pyrs.push_back(build_pyramid(build_correlation_volume(ref, positional_features(scene, k + 1, 32, 1))));
  }
  const FeatureMap context = positional_features(scene, 0, 16, 2);
  GruWeights w = GruWeights::random({}, 9, 0.5);
  w.head2 = Conv2d(std::size_t(w.config.head_hidden), 1);
  DepthMap d0 = scene.reference_depth();
  SplitMix64 noise(6);
  for (auto & v : d0.data()) { v *= 1.0 + noise.uniform(-0.2, 0.2); }
  const auto its = refine_loop(d0, pyrs, scene.rig(), &context, w, RefineConfig{});
  bool fixed = its.size() == 12;
  for (const auto & d : its) { fixed = fixed && d == d0; }

  SplitMix64 rng(7);
  double worst = 0.0;
  const GruConfig c;
  for (int trial = 0; trial < 100; ++trial) {
    const GruWeights wr = GruWeights::random(c, rng.next(), 0.5);
    const GruState h = random_features(rng, 4, 4, std::size_t(c.hidden));
    const FeatureMap x = random_features(rng, 4, 4, std::size_t(c.input_channels()));
    const GruState got = gru_cell(h, x, wr);
    const auto want = gru_reference(h, x, wr);
    for (std::size_t i = 0; i < want.size(); ++i) { worst = std::max(worst, std::abs(got.data()[i] - want[i])); }
  }
  detail = std::string("zero head ") + (fixed ? "exact over 12 iterations" : "MOVED DEPTH") +
           ", gru_cell max err " + num(worst);
  return fixed && worst <= 1e-6;
}

// Zero-weight upsampling is bilinear 8x.
bool criterion_8(std::string & detail)
{
  SplitMix64 rng(8);
  const DffmConfig c;
  DepthMap d(60, 80);
  for (auto & v : d.data()) { v = rng.uniform(0.5, 10.0); }
  const ContextPyramid ctx{random_features(rng, 240, 320, std::size_t(c.context_half)),
                           random_features(rng, 120, 160, std::size_t(c.context_quarter)),
                           random_features(rng, 60, 80, std::size_t(c.context_eighth))};
  const DepthMap up = upsample_depth(d, ctx, DffmWeights::zeros(c));
  const DepthMap bl = bilinear_upsample8x(d);
  const bool shape = up.height() == 480 && up.width() == 640;
  const bool exact = up == bl;

  std::vector<double> ref = d.data();
  std::size_t h = 60, w = 80;
  for (int s = 0; s < 3; ++s, h *= 2, w *= 2) { ref = upsample_reference(ref, h, w, 1); }
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.size() && i < bl.pixels(); ++i) { worst = std::max(worst, std::abs(bl[i] - ref[i])); }
  detail = std::to_string(up.height()) + "x" + std::to_string(up.width()) + ", " +
           (exact ? "equal to bilinear 8x" : "DIFFERS from bilinear 8x") + ", bilinear vs scalar " +
           num(worst);
  return shape && exact && ref.size() == bl.pixels() && worst <= 1e-12;
}

// Hand-computed metrics and the first-iterate loss weight.
bool criterion_9(std::string & detail)
{
  // gt = 1, 2, 4, 8 and pred = 2 gt: |e| = gt, so abs_rel = 1, abs = sq_rel = 15 / 4,
  // rmse = sqrt(85 / 4) and no pixel is an inlier.
  DepthMap gt(2, 2), pred(2, 2);
  const double g[] = {1, 2, 4, 8};
  for (std::size_t i = 0; i < 4; ++i) {
    gt[i] = g[i];
    pred[i] = 2 * g[i];
  }
  const MetricsRecord m = compute_metrics(pred, gt);
  const bool metrics = m.abs_rel == 1.0 && m.abs == 3.75 && m.sq_rel == 3.75 && m.rmse == std::sqrt(21.25) &&
                       m.delta_125 == 0.0 && m.valid_count == 4;
  const double weight = iterate_weight(1, 12, 0.8);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "metrics %s, weight %.17g", metrics ? "exact" : "WRONG", weight);
  detail = buf;
  return metrics && std::abs(weight - 0.08589934592) <= 1e-12;
}

std::string read_text(const fs::path & p)
{
  const io::Bytes b = io::read_file(p.string());
  return {b.begin(), b.end()};
}

bool same_tree(const fs::path & a, const fs::path & b, std::string & why)
{
  std::vector<std::string> names;
  for (const auto & e : fs::directory_iterator(a)) { names.push_back(e.path().filename().string()); }
  std::size_t count_b = 0;
  for ([[maybe_unused]] const auto & e : fs::directory_iterator(b)) { ++count_b; }
  if (names.size() != count_b) {
    why = "different file sets";
    return false;
  }
  for (const auto & n : names) {
    if (!fs::exists(b / n) || io::read_file((a / n).string()) != io::read_file((b / n).string())) {
      why = n + " differs";
      return false;
    }
  }
  return true;
}

// Pipeline outputs are reproducible; io containers round-trip bitwise.
bool criterion_10(std::string & detail)
{
  const fs::path root = fs::path(CORRMVS_TEST_WORKDIR) / "acceptance_10";
  fs::remove_all(root);
  fs::create_directories(root);
  auto run = [&](const std::string & name, const std::string & extra) {
    const std::string cmd = std::string("\"") + CORRMVS_CLI_PATH +
                            "\" pipeline --surface plane --views 4 --seed 7 --updater oracle --out \"" +
                            (root / name).string() + "\" " + extra + " > \"" + (root / (name + ".log")).string() +
                            "\" 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  bool ok = run("a", "") && run("b", "") && run("c", "--threads 1") && run("d", "--threads 3");
  std::string why = ok ? "" : "pipeline failed";
  ok = ok && same_tree(root / "a", root / "b", why) && same_tree(root / "a", root / "c", why) &&
       same_tree(root / "a", root / "d", why);
  ok = ok && read_text(root / "a.log") == read_text(root / "b.log");
  const std::string summary = ok ? read_text(root / "a" / "metrics.txt") : "";
  fs::remove_all(root);

  SplitMix64 rng(10);
  bool round_trips = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 1 + rng.next() % 9, w = 1 + rng.next() % 9;
    const FeatureMap f = random_features(rng, h, w, 1 + rng.next() % 5);
    const Tensor t = to_tensor(f);
    const io::Bytes tb = io::encode_tensor(t);
    round_trips = round_trips && io::decode_tensor(tb) == t && io::encode_tensor(io::decode_tensor(tb)) == tb;

    DepthMap d(h, w);
    for (auto & v : d.data()) { v = double(float(rng.uniform(0.5, 10.0))); }
    const io::Bytes pb = io::encode_pfm(io::depth_to_pfm(d));
    round_trips = round_trips && io::depth_from_pfm(io::decode_pfm(pb)) == d &&
                  io::encode_pfm(io::decode_pfm(pb)) == pb;

    NamedTensors named = GruWeights::random(GruConfig{4, 3, 2, 2, 1, 3}, rng.next()).to_named();
    const io::Bytes wb = io::encode_weights(named);
    round_trips = round_trips && io::decode_weights(wb) == named && io::encode_weights(io::decode_weights(wb)) == wb;

    std::vector<View> views{{random_intrinsics(rng), random_pose(rng)}, {random_intrinsics(rng), random_pose(rng)}};
    const std::string text = io::format_cameras(views);
    const auto back = io::parse_cameras(text);
    round_trips = round_trips && io::format_cameras(back) == text && back[1].pose == views[1].pose &&
                  back[1].intrinsics == views[1].intrinsics;
  }
  std::string last = summary;
  while (!last.empty() && last.back() == '\n') { last.pop_back(); }
  detail = std::string(ok ? "pipeline identical over 2 runs and --threads 1/3" : "pipeline: " + why) +
           (round_trips ? "; io round trips bitwise" : "; io round trip MISMATCH") + (ok ? "; " + last : "");
  return ok && round_trips;
}

}  // namespace

int main(int argc, char ** argv)
{
  const std::vector<std::function<bool(std::string &)>> criteria{
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
  const int n = argc == 2 ? std::atoi(argv[1]) : 0;
  if (n < 1 || n > int(criteria.size())) {
    std::fprintf(stderr, "usage: acceptance N   (1..%zu)\n", criteria.size());
    return 2;
  }
  std::string detail;
  bool pass = false;
  try {
    pass = criteria[std::size_t(n - 1)](detail);
  } catch (const std::exception & e) {
    detail = std::string("error: ") + e.what();
  }
  std::printf("criterion %d: %s  (%s)\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  return pass ? 0 : 1;
}
