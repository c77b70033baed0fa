#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "corrmvs/corrmvs.hpp"

namespace fs = std::filesystem;
using namespace corrmvs;

namespace
{

enum ExitCode : int
{
  kOk = 0,
  kOther = 1,
  kUsage = 2,
  kParseOrIo = 3,
  kShapeError = 4,
  kDegenerate = 5,
  kConfigError = 6,
};

int exit_code(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::kParse:
    case ErrorKind::kIo: return kParseOrIo;
    case ErrorKind::kShape:
    case ErrorKind::kIndex: return kShapeError;
    case ErrorKind::kDegenerateGeometry:
    case ErrorKind::kNegativeDepth:
    case ErrorKind::kBehindCamera:
    case ErrorKind::kEmptyResult: return kDegenerate;
    case ErrorKind::kConfig:
    case ErrorKind::kInvalidPose:
    case ErrorKind::kInvalidDepth: return kConfigError;
    case ErrorKind::kEmptyMask: return kOther;
  }
  return kOther;
}

struct Settings
{
  std::string cameras;
  std::vector<std::string> features;
  std::vector<std::string> corr;
  std::vector<std::string> flows;
  std::vector<std::string> context;
  std::string weights;
  std::string depth;
  std::string pred;
  std::string gt;
  std::string out;

  int radius = 3;
  int iters = 12;
  int levels = kMaxPyramidLevels;
  std::string fusion = "averaging";
  std::string updater = "oracle";
  std::string report = "text";
  std::string surface = "plane";
  std::size_t views = 4;
  std::uint64_t seed = 0;
  std::size_t height = 48;
  std::size_t width = 64;
  std::size_t feature_dim = kDefaultFeatureDim;
  unsigned threads = 0;
};

std::string path_in(const std::string & dir, const std::string & name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string & dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) { fail(ErrorKind::kIo, "cannot create directory '" + dir + "': " + ec.message()); }
}

std::string indexed(const std::string & stem, std::size_t i) { return stem + "_" + std::to_string(i) + ".cort"; }

// Context channel widths of the three pyramid scales, fine to coarse.
constexpr std::size_t kContextChannels[3] = {32, 48, 64};
constexpr const char * kContextNames[3] = {"context_half.cort", "context_quarter.cort", "context_eighth.cort"};
constexpr std::size_t kContextFactors[3] = {4, 2, 1};

// synth: cameras, per-view features, context pyramid and GT depth at both resolutions.
void run_synth(const Settings & s)
{
  SceneParams params;
  params.kind = parse_surface(s.surface);
  params.height = s.height;
  params.width = s.width;
  const Scene scene = make_scene(params, s.views, s.seed);
  ensure_dir(s.out);

  SplitMix64 seeds(s.seed);
  const std::uint64_t feature_seed = seeds.next();
  io::write_cameras(path_in(s.out, "cameras.txt"), scene.rig());
  for (std::size_t v = 0; v < scene.view_count(); ++v) {
    io::write_tensor(path_in(s.out, indexed("features", v)), to_tensor(positional_features(scene, v, s.feature_dim, feature_seed)));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const std::uint64_t ctx_seed = seeds.next();
    const FeatureMap ctx = positional_features(scene, 0, kContextChannels[i], ctx_seed, 0.0, kContextFactors[i]);
    io::write_tensor(path_in(s.out, kContextNames[i]), to_tensor(ctx));
  }
  io::write_pfm(path_in(s.out, "gt_depth.pfm"), io::depth_to_pfm(scene.reference_depth()));
  io::write_pfm(path_in(s.out, "gt_depth_full.pfm"), io::depth_to_pfm(scene.depth_at_scale(0, 8)));
}

// corr: the first feature file is the reference view; one volume per remaining file.
void run_corr(const Settings & s)
{
  if (s.features.size() < 2) { fail(ErrorKind::kConfig, "corr needs a reference and at least one source feature file"); }
  const FeatureMap ref = to_feature_map(io::read_tensor(s.features[0]));
  ensure_dir(s.out);
  for (std::size_t k = 1; k < s.features.size(); ++k) {
    const FeatureMap src = to_feature_map(io::read_tensor(s.features[k]));
    io::write_tensor(path_in(s.out, indexed("corr", k - 1)), io::volume_to_tensor(build_correlation_volume(ref, src)));
  }
}

void run_flow(const Settings & s)
{
  if (s.corr.empty()) { fail(ErrorKind::kConfig, "flow needs at least one correlation file"); }
  ensure_dir(s.out);
  for (std::size_t k = 0; k < s.corr.size(); ++k) {
    const CorrelationVolume vol = io::volume_from_tensor(io::read_tensor(s.corr[k]));
    io::write_tensor(path_in(s.out, indexed("flow", k)), io::flow_to_tensor(flow_from_correlation(vol)));
  }
}

void run_init(const Settings & s)
{
  const CameraRig rig = io::read_cameras(s.cameras);
  std::vector<FlowField> flows;
  for (const auto & f : s.flows) { flows.push_back(io::flow_from_tensor(io::read_tensor(f))); }
  InitStats stats;
  const DepthMap d0 = init_depth_from_flows(flows, rig, &stats);
  if (stats.triangulated == 0 && stats.degenerate > 0) {
    fail(ErrorKind::kDegenerateGeometry, "every pixel is degenerate: the cameras have no baseline (pure rotation)");
  }
  io::write_pfm(s.out, io::depth_to_pfm(d0));
  std::cerr << "init: " << stats.triangulated << " triangulated, " << stats.degenerate << " degenerate, "
            << stats.negative << " negative, " << stats.no_view << " without views\n";
}

void run_refine(const Settings & s)
{
  const CameraRig rig = io::read_cameras(s.cameras);
  if (s.corr.size() != rig.source_count()) {
    fail(ErrorKind::kShape, std::to_string(s.corr.size()) + " correlation files for " +
                              std::to_string(rig.source_count()) + " source views");
  }
  std::vector<CorrelationPyramid> pyramids;
  for (const auto & c : s.corr) { pyramids.push_back(build_pyramid(io::volume_from_tensor(io::read_tensor(c)), s.levels)); }
  const DepthMap d0 = io::depth_from_pfm(io::read_pfm(s.depth));

  RefineConfig cfg;
  cfg.iterations = s.iters;
  cfg.lookup = LookupConfig{s.radius, s.levels};
  cfg.fusion = parse_fusion(s.fusion);

  std::vector<DepthMap> iterates;
  if (s.updater == "oracle") {
    OracleUpdater oracle;
    iterates = refine_loop(d0, pyramids, rig, nullptr, oracle, cfg);
  } else if (s.updater == "gru") {
    GruWeights w;
    if (!s.weights.empty()) {
      w = GruWeights::from_named(io::read_weights(s.weights));
    } else {
      GruConfig c;
      c.corr_in = int(cfg.lookup.length());
      w = GruWeights::random(c, s.seed);
    }
    FeatureMap context;
    const FeatureMap * ctx = nullptr;
    if (!s.context.empty()) {
      context = slice_channels(to_feature_map(io::read_tensor(s.context.back())), 0, std::size_t(w.config.context));
      ctx = &context;
    }
    iterates = refine_loop(d0, pyramids, rig, ctx, w, cfg);
  } else {
    fail(ErrorKind::kConfig, "unknown updater '" + s.updater + "' (gru|oracle)");
  }
  const DepthMap & out = iterates.empty() ? d0 : iterates.back();
  io::write_pfm(s.out, io::depth_to_pfm(out));
}

void run_upsample(const Settings & s)
{
  if (s.context.size() != 3) { fail(ErrorKind::kConfig, "upsample needs three context files: half, quarter, eighth"); }
  ContextPyramid ctx{to_feature_map(io::read_tensor(s.context[0])), to_feature_map(io::read_tensor(s.context[1])),
                     to_feature_map(io::read_tensor(s.context[2]))};
  DffmConfig c;
  c.context_half = int(ctx.half.channels());
  c.context_quarter = int(ctx.quarter.channels());
  c.context_eighth = int(ctx.eighth.channels());
  const DffmWeights w = s.weights.empty() ? DffmWeights::zeros(c) : DffmWeights::from_named(io::read_weights(s.weights));
  const DepthMap d = io::depth_from_pfm(io::read_pfm(s.depth));
  io::write_pfm(s.out, io::depth_to_pfm(upsample_depth(d, ctx, w)));
}

std::string format_metrics(const MetricsRecord & m, const std::string & style)
{
  char buf[512];
  if (style == "structured") {
    std::snprintf(buf, sizeof(buf), "abs_rel=%.17g\nabs=%.17g\nsq_rel=%.17g\nrmse=%.17g\ndelta_125=%.17g\nvalid_count=%zu\n",
                  m.abs_rel, m.abs, m.sq_rel, m.rmse, m.delta_125, m.valid_count);
  } else if (style == "text") {
    std::snprintf(buf, sizeof(buf), "AbsRel %.6f  Abs %.6f  SqRel %.6f  RMSE %.6f  d<1.25 %.2f%%  (%zu px)\n",
                  m.abs_rel, m.abs, m.sq_rel, m.rmse, m.delta_125, m.valid_count);
  } else {
    fail(ErrorKind::kConfig, "unknown report style '" + style + "' (text|structured)");
  }
  return buf;
}

void run_eval(const Settings & s)
{
  const DepthMap pred = io::depth_from_pfm(io::read_pfm(s.pred));
  const DepthMap gt = io::depth_from_pfm(io::read_pfm(s.gt));
  const std::string text = format_metrics(compute_metrics(pred, gt), s.report);
  if (!s.out.empty()) { io::write_file(s.out, io::Bytes(text.begin(), text.end())); }
  std::cout << text;
}

// Every stage reads and writes the same files a manual invocation would.
void run_pipeline(const Settings & s)
{
  const std::string dir = s.out;
  Settings st = s;
  run_synth(st);

  for (std::size_t v = 0; v <= s.views; ++v) { st.features.push_back(path_in(dir, indexed("features", v))); }
  run_corr(st);

  for (std::size_t k = 0; k < s.views; ++k) { st.corr.push_back(path_in(dir, indexed("corr", k))); }
  run_flow(st);

  st.cameras = path_in(dir, "cameras.txt");
  for (std::size_t k = 0; k < s.views; ++k) { st.flows.push_back(path_in(dir, indexed("flow", k))); }
  st.out = path_in(dir, "depth_init.pfm");
  run_init(st);

  st.depth = st.out;
  st.out = path_in(dir, "depth_refined.pfm");
  for (const char * name : kContextNames) { st.context.push_back(path_in(dir, name)); }
  run_refine(st);

  st.depth = st.out;
  st.out = path_in(dir, "depth.pfm");
  run_upsample(st);

  st.pred = st.out;
  st.gt = path_in(dir, "gt_depth_full.pfm");
  st.out = path_in(dir, "metrics.txt");
  run_eval(st);
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Correlation-guided multi-view depth estimation"};
  app.require_subcommand(1);
  Settings s;

  auto threads = [&](CLI::App * c) {
    c->add_option("--threads", s.threads, "Worker threads (0 = hardware concurrency)");
  };
  auto refine_flags = [&](CLI::App * c) {
    c->add_option("--radius", s.radius, "Lookup radius")->capture_default_str();
    c->add_option("--iters", s.iters, "Refinement iterations")->capture_default_str();
    c->add_option("--levels", s.levels, "Correlation pyramid levels")->capture_default_str();
    c->add_option("--fusion", s.fusion, "averaging|max|variance")->capture_default_str();
    c->add_option("--updater", s.updater, "gru|oracle")->capture_default_str();
    c->add_option("--weights", s.weights, "GRU weight file (default: seeded random weights)");
  };
  auto scene_flags = [&](CLI::App * c) {
    c->add_option("--surface", s.surface, "plane|tilted|sphere|step")->capture_default_str();
    c->add_option("--views", s.views, "Number of source views")->capture_default_str();
    c->add_option("--seed", s.seed, "Random seed")->capture_default_str();
    c->add_option("--height", s.height, "Feature-resolution height")->capture_default_str();
    c->add_option("--width", s.width, "Feature-resolution width")->capture_default_str();
    c->add_option("--dim", s.feature_dim, "Feature dimension")->capture_default_str();
  };

  auto * synth = app.add_subcommand("synth", "Generate a synthetic scene");
  scene_flags(synth);
  synth->add_option("--out", s.out, "Output directory")->required();
  threads(synth);

  auto * corr = app.add_subcommand("corr", "All-pairs correlation volumes");
  corr->add_option("--features", s.features, "Reference then source feature tensors")->required();
  corr->add_option("--out", s.out, "Output directory")->required();
  threads(corr);

  auto * flow = app.add_subcommand("flow", "Argmax flow from correlation volumes");
  flow->add_option("--corr", s.corr, "Correlation tensors, one per source view")->required();
  flow->add_option("--out", s.out, "Output directory")->required();
  threads(flow);

  auto * init = app.add_subcommand("init", "Triangulate the initial depth from flows");
  init->add_option("--cameras", s.cameras, "Camera file")->required();
  init->add_option("--flows", s.flows, "Flow tensors, one per source view")->required();
  init->add_option("--out", s.out, "Output depth (PFM)")->required();
  threads(init);

  auto * refine = app.add_subcommand("refine", "Iterative depth refinement");
  refine->add_option("--cameras", s.cameras, "Camera file")->required();
  refine->add_option("--corr", s.corr, "Correlation tensors, one per source view")->required();
  refine->add_option("--depth", s.depth, "Initial depth (PFM)")->required();
  refine->add_option("--context", s.context, "Context tensor; the last one given is used");
  refine->add_option("--seed", s.seed, "Seed for random GRU weights")->capture_default_str();
  refine->add_option("--out", s.out, "Output depth (PFM)")->required();
  refine_flags(refine);
  threads(refine);

  auto * upsample = app.add_subcommand("upsample", "Coarse-to-fine upsampling to full resolution");
  upsample->add_option("--depth", s.depth, "Low-resolution depth (PFM)")->required();
  upsample->add_option("--context", s.context, "Context tensors: half, quarter, eighth")->required();
  upsample->add_option("--weights", s.weights, "Upsampler weight file (default: zeros)");
  upsample->add_option("--out", s.out, "Output depth (PFM)")->required();
  threads(upsample);

  auto * eval = app.add_subcommand("eval", "Depth metrics");
  eval->add_option("--pred", s.pred, "Predicted depth (PFM)")->required();
  eval->add_option("--gt", s.gt, "Ground-truth depth (PFM)")->required();
  eval->add_option("--report", s.report, "text|structured")->capture_default_str();
  eval->add_option("--out", s.out, "Also write the report here");

  auto * pipeline = app.add_subcommand("pipeline", "synth, corr, flow, init, refine, upsample and eval in one go");
  scene_flags(pipeline);
  refine_flags(pipeline);
  pipeline->add_option("--report", s.report, "text|structured")->capture_default_str();
  pipeline->add_option("--out", s.out, "Working directory")->required();
  threads(pipeline);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    set_thread_count(s.threads);
    if (*synth) { run_synth(s); }
    if (*corr) { run_corr(s); }
    if (*flow) { run_flow(s); }
    if (*init) { run_init(s); }
    if (*refine) { run_refine(s); }
    if (*upsample) { run_upsample(s); }
    if (*eval) { run_eval(s); }
    if (*pipeline) { run_pipeline(s); }
  } catch (const Error & e) {
    std::cerr << "corrmvs: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception & e) {
    std::cerr << "corrmvs: " << e.what() << "\n";
    return kOther;
  }
  return kOk;
}
