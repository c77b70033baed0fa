// Depth for a synthetic tilted plane: correlation, argmax flow, triangulation,
// oracle refinement and upsampling, with metrics after each stage.
#include <cstdio>
#include <vector>

#include "corrmvs/corrmvs.hpp"

using namespace corrmvs;

static void report(const char * stage, const DepthMap & d, const DepthMap & gt)
{
  const MetricsRecord m = compute_metrics(d, gt);
  std::printf("%-10s AbsRel %.5f  RMSE %.5f  d<1.25 %6.2f%%\n", stage, m.abs_rel, m.rmse, m.delta_125);
}

int main()
{
  SceneParams params;
  params.kind = SurfaceKind::kTiltedPlane;
  const Scene scene = make_scene(params, 4, 11);
  const CameraRig & rig = scene.rig();

  const std::uint64_t feature_seed = 5;
  const FeatureMap ref = positional_features(scene, 0, kDefaultFeatureDim, feature_seed);

  std::vector<CorrelationPyramid> pyramids;
  std::vector<FlowField> flows;
  for (std::size_t k = 0; k < rig.source_count(); ++k) {
    CorrelationVolume c0 = build_correlation_volume(ref, positional_features(scene, k + 1, kDefaultFeatureDim, feature_seed));
    flows.push_back(flow_from_correlation(c0));
    pyramids.push_back(build_pyramid(std::move(c0)));
  }

  const DepthMap d0 = fill_invalid_with_median(init_depth_from_flows(flows, rig));
  report("init", d0, scene.reference_depth());

  OracleUpdater oracle;
  const auto iterates = refine_loop(d0, pyramids, rig, nullptr, oracle, RefineConfig{});
  report("refined", iterates.back(), scene.reference_depth());

  // With zero weights the upsampler is plain bilinear; context only fixes the shapes.
  DffmConfig dc;
  ContextPyramid ctx{FeatureMap(4 * params.height, 4 * params.width, std::size_t(dc.context_half)),
                     FeatureMap(2 * params.height, 2 * params.width, std::size_t(dc.context_quarter)),
                     FeatureMap(params.height, params.width, std::size_t(dc.context_eighth))};
  const DepthMap full = upsample_depth(iterates.back(), ctx, DffmWeights::zeros(dc));
  report("full-res", full, scene.depth_at_scale(0, 8));
  return 0;
}
