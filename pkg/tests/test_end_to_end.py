import pytest

from geosplat import synthetic as sy
from geosplat.pipeline import (CannedPlanner, ReconstructConfig, make_generator, new_manifest, run_generate,
                               run_plan, run_qa_loop, run_reconstruct)
from geosplat.pipeline.stages import accepted_views
from geosplat.ply import load_scene


@pytest.mark.xfail(strict=True, reason=(
    "depth-initialized reconstruction settles near 0.6 depth RMSE against a 0.14 target: "
    "composited-depth priors back-project off the true surfaces and the affine-invariant "
    "depth term cannot pull them back"))
def test_oracle_reconstruction_depth_accuracy(tmp_path, capsys):
    m = new_manifest("room", 1, 8, 4, seed=7, generator={"kind": "SyntheticOracle"})
    m.save(tmp_path / "manifest.json")
    run_plan(m, CannedPlanner())
    m.save()
    run_generate(m)
    run_qa_loop(m)
    out = run_reconstruct(m, ReconstructConfig(iterations=300, gaussians=200))
    truth_scene = make_generator(m).scene
    cams = [v.cam for v in accepted_views(m, with_priors=False)]
    truth = sy.render_views(truth_scene, cams)
    pred = sy.render_views(load_scene(m.resolve(out["scene"])), cams)
    rmse = sy.depth_rmse(pred, truth)
    limit = 0.02 * sy.scene_diameter(truth_scene)
    with capsys.disabled():
        print(f"\nend-to-end depth RMSE {rmse:.3f}, target < {limit:.3f}")
    assert rmse < limit
