"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

A1  end-to-end short pipeline: 10/10 expert successes, autoencoder and
    predictor convergence within the epoch budget, touch rate >= 8/10 on the
    training scenes, total runtime within budget.
A2  long/short contrast: equal training budget (the same number of optimizer
    updates; epochs of unequal-length datasets are not comparable compute),
    long-variant final loss more than twice the short-variant final loss.
A3  perception: mean localization error under 2 mm depth noise < 0.03 m over
    20 scenes; outlier filter matches the O(n^2) oracle exactly on 100 clouds.
A4  planning: A* cost equals Dijkstra on 50 random grids; IK residual < 1e-3
    on at least 95/100 reachable FK-generated targets.
A5  gradients: every analytic gradient within 1e-4 relative error of 64-bit
    central differences.
A6  determinism and persistence: byte-identical reruns of datasets, loss
    curves, and evaluation CSVs; bit-exact save/load round trips.

Run with `pytest tests/test_acceptance.py -v -s` for the per-criterion lines.
"""

import heapq
import json
import time
from pathlib import Path

import numpy as np
import pytest

from skillsim import World
from skillsim.cli import load_bundle, main
from skillsim.dataset import load_dataset, load_episode, save_episode
from skillsim.evaluate import Scenario, evaluate_suite
from skillsim.kinematics import JOINT_HIGH, JOINT_LOW, IkError, fk, ik
from skillsim.models import load_model, save_model
from skillsim.nav import OccupancyGrid, PlanningError, astar, path_cost
from skillsim.perception import PointCloud, locate_object, statistical_outlier_removal
from skillsim.scene import make_short_scene
from skillsim.training import gradcheck_all

RUNTIME_BUDGET_S = 45 * 60
TIMINGS: dict = {}


def report(criterion: str, ok: bool, detail: str):
    print(f"[{criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{criterion}: {detail}"


def timed(name):
    class _Timer:
        def __enter__(self):
            self.t0 = time.monotonic()

        def __exit__(self, *exc):
            TIMINGS[name] = time.monotonic() - self.t0

    return _Timer()


def final_loss(csv_path) -> float:
    lines = Path(csv_path).read_text().strip().splitlines()
    return float(lines[-1].split(",")[1])


def first_loss(csv_path) -> float:
    lines = Path(csv_path).read_text().strip().splitlines()
    return float(lines[1].split(",")[1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def short_pipeline(workspace):
    """collect + train at the default (desk-scale) budgets, via the CLI."""
    data = workspace / "short_data"
    models = workspace / "short_models"
    with timed("short_collect"):
        rc = main(["collect", "--variant", "short", "--episodes", "10",
                   "--seed", "0", "--out", str(data)])
    assert rc == 0
    with timed("short_train"):
        assert main(["train-autoencoder", "--dataset", str(data),
                     "--modality", "rgb", "--out", str(models), "--seed", "0"]) == 0
        assert main(["train-autoencoder", "--dataset", str(data),
                     "--modality", "disparity", "--out", str(models), "--seed", "0"]) == 0
        assert main(["train", "--dataset", str(data), "--models", str(models),
                     "--seed", "0"]) == 0
    return data, models


def updates_per_epoch(data_dir, tbptt=32) -> int:
    episodes = load_dataset(data_dir)
    longest = max(len(e) - 1 for e in episodes)
    return int(np.ceil(longest / tbptt))


@pytest.fixture(scope="module")
def long_pipeline(workspace, short_pipeline):
    """Long-variant dataset trained with the same number of optimizer updates
    as the short pipeline (its episodes are several times longer, so equal
    epochs would hand it several times the compute)."""
    data = workspace / "long_data"
    models = workspace / "long_models"
    with timed("long_collect"):
        rc = main(["collect", "--variant", "long", "--episodes", "10",
                   "--seed", "0", "--out", str(data)])
    assert rc == 0
    short_updates = 1000 * updates_per_epoch(short_pipeline[0])
    epochs = max(1, round(short_updates / updates_per_epoch(data)))
    with timed("long_train"):
        assert main(["train-autoencoder", "--dataset", str(data),
                     "--modality", "rgb", "--out", str(models), "--seed", "0"]) == 0
        assert main(["train-autoencoder", "--dataset", str(data),
                     "--modality", "disparity", "--out", str(models), "--seed", "0"]) == 0
        assert main(["train", "--dataset", str(data), "--models", str(models),
                     "--seed", "0", "--set", f"learner.epochs={epochs}"]) == 0
    return data, models


# ----------------------------------------------------------------------
# A1


def test_a1_expert_success_rate(short_pipeline):
    data, _ = short_pipeline
    episodes = load_dataset(data, include_failed=True)
    done = sum(e.outcome == "DONE" for e in episodes)
    report("A1.collect", done == 10, f"{done}/10 expert episodes DONE")


def test_a1_autoencoder_convergence(short_pipeline):
    _, models = short_pipeline
    ratios = {m: final_loss(models / f"loss_autoencoder_{m}.csv")
              / first_loss(models / f"loss_autoencoder_{m}.csv")
              for m in ("rgb", "disparity")}
    ok = all(r < 0.2 for r in ratios.values())
    report("A1.autoencoder", ok,
           "final/initial loss " + ", ".join(f"{m}={r:.3f}" for m, r in ratios.items()))


def test_a1_predictor_loss(short_pipeline):
    _, models = short_pipeline
    loss = final_loss(models / "loss_predictor.csv")
    epochs = len(Path(models / "loss_predictor.csv").read_text().strip().splitlines()) - 1
    report("A1.loss", loss < 0.01 and epochs <= 1000,
           f"final normalized MSE {loss:.6f} after {epochs} epochs")


def test_a1_touch_rate(short_pipeline, workspace):
    data, models = short_pipeline
    out = workspace / "short_eval.csv"
    with timed("short_eval"):
        assert main(["eval", "--models", str(models), "--dataset", str(data),
                     "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()[1:]
    touched = sum(row.split(",")[2] == "true" for row in rows)
    report("A1.touch", touched >= 8, f"touched {touched}/10 training scenes")


def test_a1_runtime_budget(short_pipeline):
    total = sum(v for k, v in TIMINGS.items() if k.startswith("short_"))
    report("A1.runtime", 0 < total < RUNTIME_BUDGET_S,
           f"collect+train+eval took {total:.0f} s (budget {RUNTIME_BUDGET_S} s)")


# ----------------------------------------------------------------------
# A2


def test_a2_long_short_contrast(short_pipeline, long_pipeline):
    short_data, short_models = short_pipeline
    long_data, long_models = long_pipeline
    short_final = final_loss(short_models / "loss_predictor.csv")
    long_final = final_loss(long_models / "loss_predictor.csv")
    short_epochs = len(Path(short_models / "loss_predictor.csv")
                       .read_text().strip().splitlines()) - 1
    long_epochs = len(Path(long_models / "loss_predictor.csv")
                      .read_text().strip().splitlines()) - 1
    updates = (short_epochs * updates_per_epoch(short_data),
               long_epochs * updates_per_epoch(long_data))
    report("A2.contrast", long_final > 2.0 * short_final,
           f"long {long_final:.6f} vs short {short_final:.6f} "
           f"(ratio {long_final / short_final:.2f}; equal budget of "
           f"{updates[0]} vs {updates[1]} optimizer updates)")


# ----------------------------------------------------------------------
# A3


def test_a3_localization_accuracy():
    errors = []
    for seed in range(20):
        cfg = make_short_scene(seed)  # depth noise sigma 0.002
        truth = World(cfg)
        frame0 = truth.render(depth_noise_sigma=0.0)
        labels = (frame0.hit_ids.ravel() == truth.hit_id("box0"))
        gt = frame0.cloud.positions[labels[frame0.depth.ravel() > 0]].mean(axis=0)
        noisy = World(cfg)
        est = locate_object(noisy.render(), cfg.object("box0").color)
        errors.append(float(np.linalg.norm(est - gt)))
    mean_err = float(np.mean(errors))
    report("A3.locate", mean_err < 0.03,
           f"mean localization error {mean_err * 1000:.1f} mm over 20 scenes "
           f"(max {max(errors) * 1000:.1f} mm)")


def sor_oracle_keep(positions, k, alpha):
    n = positions.shape[0]
    d = np.empty(n)
    for i in range(n):
        diff = positions - positions[i]
        dist = np.sqrt((diff * diff).sum(axis=1))
        dist[i] = np.inf
        d[i] = np.mean(np.sort(dist)[:k])
    return d <= d.mean() + alpha * d.std()


def test_a3_outlier_filter_oracle():
    rng = np.random.default_rng(1234)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(20, 501))
        cloud = PointCloud(rng.uniform(-1, 1, (n, 3)), rng.uniform(0, 1, (n, 3)))
        k = int(rng.integers(1, 12))
        alpha = float(rng.uniform(0.0, 2.5))
        out = statistical_outlier_removal(cloud, k, alpha)
        keep = sor_oracle_keep(cloud.positions, k, alpha)
        if not np.array_equal(out.positions, cloud.positions[keep]):
            mismatches += 1
    report("A3.sor", mismatches == 0,
           f"filter matched the O(n^2) oracle on {100 - mismatches}/100 clouds")


# ----------------------------------------------------------------------
# A4


def dijkstra_cost(grid, start, goal):
    from skillsim.nav import SQRT2
    moves = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
             (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2)]
    s, g = grid.to_cell(start), grid.to_cell(goal)
    dist = {s: 0.0}
    heap = [(0.0, s)]
    seen = set()
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in seen:
            continue
        seen.add(cur)
        if cur == g:
            return d
        for di, dj, c in moves:
            nb = (cur[0] + di, cur[1] + dj)
            if grid.free(*nb) and nb not in seen and d + c < dist.get(nb, np.inf):
                dist[nb] = d + c
                heapq.heappush(heap, (d + c, nb))
    return None


def test_a4_astar_matches_dijkstra():
    rng = np.random.default_rng(99)
    checked = 0
    for _ in range(50):
        cells = rng.uniform(size=(32, 32)) < 0.25
        cells[0, 0] = cells[31, 31] = False
        grid = OccupancyGrid(1.0, np.zeros(2), cells)
        oracle = dijkstra_cost(grid, (0.5, 0.5), (31.5, 31.5))
        if oracle is None:
            with pytest.raises(PlanningError):
                astar(grid, (0.5, 0.5), (31.5, 31.5))
            continue
        path = astar(grid, (0.5, 0.5), (31.5, 31.5))
        assert path_cost(path, 1.0) == pytest.approx(oracle, abs=1e-9)
        assert all(grid.free(*grid.to_cell(w)) for w in path.waypoints)
        checked += 1
    report("A4.astar", True,
           f"A* cost equals Dijkstra on {checked} solvable of 50 random grids")


def test_a4_ik_convergence():
    rng = np.random.default_rng(42)
    base = (0.0, 0.0, 0.0)
    home = np.array([0.0, 0.9, -1.4, 0.0, 1.0])
    converged = 0
    total = 0
    while total < 100:
        q = rng.uniform(JOINT_LOW, JOINT_HIGH)
        target = fk(q, base)
        if target[2] < 0.0:
            continue
        total += 1
        try:
            sol = ik(target, home, base)
        except IkError:
            continue
        assert np.linalg.norm(fk(sol, base) - target) < 1e-3
        converged += 1
    report("A4.ik", converged >= 95, f"{converged}/100 targets within 1e-3 m")


# ----------------------------------------------------------------------
# A5


def test_a5_gradient_checks():
    results = gradcheck_all(seed=0)
    worst = max(results, key=lambda r: r.max_rel_err / r.threshold)
    ok = all(r.passed for r in results)
    detail = ", ".join(f"{r.name}={r.max_rel_err:.1e}" for r in results)
    report("A5.gradcheck", ok, f"worst {worst.name}; {detail}")


# ----------------------------------------------------------------------
# A6


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_a6_dataset_rerun_byte_identical(workspace):
    a, b = workspace / "det_a", workspace / "det_b"
    for out in (a, b):
        assert main(["collect", "--variant", "short", "--episodes", "3",
                     "--seed", "21", "--out", str(out)]) == 0
    ta, tb = tree_bytes(a), tree_bytes(b)
    same = list(ta) == list(tb) and all(ta[k] == tb[k] for k in ta)
    report("A6.dataset", same, f"{len(ta)} files byte-identical across reruns")


def test_a6_loss_curves_byte_identical(workspace):
    data = workspace / "a6_data"
    assert main(["collect", "--variant", "short", "--episodes", "4",
                 "--seed", "21", "--out", str(data)]) == 0
    fast = ["--set", "learner.ae_epochs=6", "--set", "learner.epochs=20",
            "--set", "learner.latent=8", "--set", "learner.hidden=16"]
    curves = []
    for name in ("m1", "m2"):
        models = workspace / f"a6_{name}"
        assert main(["train-autoencoder", "--dataset", str(data),
                     "--modality", "rgb", "--out", str(models), *fast]) == 0
        assert main(["train-autoencoder", "--dataset", str(data),
                     "--modality", "disparity", "--out", str(models), *fast]) == 0
        assert main(["train", "--dataset", str(data),
                     "--models", str(models), *fast]) == 0
        curves.append((models / "loss_autoencoder_rgb.csv").read_bytes()
                      + (models / "loss_predictor.csv").read_bytes())
    report("A6.losses", curves[0] == curves[1],
           "autoencoder and predictor loss CSVs byte-identical across reruns")


def test_a6_eval_rerun_byte_identical(short_pipeline, workspace):
    data, models = short_pipeline
    a, b = workspace / "ev_a.csv", workspace / "ev_b.csv"
    for out in (a, b):
        assert main(["eval", "--models", str(models), "--dataset", str(data),
                     "--out", str(out)]) == 0
    report("A6.eval", a.read_bytes() == b.read_bytes(),
           "evaluation CSV byte-identical across reruns")


def test_a6_episode_round_trip(short_pipeline, workspace):
    data, _ = short_pipeline
    src = sorted(data.glob("ep_*"))[0]
    episode = load_episode(src)
    dst = workspace / "rt_ep"
    save_episode(episode, dst)
    same = ((src / "steps.bin").read_bytes() == (dst / "steps.bin").read_bytes()
            and (src / "manifest.json").read_text() == (dst / "manifest.json").read_text())
    report("A6.episode", same, "episode save/load round trip bit-exact")


def test_a6_model_round_trip(short_pipeline, workspace):
    data, models = short_pipeline
    bundle = load_bundle(models)
    resaved = workspace / "predictor_resave.sklm"
    save_model(resaved, bundle.predictor)
    same_bytes = (models / "predictor.sklm").read_bytes() == resaved.read_bytes()

    reloaded = load_model(resaved)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, bundle.predictor.n_in)).astype(np.float32)
    y1, _ = bundle.predictor.step(x, bundle.predictor.zero_state(1))
    y2, _ = reloaded.step(x, reloaded.zero_state(1))
    report("A6.model", same_bytes and np.array_equal(y1, y2),
           "model save/load bit-exact; predictions identical after reload")
