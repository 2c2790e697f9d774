"""Shared fixtures, a probability-volume audit, and the acceptance summary.

Every depth estimate the pipeline produces during the run is checked for
normalized probabilities, an expectation inside the hypothesis span and a
variance under the Popoviciu bound. The acceptance suite reports the tally.
"""

from __future__ import annotations

import functools
import time

import numpy as np
import pytest

import atv_stereo.cascade as _cascade
import atv_stereo.probability as _probability
from atv_stereo.cascade import CascadeConfig, run_cascade
from atv_stereo.features import SCALE_FACTORS
from atv_stereo.synth import builtin_scenes, render_camera, render_views

# ---------------------------------------------------------------------------
# probability audit
# ---------------------------------------------------------------------------

AUDIT = {"volumes": 0, "violations": []}
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

_original_estimate = _probability.estimate


def audit_volume(probs, hyps, est) -> list[str]:
    """Invariant violations of one probability volume and its estimate."""
    p = probs.probs
    L = hyps.depths
    bad = []
    sums = p.sum(axis=0)
    if np.abs(sums - 1).max() > 1e-6:
        bad.append(f"sum off by {np.abs(sums - 1).max():.3g}")
    lo, hi = L.min(axis=0), L.max(axis=0)
    if ((est.depth < lo) | (est.depth > hi)).any():
        bad.append("expectation outside hypothesis span")
    popoviciu = (hi - lo) ** 2 / 4
    var = est.sigma**2
    if (var > popoviciu * (1 + 1e-9) + 1e-18).any():
        bad.append("variance above Popoviciu bound")
    if (p < 0).any():
        bad.append("negative probability")
    return bad


def _audited_estimate(probs, hyps, stage_index=1):
    est = _original_estimate(probs, hyps, stage_index)
    AUDIT["volumes"] += 1
    problems = audit_volume(probs, hyps, est)
    if problems:
        AUDIT["violations"].append((stage_index, problems))
    return est


@pytest.fixture(autouse=True, scope="session")
def _install_audit():
    _probability.estimate = _audited_estimate
    _cascade.estimate = _audited_estimate
    yield
    _probability.estimate = _original_estimate
    _cascade.estimate = _original_estimate


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store an acceptance verdict for the end-of-run summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE and not AUDIT["volumes"]:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    if 2 in ACCEPTANCE:
        # the invariant half of criterion 2 covers every volume of the run,
        # so it is settled here rather than when its test ran
        ok, detail = ACCEPTANCE[2]
        clean = not AUDIT["violations"]
        ACCEPTANCE[2] = (ok and clean, f"{detail}; audit {AUDIT['volumes']} volumes, "
                                       f"{len(AUDIT['violations'])} with violations")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    tr.write_line(
        f"probability audit over the whole run: {AUDIT['volumes']} volumes, {len(AUDIT['violations'])} with violations"
    )


# ---------------------------------------------------------------------------
# shared expensive data
# ---------------------------------------------------------------------------

INTERIOR_MARGIN = 16  # full-resolution pixels excluded at the image border


@functools.lru_cache(maxsize=None)
def scene_data(name: str):
    """``(scene, images, depths, masks)`` for a builtin scene, rendered once."""
    scene = builtin_scenes()[name]
    images, depths, masks = render_views(scene, 1)
    return scene, images, depths, masks


@functools.lru_cache(maxsize=None)
def stage_gt(name: str, view: int, stage: int) -> np.ndarray:
    scene = scene_data(name)[0]
    return render_camera(scene, scene.cameras[view].scaled(SCALE_FACTORS[stage]))[1]


def interior_mask(gt: np.ndarray, stage: int) -> np.ndarray:
    m = INTERIOR_MARGIN // SCALE_FACTORS[stage]
    inner = np.zeros(gt.shape, dtype=bool)
    inner[m : gt.shape[0] - m, m : gt.shape[1] - m] = True
    return inner & (gt > 0)


_CASCADES: dict = {}


def cascade_ref0(name: str):
    """Reference-view cascade on a builtin scene, single-threaded, with its runtime."""
    if name not in _CASCADES:
        scene, images, _, _ = scene_data(name)
        cfg = CascadeConfig.standard(scene.d_min, scene.d_max)
        t0 = time.perf_counter()
        outs = run_cascade(images, scene.cameras, cfg, workers=1)
        _CASCADES[name] = (cfg, outs, time.perf_counter() - t0)
    return _CASCADES[name]


_CLI_RUNS: dict = {}


def cli_pipeline(tmp_root, threads: int, tag: str):
    """synth -> reconstruct -> fuse -> eval on two-plane through the CLI; cached per tag."""
    from atv_stereo.cli import main

    if tag not in _CLI_RUNS:
        root = tmp_root / tag
        ds, rec, out = root / "ds", root / "rec", root / "out"
        t = ["--threads", str(threads)]
        assert main(["synth", "two-plane", str(ds)] + t) == 0
        assert main(["reconstruct", str(ds), str(rec), "--dump-stages"] + t) == 0
        assert main(["fuse", str(rec), str(out / "cloud.ply")] + t) == 0
        assert main(["eval", str(out / "cloud.ply"), str(ds), "--recon", str(rec)]) == 0
        _CLI_RUNS[tag] = root
    return _CLI_RUNS[tag]


@pytest.fixture(scope="session")
def cli_root(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def output_files(root):
    """Relative path -> bytes for every file under ``root``."""
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def random_camera(rng: np.random.Generator, size=(64, 48)):
    from scipy.spatial.transform import Rotation

    from atv_stereo.geometry import CameraModel

    w, h = size
    f = rng.uniform(30, 120)
    K = np.array([[f, rng.uniform(-0.5, 0.5), rng.uniform(0.3, 0.7) * w],
                  [0.0, f * rng.uniform(0.9, 1.1), rng.uniform(0.3, 0.7) * h],
                  [0.0, 0.0, 1.0]])
    R = Rotation.from_rotvec(rng.normal(scale=0.15, size=3)).as_matrix()
    t = rng.normal(scale=0.3, size=3)
    return CameraModel(K, R, t, size)
