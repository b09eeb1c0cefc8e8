"""Acceptance suite: one test per exit criterion, stated tolerances pinned.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion.
"""

import json
import math
import time

import numpy as np
import pytest

from densesfm.archive import read_archive, write_archive
from densesfm.cli import main
from densesfm.config import PipelineConfig
from densesfm.evaluate import (
    PoseRecord,
    angular_error,
    fit_similarity,
    threshold_sweep,
    write_pose_file,
)
from densesfm.exceptions import DegeneracyError
from densesfm.matching import mutual_nn_match
from densesfm.pyramid import CellCoord, FeatureLevel, cell_to_image, write_pyramid
from densesfm.relocalize import relocalize
from densesfm.verify import (
    estimate_homography_dlt,
    multi_homography_ransac,
    symmetric_transfer_error,
)
from oracles import brute_force_mutual_nn, greedy_relocalize_path
from synthutil import TwoPlaneScene, random_pyramid, translation_h
from test_evaluate import random_rotation, rot_z
from test_verify import apply_h, random_mild_homography


def report(name: str) -> None:
    print(f"\n[ACCEPTANCE] {name}: PASS")


def test_matching_oracle_equivalence():
    """mutual_nn_match == brute-force double-argmin, 200 instances, < 10 s."""
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for trial in range(200):
        wa, ha = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        wb, hb = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        channels = int(rng.integers(8, 257))
        da = rng.normal(size=(ha, wa, channels)).astype(np.float32)
        db = rng.normal(size=(hb, wb, channels)).astype(np.float32)
        if trial % 4 == 0:
            # plant exact duplicates to force distance ties
            flat_a, flat_b = da.reshape(-1, channels), db.reshape(-1, channels)
            flat_a[-1] = flat_a[0]
            flat_b[-1] = flat_a[0]
            if len(flat_b) > 1:
                flat_b[0] = flat_b[-1]
        result = mutual_nn_match(
            FeatureLevel(name="conv4_pool", stride=16, data=da),
            FeatureLevel(name="conv4_pool", stride=16, data=db),
        )
        got = sorted(
            (m.cell_a.y * wa + m.cell_a.x, m.cell_b.y * wb + m.cell_b.x)
            for m in result.matches
        )
        pairs, _ = brute_force_mutual_nn(da.reshape(-1, channels), db.reshape(-1, channels))
        assert got == sorted(pairs), f"instance {trial} disagrees with oracle"
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"matching oracle sweep took {elapsed:.1f}s"
    report(f"matching oracle equivalence (200 instances, {elapsed:.1f}s)")


def test_relocalization_oracle():
    """Greedy path identical to oracle; planted deltas recovered; bound holds."""
    rng = np.random.default_rng(77)
    start = time.perf_counter()
    for trial in range(100):
        w, h = int(rng.integers(8, 41)), int(rng.integers(8, 41))
        pyramid = random_pyramid(rng, w, h, 4, 4, image_id=f"a{trial}")
        coarse = pyramid.level_with_stride(8)
        for y in range(coarse.height):
            for x in range(coarse.width):
                keypoint = relocalize(CellCoord(x, y, 8), pyramid)
                want = greedy_relocalize_path(pyramid, x, y, 8)
                assert [(c.x, c.y, c.stride) for c in keypoint.path] == want
                center = cell_to_image(CellCoord(x, y, 8))
                assert abs(keypoint.final.u - center.u) <= 4.0
                assert abs(keypoint.final.v - center.v) <= 4.0

    # planted delta: one dominant stride-1 pixel per pyramid, found 100/100
    hits = 0
    for trial in range(100):
        w, h = int(rng.integers(8, 33)), int(rng.integers(8, 33))
        pyramid = random_pyramid(rng, w, h, 3, 4, image_id=f"d{trial}")
        x, y = int(rng.integers(0, (w + 7) // 8)), int(rng.integers(0, (h + 7) // 8))
        cx, cy = x, y
        for stride in (4, 2, 1):
            level = pyramid.level_with_stride(stride)
            options = [
                (xx, yy)
                for yy in range(2 * cy, min(2 * cy + 2, level.height))
                for xx in range(2 * cx, min(2 * cx + 2, level.width))
            ]
            cx, cy = options[int(rng.integers(0, len(options)))]
            level.data[cy, cx] = 0.0
            level.data[cy, cx, 0] = 1000.0
        keypoint = relocalize(CellCoord(x, y, 8), pyramid)
        hits += (keypoint.final.u, keypoint.final.v) == (float(cx), float(cy))
    assert hits == 100
    elapsed = time.perf_counter() - start
    report(f"relocalization oracle (100+100 pyramids, {elapsed:.1f}s)")


def test_multi_homography_recovery():
    """Two planted planes + outliers: 2 models in >= 95/100 seeds, < 5 s."""
    start = time.perf_counter()
    H1 = translation_h(120.0, 10.0)
    H2 = np.array([[1.0, 0.05, -80.0], [-0.04, 1.0, 60.0], [1e-5, -1e-5, 1.0]])
    exact_two = 0
    recalls_ok = True
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        src1 = rng.uniform(0, 500, size=(60, 2))
        src2 = rng.uniform(0, 500, size=(40, 2))
        dst1 = apply_h(H1, src1) + rng.normal(0, 1.0, size=(60, 2))
        dst2 = apply_h(H2, src2) + rng.normal(0, 1.0, size=(40, 2))
        out_src = rng.uniform(0, 500, size=(25, 2))
        out_dst = rng.uniform(0, 500, size=(25, 2))
        src = np.vstack([src1, src2, out_src])
        dst = np.vstack([dst1, dst2, out_dst])
        pair = multi_homography_ransac(
            src, dst, threshold=10.0, min_inliers=15, max_iters=200, seed=seed
        )
        # disjointness on every output
        seen: set = set()
        for model in pair.models:
            assert not seen & set(model.inlier_indices)
            seen.update(model.inlier_indices)
        if len(pair.models) == 2:
            exact_two += 1
            # models can surface in either order; match each plane to the
            # model recovering most of it
            for plane, size in ((set(range(60)), 60), (set(range(60, 100)), 40)):
                recall = max(
                    len(set(m.inlier_indices) & plane) / size for m in pair.models
                )
                recalls_ok = recalls_ok and recall >= 0.9
    elapsed = time.perf_counter() - start
    assert exact_two >= 95, f"only {exact_two}/100 seeds gave exactly 2 models"
    assert recalls_ok
    assert elapsed < 5.0, f"multi-homography sweep took {elapsed:.1f}s"
    report(
        f"multi-homography recovery ({exact_two}/100 seeds exact, {elapsed:.1f}s)"
    )


def test_homography_dlt_accuracy():
    """Known-transform recovery to 1e-9 elementwise; collinear always rejected."""
    rng = np.random.default_rng(31337)
    for _ in range(100):
        H0 = random_mild_homography(rng)
        H0 /= H0[2, 2]
        src = rng.uniform(0, 100, size=(8, 2))
        H = estimate_homography_dlt(src, apply_h(H0, src))
        assert np.max(np.abs(H / H[2, 2] - H0)) <= 1e-9

    for _ in range(100):
        origin = rng.uniform(0, 100, size=2)
        direction = rng.normal(size=2)
        ts = np.sort(rng.uniform(-5, 5, size=4))
        src = origin + ts[:, None] * direction
        dst = rng.uniform(0, 100, size=(4, 2))
        with pytest.raises(DegeneracyError):
            estimate_homography_dlt(src, dst)
        with pytest.raises(DegeneracyError):
            estimate_homography_dlt(dst, src)
    report("homography DLT accuracy (100 transforms, 200 collinear rejections)")


def test_evaluation_protocol(tmp_path):
    """Similarity fit to 1e-9, angular identity, sweep example, report shape."""
    rng = np.random.default_rng(99)
    for _ in range(100):
        scale = float(rng.uniform(0.2, 5.0))
        Q = random_rotation(rng)
        t = rng.uniform(-10, 10, size=3)
        src = rng.normal(size=(int(rng.integers(4, 12)), 3))
        dst = scale * src @ Q.T + t
        T = fit_similarity(src, dst)
        assert abs(T.scale - scale) <= 1e-9
        assert np.max(np.abs(T.Q - Q)) <= 1e-9
        assert np.max(np.abs(T.t - t)) <= 1e-9

    for theta in (0.1, 1.0, 10.0, 90.0, 179.0):
        assert abs(angular_error(rot_z(theta), np.eye(3)) - theta) <= 1e-9

    table = threshold_sweep(
        [(0.3, 1.0), (2.0, 1.0), (8.0, 20.0)], [0.5, 1.0, 5.0, 10.0], 10.0
    )
    assert table == [
        (0.5, 100.0 * 1 / 3),
        (1.0, 100.0 * 1 / 3),
        (5.0, 100.0 * 2 / 3),
        (10.0, 100.0 * 2 / 3),
    ]

    # Table-2-shaped report: thresholds 0.5/1/5/10/20 m at 10 degrees
    day = [f"day{i}" for i in range(3)]
    poses = [
        PoseRecord(name=name, R=random_rotation(rng), C=rng.normal(size=3))
        for name in day + ["night0"]
    ]
    write_pose_file(tmp_path / "ref.txt", poses)
    write_pose_file(tmp_path / "est.txt", poses)
    (tmp_path / "day.txt").write_text("\n".join(day) + "\n")
    (tmp_path / "night.txt").write_text("night0\n")
    assert (
        main(
            [
                "evaluate",
                str(tmp_path / "est.txt"),
                str(tmp_path / "ref.txt"),
                str(tmp_path / "day.txt"),
                str(tmp_path / "night.txt"),
                "--out",
                str(tmp_path / "eval"),
            ]
        )
        == 0
    )
    sweep = (tmp_path / "eval" / "sweep.csv").read_text().splitlines()
    assert sweep[0] == "threshold_m,percent"
    assert [line.split(",")[0] for line in sweep[1:]] == ["0.5", "1", "5", "10", "20"]
    assert "angular_threshold_deg 10" in (tmp_path / "eval" / "counts.txt").read_text()
    report("evaluation protocol (similarity fit, angles, sweep, report shape)")


def test_format_determinism(tmp_path):
    """Pyramid/archive round-trips and repeated runs are byte-identical."""
    rng = np.random.default_rng(5)
    pyramid = random_pyramid(rng, 24, 16, 6, 4, image_id="det")
    p1, p2 = tmp_path / "a.dpyr", tmp_path / "b.dpyr"
    write_pyramid(pyramid, p1)
    write_pyramid(pyramid, p2)
    assert p1.read_bytes() == p2.read_bytes()

    scene = TwoPlaneScene(num_images=2, seed=3)
    pyr_dir = tmp_path / "pyr"
    pyr_dir.mkdir()
    for pyr in scene.pyramids:
        write_pyramid(pyr, pyr_dir / f"{pyr.image_id}.dpyr")
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert main(["match", str(pyr_dir), "--out", str(out1), "--seed", "21"]) == 0
    assert main(["match", str(pyr_dir), "--out", str(out2), "--seed", "21"]) == 0
    assert (out1 / "matches.dmar").read_bytes() == (out2 / "matches.dmar").read_bytes()
    assert (out1 / "match_summary.txt").read_bytes() == (out2 / "match_summary.txt").read_bytes()

    archive = read_archive(out1 / "matches.dmar")
    c1, c2 = tmp_path / "c1.dmar", tmp_path / "c2.dmar"
    write_archive(archive, c1)
    write_archive(archive, c2)
    assert c1.read_bytes() == c2.read_bytes()
    assert c1.read_bytes() == (out1 / "matches.dmar").read_bytes()
    report("format determinism (pyramid, archive, repeated runs)")


def test_desk_scale_end_to_end(tmp_path):
    """5-image synthetic scene through match -> export -> evaluate, < 60 s."""
    start = time.perf_counter()
    scene = TwoPlaneScene(num_images=5, seed=11)
    pyr_dir = tmp_path / "pyr"
    pyr_dir.mkdir()
    for pyr in scene.pyramids:
        write_pyramid(pyr, pyr_dir / f"{pyr.image_id}.dpyr")

    match_out = tmp_path / "match"
    assert main(["match", str(pyr_dir), "--out", str(match_out), "--seed", "1"]) == 0
    archive = read_archive(match_out / "matches.dmar")
    assert len(archive) == 10  # all unordered pairs of 5 images

    # planted homographies recovered: per plane, the best model's median
    # symmetric transfer error stays within 1 px
    for record in archive.records:
        pair = record.pair
        i, j = int(pair.image_a[3:]), int(pair.image_b[3:])
        for H_true in scene.planted_homographies(i, j):
            medians = []
            for model in pair.models:
                errors = sorted(
                    symmetric_transfer_error(H_true, pair.points_a[k], pair.points_b[k])
                    for k in model.inlier_indices
                )
                medians.append(errors[len(errors) // 2])
            assert medians and min(medians) <= 1.0

    export_out = tmp_path / "export"
    assert main(["export", str(match_out / "matches.dmar"), "--out", str(export_out)]) == 0

    # referential integrity across the whole export
    counts = {}
    for pyr in scene.pyramids:
        lines = (export_out / f"{pyr.image_id}.txt").read_text().splitlines()
        declared, dim = map(int, lines[0].split())
        assert dim == 128
        assert declared == len(lines) - 1
        counts[pyr.image_id] = declared
        for line in lines[1:]:
            u, v = map(float, line.split()[:2])
            assert 0.0 <= u < scene.width
            assert 0.0 <= v < scene.height
    for block in (export_out / "matches.txt").read_text().split("\n\n"):
        lines = [l for l in block.splitlines() if l]
        name_a, name_b = lines[0].split()
        for line in lines[1:]:
            id_a, id_b = map(int, line.split())
            assert 0 <= id_a < counts[name_a]
            assert 0 <= id_b < counts[name_b]

    # evaluate: reconstruction = gauge-transformed references, nights exact
    rng = np.random.default_rng(4)
    names = [p.image_id for p in scene.pyramids]
    day, night = names[:3], names[3:]
    ref = {
        name: PoseRecord(name=name, R=random_rotation(rng), C=rng.normal(scale=3.0, size=3))
        for name in names
    }
    from densesfm.evaluate import SimilarityTransform, apply_to_pose

    gauge = SimilarityTransform(scale=0.4, Q=random_rotation(rng), t=rng.normal(size=3))
    inverse = SimilarityTransform(
        scale=1.0 / gauge.scale, Q=gauge.Q.T, t=-(gauge.Q.T @ gauge.t) / gauge.scale
    )
    est = [apply_to_pose(inverse, pose) for pose in ref.values()]
    write_pose_file(tmp_path / "ref.txt", ref.values())
    write_pose_file(tmp_path / "est.txt", est)
    (tmp_path / "day.txt").write_text("\n".join(day) + "\n")
    (tmp_path / "night.txt").write_text("\n".join(night) + "\n")
    eval_out = tmp_path / "eval"
    assert (
        main(
            [
                "evaluate",
                str(tmp_path / "est.txt"),
                str(tmp_path / "ref.txt"),
                str(tmp_path / "day.txt"),
                str(tmp_path / "night.txt"),
                "--out",
                str(eval_out),
            ]
        )
        == 0
    )
    sweep = (eval_out / "sweep.csv").read_text().splitlines()[1:]
    assert all(line.endswith("100.00") for line in sweep)

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"end-to-end took {elapsed:.1f}s"
    report(f"desk-scale end-to-end (5 images, 10 pairs, {elapsed:.1f}s)")
