import contextlib
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from geoms import cube_mesh

from geowalk.cli import main
from geowalk.mesh import save_obj
from geowalk.shards import MANIFEST_NAME, read_manifest


def run_cli(*argv):
    """In-process CLI invocation capturing stdout/stderr."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


@pytest.fixture()
def raw_dir(tmp_path):
    raw = tmp_path / "raw"
    raw.mkdir()
    save_obj(cube_mesh(source_id="boxy"), raw / "boxy.obj")
    save_obj(cube_mesh(half=0.3, center=(0.2, 0.1, 0.0), source_id="little"), raw / "little.obj")
    return raw


@pytest.fixture()
def norm_dir(raw_dir, tmp_path):
    out = tmp_path / "norm"
    code, _, _ = run_cli("normalize", "--in", str(raw_dir), "--out", str(out))
    assert code == 0
    return out


GEN_FLAGS = ["--n-volume", "200", "--n-surface", "40", "--n-dyn", "3", "--seed", "5"]


class TestNormalize:
    def test_missing_input_dir(self, tmp_path):
        missing = tmp_path / "nope"
        code, _, err = run_cli("normalize", "--in", str(missing), "--out", str(tmp_path / "o"))
        assert code == 1
        assert str(missing) in err

    def test_empty_input_dir(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        code, _, err = run_cli("normalize", "--in", str(empty), "--out", str(tmp_path / "o"))
        assert code == 0
        assert "no .obj" in err

    def test_writes_normalized_meshes(self, raw_dir, tmp_path):
        out = tmp_path / "norm"
        code, stdout, _ = run_cli(
            "normalize", "--in", str(raw_dir), "--out", str(out), "--x-length", "5"
        )
        assert code == 0
        assert (out / "boxy.obj").is_file()
        assert (out / "boxy.norm.json").is_file()
        lines = [json.loads(l) for l in stdout.splitlines()]
        assert all(l["status"] == "ok" for l in lines)
        from geowalk.mesh import load_mesh_file

        mesh = load_mesh_file(out / "boxy.obj")
        lo, hi = mesh.bbox
        assert hi[0] - lo[0] == pytest.approx(5.0, abs=1e-9)

    def test_bad_file_reported_and_nonzero(self, raw_dir, tmp_path):
        (raw_dir / "broken.obj").write_text("v 0 0 0\nf 1 2 9\n")
        out = tmp_path / "norm"
        code, stdout, err = run_cli("normalize", "--in", str(raw_dir), "--out", str(out))
        assert code == 1
        assert "broken.obj" in err
        assert (out / "boxy.obj").is_file()  # good files still written


class TestGenerate:
    def test_counts_and_manifest(self, norm_dir, tmp_path):
        data = tmp_path / "data"
        code, stdout, _ = run_cli(
            "generate", "--in", str(norm_dir), "--out", str(data), *GEN_FLAGS
        )
        assert code == 0
        manifest = read_manifest(data / MANIFEST_NAME)
        assert manifest.total_samples == 2 * 3
        assert len(manifest.shards) == 6
        summary = json.loads(stdout.splitlines()[-1])
        assert summary["total_samples"] == 6

    def test_repeat_run_byte_identical(self, norm_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("generate", "--in", str(norm_dir), "--out", str(a), *GEN_FLAGS, "--workers", "1")
        run_cli("generate", "--in", str(norm_dir), "--out", str(b), *GEN_FLAGS, "--workers", "3")
        ma = read_manifest(a / MANIFEST_NAME)
        assert (a / MANIFEST_NAME).read_bytes() == (b / MANIFEST_NAME).read_bytes()
        for info in ma.shards:
            assert (a / info.path).read_bytes() == (b / info.path).read_bytes()

    def test_all_failed_is_nonzero(self, tmp_path):
        norm = tmp_path / "norm"
        norm.mkdir()
        (norm / "broken.obj").write_text("v 0 0 0\nf 1 2 9\n")
        code, _, _ = run_cli(
            "generate", "--in", str(norm), "--out", str(tmp_path / "d"), *GEN_FLAGS
        )
        assert code == 1

    def test_usage_error_exit_code(self, norm_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("generate", "--in", str(norm_dir), "--out", str(tmp_path / "d"),
                    "--mode", "bogus")
        assert exc.value.code == 2


class TestVerify:
    @pytest.fixture()
    def dataset(self, norm_dir, tmp_path):
        data = tmp_path / "data"
        run_cli("generate", "--in", str(norm_dir), "--out", str(data), *GEN_FLAGS)
        return data

    def test_clean_dataset_passes(self, dataset):
        code, stdout, err = run_cli("verify", "--data", str(dataset))
        assert code == 0
        assert "FAIL" not in err

    def test_corrupted_byte_fails_naming_shard(self, dataset):
        manifest = read_manifest(dataset / MANIFEST_NAME)
        victim = dataset / manifest.shards[0].path
        blob = bytearray(victim.read_bytes())
        blob[len(blob) // 2] ^= 0x10
        victim.write_bytes(bytes(blob))
        code, stdout, err = run_cli("verify", "--data", str(dataset))
        assert code == 1
        rows = [json.loads(l) for l in stdout.splitlines() if l.startswith("{\"shard\"")]
        failed = [r for r in rows if r["status"] == "FAIL"]
        assert len(failed) == 1
        assert failed[0]["shard"] == manifest.shards[0].path

    def test_missing_shard_fails(self, dataset):
        manifest = read_manifest(dataset / MANIFEST_NAME)
        (dataset / manifest.shards[0].path).unlink()
        code, _, err = run_cli("verify", "--data", str(dataset))
        assert code == 1
        assert "missing" in err

    def test_thawed_particle_fails_conservation(self, dataset):
        import hashlib

        from geowalk.shards import read_shard_file, shard_bytes
        from geowalk.walk import FeatureTrajectory, SampleRecord

        manifest = read_manifest(dataset / MANIFEST_NAME)
        info = manifest.shards[0]
        record = read_shard_file(dataset / info.path)
        stuck = record.stuck_steps.copy()
        surface = np.flatnonzero(stuck == 0)
        feats = record.feature_trajectory.features.copy()
        feats[surface[0], record.tau, :] += 1.0
        thawed = SampleRecord(
            geometry_id=record.geometry_id,
            dynamics_index=record.dynamics_index,
            positions_0=record.positions_0,
            velocities=record.velocities,
            feature_trajectory=FeatureTrajectory(feats, record.feature_kind),
            stuck_steps=stuck,
            tau=record.tau,
            v_max=record.v_max,
            sticking_mode=record.sticking_mode,
        )
        # rewrite the shard with valid checksums so only the audit can fail
        data = shard_bytes(thawed)
        (dataset / info.path).write_bytes(data)
        manifest_raw = json.loads((dataset / MANIFEST_NAME).read_text())
        for entry in manifest_raw["shards"]:
            if entry["path"] == info.path:
                entry["bytes"] = len(data)
                entry["checksum"] = hashlib.blake2b(data, digest_size=8).hexdigest()
        (dataset / MANIFEST_NAME).write_text(json.dumps(manifest_raw))
        code, stdout, _ = run_cli("verify", "--data", str(dataset))
        assert code == 1
        rows = [json.loads(l) for l in stdout.splitlines() if l.startswith("{\"shard\"")]
        bad = [r for r in rows if r["status"] == "FAIL"]
        assert len(bad) == 1 and "stuck" in bad[0]["reason"]


class TestCondition:
    def test_aero_uniform_block(self, tmp_path):
        spec = tmp_path / "aero.spec"
        spec.write_text("type=aero\nspeed_norm=0.3\naoa_deg=0\nregime=low_speed\n")
        pts = tmp_path / "pts.xyz"
        pts.write_text("0 0 0\n1 2 3\n")
        out = tmp_path / "vel.bin"
        code, stdout, err = run_cli(
            "condition", "--spec", str(spec), "--points", str(pts), "--out", str(out)
        )
        assert code == 0
        block = np.frombuffer(out.read_bytes(), dtype="<f4").reshape(-1, 3)
        assert np.allclose(block, [[0.3, 0, 0], [0.3, 0, 0]])
        assert "[0.1, 1.0]" in err

    def test_hydro_dtc_settings(self, tmp_path):
        spec = tmp_path / "hydro.spec"
        spec.write_text(
            "type=hydro\nwater_norm=1.668\nair_norm=0\ninterface_height=0.244\n"
        )
        pts = tmp_path / "pts.xyz"
        pts.write_text("0 0 0.1\n0 0 0.5\n")
        out = tmp_path / "vel.bin"
        code, _, _ = run_cli(
            "condition", "--spec", str(spec), "--points", str(pts), "--out", str(out)
        )
        assert code == 0
        block = np.frombuffer(out.read_bytes(), dtype="<f4").reshape(-1, 3)
        assert np.linalg.norm(block[0]) == pytest.approx(1.668, rel=1e-6)
        assert np.linalg.norm(block[1]) == 0.0

    def test_negative_speed_rejected_with_field(self, tmp_path):
        spec = tmp_path / "aero.spec"
        spec.write_text("type=aero\nspeed_norm=-1\n")
        pts = tmp_path / "pts.xyz"
        pts.write_text("0 0 0\n")
        code, _, err = run_cli(
            "condition", "--spec", str(spec), "--points", str(pts),
            "--out", str(tmp_path / "v.bin"),
        )
        assert code == 1
        assert "speed_norm" in err

    def test_obj_points_accepted(self, tmp_path):
        spec = tmp_path / "crash.spec"
        spec.write_text(
            "type=crash\nimpact_x=0\nimpact_y=0\nimpact_z=0\n"
            "impact_angle_deg=0\nmax_norm=0.3\ndecay_radius=2\n"
        )
        pts = tmp_path / "pts.obj"
        pts.write_text("v 0 0 0\nv 1 0 0\n")
        out = tmp_path / "vel.bin"
        code, _, _ = run_cli(
            "condition", "--spec", str(spec), "--points", str(pts), "--out", str(out)
        )
        assert code == 0
        block = np.frombuffer(out.read_bytes(), dtype="<f4").reshape(-1, 3)
        assert np.linalg.norm(block[0]) == pytest.approx(0.3, rel=1e-6)
        assert np.linalg.norm(block[1]) == pytest.approx(0.15, rel=1e-6)


class TestStats:
    def test_counts_match_manifest(self, norm_dir, tmp_path):
        data = tmp_path / "data"
        run_cli("generate", "--in", str(norm_dir), "--out", str(data), *GEN_FLAGS)
        code, stdout, _ = run_cli("stats", "--data", str(data))
        assert code == 0
        payload = json.loads(stdout.splitlines()[-1])
        manifest = read_manifest(data / MANIFEST_NAME)
        assert payload["n_shards"] == manifest.total_samples
        assert payload["per_category"] == manifest.category_counts

    def test_no_geometry_contact_stuck_zero(self, tmp_path):
        # tiny far-away mesh, tiny velocities, no surface samples: nothing sticks
        norm = tmp_path / "norm"
        norm.mkdir()
        save_obj(cube_mesh(half=0.05, center=(50, 50, 50), source_id="far"), norm / "far.obj")
        data = tmp_path / "data"
        code, _, _ = run_cli(
            "generate", "--in", str(norm), "--out", str(data),
            "--n-volume", "120", "--n-surface", "0", "--n-dyn", "2",
            "--seed", "5", "--v-max", "0.05",
            "--bbox", "0,1,0,1,0,1",
        )
        assert code == 0
        code, stdout, _ = run_cli("stats", "--data", str(data))
        payload = json.loads(stdout.splitlines()[-1])
        assert payload["stuck_fraction"] == [0.0, 0.0, 0.0]

    def test_all_surface_literal_stuck_at_step_zero(self, norm_dir, tmp_path):
        data = tmp_path / "data"
        run_cli(
            "generate", "--in", str(norm_dir), "--out", str(data),
            "--n-volume", "0", "--n-surface", "64", "--n-dyn", "1",
            "--seed", "5", "--mode", "literal",
        )
        code, stdout, _ = run_cli("stats", "--data", str(data))
        payload = json.loads(stdout.splitlines()[-1])
        assert payload["stuck_fraction"][0] == 1.0

    def test_report_dir_artifacts(self, norm_dir, tmp_path):
        data = tmp_path / "data"
        run_cli("generate", "--in", str(norm_dir), "--out", str(data), *GEN_FLAGS)
        rep = tmp_path / "rep"
        code, _, _ = run_cli("stats", "--data", str(data), "--report-dir", str(rep))
        assert code == 0
        assert (rep / "stats.csv").is_file()
        assert (rep / "stuck_fraction.png").is_file()
        assert (rep / "feature_norms.png").is_file()


class TestEnvironmentVariables:
    def test_seed_env_matches_flag(self, norm_dir, tmp_path, monkeypatch):
        a, b = tmp_path / "flag", tmp_path / "env"
        run_cli("generate", "--in", str(norm_dir), "--out", str(a), *GEN_FLAGS)
        monkeypatch.setenv("GEOWALK_SEED", "5")
        flags_without_seed = [f for f in GEN_FLAGS if f not in ("--seed", "5")]
        run_cli("generate", "--in", str(norm_dir), "--out", str(b), *flags_without_seed)
        assert (a / MANIFEST_NAME).read_bytes() == (b / MANIFEST_NAME).read_bytes()

    def test_workers_env_used(self, norm_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("GEOWALK_WORKERS", "2")
        data = tmp_path / "data"
        code, _, err = run_cli("generate", "--in", str(norm_dir), "--out", str(data), *GEN_FLAGS)
        assert code == 0
        assert "workers=2" in err


class TestSubprocessEntry:
    def test_console_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "geowalk.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "normalize" in proc.stdout

    def test_missing_subcommand_usage_error(self):
        proc = subprocess.run(
            [sys.executable, "-m", "geowalk.cli"], capture_output=True, text=True
        )
        assert proc.returncode == 2
