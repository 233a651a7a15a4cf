import json
import os
import subprocess

import pytest

CLI = os.environ.get("VGSIL_CLI", "vgsil")


def run(*args, cwd):
    return subprocess.run([CLI, *args], cwd=cwd, capture_output=True, text=True)


GEN = ("gen", "--seed", "3", "--frames", "20", "--distractors", "4")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(*GEN, "--out", "demo.json", cwd=d).returncode == 0
    r = run("train", "--demo", "demo.json", "--epochs", "150", "--hidden", "16", "--out", "k.json", cwd=d)
    assert r.returncode == 0, r.stderr
    r = run("train", "--demo", "demo.json", "--epochs", "20", "--hidden", "8", "--alpha-gcr", "0", "--out", "k0.json",
            cwd=d)
    assert r.returncode == 0, r.stderr
    return d


def test_gen_summary_and_default_demo(workdir):
    r = run("gen", "--out", "default.json", cwd=workdir)
    assert r.returncode == 0
    assert "frames: 60" in r.stdout and "features: 10" in r.stdout and "candidates: 45" in r.stdout
    demo = json.loads((workdir / "default.json").read_text())
    assert len(demo["frames"]) == 60


def test_gen_is_byte_identical(workdir):
    first = (workdir / "demo.json").read_bytes()
    assert run(*GEN, "--out", "demo.json", cwd=workdir).returncode == 0
    assert (workdir / "demo.json").read_bytes() == first


def test_gen_occlusion_has_invisible_window(workdir):
    assert run(*GEN, "--perturb", "occlusion", "--out", "occ.json", cwd=workdir).returncode == 0
    demo = json.loads((workdir / "occ.json").read_text())
    hidden = [t for t, f in enumerate(demo["frames"]) if any(not o["visible"] for o in f)]
    assert hidden
    assert hidden == list(range(hidden[0], hidden[-1] + 1))
    assert demo["perturbation"]["kind"] == "occlusion"


def test_echo_reproduces_run(workdir):
    echo = json.loads((workdir / "demo.json").read_text())["run"]
    (workdir / "echo.toml").write_text(echo.replace('out="demo.json"', 'out="echoed.json"'))
    assert run("--config", "echo.toml", "gen", cwd=workdir).returncode == 0
    a = (workdir / "demo.json").read_bytes().replace(b"demo.json", b"X")
    b = (workdir / "echoed.json").read_bytes().replace(b"echoed.json", b"X")
    assert a == b


def test_train_echo_and_loss_csv(workdir):
    model = json.loads((workdir / "k0.json").read_text())
    assert "alpha-gcr=0" in model["run"].splitlines()
    assert model["config"]["alpha_gcr"] == 0
    lines = (workdir / "k0.loss.csv").read_text().splitlines()
    assert lines[0] == "# [train]"
    assert "# alpha-gcr=0" in lines
    data = [l for l in lines if not l.startswith("#")]
    assert data[0].startswith("epoch,loss")
    assert len(data) == 1 + 21


def test_train_lowers_loss(workdir):
    rows = [l.split(",") for l in (workdir / "k.loss.csv").read_text().splitlines() if l[0].isdigit()]
    assert float(rows[-1][1]) < float(rows[0][1])


def test_missing_input_fails_without_output(workdir):
    r = run("train", "--demo", "missing.json", "--out", "never.json", cwd=workdir)
    assert r.returncode != 0
    assert "missing.json" in r.stderr
    assert not (workdir / "never.json").exists()


def test_unknown_config_key_rejected(workdir):
    (workdir / "bad.toml").write_text("[gen]\nseed=1\nbogus=2\n")
    r = run("--config", "bad.toml", "gen", "--out", "bad.json", cwd=workdir)
    assert r.returncode != 0
    assert not (workdir / "bad.json").exists()


def test_eval_clean_demo(workdir):
    r = run("eval", "--demo", "demo.json", "--model", "k.json", "--out", "clean.json", cwd=workdir)
    assert r.returncode == 0, r.stderr
    report = json.loads((workdir / "clean.json").read_text())
    (entry,) = report["reports"]
    assert entry["report"]["acc"] == 100.0
    assert "con_acc" in entry["report"]
    assert (workdir / "clean.csv").exists()


def test_eval_one_report_per_setting(workdir):
    r = run("eval", "--demo", "demo.json", "--model", "k.json", "--perturb", "occlusion", "change_camera",
            "--out", "r.json", cwd=workdir)
    assert r.returncode == 0, r.stderr
    report = json.loads((workdir / "r.json").read_text())
    assert [e["perturbation"]["kind"] for e in report["reports"]] == ["occlusion", "change_camera"]
    for e in report["reports"]:
        assert (workdir / e["frames_csv"]).exists()


SERVO = ("servo", "--model", "k.json", "--distractors", "4", "--appearance-seed", "3")


@pytest.mark.parametrize("mode", ["ibvs", "uvs"])
def test_servo_converges(workdir, mode):
    r = run(*SERVO, "--mode", mode, "--out", f"{mode}.csv", cwd=workdir)
    assert r.returncode == 0, r.stderr
    summary = json.loads((workdir / f"{mode}.json").read_text())
    assert summary["converged"] is True
    assert summary["final_error"] < summary["config"]["tol"]
    rows = [l for l in (workdir / f"{mode}.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 1 + summary["steps"]


def test_servo_zero_steps(workdir):
    r = run(*SERVO, "--max-steps", "0", "--out", "t.csv", cwd=workdir)
    assert r.returncode == 0, r.stderr
    rows = [l for l in (workdir / "t.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows == ["step,q0,q1,q2,q3,q4,q5,error_norm,mode"]
    summary = json.loads((workdir / "t.json").read_text())
    assert summary["converged"] is False
    assert summary["steps"] == 0
