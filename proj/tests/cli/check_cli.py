#!/usr/bin/env python3
"""End-to-end checks of the `mowe` command line.

usage: check_cli.py <path-to-mowe> <scratch-dir>
"""

import csv
import io
import json
import os
import shutil
import subprocess
import sys

MOWE, WORK = sys.argv[1], sys.argv[2]
SMALL = ["--set", "data.samples_per_task=8", "trainer.epochs=2", "-q"]
failures = []


def run(*args, expect=0, env=None):
    proc = subprocess.run([MOWE, *args], capture_output=True, text=True, env=env)
    if proc.returncode != expect:
        raise AssertionError(f"{' '.join(args)} exited {proc.returncode}, wanted {expect}\n{proc.stderr}")
    return proc


def check(name, fn):
    try:
        fn()
        print(f"ok   {name}")
    except AssertionError as e:
        failures.append(name)
        print(f"FAIL {name}: {e}")


def path(*parts):
    return os.path.join(WORK, *parts)


def show_defaults():
    text = run("config", "show-defaults").stdout
    for section in ("data:", "encoders:", "routing:", "pipeline:", "trainer:"):
        assert section in text, section
    assert "#" in text
    paper = run("config", "show-defaults", "--preset", "paper").stdout
    assert "learning_rate: 5e-05" in paper, paper


def gen_data():
    run("gen-data", "-o", path("data"), *SMALL)
    for name in ("manifest.json", "config.yaml", "train", "eval"):
        assert os.path.exists(path("data", name)), name
    assert json.load(open(path("data", "manifest.json")))["format"] == "mowe-run"


def train_then_eval():
    summary = json.loads(run("train", "-d", path("data"), "-o", path("run"), *SMALL).stdout)
    for name in ("checkpoint.bin", "report.json", "metrics.csv", "routing.csv", "config.yaml", "manifest.json"):
        assert os.path.exists(path("run", name)), name
    report = json.load(open(path("run", "report.json")))
    metrics = json.loads(run("eval", "-k", path("run", "checkpoint.bin"), "-d", path("data")).stdout)
    for key in ("next_token_loss", "token_accuracy", "samples", "tasks", "routing"):
        assert metrics[key] == report["final_eval"][key], key
    assert summary["final_eval_next_token"] == report["final_eval"]["next_token_loss"]
    rows = list(csv.DictReader(open(path("run", "metrics.csv"))))
    assert len(rows) == len(report["steps"]) and rows, len(rows)
    assert float(rows[0]["lr"]) > float(rows[-1]["lr"])


def echoed_config_reproduces():
    # The run directory's config.yaml alone must regenerate the same report.
    run("train", "-c", path("run", "config.yaml"), "-d", path("data"), "-o", path("rerun"), "-q")
    a = json.load(open(path("run", "report.json")))
    b = json.load(open(path("rerun", "report.json")))
    a.pop("wall_clock_seconds"), b.pop("wall_clock_seconds")
    assert a == b


def env_config():
    with open(path("env.yaml"), "w") as f:
        f.write("seed: 5\ndata:\n  samples_per_task: 4\ntrainer:\n  epochs: 0\n")
    env = dict(os.environ, MOWE_CONFIG=path("env.yaml"))
    run("train", "-o", path("envrun"), "-q", env=env)
    cfg = json.load(open(path("envrun", "report.json")))["config"]
    assert cfg["seed"] == 5 and cfg["trainer"]["epochs"] == 0, cfg
    # --seed beats the file.
    run("train", "-o", path("envrun2"), "-q", "--seed", "6", env=env)
    assert json.load(open(path("envrun2", "report.json")))["config"]["seed"] == 6


def route_report():
    out = run("route-report", "-k", path("run", "checkpoint.bin"), "-d", path("data"))
    rows = list(csv.DictReader(io.StringIO(out.stdout)))
    assert rows
    for row in rows:
        total = sum(float(v) for k, v in row.items() if k.startswith("p_enc"))
        assert abs(total - 1.0) < 1e-9, row
    assert "majority encoder" in out.stderr


def untrained_prior():
    run("train", "-o", path("prior"), "--set", "data.samples_per_task=6", "trainer.epochs=0",
        "routing.indep_init=prior", "-q")
    out = run("route-report", "-k", path("prior", "checkpoint.bin"), "-d", path("data"), "--split", "all")
    indep = [r for r in csv.DictReader(io.StringIO(out.stdout)) if r["kind"] == "indep"]
    assert indep
    for row in indep:
        assert float(row["p_enc0"]) == 1.0, row


def ablate():
    run("ablate", "-d", path("data"), "-o", path("ablate"), "--set", "data.samples_per_task=8", "trainer.epochs=1",
        "-q")
    rows = list(csv.DictReader(open(path("ablate", "ablation.csv"))))
    assert [r["setup"] for r in rows] == ["off", "indep", "dep", "indep-x2", "dep-x2", "indep-dep"], rows
    indep = next(r for r in rows if r["setup"] == "indep")
    assert float(indep["indep_fixed_fraction"]) == 1.0


def grad_check():
    out = json.loads(run("grad-check").stdout)
    assert out["passed"] is True, out


def errors_are_json():
    with open(path("bad.yaml"), "w") as f:
        f.write("trainer:\n  epochs: 1\n  bogus: 2\n")
    proc = run("train", "-c", path("bad.yaml"), "-o", path("bad"), expect=2)
    err = json.loads(proc.stderr)["error"]
    assert err["kind"] == "config_error" and "bad.yaml:3:" in err["message"], err
    proc = run("eval", "-k", path("data", "manifest.json"), "-d", path("data"), expect=2)
    assert json.loads(proc.stderr)["error"]["kind"] == "format_error"
    proc = run("no-such-command", expect=64)
    assert json.loads(proc.stderr)["error"]["kind"] == "usage_error"


shutil.rmtree(WORK, ignore_errors=True)
os.makedirs(WORK)
for name, fn in [
    ("show-defaults", show_defaults),
    ("gen-data", gen_data),
    ("train-then-eval", train_then_eval),
    ("echoed-config-reproduces", echoed_config_reproduces),
    ("env-config", env_config),
    ("route-report", route_report),
    ("untrained-prior", untrained_prior),
    ("ablate", ablate),
    ("grad-check", grad_check),
    ("errors-are-json", errors_are_json),
]:
    check(name, fn)
sys.exit(1 if failures else 0)
