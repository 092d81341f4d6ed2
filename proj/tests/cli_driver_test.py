#!/usr/bin/env python3
"""End-to-end checks of the crvos CLI: exit codes, manifests, determinism."""

import json
import os
import shutil
import subprocess
import sys
import tempfile

CLI = os.environ.get("CRVOS_CLI", "crvos")


def run(*args, expect=0):
    proc = subprocess.run([CLI, *args], capture_output=True, text=True)
    if proc.returncode != expect:
        raise AssertionError(
            f"{' '.join(args)} -> exit {proc.returncode} (expected {expect})\n"
            f"stdout: {proc.stdout}\nstderr: {proc.stderr}"
        )
    return proc


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f)


def main():
    work = tempfile.mkdtemp(prefix="crvos_cli_")
    os.chdir(work)

    spec = {
        "height": 64, "width": 64, "num_targets": 2,
        "shapes": ["square", "disk"], "translate_x": 1.5, "translate_y": 0.5,
        "length": 6, "seed": 300, "target_size": 14,
    }
    write_json("spec.json", spec)
    run("synth", "--spec", "spec.json", "--count", "2", "--out", "dataset")
    assert os.path.isdir("dataset/JPEGImages/synthetic_300")
    assert os.path.isdir("dataset/Annotations/synthetic_301")
    assert os.path.exists("dataset/manifest.json")

    cfg = {
        "model": {"variant": "III", "encoder_width_scale": 0.125},
        "train": {"stage": "finetune", "clip_len": 3, "resolution": [64, 64],
                  "lr": 0.003, "epochs": 4, "augment": False, "seed": 7},
        "data": {"root": "dataset"},
    }
    write_json("cfg.json", cfg)

    # missing dataset path: exit 2, message names the key
    bad = dict(cfg)
    bad["data"] = {}
    write_json("bad.json", bad)
    env_backup = os.environ.pop("CRVOS_DATA_ROOT", None)
    proc = run("train", "--config", "bad.json", "--out", "run_bad", expect=2)
    assert "data.root" in proc.stderr, proc.stderr
    if env_backup is not None:
        os.environ["CRVOS_DATA_ROOT"] = env_backup

    # env var supplies the default data root
    os.environ["CRVOS_DATA_ROOT"] = os.path.join(work, "dataset")
    run("train", "--config", "bad.json", "--out", "run_env")
    del os.environ["CRVOS_DATA_ROOT"]

    # train twice with the same seed: final losses identical
    run("train", "--config", "cfg.json", "--out", "run_a")
    run("train", "--config", "cfg.json", "--out", "run_b")

    def last_loss(path):
        lines = [l for l in open(path) if l.startswith("step=")]
        return lines[-1].split("loss=")[1].split()[0]

    assert last_loss("run_a/train.log") == last_loss("run_b/train.log")
    manifest = json.load(open("run_a/manifest.json"))
    for key in ("command", "config_path", "seed", "version", "output_dir", "started"):
        assert key in manifest, key

    # eval: report schema, fps present
    run("eval", "--checkpoint", "run_a/checkpoint.ckpt", "--data", "dataset",
        "--out", "run_eval", "--jobs", "2")
    report = json.load(open("run_eval/report.json"))
    assert {"sequence", "fps", "J", "F", "J&F"} <= set(report["rows"][0].keys())
    assert report["rows"][0]["fps"] > 0

    # --variant conflicting with the checkpoint is refused
    proc = run("eval", "--checkpoint", "run_a/checkpoint.ckpt", "--data", "dataset",
               "--out", "run_conflict", "--variant", "I", expect=2)
    assert "refused" in proc.stderr

    # ground truth piped as predictions scores J&F = 100%
    run("eval", "--predictions", "dataset/Annotations", "--data", "dataset",
        "--out", "run_sanity")
    sanity = json.load(open("run_sanity/report.json"))
    assert abs(sanity["overall"]["J&F"] - 1.0) < 1e-12

    # bench report accounting
    run("bench", "--checkpoint", "run_a/checkpoint.ckpt", "--data", "dataset",
        "--warmup", "2", "--out", "run_bench")
    bench = json.load(open("run_bench/bench.json"))
    assert bench["frames_processed"] == 6 - 2
    assert bench["fps"] > 0
    assert "I/O" in bench["note"]

    # render: one overlay per frame plus a contact sheet
    run("render", "--checkpoint", "run_a/checkpoint.ckpt", "--data", "dataset",
        "--sequence", "synthetic_300", "--out", "run_render")
    overlays = [f for f in os.listdir("run_render") if f.startswith("overlay_")]
    assert len(overlays) == 6, overlays
    assert os.path.exists("run_render/contact_sheet.png")

    # unknown device is refused
    run("eval", "--checkpoint", "run_a/checkpoint.ckpt", "--data", "dataset",
        "--out", "run_dev", "--device", "cuda", expect=2)

    # single-variant ablate degenerates to train+eval
    acfg = dict(cfg)
    acfg["train"] = dict(cfg["train"], epochs=2)
    write_json("acfg.json", acfg)
    run("ablate", "--config", "acfg.json", "--variants", "III", "--seeds", "1",
        "--out", "run_ablate")
    ab = json.load(open("run_ablate/ablate_report.json"))
    assert len(ab["runs"]) == 1
    table = open("run_ablate/ablate_report.txt").read()
    assert table.splitlines()[0].split() == ["variant", "RM", "PM", "Clue", "J&F", "J", "F"]

    # variant IV row: RM flag absent, Clue flag present (fixed columns)
    run("ablate", "--config", "acfg.json", "--variants", "IV", "--seeds", "1",
        "--out", "run_ablate4")
    row = open("run_ablate4/ablate_report.txt").read().splitlines()[1]
    assert row[:7].strip() == "IV"
    assert row[9:11].strip() == "", f"RM column should be blank: {row!r}"
    assert row[17:21].strip() == "x", f"Clue column should be set: {row!r}"

    shutil.rmtree(work, ignore_errors=True)
    print("cli driver test: all checks passed")


if __name__ == "__main__":
    sys.exit(main())
