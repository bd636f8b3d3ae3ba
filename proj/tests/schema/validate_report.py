#!/usr/bin/env python3
"""Runs a tiny synthetic experiment through the CLI and validates report.json."""

import argparse
import json
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema

TINY = [
    "dataset.synth.features=3",
    "dataset.synth.train_length=600",
    "dataset.synth.test_length=300",
    "preprocess.downsample=2",
    "preprocess.window=8",
    "preprocess.train_stride=8",
    "model.d_model=8",
    "model.transformer_heads=2",
    "model.transformer_layers=1",
    "model.tcn_levels=2",
    "model.negatives=2",
    "scoring.k=3",
]


def run(cli, *args):
    proc = subprocess.run([cli, *args], capture_output=True, text=True)
    if proc.returncode != 0:
        sys.exit(f"{' '.join(args)} exited {proc.returncode}\n{proc.stdout}{proc.stderr}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--schema", required=True)
    ap.add_argument("--work-dir", required=True)
    args = ap.parse_args()

    schema = json.loads(Path(args.schema).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    work = Path(args.work_dir)
    shutil.rmtree(work, ignore_errors=True)
    for policy in ("best_f1", "quantile"):
        out = work / policy
        common = ["--seed", "3", "-o", str(out), "--set", *TINY, f"scoring.threshold_policy={policy}"]
        run(args.cli, "train", "--epochs", "2", *common)
        run(args.cli, "evaluate", *common)
        report = json.loads((out / "report.json").read_text())
        errors = sorted(validator.iter_errors(report), key=lambda e: list(e.path))
        for e in errors:
            print(f"{policy}: {'/'.join(map(str, e.path))}: {e.message}")
        if errors:
            return 1
        print(f"{policy}: report.json valid ({len(report.get('metrics', []))} metrics)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
