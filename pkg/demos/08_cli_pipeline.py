"""
The command line end to end
===========================

Drives the full pipeline through the CLI entry point in a temporary
directory: synthesize a corpus, build the benchmark manifest, curate
fixed-horizon samples, train a planner, evaluate it on base and novel
splits, and print one sample's predicted plan. Each step is exactly what
`procplan <subcommand>` does from a shell.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from procplan.cli import main

with tempfile.TemporaryDirectory() as tmp:
    data = Path(tmp) / "corpus"
    ckpt = Path(tmp) / "mlp.ckpt"

    steps = [
        ["synth-data", "--out", str(data), "--seed", "0"],
        ["build-benchmark", "--data", str(data)],
        ["curate", "--data", str(data),
         "--manifest", str(data / "manifest.json"), "--horizon", "3"],
        ["train", "--data", str(data),
         "--manifest", str(data / "manifest.json"),
         "--samples", str(data / "samples_T3.jsonl"),
         "--kind", "mlp", "--out", str(ckpt),
         "--set", "epochs=30", "--set", "lr=0.003", "--set", "batch_size=8"],
        ["eval", "--data", str(data),
         "--manifest", str(data / "manifest.json"),
         "--samples", str(data / "samples_T3.jsonl"),
         "--checkpoint", str(ckpt), "--split", "test_base"],
        ["eval", "--data", str(data),
         "--manifest", str(data / "manifest.json"),
         "--samples", str(data / "samples_T3.jsonl"),
         "--checkpoint", str(ckpt), "--split", "test_novel", "--space", "novel"],
        ["eval", "--data", str(data),
         "--manifest", str(data / "manifest.json"),
         "--samples", str(data / "samples_T3.jsonl"), "--planner", "random"],
        ["plan", "--data", str(data),
         "--manifest", str(data / "manifest.json"),
         "--samples", str(data / "samples_T3.jsonl"),
         "--checkpoint", str(ckpt), "--index", "0"],
    ]
    for argv in steps:
        shown = " ".join(a if not a.startswith(tmp) else f"$DIR/{Path(a).name}"
                         for a in argv)
        print(f"\n$ procplan {shown}")
        code = main(argv)
        assert code == 0, f"step {argv[0]} exited {code}"
