#!/usr/bin/env python3
"""Writes the small synthetic trace sets under data/ used by the micro profiles and tests."""
import json
import math
import pathlib
import random

ROOT = pathlib.Path(__file__).resolve().parent.parent / "data"


def markov_trace(rng, seconds, levels):
    state = rng.randrange(len(levels))
    out = []
    for t in range(seconds):
        if rng.random() < 0.08:
            state = max(0, min(len(levels) - 1, state + rng.choice((-1, 1))))
        bw = levels[state] * math.exp(rng.gauss(0.0, 0.15))
        out.append((float(t), round(max(0.05, bw), 4)))
    return out


def write(dirname, name, samples):
    d = ROOT / "traces" / dirname
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text("".join(f"{t:g} {bw:g}\n" for t, bw in samples))


def manifest(path, name, dirname, train, test):
    (ROOT / path).write_text(json.dumps({
        "name": name, "trace_dir": f"traces/{dirname}", "format": "two_column",
        "source_tag": "custom", "scale_factor": 1.0, "ladder": "low",
        "train": train, "test": test}, indent=2) + "\n")


def main():
    rng = random.Random(20240)
    names = [f"trace_{i:02d}" for i in range(10)]
    for n in names:
        write("synthetic", n, markov_trace(rng, 400, [0.6, 1.2, 2.0, 3.0, 4.5]))
    manifest("synthetic.json", "synthetic", "synthetic", names[:6], names[6:])
    write("constant5", "const_train", [(0.0, 5.0)])
    write("constant5", "const_test", [(0.0, 5.0)])
    manifest("constant5.json", "constant5", "constant5", ["const_train"], ["const_test"])


if __name__ == "__main__":
    main()
