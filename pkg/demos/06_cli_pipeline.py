"""Demo: the end-to-end command-line pipeline.

Drives the console entry point programmatically through a full run:
generate -> build -> train -> evaluate -> report, all inside a
temporary directory, then lists the artifacts.  The identical commands
work from a shell:

    lobflow generate --config run.json --out out
    lobflow build    --config run.json --out out
    lobflow train    --config run.json --out out --pair DEMO --variant orderflow
    lobflow evaluate --checkpoint out/DEMO.orderflow.ckpt \
                     --dataset out/DEMO.orderflow.ds --split test --out out
    lobflow report   --out out
    lobflow gradcheck --n 20
    lobflow selftest  --events 20000
"""

import json
import tempfile
from pathlib import Path

from lobflow import cli, feed

root = Path(tempfile.mkdtemp(prefix="lobflow_demo_"))
out = root / "out"
config = {
    "seed": 0,
    "pairs": {"DEMO": {"input": str(root / "DEMO.ofr")}},
    "generator": {"n_events": 12_000, "mean_gap_ms": 60_000, "min_gap_ms": 1,
                  "planted": feed.PLANTED_LAST_EVENT_SIDE},
    "warm_up": {"count": 100},
    "T": 10,
    "S": 3,
    "model": {"layers": [8], "dense_hidden": [],
              "emb_dims": {"kind": 2, "side": 2, "hour": 4}, "dropout": 0.05},
    "schedule": {"epochs": 3, "batch_size": 128, "lr": 3e-3, "beta1": 0.9,
                 "beta2": 0.999, "eps": 1e-8, "patience": 5},
}
cfgfile = root / "run.json"
cfgfile.write_text(json.dumps(config, indent=2))

assert cli.main(["generate", "--config", str(cfgfile), "--out", str(out)]) == 0

# date splits need the stream's actual span; patch them in and rebuild config
events = list(feed.read_events(root / "DEMO.ofr"))
lo, hi = events[0].timestamp_ms, events[-1].timestamp_ms + 1
a, b = lo + int((hi - lo) * 0.6), lo + int((hi - lo) * 0.8)
config["split_ranges"] = {"train": [lo, a], "validation": [a, b], "test": [b, hi]}
cfgfile.write_text(json.dumps(config, indent=2))

for argv in (
    ["build", "--config", str(cfgfile), "--out", str(out)],
    ["train", "--config", str(cfgfile), "--out", str(out),
     "--pair", "DEMO", "--variant", "orderflow"],
    ["evaluate", "--checkpoint", str(out / "DEMO.orderflow.ckpt"),
     "--dataset", str(out / "DEMO.orderflow.ds"), "--split", "test",
     "--out", str(out)],
    ["report", "--out", str(out), "--stream", str(root / "DEMO.ofr")],
):
    print(f"\n$ lobflow {' '.join(argv)}")
    rc = cli.main(argv)
    assert rc == 0, f"exit code {rc}"

print("\nartifacts:")
for p in sorted(out.iterdir()):
    print(f"  {p.name}  ({p.stat().st_size} bytes)")
