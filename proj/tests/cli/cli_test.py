#!/usr/bin/env python3
"""End-to-end checks of the bpunch command line. Usage: cli_test.py BPUNCH FIXTURES WORKDIR"""

import filecmp
import json
import shutil
import subprocess
import sys
from pathlib import Path

BIN, FIX, WORK = sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3])
failures = []


def run(*args, code=0):
    p = subprocess.run([BIN, *map(str, args)], capture_output=True, text=True)
    if p.returncode != code:
        failures.append(f"{' '.join(map(str, args))}: exit {p.returncode}, expected {code}\n{p.stderr}")
    return p


def check(cond, what):
    if not cond:
        failures.append(what)


def load(path):
    return json.loads(Path(path).read_text())


shutil.rmtree(WORK, ignore_errors=True)
WORK.mkdir(parents=True)
toy = FIX / "toy_cnn.model"

# Data generation is deterministic and balanced.
run("gen-data", "--seed", 4, "--count", 301, "-o", WORK / "a.bpds", "--report", WORK / "a.json")
run("gen-data", "--seed", 4, "--count", 301, "-o", WORK / "b.bpds")
check(filecmp.cmp(WORK / "a.bpds", WORK / "b.bpds", shallow=False), "gen-data is not reproducible")
counts = load(WORK / "a.json")["per_class"]
check(max(counts) - min(counts) <= 1, f"classes unbalanced: {counts}")

# Rate 1 leaves the pretrained weights untouched.
run("prune", "--model", toy, "--data", WORK / "a.bpds", "--rate", 1, "--train-epochs", 2, "-o", WORK / "p1")
r1 = load(WORK / "p1/report.json")
check(r1["report"]["rate"] == 1.0, "rate 1 changed the weight count")
check(r1["report"]["weights_after"] == r1["report"]["weights_before"], "rate 1 pruned weights")

# Pruning twice with one seed gives identical files.
args = ["prune", "--model", toy, "--data", WORK / "a.bpds", "--rate", 8, "--override", "conv1=1",
        "--train-epochs", 3]
run(*args, "-o", WORK / "p8")
run(*args, "-o", WORK / "p8b")
for name in ("weights.bpwt", "masks.bpmask", "report.json"):
    check(filecmp.cmp(WORK / "p8" / name, WORK / "p8b" / name, shallow=False), f"prune {name} differs across runs")
r8 = load(WORK / "p8/report.json")
check(r8["punched_uniform"], "mask is not punched-uniform")
check(r8["report"]["weights_after"] == sum(l["kept_weights"] for l in r8["layers"]), "report rows disagree")
check(abs(r8["report"]["rate"] - 8) / 8 < 0.05, f"rate {r8['report']['rate']} far from 8")

# pack -> unpack round trip.
run("pack", "--model", toy, "--weights", WORK / "p8/weights.bpwt", "--masks", WORK / "p8/masks.bpmask",
    "-o", WORK / "m.bpcm", "--report", WORK / "pack.json")
run("unpack", "--packed", WORK / "m.bpcm", "-o", WORK / "u.bpwt", "--masks-out", WORK / "u.bpmask")
# The packed format stores no biases, so compare after packing again.
run("pack", "--model", toy, "--weights", WORK / "u.bpwt", "--masks", WORK / "u.bpmask", "-o", WORK / "m2.bpcm")
check(filecmp.cmp(WORK / "m.bpcm", WORK / "m2.bpcm", shallow=False), "repacked model differs")
check(filecmp.cmp(WORK / "u.bpmask", WORK / "p8/masks.bpmask", shallow=False), "unpacked masks differ")
pk = load(WORK / "pack.json")
check(pk["index_bytes"] < pk["csr_index_bytes"], "packed index not smaller than CSR")

# The packed run matches the dense reference.
run("run", "--model", toy, "--packed", WORK / "m.bpcm", "--input", WORK / "a.bpds", "--index", 5,
    "--reference", WORK / "p8/weights.bpwt", "--report", WORK / "run.json")
check(load(WORK / "run.json")["max_relative_error"] < 1e-4, "run differs from the dense reference")

# Schedule on the bundled profile, then run the micro model with it.
micro = FIX / "micro.model"
run("schedule", "--model", micro, "--profile", FIX / "micro_example.profile", "-o", WORK / "s.json")
sched = load(WORK / "s.json")
csp = next(s for s in sched["structures"] if s["id"] == "csp")
check(csp["makespan_ms"] == 10 and csp["parallel"], f"csp decision {csp}")
run("prune", "--model", micro, "--method", "projection", "--rate", 3, "-o", WORK / "mp")
run("pack", "--model", micro, "--weights", WORK / "mp/weights.bpwt", "--masks", WORK / "mp/masks.bpmask",
    "-o", WORK / "micro.bpcm")
run("run", "--model", micro, "--packed", WORK / "micro.bpcm", "--schedule", WORK / "s.json",
    "--reference", WORK / "mp/weights.bpwt", "--tune", "--report", WORK / "mrun.json")
mrun = load(WORK / "mrun.json")
check(mrun["max_relative_error"] < 1e-4, "scheduled micro run differs from the dense reference")
check({e["lane"] for e in mrun["trace"]} == {"G", "C"}, "schedule did not use both lanes")
run("schedule", "--model", micro, "--packed", WORK / "micro.bpcm", "--repeats", 2,
    "--profile-out", WORK / "measured.profile")
check((WORK / "measured.profile").read_text().startswith("bpprofile 1"), "measured profile not written")

# Reproduction tables.
run("reproduce", "compression-accounting", "--report", WORK / "acc.json")
acc = load(WORK / "acc.json")
check([round(r["rate"], 2) for r in acc["rows"]] == [4.0, 8.01, 10.1, 14.02], f"accounting {acc['rows']}")
run("reproduce", "ceiling", "--report", WORK / "ceil.json")
check(abs(load(WORK / "ceil.json")["rows"][1]["ceiling"] - 5.99) <= 0.01, "ceiling")
run("reproduce", "scheme-comparison", "--seeds", 1, "--count", 256, "--no-latency", "--report", WORK / "sc.json")
check(len(load(WORK / "sc.json")["rows"]) == 4, "scheme comparison rows")

# Exit codes.
run("prune", "--model", toy, "--rate", 5000, "-o", WORK / "bad", code=3)
run("prune", "--model", toy, "-o", WORK / "bad", code=1)
run("reproduce", "no-such-table", code=1)
run("prune", "--model", toy, "--rate", 2, "--block", "8by4", "-o", WORK / "bad", code=1)
(WORK / "broken.bpcm").write_bytes(b"BPCM\x01")
run("unpack", "--packed", WORK / "broken.bpcm", "-o", WORK / "x.bpwt", code=2)
run("prune", "--model", FIX / "yolov4.model", "--rate", 8, "-o", WORK / "bad", code=2)

for f in failures:
    print("FAIL:", f)
print(f"{len(failures)} failures")
sys.exit(1 if failures else 0)
