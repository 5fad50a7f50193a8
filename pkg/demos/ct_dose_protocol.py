"""Brain-dose sensitivity for synthetic head CT exams.

The full protocol (200 repetitions on 8848 records) takes several minutes;
pass a smaller repetition count for a quick look:

    python3 demos/ct_dose_protocol.py 20
"""
import sys
import time

from gsapme.cli import RunConfig, run
from gsapme.report import emit_svg

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
cfg = RunConfig.from_dict({
    "generator": {"model": "ct-dose", "n": 8848, "exam_class": "head", "organ": "brain"},
    "preset": "ct-protocol",
    "reps": reps,
    "seed": 1,
})
t0 = time.perf_counter()
doc = run(cfg)
print(f"{reps} repetitions in {time.perf_counter() - t0:.0f} s\n")
for method, rows in doc.methods.items():
    print(method)
    for row in sorted(rows, key=lambda r: r["rank"]):
        print(f"  {row['rank']}  {row['name']:<7} {row['estimate']:7.3f}   [{row['ci_low']:.3f}, {row['ci_high']:.3f}]")
for line in doc.meta["warnings"]:
    print("warning:", line)
emit_svg(doc, "ct_brain_dose.svg", title="brain dose, head exams")
print("\nchart written to ct_brain_dose.svg")
