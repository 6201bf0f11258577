"""
The same pipeline from the command line
=======================================

Writes a scene file, then runs ``pointscat data-op`` and ``pointscat invert``
in a scratch directory and prints the recovered peaks.
"""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from pointscat.validation import fibonacci_sphere

work = Path(tempfile.mkdtemp())
scene = {"scatterers": [{"pos": [-0.3, 0.2, 0.1], "alpha": 0.5},
                        {"pos": [0.4, -0.2, -0.1], "alpha": 0.7}],
         "sensors": fibonacci_sphere(12).tolist()}
(work / "scene.json").write_text(json.dumps(scene))


def cli(*args):
    cmd = [sys.executable, "-m", "pointscat", *map(str, args)]
    print("$ pointscat", " ".join(map(str, args)))
    subprocess.run(cmd, cwd=work, check=True)


cli("spectrum", "--scene", "scene.json", "-o", "spectrum.json")
cli("data-op", "--scene", "scene.json", "--mode", "closed", "-o", "op.json")
cli("invert", "--operator", "op.json", "--scene", "scene.json", "--grid-lower", -1, -1, -1,
    "--grid-upper", 1, 1, 1, "--spacing", 0.05)
peaks = json.loads((work / "peaks.json").read_text())
print("rank", peaks["rank"])
for p in peaks["peaks"]:
    print("  peak", [round(c, 6) for c in p["pos"]])
print("outputs in", work)
