"""Full reference sweep over p = 1.6, ..., 5.0 through the command-line layer.

Writes a config, runs it with a process pool and compares the summary with
the embedded reference tables.  Takes several minutes; pass a smaller mesh
size as the first argument for a quick look, e.g. ``python reference_sweep.py 32``.
"""

import os
import sys
import tempfile
from pathlib import Path

from plapinv.cli import main

n = int(sys.argv[1]) if len(sys.argv) > 1 else 64
out = Path(tempfile.mkdtemp(prefix="plapinv_sweep_"))
for guess, table in (("midline", "table1"), ("diagonal", "table2")):
    cfg = out / f"{guess}.cfg"
    cfg.write_text(f"p = 1.6:5.0:0.1\nu0 = {guess}\nmesh.nx = {n}\nmesh.ny = {n}\niters = 5\n"
                   f"out.dir = {out / guess}\n")
    main(["sweep", str(cfg), "--workers", str(os.cpu_count() or 1)])
    print(f"\ncomparison against {table}:")
    main(["compare", str(out / guess / "summary.csv"), table])
print(f"\nartifacts in {out}")
