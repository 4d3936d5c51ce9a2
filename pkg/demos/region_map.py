"""
Stage-2 region map
==================

Writes the selected stage-2 prescription over a grid of beliefs to
``region_map.csv`` and prints a coarse character picture of the regions.
"""

import csv
import io

from spbe.pubgoods import PubGoodsParams, emit_region_map

params = PubGoodsParams()
text = emit_region_map(0.01, params, mode="canonical", workers=2)
with open("region_map.csv", "w") as fh:
    fh.write(text)

symbols = {"mixed": "m", "(1,0,0,0)": "1", "(0,1,0,0)": "2", "(1,1,0,0)": "B"}
coarse = list(csv.reader(io.StringIO(emit_region_map(0.05, params))))[1:]
grid = {(float(r[0]), float(r[1])): symbols[r[-1]] for r in coarse}
pts = sorted({k[0] for k in grid})

print("rows: pi2 from 1 down to 0, columns: pi1 from 0 to 1")
for pi2 in reversed(pts):
    print(f"{pi2:4.2f} " + "".join(grid[(pi1, pi2)] for pi1 in pts))
print("m = both low types mix, 1 = only player 1 contributes,")
print("2 = only player 2 contributes, B = both low types contribute")
