"""The pixel-level blend, isolated on synthetic maps.

Two synthetic attention maps disagree inside a box.  Per-pixel scales
decide where the edited map wins; the global interpolation weight sets
overall amplitude, and the deviation norm grows exactly linearly with
it.
"""

from pathlib import Path

import numpy as np

from adapedit import blend_attention_maps
from adapedit.images import save_heatmap

OUT = Path("demo_out/spatial_blend")
SIDE = 32


def main() -> None:
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(np.float32)

    # original: hot on the left edge; edited: hot inside a centered box
    original = np.exp(-((xx - 4) ** 2 + (yy - 16) ** 2) / 40.0)
    edited = np.where((np.abs(xx - 20) < 6) & (np.abs(yy - 16) < 6), 0.9, 0.02)
    scales = np.exp(-((xx - 20) ** 2 + (yy - 16) ** 2) / 80.0)  # trust edits near the box

    OUT.mkdir(parents=True, exist_ok=True)
    save_heatmap(original.astype(np.float32), OUT / "map_original.png")
    save_heatmap(edited.astype(np.float32), OUT / "map_edited.png")
    save_heatmap(scales.astype(np.float32), OUT / "scales.png", normalize=False)

    row_orig = original.reshape(1, -1).astype(np.float32)
    row_edit = edited.reshape(1, -1).astype(np.float32)
    flat_scales = scales.reshape(-1).astype(np.float32)

    print("weight  deviation-norm")
    for weight in (0.0, 0.25, 0.5, 0.75, 1.0):
        blended = blend_attention_maps(row_orig, row_edit, flat_scales, weight)
        norm = float(np.linalg.norm((blended - row_orig).astype(np.float64)))
        print(f"{weight:5.2f}  {norm:10.4f}")
        save_heatmap(
            blended.reshape(SIDE, SIDE), OUT / f"blend_w{int(weight * 100):03d}.png"
        )
    print(f"wrote maps to {OUT}/ (note the exactly linear norm column)")


if __name__ == "__main__":
    main()
