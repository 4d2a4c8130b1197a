"""How correlation turns into per-word editing schedules.

Plots the scale curve ``tau = lambda_tau * (1 - exp(A - 1))`` and shows
the resulting blend/preserve gate tables for a few weights: the lower a
word's correlation with the edited words, the earlier its map is frozen
to the original, and shrinking lambda_tau lengthens blending for every
word at once.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from adapedit import build_gate_schedule, temporal_scales

OUT = Path("demo_out")


def main() -> None:
    a = np.linspace(0.0, 1.0, 256).astype(np.float32)

    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 3.6))
    for lt in (0.25, 0.5, 1.0, 1.5):
        left.plot(a, temporal_scales(a, set(), lt), label=f"weight {lt}")
    left.set_xlabel("correlation with key words")
    left.set_ylabel("temporal scale (fraction of steps preserved)")
    left.legend(fontsize=8)
    left.set_title("scale curve")

    # gate table for three words at correlations 0.1 / 0.6 / key
    steps = 50
    labels = ["background word (A=0.1)", "related word (A=0.6)", "key word"]
    tau = temporal_scales(np.array([0.1, 0.6, 1.0]), {2}, 1.0)
    schedule = build_gate_schedule(tau, steps)
    grid = np.zeros((3, steps))
    for i in range(3):
        for col, t in enumerate(range(steps, 0, -1)):
            grid[i, col] = 1.0 if schedule.branch(i, t) == "BLEND" else 0.0
    right.imshow(grid, aspect="auto", cmap="RdYlGn", interpolation="nearest")
    right.set_yticks(range(3), labels, fontsize=8)
    right.set_xlabel("denoising step (T on the left, 1 on the right)")
    right.set_title("green = blend, red = preserve")

    OUT.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(OUT / "temporal_gating.png", dpi=130)
    print(f"wrote {OUT}/temporal_gating.png")
    for i, label in enumerate(labels):
        print(f"{label}: preserves final {schedule.preserve_steps(i)} of {steps} steps")


if __name__ == "__main__":
    main()
