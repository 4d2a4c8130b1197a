"""Walk one edit end to end on the toy backend.

The edit swaps "standing" for "sitting".  Pass 1 renders both prompts
on the same noise trajectory and records every cross-attention map;
the word-level statistics below come from the last recorded step, and
pass 2 replays the seed with blended maps injected.
"""

from pathlib import Path

import numpy as np

from adapedit import EditConfig, ToyBackend, run_edit
from adapedit.images import save_heatmap, save_image

OUT = Path("demo_out/toy_edit")


def main() -> None:
    config = EditConfig(
        prompt="a dog standing on the grass",
        edit="a dog sitting on the grass",
        seed=42,
    ).validate()

    result = run_edit(ToyBackend(), config.prompt, config.edit, config)

    print(f"{'word':>10}  {'corr':>6}  {'tau':>6}  preserve-steps")
    for i, word in enumerate(result.guidance.words):
        marker = " <- key word" if i in result.alignment.key_set else ""
        print(
            f"{word:>10}  {result.guidance.correlation[i]:6.3f}"
            f"  {result.guidance.tau[i]:6.3f}"
            f"  {result.schedule.preserve_steps(i):3d}/{config.steps}{marker}"
        )

    print(f"\nmap divergence over the run: {result.map_divergence:.2f}")
    print(f"image L2 distance:           {result.image_l2:.1f}")

    OUT.mkdir(parents=True, exist_ok=True)
    save_image(result.image, OUT / "original.png")
    save_image(result.edited_image, OUT / "edited.png")
    save_heatmap(result.scales, OUT / "spatial_scales.png", normalize=False)
    diff = np.abs(
        result.image.astype(np.int16) - result.edited_image.astype(np.int16)
    ).max(axis=2) / 255.0
    save_heatmap(diff.astype(np.float32), OUT / "pixel_change.png")
    print(f"\nwrote {OUT}/original.png, edited.png, spatial_scales.png, pixel_change.png")


if __name__ == "__main__":
    main()
