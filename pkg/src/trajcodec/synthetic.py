import numpy as np


def moving_disc_clip(frames=8, size=64, radius=None, velocity=(2.0, 1.0), seed=0):
    """Bright disc moving over a dark textured background.

    Returns uint8 array (frames, size, size, 3).  ``velocity`` is in pixels
    per frame; (0, 0) gives a static clip.
    """
    rng = np.random.default_rng(seed)
    radius = size / 5 if radius is None else radius
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    background = 0.15 + 0.1 * (xx / size) + 0.05 * rng.random((size, size))
    background = np.repeat(background[..., None], 3, axis=-1)
    color = np.array([0.95, 0.8, 0.6])
    cx0, cy0 = size / 3, size / 2.5
    out = np.empty((frames, size, size, 3), dtype=np.uint8)
    for t in range(frames):
        cx = (cx0 + velocity[0] * t) % size
        cy = (cy0 + velocity[1] * t) % size
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        alpha = np.clip(radius - dist + 0.5, 0.0, 1.0)[..., None]
        img = alpha * color + (1 - alpha) * background
        out[t] = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    return out
