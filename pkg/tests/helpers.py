from iatrack.geometry import BoundingBox
from iatrack.synthetic import SyntheticConfig, TargetAppearance, generate_synthetic


def one_target(motion, frames=12, seed=0, **kw):
    """A single textured target following ``motion`` waypoints."""
    cfg = SyntheticConfig(1, frames, (motion,), (TargetAppearance(30.0, 77 + seed),), rng_seed=seed, **kw)
    return generate_synthetic(cfg)


def rand_box(rng, lo=0.0, hi=60.0):
    x, y = rng.uniform(lo, hi, 2)
    w, h = rng.uniform(5.0, 30.0, 2)
    return BoundingBox(float(x), float(y), float(w), float(h))
