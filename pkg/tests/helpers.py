import numpy as np

from kinetic.density import DensityField


def tiny_config(**overrides) -> dict:
    """A small d = 1 periodic scenario as a raw config mapping."""
    raw = dict(
        grid=dict(dim=1, x_nodes=32, x_extent=8.0, x_topology="periodic", v_count=2, m_nodes=32),
        model=dict(F_family="linear", kappa=1.0, S_ref=1.0, m_minus=1.0, m_plus=2.0, lambda0=1.0, eps=0.5),
        initial=dict(profile="gaussian", center=0.0, width=1.0, mass=1.0),
        run=dict(t_end=0.5, output_every=0.25, threads=1, out_dir="out"),
    )
    for section, values in overrides.items():
        raw[section].update(values)
    return raw


def random_density(grid, rng) -> DensityField:
    values = rng.uniform(0.0, 1.0, size=grid.shape)
    values[..., -1] = 0.0
    return DensityField(values)
