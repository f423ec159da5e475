import numpy as np
import pytest

from biprop.core import BinaryField, UnaryField
from biprop.overseg import identity_map, region_adjacency


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def random_lattice_instance(rng, h, w, u_hi=10.0, v_hi=5.0, symmetric=True):
    """Random pixel-mode energies on an h x w lattice."""
    rmap = identity_map(h, w)
    adj = region_adjacency(rmap)
    n = h * w
    unary = UnaryField(rng.uniform(0, u_hi, n), rng.uniform(0, u_hi, n))
    if symmetric:
        binary = BinaryField.symmetric(adj.pairs, rng.uniform(0, v_hi, adj.pair_count))
    else:
        binary = BinaryField(
            adj.pairs, rng.uniform(0, v_hi, adj.pair_count), rng.uniform(0, v_hi, adj.pair_count)
        )
    return rmap, adj, unary, binary


def random_guides(rng, h, w, style="iid"):
    if style == "iid":
        return rng.uniform(0, 255, (h, w, 3)), rng.uniform(0, 255, (h, w, 3))
    if style == "smooth":
        base = rng.uniform(60, 200, 3)
        gp = np.clip(base + np.cumsum(rng.normal(0, 3, (h, w, 3)), axis=1), 0, 255)
        gc = np.clip(gp + rng.normal(0, 2, (h, w, 3)), 0, 255)
        return gp, gc
    raise ValueError(style)
