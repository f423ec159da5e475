import numpy as np
import pytest

from biprop.core import BinaryField, FrameSequence, UnaryField, color_distance, energy_of


def test_color_distance_examples():
    assert color_distance((10, 10, 10), (10, 10, 10)) == 0
    assert color_distance((0, 0, 0), (255, 255, 255)) == 765
    assert color_distance((10, 20, 30), (12, 18, 30)) == 4


def test_color_distance_symmetric_and_triangle(rng):
    a, b, c = rng.uniform(0, 255, (3, 50, 3))
    assert np.allclose(color_distance(a, b), color_distance(b, a))
    assert np.all(color_distance(a, c) <= color_distance(a, b) + color_distance(b, c) + 1e-12)


def test_frame_sequence_validation():
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((0, 4, 4, 3)))
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((1, 4, 4)))
    with pytest.raises(ValueError):
        FrameSequence(np.full((1, 2, 2, 3), 300.0))
    seq = FrameSequence(np.zeros((2, 3, 4, 3)))
    assert (seq.count, seq.height, seq.width) == (2, 3, 4)


def test_field_validation():
    with pytest.raises(ValueError):
        UnaryField(np.array([-1.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        UnaryField(np.array([np.inf]), np.array([0.0]))
    with pytest.raises(ValueError):
        BinaryField(np.array([[1, 0]]), np.array([1.0]), np.array([1.0]))


def test_energy_all_fg_is_unary_sum(rng):
    n = 6
    unary = UnaryField(rng.uniform(0, 5, n), rng.uniform(0, 5, n))
    pairs = np.array([[0, 1], [1, 2], [3, 4]])
    binary = BinaryField.symmetric(pairs, rng.uniform(0, 3, 3))
    labels = np.ones(n, dtype=bool)
    assert energy_of(labels, unary, binary) == pytest.approx(unary.cost_fg.sum())


def test_energy_two_node_example():
    # enumeration over the 4 labelings puts the minimum at (FG, BG) with
    # energy 0 + 0 + 3
    unary = UnaryField(np.array([0.0, 10.0]), np.array([10.0, 0.0]))
    binary = BinaryField.symmetric(np.array([[0, 1]]), np.array([3.0]))
    energies = {
        (True, True): 0 + 10,
        (True, False): 0 + 0 + 3,
        (False, True): 10 + 10 + 3,
        (False, False): 10 + 0,
    }
    for labels, expected in energies.items():
        assert energy_of(np.array(labels), unary, binary) == pytest.approx(expected)
    assert min(energies.values()) == 3


def test_energy_single_node():
    unary = UnaryField(np.array([1.0]), np.array([3.0]))
    empty = BinaryField(np.empty((0, 2), dtype=int), np.empty(0), np.empty(0))
    assert energy_of(np.array([True]), unary, empty) == 1.0


def test_energy_reindex_invariance(rng):
    n = 8
    unary = UnaryField(rng.uniform(0, 5, n), rng.uniform(0, 5, n))
    pairs = np.array([[0, 3], [2, 5], [1, 7], [4, 6]])
    binary = BinaryField(pairs, rng.uniform(0, 3, 4), rng.uniform(0, 3, 4))
    labels = rng.uniform(size=n) > 0.5

    perm = rng.permutation(n)
    inv = np.empty(n, dtype=int)
    inv[perm] = np.arange(n)
    new_pairs = inv[pairs]
    flip = new_pairs[:, 0] > new_pairs[:, 1]
    w_fwd = np.where(flip, binary.w_bwd, binary.w_fwd)
    w_bwd = np.where(flip, binary.w_fwd, binary.w_bwd)
    binary2 = BinaryField(np.sort(new_pairs, axis=1), w_fwd, w_bwd)
    unary2 = UnaryField(unary.cost_fg[perm], unary.cost_bg[perm])
    assert energy_of(labels[perm], unary2, binary2) == pytest.approx(
        energy_of(labels, unary, binary)
    )


def test_energy_label_symmetry(rng):
    # flipping all labels while swapping per-node costs keeps the energy of
    # symmetric binary fields
    n = 7
    unary = UnaryField(rng.uniform(0, 5, n), rng.uniform(0, 5, n))
    pairs = np.array([[0, 1], [2, 3], [4, 5], [5, 6]])
    binary = BinaryField.symmetric(pairs, rng.uniform(0, 3, 4))
    labels = rng.uniform(size=n) > 0.5
    swapped = UnaryField(unary.cost_bg, unary.cost_fg)
    assert energy_of(~labels, swapped, binary) == pytest.approx(
        energy_of(labels, unary, binary)
    )


def test_energy_node_set_mismatch():
    unary = UnaryField(np.array([1.0]), np.array([2.0]))
    empty = BinaryField(np.empty((0, 2), dtype=int), np.empty(0), np.empty(0))
    with pytest.raises(ValueError):
        energy_of(np.array([True, False]), unary, empty)
    big_pairs = BinaryField(np.array([[0, 5]]), np.array([1.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        energy_of(np.array([True]), unary, big_pairs)
