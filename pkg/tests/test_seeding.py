"""Determinism and independence of label-keyed random streams."""

import numpy as np

from mimolink.seeding import seed_stream, stream_key


def test_same_labels_reproduce_bit_identical_streams():
    a = seed_stream(1234, ("drop", 5, "coupling")).integers(0, 2**63, 64)
    b = seed_stream(1234, ("drop", 5, "coupling")).integers(0, 2**63, 64)
    assert np.array_equal(a, b)


def test_distinct_labels_decorrelated():
    x = seed_stream(99, ("drop", 0)).standard_normal(100_000)
    y = seed_stream(99, ("drop", 1)).standard_normal(100_000)
    rho = np.corrcoef(x, y)[0, 1]
    assert abs(rho) < 0.01


def test_key_depends_on_seed_and_labels():
    assert stream_key(1, ("a",)) != stream_key(2, ("a",))
    assert stream_key(1, ("a",)) != stream_key(1, ("b",))
    assert stream_key(1, ("a", 1)) != stream_key(1, (("a", 1),))


def test_golden_vector_pins_cross_platform_output():
    # frozen from the Philox stream keyed by (0, ("golden",)); any change
    # here breaks reproducibility of archived results
    got = seed_stream(0, ("golden",)).integers(0, 2**63, 4)
    expected = np.array([2075307385879950064, 3500018520909907369,
                         8436967643368010793, 2118717861967519492])
    assert np.array_equal(got, expected)
