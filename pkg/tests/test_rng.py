import numpy as np
import pytest

from renewalsim import RngStream


def test_same_triple_reproduces_bitwise():
    a = RngStream(123, 4, 5).generator().standard_normal(64)
    b = RngStream(123, 4, 5).generator().standard_normal(64)
    assert np.array_equal(a, b)


def test_distinct_axes_give_distinct_streams():
    base = RngStream(2024)
    draws = [
        base.generator().standard_normal(32),
        base.with_replication(1).generator().standard_normal(32),
        base.with_stream(1).generator().standard_normal(32),
        RngStream(2025).generator().standard_normal(32),
    ]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])


def test_with_methods_return_new_value_objects():
    s = RngStream(7, 1, 2)
    t = s.with_replication(9).with_stream(3)
    assert (s.seed, s.replication_index, s.stream_id) == (7, 1, 2)
    assert (t.seed, t.replication_index, t.stream_id) == (7, 9, 3)


def test_replication_content_ignores_consumption_order():
    direct = RngStream(99).with_replication(3).generator().exponential(size=16)
    s = RngStream(99)
    out = None
    for r in (5, 0, 3):
        out = s.with_replication(r).generator().exponential(size=16)
    assert np.array_equal(out, direct)


def test_generator_is_fresh_each_call():
    s = RngStream(11)
    first = s.generator().random(8)
    again = s.generator().random(8)
    assert np.array_equal(first, again)


def test_seed_and_index_bounds():
    RngStream(0)
    RngStream((1 << 64) - 1)
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(1 << 64)
    with pytest.raises(ValueError):
        RngStream(3, replication_index=-1)
    with pytest.raises(ValueError):
        RngStream(3, stream_id=-1)
