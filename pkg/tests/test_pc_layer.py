import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import RTOL, max_rel_error, numeric_grad
from pcrnn.cells import CellKind, CellState, cell_backward, cell_forward
from pcrnn.errors import ConfigError, UsageError
from pcrnn.pc_layer import (RoutingMode, build_layer, closed_form_lstm, closed_form_rnn,
                            count_params, pc_backward, pc_forward, route, zero_states)

SPLIT, FULL = RoutingMode.SPLIT, RoutingMode.FULL


def random_layer(r, kind, d, m, n, routing, scale=0.5):
    layer = build_layer(kind, d, m, n, routing)
    for c in layer.cells:
        c.W[...] = r.normal(scale=scale, size=c.W.shape)
        c.b[...] = r.normal(scale=scale, size=c.b.shape)
    return layer


def random_states(r, layer, batch=(2,)):
    return [CellState(r.normal(size=(*batch, layer.cell_hidden)),
                      r.normal(size=(*batch, layer.cell_hidden)) if layer.kind.is_lstm else None)
            for _ in range(layer.wide)]


def test_build_1950_units_three_ways():
    layer = build_layer(CellKind.lstm(), 1950, 1950, 3, SPLIT)
    assert layer.wide == 3 and len(layer.cells) == 3
    assert all(c.hidden_dim == 650 and c.input_dim == 650 for c in layer.cells)


def test_build_wide_one():
    layer = build_layer(CellKind.lstm(), 8, 8, 1, FULL)
    assert len(layer.cells) == 1 and layer.cells[0].hidden_dim == 8


def test_build_rejects_non_divisible():
    with pytest.raises(ConfigError, match="8"):
        build_layer(CellKind.lstm(), 10, 8, 3, SPLIT)
    with pytest.raises(ConfigError, match="10"):
        build_layer(CellKind.lstm(), 10, 9, 3, SPLIT)
    with pytest.raises(ConfigError):
        build_layer(CellKind.lstm(), 10, 8, 0, SPLIT)


def test_routing_slices(rng):
    layer = build_layer(CellKind.lstm(), 6, 6, 3, SPLIT)
    x = np.arange(6.0)
    parts = route(layer, x)
    np.testing.assert_array_equal(np.concatenate(parts), x)
    full = build_layer(CellKind.lstm(), 6, 6, 3, FULL)
    assert all(p is x for p in route(full, x))


def test_wide_one_matches_bare_cell(rng):
    for routing in (SPLIT, FULL):
        layer = random_layer(rng, CellKind.lstm(), 4, 6, 1, routing)
        x = rng.normal(size=(3, 4))
        st_ = random_states(rng, layer, (3,))
        s_layer, h_layer, tapes = pc_forward(layer, x, st_)
        s_cell, h_cell, tape = cell_forward(layer.cells[0], x, st_[0])
        assert h_layer.tobytes() == h_cell.tobytes()
        assert s_layer[0].c.tobytes() == s_cell.c.tobytes()
        g = rng.normal(size=(3, 6))
        gl, dxl, dsl = pc_backward(layer, tapes, g, None)
        gc_, dxc, dsc = cell_backward(layer.cells[0], tape, g, np.zeros_like(g))
        assert gl[0].W.tobytes() == gc_.W.tobytes()
        assert dxl.tobytes() == dxc.tobytes()
        assert dsl[0].h.tobytes() == dsc.h.tobytes()


@pytest.mark.parametrize("wide", [2, 3, 5])
@pytest.mark.parametrize("routing", [SPLIT, FULL])
def test_forward_equals_manual_composition(rng, wide, routing):
    layer = random_layer(rng, CellKind.lstm(), 2 * wide * 2, wide * 3, wide, routing)
    x = rng.normal(size=(2, layer.input_dim))
    states = random_states(rng, layer)
    _, h, _ = pc_forward(layer, x, states)
    d = layer.cell_input
    manual = []
    for k, cell in enumerate(layer.cells):
        xk = x[:, k * d:(k + 1) * d] if routing is SPLIT else x
        manual.append(cell_forward(cell, xk, states[k])[1])
    assert h.tobytes() == np.concatenate(manual, axis=-1).tobytes()


@pytest.mark.parametrize("wide", [2, 3, 5])
def test_perturbing_one_cell_leaves_others_bit_unchanged(rng, wide):
    layer = random_layer(rng, CellKind.lstm(), wide * 2, wide * 2, wide, SPLIT)
    x = rng.normal(size=(2, layer.input_dim))
    states = random_states(rng, layer)
    _, before, _ = pc_forward(layer, x, states)
    H = layer.cell_hidden
    for j in range(wide):
        layer.cells[j].W += rng.normal(size=layer.cells[j].W.shape)
        _, after, _ = pc_forward(layer, x, states)
        for i in range(wide):
            sl = slice(i * H, (i + 1) * H)
            same = before[:, sl].tobytes() == after[:, sl].tobytes()
            assert same == (i != j)
        before = after


def test_full_routing_grad_x_is_sum_of_cells(rng):
    layer = random_layer(rng, CellKind.lstm(), 4, 6, 2, FULL)
    x = rng.normal(size=(2, 4))
    states = random_states(rng, layer)
    _, _, tapes = pc_forward(layer, x, states)
    g = rng.normal(size=(2, 6))
    _, dx, _ = pc_backward(layer, tapes, g, None)
    parts = [cell_backward(c, t, g[:, 3 * k:3 * (k + 1)], np.zeros((2, 3)))[1]
             for k, (c, t) in enumerate(zip(layer.cells, tapes))]
    assert dx.tobytes() == (parts[0] + parts[1]).tobytes()


def test_zero_upstream_gives_zero(rng):
    layer = random_layer(rng, CellKind.lstm(), 6, 6, 3, SPLIT)
    _, _, tapes = pc_forward(layer, rng.normal(size=(2, 6)), random_states(rng, layer))
    grads, dx, prev = pc_backward(layer, tapes, np.zeros((2, 6)), None)
    assert not dx.any()
    assert not any(g.W.any() or g.b.any() for g in grads)
    assert not any(p.h.any() or p.c.any() for p in prev)


def test_mask_zeroes_slice_and_state(rng):
    layer = random_layer(rng, CellKind.lstm(), 6, 6, 3, SPLIT)
    x = rng.normal(size=(2, 6))
    states = random_states(rng, layer)
    s0, h0, _ = pc_forward(layer, x, states)
    s1, h1, tapes = pc_forward(layer, x, states, mask={1})
    assert not h1[:, 2:4].any()
    assert not s1[1].h.any() and not s1[1].c.any()
    assert h1[:, :2].tobytes() == h0[:, :2].tobytes()
    assert h1[:, 4:].tobytes() == h0[:, 4:].tobytes()
    assert tapes[1] is None


def test_mask_idempotent_and_empty_is_identity(rng):
    layer = random_layer(rng, CellKind.lstm(), 6, 6, 3, SPLIT)
    x = rng.normal(size=(2, 6))
    states = random_states(rng, layer)
    _, plain, _ = pc_forward(layer, x, states)
    _, empty, _ = pc_forward(layer, x, states, mask=set())
    assert plain.tobytes() == empty.tobytes()
    once_s, once, _ = pc_forward(layer, x, states, mask={0, 2})
    twice_s, twice, _ = pc_forward(layer, x, once_s, mask={0, 2})
    _, again, _ = pc_forward(layer, x, once_s, mask=[0, 2, 0])
    assert twice.tobytes() == again.tobytes()
    assert not once[:, :2].any() and not twice[:, :2].any()


def test_masked_cells_get_zero_gradient(rng):
    layer = random_layer(rng, CellKind.lstm(), 6, 6, 3, SPLIT)
    _, _, tapes = pc_forward(layer, rng.normal(size=(2, 6)), random_states(rng, layer), mask={2})
    grads, dx, prev = pc_backward(layer, tapes, rng.normal(size=(2, 6)), None, mask={2})
    assert not grads[2].W.any() and not grads[2].b.any()
    assert not dx[:, 4:].any()
    assert not prev[2].h.any()
    assert grads[0].W.any()


def test_bad_mask_and_tapes(rng):
    layer = random_layer(rng, CellKind.lstm(), 6, 6, 3, SPLIT)
    states = random_states(rng, layer)
    with pytest.raises(UsageError):
        pc_forward(layer, np.zeros((2, 6)), states, mask={3})
    with pytest.raises(UsageError):
        pc_forward(layer, np.zeros((2, 6)), states, mask={-1})
    _, _, tapes = pc_forward(layer, np.zeros((2, 6)), states)
    other = random_layer(rng, CellKind.lstm(), 6, 6, 3, SPLIT)
    with pytest.raises(UsageError):
        pc_backward(other, tapes, np.zeros((2, 6)), None)
    with pytest.raises(UsageError):
        pc_backward(layer, tapes[:2], np.zeros((2, 6)), None)


def fd_check_layer(r, kind, d, m, n, routing, mask=frozenset(), batch=(2,)):
    layer = random_layer(r, kind, d, m, n, routing)
    x = r.normal(size=(*batch, d))
    states = random_states(r, layer, batch)
    wh = r.normal(size=(*batch, m))
    wh_s = [r.normal(size=(*batch, layer.cell_hidden)) for _ in range(n)]
    wc_s = [r.normal(size=(*batch, layer.cell_hidden)) if kind.is_lstm else None for _ in range(n)]

    def f():
        new, h, _ = pc_forward(layer, x, states, mask)
        val = float((wh * h).sum())
        for s, a, b in zip(new, wh_s, wc_s):
            val += float((a * s.h).sum())
            if b is not None:
                val += float((b * s.c).sum())
        return val

    _, _, tapes = pc_forward(layer, x, states, mask)
    grads, dx, prev = pc_backward(layer, tapes, wh, [CellState(a, b) for a, b in zip(wh_s, wc_s)],
                                  mask)
    pairs = [(dx, x)]
    for g, c, p, s in zip(grads, layer.cells, prev, states):
        pairs += [(g.W, c.W), (g.b, c.b), (p.h, s.h)]
        if kind.is_lstm:
            pairs.append((p.c, s.c))
    return max(max_rel_error(a, numeric_grad(f, t)) for a, t in pairs)


@pytest.mark.parametrize("routing", [SPLIT, FULL])
@pytest.mark.parametrize("kind", [CellKind.lstm(), CellKind.rnn("tanh")], ids=["lstm", "rnn"])
@pytest.mark.parametrize("seed", range(3))
def test_layer_backward_matches_finite_differences(seed, kind, routing):
    r = np.random.default_rng(100 + seed)
    assert fd_check_layer(r, kind, 6, 6, 3, routing) < RTOL


def test_masked_layer_backward_matches_finite_differences():
    r = np.random.default_rng(5)
    assert fd_check_layer(r, CellKind.lstm(), 6, 6, 3, SPLIT, mask=frozenset({1})) < RTOL


def test_threads_are_bit_identical(rng):
    layer = random_layer(rng, CellKind.lstm(), 8, 8, 4, FULL)
    x = rng.normal(size=(3, 8))
    states = random_states(rng, layer, (3,))
    g = rng.normal(size=(3, 8))
    s1, h1, t1 = pc_forward(layer, x, states, threads=1)
    s4, h4, t4 = pc_forward(layer, x, states, threads=4)
    assert h1.tobytes() == h4.tobytes()
    a = pc_backward(layer, t1, g, None, threads=1)
    b = pc_backward(layer, t4, g, None, threads=4)
    assert a[1].tobytes() == b[1].tobytes()
    for ga, gb in zip(a[0], b[0]):
        assert ga.W.tobytes() == gb.W.tobytes()


@pytest.mark.parametrize("n, expected", [(1, 30_427_800), (2, 15_217_800), (3, 10_147_800),
                                         (5, 6_091_800)])
def test_lstm_counts_for_1950_units(n, expected):
    layer = build_layer(CellKind.lstm(), 1950, 1950, n, SPLIT)
    assert count_params(layer) == expected == closed_form_lstm(1950, n)


def test_1950_units_do_not_split_four_ways():
    # 1950 / 4 is not integral, so no equal-width layer exists
    with pytest.raises(ConfigError, match="1950"):
        build_layer(CellKind.lstm(), 1950, 1950, 4, SPLIT)
    with pytest.raises(ConfigError):
        closed_form_lstm(1950, 4)


def test_literal_rnn_count():
    layer = build_layer(CellKind.rnn(literal=True), 4, 4, 1, SPLIT)
    assert count_params(layer) == 20 == closed_form_rnn(4, 1)


def divisor_pairs():
    return st.integers(1, 12).flatmap(
        lambda n: st.integers(1, 10).map(lambda k: (n * k, n)))


@settings(max_examples=40, deadline=None)
@given(divisor_pairs())
def test_closed_forms_match_exact_counts(mn):
    m, n = mn
    assert count_params(build_layer(CellKind.lstm(), m, m, n, SPLIT)) == closed_form_lstm(m, n)
    lit = build_layer(CellKind.rnn(literal=True), m, m, n, SPLIT)
    assert count_params(lit) == closed_form_rnn(m, n)


def test_count_strictly_decreases_with_wide():
    m = 120
    divisors = [n for n in range(1, m + 1) if m % n == 0]
    counts = [count_params(build_layer(CellKind.lstm(), m, m, n, SPLIT)) for n in divisors]
    assert all(a > b for a, b in zip(counts, counts[1:]))


def test_zero_states_shapes():
    layer = build_layer(CellKind.lstm(), 4, 4, 2, SPLIT)
    st_ = zero_states(layer, (5,))
    assert len(st_) == 2 and st_[0].h.shape == (5, 2) and st_[0].c.shape == (5, 2)
