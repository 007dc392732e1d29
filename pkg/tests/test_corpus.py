import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbrca.corpus import (
    RegimeLabels,
    SplitSpec,
    TrajectoryCorpus,
    corpus_hash,
    denormalize,
    load,
    loads,
    normalize,
    save,
    serialize,
    split_windows,
    window,
    window_corpus,
)
from hbrca.errors import DegenerateInputError, ParameterError, ParseError


def make_corpus(positions, **kw):
    positions = np.asarray(positions, dtype=float)
    names = [f"A{i:02d}" for i in range(positions.shape[1])]
    return TrajectoryCorpus(positions=positions, atom_names=names, **kw)


def test_normalize_scales_by_max_abs():
    c = make_corpus(np.array([-4.0, 2.0]).reshape(1, 1, 2, 1))
    n = normalize(c)
    assert n.normalization_scale == 4.0
    assert n.positions.min() == -1.0 and n.positions.max() == 0.5


def test_normalize_identity_when_already_unit():
    c = make_corpus(np.array([1.0, -0.25]).reshape(1, 1, 2, 1))
    n = normalize(c)
    assert n.normalization_scale == 1.0
    assert np.array_equal(n.positions, c.positions)


def test_normalize_rejects_all_zero():
    with pytest.raises(DegenerateInputError):
        normalize(make_corpus(np.zeros((1, 2, 3, 1))))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_denormalize_round_trip_within_one_ulp(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=rng.uniform(0.1, 50.0), size=(2, 3, 4, 2))
    c = make_corpus(x)
    back = denormalize(normalize(c)).positions
    ulp = np.spacing(np.abs(x))
    assert np.all(np.abs(back - x) <= ulp)


def test_window_counts_match_floor_division():
    traj = np.zeros((3, 10_000, 2))
    assert window(traj, 350).shape[0] == 28
    assert window(traj, 5).shape[0] == 2000


def test_window_of_full_length_is_identity():
    rng = np.random.default_rng(0)
    traj = rng.normal(size=(2, 10, 3))
    w = window(traj, 10)
    assert w.shape == (1, 2, 10, 3)
    assert np.array_equal(w[0], traj)


def test_window_validates_arguments():
    traj = np.zeros((2, 10, 3))
    with pytest.raises(ParameterError):
        window(traj, 1)
    with pytest.raises(ParameterError):
        window(traj, 11)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1),
       st.integers(min_value=2, max_value=7))
def test_window_preserves_values_bitwise_in_order(seed, t_win):
    rng = np.random.default_rng(seed)
    traj = rng.normal(size=(3, 23, 2))
    wins = window(traj, t_win)
    for w in range(wins.shape[0]):
        assert np.array_equal(wins[w], traj[:, w * t_win : (w + 1) * t_win, :])


def test_window_corpus_labels_by_boundary():
    pos = np.arange(2 * 100 * 1, dtype=float).reshape(1, 2, 100, 1)
    c = make_corpus(pos, labels=RegimeLabels(boundary_step=50, root_cause_nodes={1}))
    wc = window_corpus(c, 10)
    assert wc.n_samples == 10
    assert all(wc.labels.regimes[i] == "persist" for i in range(5))
    assert all(wc.labels.regimes[i] == "separated" for i in range(5, 10))
    assert wc.labels.root_cause_nodes == {1}


def test_window_corpus_drops_straddling_window():
    pos = np.zeros((1, 2, 100, 1))
    pos += np.arange(100).reshape(1, 1, 100, 1)
    c = make_corpus(pos, labels=RegimeLabels(boundary_step=45, root_cause_nodes=set()))
    wc = window_corpus(c, 10)
    # window 4 covers steps 40..49: half pre, half post -> unlabeled
    assert 4 not in wc.labels.regimes
    assert wc.labels.regimes[3] == "persist"
    assert wc.labels.regimes[5] == "separated"


# -- file format -----------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    c = make_corpus(
        rng.normal(size=(2, 3, 4, 3)),
        labels=RegimeLabels(regimes={0: "persist", 1: "separated"},
                            root_cause_nodes={2}, boundary_step=2),
        roles=[{"donor": 0, "hydrogen": 1, "acceptor": 2}],
    )
    path = tmp_path / "c.txt"
    digest = save(c, path)
    back = load(path)
    assert np.array_equal(back.positions, c.positions)
    assert back.atom_names == c.atom_names
    assert back.labels.regimes == c.labels.regimes
    assert back.labels.root_cause_nodes == {2}
    assert back.roles == c.roles
    assert corpus_hash(back) == digest


def test_handwritten_two_atom_file_parses_exactly():
    content = (
        '{"schema": 1, "n_atoms": 2, "n_steps": 3, "n_dims": 3, "dt": 0.5, '
        '"atom_names": ["O1", "H1"], "normalization_scale": 1.0}\n'
        "sample,atom,t,x,y,z\n"
        "0,0,0,0.1,0.2,0.3\n"
        "0,0,1,0.4,0.5,0.6\n"
        "0,0,2,0.7,0.8,0.9\n"
        "0,1,0,-1,-2,-3\n"
        "0,1,1,-4,-5,-6\n"
        "0,1,2,-7,-8,-9\n"
    )
    c = loads(content)
    assert c.positions.shape == (1, 2, 3, 3)
    assert c.positions[0, 0, 1, 2] == 0.6
    assert c.positions[0, 1, 2, 0] == -7.0
    assert c.atom_names == ["O1", "H1"]
    assert c.dt == 0.5


def test_missing_metadata_is_parse_error():
    with pytest.raises(ParseError):
        loads("sample,atom,t,x,y,z\n0,0,0,1,2,3\n")


def test_ragged_row_reports_line_number():
    content = (
        '{"schema": 1, "n_atoms": 1, "n_steps": 2, "n_dims": 3, "dt": 1.0, '
        '"atom_names": ["A"], "normalization_scale": 1.0}\n'
        "sample,atom,t,x,y,z\n"
        "0,0,0,1,2,3\n"
        "0,0,1,1,2\n"
    )
    with pytest.raises(ParseError) as err:
        loads(content)
    assert err.value.line == 4


def test_nonfinite_value_rejected():
    content = (
        '{"schema": 1, "n_atoms": 1, "n_steps": 1, "n_dims": 1, "dt": 1.0, '
        '"atom_names": ["A"], "normalization_scale": 1.0}\n'
        "sample,atom,t,x\n"
        "0,0,0,nan\n"
    )
    with pytest.raises(ParseError):
        loads(content)


def test_unknown_metadata_key_rejected():
    content = (
        '{"schema": 1, "n_atoms": 1, "n_steps": 1, "n_dims": 1, "dt": 1.0, '
        '"atom_names": ["A"], "normalization_scale": 1.0, "mystery": 1}\n'
        "sample,atom,t,x\n"
        "0,0,0,0.5\n"
    )
    with pytest.raises(ParseError):
        loads(content)


def test_out_of_order_rows_rejected():
    content = (
        '{"schema": 1, "n_atoms": 1, "n_steps": 2, "n_dims": 1, "dt": 1.0, '
        '"atom_names": ["A"], "normalization_scale": 1.0}\n'
        "sample,atom,t,x\n"
        "0,0,1,1\n"
        "0,0,0,2\n"
    )
    with pytest.raises(ParseError):
        loads(content)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_serialization_round_trip_is_exact(seed):
    rng = np.random.default_rng(seed)
    c = make_corpus(rng.normal(scale=100.0, size=(1, 2, 3, 2)))
    assert np.array_equal(loads(serialize(c)).positions, c.positions)


# -- splits -----------------------------------------------------------------------


def test_splits_disjoint_exhaustive_reproducible():
    rng = np.random.default_rng(5)
    c = make_corpus(rng.normal(size=(20, 2, 3, 1)))
    spec = SplitSpec(seed=9)
    tr, va, te = split_windows(c, spec)
    again = split_windows(c, SplitSpec(seed=9))
    assert np.array_equal(tr, again[0])
    all_idx = np.sort(np.concatenate([tr, va, te]))
    assert np.array_equal(all_idx, np.arange(20))
    assert len(tr) == 16 and len(va) == 2 and len(te) == 2


def test_split_depends_on_corpus_hash():
    rng = np.random.default_rng(5)
    c1 = make_corpus(rng.normal(size=(20, 2, 3, 1)))
    c2 = make_corpus(rng.normal(size=(20, 2, 3, 1)))
    tr1, _, _ = split_windows(c1, SplitSpec(seed=9))
    tr2, _, _ = split_windows(c2, SplitSpec(seed=9))
    assert not np.array_equal(tr1, tr2)


def test_split_fractions_validated():
    with pytest.raises(ParameterError):
        SplitSpec(train=0.5, val=0.1, test=0.1)
