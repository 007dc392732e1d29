import numpy as np

from hbrca.graph import pair_index


def test_transpose_permutation_is_self_inverse():
    for n in (2, 3, 5, 8):
        idx = pair_index(n)
        sigma = idx.sigma
        assert np.array_equal(sigma[sigma], np.arange(n * (n - 1)))


def test_senders_receivers_consistent_with_transpose():
    idx = pair_index(4)
    for p in range(idx.n_pairs):
        q = idx.sigma[p]
        assert idx.senders[p] == idx.receivers[q]
        assert idx.receivers[p] == idx.senders[q]


def test_matrix_round_trip():
    rng = np.random.default_rng(0)
    idx = pair_index(5)
    flat = rng.normal(size=(idx.n_pairs, 3))
    mat = idx.to_matrix(flat)
    assert np.array_equal(idx.from_matrix(mat), flat)
    assert np.array_equal(mat[np.arange(5), np.arange(5)], np.zeros((5, 3)))


def test_batched_sigma_offsets():
    idx1 = pair_index(3)
    idx2 = pair_index(3, batch=2)
    e = idx1.n_pairs
    assert np.array_equal(idx2.sigma[:e], idx1.sigma)
    assert np.array_equal(idx2.sigma[e:], idx1.sigma + e)


def test_receiver_major_grouping():
    idx = pair_index(4)
    # incoming edges of each receiver are contiguous blocks of N-1
    blocks = idx.receivers.reshape(4, 3)
    assert np.array_equal(blocks, np.repeat(np.arange(4), 3).reshape(4, 3))
