import numpy as np
import pytest

from qkdpost.authmac import AuthTag
from qkdpost.budget import KeyPool
from qkdpost.channel import ChannelModel, simulate_quantum_exchange
from qkdpost.gf2core import BitString
from qkdpost.sift import Basis, Click, DetectionTable, RawDetection, basis_sift, key_sift, split_by_basis


def _rec(a, ab, c, bb, b=0):
    return RawDetection(a, Basis[ab], Click[c], Basis[bb], b)


def _pools(n=20_000, seed=0):
    bits = BitString.random(n, np.random.default_rng(seed))
    return KeyPool(bits), KeyPool(bits)


def test_key_sift_drops_no_clicks():
    table = DetectionTable.from_records([
        _rec(1, "X", "SINGLE", "X", 1),
        _rec(0, "Z", "NONE", "X"),
        _rec(1, "Z", "SINGLE", "Z", 1),
        _rec(0, "X", "NONE", "Z"),
    ])
    raw = key_sift(table, np.random.default_rng(0))
    assert raw.n == 2
    assert raw.index.tolist() == [0, 2]
    assert raw.alice_bits.tolist() == raw.bob_bits.tolist() == [1, 1]


def test_double_clicks_get_uniform_bits():
    recs = [_rec(0, "X", "DOUBLE", "X") for _ in range(20_000)]
    raw = key_sift(DetectionTable.from_records(recs), np.random.default_rng(1))
    assert raw.n == 20_000
    assert abs(raw.bob_bits.mean() - 0.5) < 0.02
    # active basis choice is kept
    assert (raw.bob_basis == Basis.X).all()


def test_passive_mode_redraws_double_click_basis():
    recs = [_rec(0, "X", "DOUBLE", "X") for _ in range(20_000)] + [_rec(0, "X", "SINGLE", "X")]
    raw = key_sift(DetectionTable.from_records(recs), np.random.default_rng(2), passive=True)
    assert abs((raw.bob_basis[:-1] == Basis.Z).mean() - 0.5) < 0.02
    assert raw.bob_basis[-1] == Basis.X


def test_only_single_click_carries_bit():
    with pytest.raises(ValueError):
        RawDetection(0, Basis.X, Click.NONE, Basis.X, 1)


def test_table_roundtrip_records():
    recs = [_rec(1, "X", "SINGLE", "Z", 1), _rec(0, "Z", "DOUBLE", "Z")]
    assert DetectionTable.from_records(recs).records() == recs


def test_split_by_basis_matches_hand_result():
    a = np.array([1, 0, 1, 1, 0, 1], dtype=np.uint8)
    b = np.array([1, 1, 1, 0, 0, 1], dtype=np.uint8)
    ab = np.array([0, 0, 1, 1, 0, 1], dtype=np.uint8)
    bb = np.array([0, 1, 1, 0, 0, 1], dtype=np.uint8)
    s = split_by_basis(a, b, ab, bb)
    assert str(s.x_alice) == "10" and str(s.x_bob) == "10"
    assert str(s.z_alice) == "11" and str(s.z_bob) == "11"
    assert s.x_index.tolist() == [0, 4]
    assert s.z_index.tolist() == [2, 5]
    assert s.q_x == 0.5


def test_basis_sift_accepts_and_costs_two_pads():
    model = ChannelModel(eta=0.1, qber_x=0.02, qber_z=0.02)
    table = simulate_quantum_exchange(20_000, 0.7, model, np.random.default_rng(3))
    raw = key_sift(table, np.random.default_rng(4))
    pa, pb = _pools()
    res = basis_sift(raw, 40, pa, pb)
    assert res.accepted
    assert res.key_cost == 80
    assert pa.drawn == pb.drawn == 80
    match = raw.alice_basis == raw.bob_basis
    assert res.sifted.n_x + res.sifted.n_z == int(match.sum())
    assert abs(res.sifted.q_x - 0.49 / 0.58) < 0.03


@pytest.mark.parametrize("direction", ["a2b", "b2a"])
def test_basis_sift_rejects_any_flipped_basis_bit(direction):
    model = ChannelModel(eta=0.5)
    raw = key_sift(simulate_quantum_exchange(400, 0.5, model, np.random.default_rng(5)), np.random.default_rng(6))
    for i in range(0, raw.n, 7):
        pa, pb = _pools()

        def tamper(msg, tag, i=i):
            return msg.flip(i), tag

        kw = {f"tamper_{direction}": tamper}
        assert not basis_sift(raw, 32, pa, pb, **kw).accepted


def test_basis_sift_rejects_tag_flip():
    raw = key_sift(simulate_quantum_exchange(400, 0.5, ChannelModel(eta=0.5), np.random.default_rng(7)),
                   np.random.default_rng(8))
    pa, pb = _pools()
    res = basis_sift(raw, 32, pa, pb, tamper_a2b=lambda m, t: (m, AuthTag(t.ciphertext.flip(3))))
    assert not res.accepted


def test_channel_error_rates():
    model = ChannelModel(eta=1.0, qber_x=0.05, qber_z=0.02)
    table = simulate_quantum_exchange(200_000, 0.5, model, np.random.default_rng(9))
    raw = key_sift(table, np.random.default_rng(10))
    s = split_by_basis(raw.alice_bits, raw.bob_bits, raw.alice_basis, raw.bob_basis)
    ex = (s.x_alice ^ s.x_bob).weight() / s.n_x
    ez = (s.z_alice ^ s.z_bob).weight() / s.n_z
    assert ex == pytest.approx(0.05, abs=0.005)
    assert ez == pytest.approx(0.02, abs=0.004)


def test_channel_click_count():
    model = ChannelModel(eta=1e-3, dark_like_noise=1e-4)
    table = simulate_quantum_exchange(10**8, 0.8, model, np.random.default_rng(11))
    expect = 10**8 * model.click_prob
    assert abs(len(table) - expect) < 5 * np.sqrt(expect)
    assert table.n_pulses == 10**8
    assert (np.diff(table.pulse) > 0).all()


def test_perfect_channel_gives_identical_sifted_keys():
    table = simulate_quantum_exchange(5000, 0.5, ChannelModel(eta=1.0), np.random.default_rng(12))
    raw = key_sift(table, np.random.default_rng(13))
    s = split_by_basis(raw.alice_bits, raw.bob_bits, raw.alice_basis, raw.bob_basis)
    assert s.x_alice == s.x_bob and s.z_alice == s.z_bob
    assert s.n_x + s.n_z > 2000


def test_detection_count_small_run():
    counts = [len(simulate_quantum_exchange(10**5, 0.5, ChannelModel(eta=1e-3), np.random.default_rng(s)))
              for s in range(20)]
    assert all(abs(c - 100) <= 4 * np.sqrt(100 * (1 - 1e-3)) for c in counts)
