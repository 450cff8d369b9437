import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkdpost.authmac import AuthTag, auth_failure_prob, bare_hash, make_tag, required_tag_len, verify_tag
from qkdpost.gf2core import BitString


def _keys(k, rng):
    return BitString.random(2 * k, rng), BitString.random(k, rng)


def test_roundtrip_accepts():
    rng = np.random.default_rng(1)
    for _ in range(200):
        mk, pad = _keys(16, rng)
        msg = BitString.random(int(rng.integers(1, 500)), rng)
        assert verify_tag(msg, make_tag(msg, mk, pad), mk, pad)


def test_tag_is_hash_xor_pad():
    rng = np.random.default_rng(2)
    mk, pad = _keys(8, rng)
    msg = BitString.from_str("1010")
    assert make_tag(msg, mk, pad).ciphertext == bare_hash(msg, mk) ^ pad


def test_hand_tag():
    # key 101100 -> diagonal 101110; hash of 1010 is 101
    msg = BitString.from_str("1010")
    assert str(bare_hash(msg, BitString.from_str("101100"))) == "101"
    assert str(make_tag(msg, BitString.from_str("101100"), BitString.from_str("011")).ciphertext) == "110"


def test_single_bit_flips_rejected():
    rng = np.random.default_rng(3)
    mk, pad = _keys(32, rng)
    msg = BitString.random(200, rng)
    tag = make_tag(msg, mk, pad)
    for i in range(msg.length):
        assert not verify_tag(msg.flip(i), tag, mk, pad)
    for i in range(tag.k):
        assert not verify_tag(msg, AuthTag(tag.ciphertext.flip(i)), mk, pad)


def test_wrong_pad_length_rejected():
    rng = np.random.default_rng(4)
    mk, pad = _keys(8, rng)
    msg = BitString.random(30, rng)
    with pytest.raises(ValueError):
        make_tag(msg, mk, BitString.random(7, rng))
    assert not verify_tag(msg, AuthTag(BitString.zeros(7)), mk, pad)


def test_empty_message_rejected():
    with pytest.raises(ValueError):
        bare_hash(BitString.zeros(0), BitString.zeros(8))


def test_forgery_rate_stays_under_bound():
    # random substitution against a fixed message: k=8, m=64 gives bound 64*2^-7 = 0.5
    rng = np.random.default_rng(5)
    msg = BitString.random(64, rng)
    hits = 0
    trials = 4000
    for _ in range(trials):
        mk, pad = _keys(8, rng)
        tag = make_tag(msg, mk, pad)
        fake = msg ^ BitString.random(64, rng)
        if fake != msg and verify_tag(fake, tag, mk, pad):
            hits += 1
    p = auth_failure_prob(64, 8)
    assert hits / trials <= p + 3 * np.sqrt(p * (1 - p) / trials)


@given(st.binary(min_size=1, max_size=40))
def test_tag_wire_roundtrip(data):
    k = len(data) * 8 - int(data[-1] & 0x07 == 0)
    b = BitString(int.from_bytes(data, "little") & ((1 << k) - 1), k)
    tag = AuthTag(b)
    assert AuthTag.from_bytes(tag.to_bytes()) == tag


def test_tag_wire_rejects_bad_length():
    with pytest.raises(ValueError):
        AuthTag.from_bytes(b"\x10\x00\x01")
    with pytest.raises(ValueError):
        AuthTag.from_bytes(b"\x01")


def test_failure_prob_values():
    assert auth_failure_prob(1, 2) == 0.5
    assert auth_failure_prob(10**7, 57) == pytest.approx(1.3877787807814457e-10, rel=1e-15)
    assert auth_failure_prob(10**9, 3) == 1.0


def test_required_tag_len_is_minimal():
    assert required_tag_len(10**7, 1e-10) == 58
    for m in (1, 7, 1000, 10**7, 2**40):
        for eps in (0.3, 1e-3, 1e-10, 1e-20):
            k = required_tag_len(m, eps)
            assert auth_failure_prob(m, k) <= eps
            assert k == 2 or auth_failure_prob(m, k - 1) > eps
