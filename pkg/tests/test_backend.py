import numpy as np
import pytest

from halfline_lq import _backend, _fallback

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF, 0xFFFFFFFF), (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    (
        (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
        (0xA4093822, 0x299F31D0),
        (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1),
    ),
]

BACKENDS = [_fallback] + ([_backend.core] if _backend.NAME == "compiled" else [])


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(mod, ctr, key, expected):
    out = mod.philox4x32(np.array([ctr], dtype=np.uint32), key[0], key[1])
    assert tuple(int(v) for v in out[0]) == expected


def test_uniforms_in_open_unit_interval():
    u = _backend.philox_uniforms(1, 0, 64, 50, 3)
    assert u.shape == (64, 50, 6)
    assert np.all(u > 0) and np.all(u < 1)
    assert abs(u.mean() - 0.5) < 0.01


@pytest.mark.skipif(_backend.NAME != "compiled", reason="compiled core not built")
def test_backends_bit_identical():
    a = _backend.core.philox_uniforms(2**40 + 17, 5, 33, 21, 4)
    b = _fallback.philox_uniforms(2**40 + 17, 5, 33, 21, 4)
    assert np.array_equal(a, b)
    xi = np.linspace(0.01, 10, 57)
    k1 = _backend.core.heat_kernel_matrix(0.3, xi, xi)
    k2 = _fallback.heat_kernel_matrix(0.3, xi, xi)
    assert np.max(np.abs(k1 - k2)) <= 1e-14 * np.abs(k2).max()
    eta = np.linspace(0.02, 3, 11)
    k1 = _backend.core.heat_kernel_matrix(0.01, xi, eta)
    k2 = _fallback.heat_kernel_matrix(0.01, xi, eta)
    assert np.max(np.abs(k1 - k2)) <= 1e-14 * np.abs(k2).max()


def test_uniforms_independent_of_path_split():
    whole = _backend.philox_uniforms(9, 0, 10, 7, 2)
    parts = np.concatenate([_backend.philox_uniforms(9, 0, 4, 7, 2), _backend.philox_uniforms(9, 4, 6, 7, 2)])
    assert np.array_equal(whole, parts)
